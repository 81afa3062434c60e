"""Tangible multi-display prototyping engine.

Recognizes tangibles from touch triads, runs an authoritative scenario
session, evaluates a light-pattern DSL into 21-pixel frames, and streams
those frames to display clients and LED hardware.
"""

from .clock import FakeClock, SystemClock
from .dmx import LedEmulator, LedPacket, decode_packet, encode_packet, seq_newer
from .patterns import (Frame, PatternError, PatternProgram, UnknownParamError,
                       bind_colors, evaluate, parse, pretty)
from .recognition import (AmbiguousMatch, NoCalibration, NoMatch, Pose2D,
                          SpuriousTriad, TouchTriad, TriadTracker, classify,
                          fit_rigid_2d, solve_pose)
from .scene import (ConfigError, ConfigParseError, ConfigValidationError,
                    DisplayCalibration, Environment, MotionClip, ScenarioField,
                    TangibleSpec, anonymize_labels, load_calibration,
                    load_environment, register_tangible, serialize_environment)
from .server import SessionServer
from .session import (Event, EventRejected, SessionState, World, apply,
                      apply_with_derived, frame_tick, initial_state,
                      snapshot_dict, state_from_snapshot)

__version__ = "0.1.0"
