// Render model for the pedestrian-perspective display: camera pose from the
// view-controller tangible, the vehicle moved by local clip interpolation,
// and the light-strip pixels from the latest broadcast frame.

import { ClipPose, playbackAt } from "./clipPlayback.js";
import { LED_PIXELS, splitFrameHex } from "./dmx.js";
import { SessionStore } from "./store.js";

export interface VehicleView {
  clipId: string;
  pose: ClipPose;
  inLoopDelay: boolean;
}

export interface FirstPersonModel {
  camera: ClipPose | null;
  vehicle: VehicleView | null;
  /** 21 RRGGBB triples mirroring what the LED gateway shows right now. */
  strip: string[];
  activeFieldId: string | null;
}

const BLACK_STRIP: string[] = Array(LED_PIXELS).fill("000000");

/**
 * nowMs is on the server clock; callers extrapolate it from the last frame's
 * t_ms plus locally elapsed time to animate between 30 Hz broadcasts.
 */
export function firstPersonModel(store: SessionStore, nowMs: number): FirstPersonModel {
  const state = store.state;
  const env = store.environment;
  const model: FirstPersonModel = {
    camera: null,
    vehicle: null,
    strip: store.lastFrame === null ? [...BLACK_STRIP] : splitFrameHex(store.lastFrame.data),
    activeFieldId: state?.active_field_id ?? null,
  };
  if (state === null || env === null) return model;
  if (state.camera_pose !== null) {
    model.camera = {
      x: state.camera_pose.x_m,
      y: state.camera_pose.y_m,
      heading: state.camera_pose.heading_deg,
    };
  }
  const playback = state.playback;
  if (playback !== null) {
    const clip = env.clips.find((c) => c.id === playback.clip_id);
    if (clip !== undefined) {
      const sample = playbackAt(clip, playback.epoch_ms, nowMs);
      model.vehicle = {
        clipId: clip.id,
        pose: sample.pose,
        inLoopDelay: sample.inLoopDelay,
      };
    }
  }
  return model;
}
