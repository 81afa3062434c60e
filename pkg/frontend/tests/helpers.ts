// Shared wire-shape fixtures: a two-table environment and the snapshot a
// server would send for a fresh session in it.

import { EnvironmentData, EventMsg, PoseData, SnapshotMsg } from "../src/protocol.js";
import { SessionStore } from "../src/store.js";

export const SWEEP_SOURCE = `pattern "Band sweep" {
  param color band = #00C8FF
  duration 1400ms
  layer sweep(band, right, 5, 1400)
}`;

export function baseEnvironment(): EnvironmentData {
  return {
    id: "stage",
    name: "Stage",
    world_size: [4.0, 3.0],
    anonymized: false,
    tangibles: [
      { id: "car", role: "vehicle", pins_mm: [[-30, -20], [30, -20], [-30, 60]], tolerance_mm: 3 },
      { id: "aux", role: "view_controller", pins_mm: [[-15, -9], [30, -9], [-15, 19]], tolerance_mm: 3 },
      { id: "view", role: "view_controller", pins_mm: [[-12, -7], [24, -7], [-12, 15]], tolerance_mm: 3 },
    ],
    displays: [
      { display_id: "table_a", role: "top_view", world_rect: [0.0, 0.0, 2.0, 3.0] },
      { display_id: "table_b", role: "top_view", world_rect: [2.0, 0.0, 2.0, 3.0] },
      { display_id: "pedestal", role: "first_person" },
    ],
    clips: [
      {
        id: "glide",
        duration_ms: 4000,
        loop_delay_ms: 500,
        waypoints: [[0, 0.8, 1.0, 0], [4000, 3.2, 1.0, 0]],
      },
    ],
    fields: [
      {
        id: "drive_field",
        label: "Vehicle glides across",
        region: { circle: [1.0, 1.0, 0.45] },
        clip_id: "glide",
        allowed_patterns: ["sweep_left", "lights_off"],
        assigned_pattern: "sweep_left",
      },
    ],
  };
}

export function baseSnapshot(): SnapshotMsg {
  return {
    kind: "snapshot",
    seq: 0,
    state: {
      seq: 0,
      environment_id: "stage",
      tangibles: {},
      active_field_id: null,
      camera_pose: null,
      assigned_patterns: {},
      color_bindings: {},
      brightness: 1.0,
      playback: null,
      anonymized: false,
      defined_patterns: {},
      added_fields: [],
      extra_allowed: {},
    },
    environment: baseEnvironment(),
    patterns: {
      sweep_left: {
        source: SWEEP_SOURCE,
        name: "Band sweep",
        duration_ms: 1400,
        params: [["band", [0, 200, 255]]],
      },
      lights_off: {
        source: 'pattern "Off" {\n  duration 1000ms\n  layer off\n}',
        name: "Off",
        duration_ms: 1000,
        params: [],
      },
    },
  };
}

export function evt(seq: number, type: string, body: Record<string, unknown>): EventMsg {
  return { kind: "event", seq, type, body, t_ms: seq * 100 };
}

export function pose(x: number, y: number, heading = 0): PoseData {
  return { x_m: x, y_m: y, heading_deg: heading, residual_mm: 0.0 };
}

export function freshStore(): SessionStore {
  const store = new SessionStore();
  store.apply(baseSnapshot());
  return store;
}
