// Wire types for the session state channel.  The server is authoritative;
// everything here mirrors what it sends and shapes what clients may send.

export const PROTO_VERSION = 1;

export type Rgb = [number, number, number];

export interface PoseData {
  x_m: number;
  y_m: number;
  heading_deg: number;
  residual_mm: number;
}

export interface TangibleData {
  id: string;
  role: "vehicle" | "view_controller";
  pins_mm: [number, number][];
  tolerance_mm: number;
}

export interface DisplayData {
  display_id: string;
  role: "top_view" | "first_person";
  world_rect?: [number, number, number, number];
}

export interface ClipData {
  id: string;
  duration_ms: number;
  loop_delay_ms: number;
  // [t_ms, x_m, y_m, heading_deg] per waypoint, ascending t_ms.
  waypoints: [number, number, number, number][];
}

export type RegionData =
  | { circle: [number, number, number] }
  | { polygon: [number, number][] };

export interface FieldData {
  id: string;
  label: string;
  region: RegionData;
  clip_id: string;
  allowed_patterns: string[];
  assigned_pattern?: string;
}

export interface EnvironmentData {
  id: string;
  name: string;
  world_size: [number, number];
  anonymized: boolean;
  tangibles: TangibleData[];
  displays: DisplayData[];
  clips: ClipData[];
  fields: FieldData[];
}

export interface AddedFieldEntry {
  environment_id: string;
  ordinal: number;
  field: FieldData;
}

export interface SessionStateData {
  seq: number;
  environment_id: string;
  tangibles: Record<string, PoseData>;
  active_field_id: string | null;
  camera_pose: PoseData | null;
  assigned_patterns: Record<string, string>;
  color_bindings: Record<string, Record<string, Rgb>>;
  brightness: number;
  playback: { clip_id: string; epoch_ms: number } | null;
  anonymized: boolean;
  defined_patterns: Record<string, string>;
  added_fields: AddedFieldEntry[];
  extra_allowed: Record<string, string[]>;
}

export interface PatternInfo {
  source: string;
  name?: string;
  duration_ms?: number;
  params?: [string, Rgb][];
}

export interface SnapshotMsg {
  kind: "snapshot";
  seq: number;
  state: SessionStateData;
  environment: EnvironmentData;
  patterns: Record<string, PatternInfo>;
}

export interface EventMsg {
  kind: "event";
  seq: number;
  type: string;
  body: Record<string, unknown>;
  t_ms: number;
}

export interface ErrorMsg {
  kind: "error";
  code: string;
  msg: string;
}

export interface FrameMsg {
  kind: "frame";
  t_ms: number;
  led_seq: number;
  field_id: string | null;
  clip_id: string | null;
  clip_pose: [number, number, number] | null;
  in_loop_delay: boolean;
  data: string; // 126 hex chars, 21 RGB pixels
}

export type ServerMessage = SnapshotMsg | EventMsg | ErrorMsg | FrameMsg;

export interface HelloMsg {
  kind: "hello";
  proto_version: number;
  role: string;
  display_id?: string;
  resolution?: [number, number];
  pixel_pitch_mm?: number;
}

export interface ClientEventMsg {
  kind: "event";
  type: string;
  body: Record<string, unknown>;
}

export interface TouchMsg {
  kind: "touch";
  display_id?: string;
  points: [number, number][];
}

export type ClientMessage = HelloMsg | ClientEventMsg | TouchMsg;

export function hello(role: string, display?: {
  displayId: string;
  resolution?: [number, number];
  pixelPitchMm?: number;
}): HelloMsg {
  const msg: HelloMsg = { kind: "hello", proto_version: PROTO_VERSION, role };
  if (display) {
    msg.display_id = display.displayId;
    if (display.resolution) msg.resolution = display.resolution;
    if (display.pixelPitchMm !== undefined) msg.pixel_pitch_mm = display.pixelPitchMm;
  }
  return msg;
}

export function isSnapshot(m: ServerMessage): m is SnapshotMsg {
  return m.kind === "snapshot";
}

export function isEvent(m: ServerMessage): m is EventMsg {
  return m.kind === "event";
}

export function isFrame(m: ServerMessage): m is FrameMsg {
  return m.kind === "frame";
}

export function isError(m: ServerMessage): m is ErrorMsg {
  return m.kind === "error";
}
