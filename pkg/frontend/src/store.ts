// Client-side session mirror.  A snapshot message replaces everything; each
// broadcast event advances the mirror through the same transition the server
// applied, so every connected display renders from identical state.  Nothing
// here mutates on local user input: actions go out as event messages and take
// effect only when the server echo comes back.

import {
  AddedFieldEntry,
  EnvironmentData,
  ErrorMsg,
  EventMsg,
  FieldData,
  FrameMsg,
  PatternInfo,
  PoseData,
  Rgb,
  ServerMessage,
  SessionStateData,
  SnapshotMsg,
} from "./protocol.js";
import { normalizeHeading } from "./clipPlayback.js";
import { scanPatternSource } from "./patternScan.js";

export interface EffectiveField {
  field: FieldData;
  ordinal: number;
}

export class SessionStore {
  state: SessionStateData | null = null;
  environment: EnvironmentData | null = null;
  patterns: Record<string, PatternInfo> = {};
  lastFrame: FrameMsg | null = null;
  lastError: ErrorMsg | null = null;

  apply(message: ServerMessage): void {
    switch (message.kind) {
      case "snapshot":
        this.applySnapshot(message);
        return;
      case "event":
        this.applyEvent(message);
        return;
      case "frame":
        this.lastFrame = message;
        return;
      case "error":
        this.lastError = message;
        return;
    }
  }

  private applySnapshot(message: SnapshotMsg): void {
    this.state = structuredClone(message.state);
    this.environment = structuredClone(message.environment);
    this.patterns = structuredClone(message.patterns);
  }

  private applyEvent(message: EventMsg): void {
    const state = this.state;
    if (state === null) {
      throw new Error("event before snapshot");
    }
    // The snapshot rebroadcast after an environment switch repeats the
    // current seq; anything else out of step means the stream is broken.
    if (message.seq <= state.seq) return;
    if (message.seq !== state.seq + 1) {
      throw new Error(
        `event seq ${message.seq} does not follow mirror seq ${state.seq}`);
    }
    const next = structuredClone(state);
    next.seq = message.seq;
    const body = message.body;
    switch (message.type) {
      case "tangible_placed":
      case "tangible_moved":
        next.tangibles[String(body.tangible_id)] =
          normalizePose(body.pose as Partial<PoseData>);
        next.camera_pose = this.derivedCamera(next);
        break;
      case "tangible_removed":
        delete next.tangibles[String(body.tangible_id)];
        next.camera_pose = this.derivedCamera(next);
        break;
      case "active_scenario_changed": {
        next.active_field_id = (body.field_id as string | null) ?? null;
        const clipId = body.clip_id as string | null | undefined;
        next.playback = clipId == null
          ? null
          : { clip_id: clipId, epoch_ms: Number(body.epoch_ms) };
        break;
      }
      case "pattern_assigned": {
        const fid = String(body.field_id);
        next.assigned_patterns[fid] = String(body.pattern_id);
        delete next.color_bindings[fid];
        break;
      }
      case "color_changed": {
        const fid = String(body.field_id);
        const rgb = body.rgb as Rgb;
        const perField = next.color_bindings[fid] ?? {};
        perField[String(body.param)] = [rgb[0], rgb[1], rgb[2]];
        next.color_bindings[fid] = perField;
        break;
      }
      case "brightness_changed":
        next.brightness = Number(body.value);
        break;
      case "anonymize_toggled":
        next.anonymized = Boolean(body.flag);
        break;
      case "environment_switched":
        // Per-table state is scoped to the layout; the pattern library and
        // added fields survive.  The server rebroadcasts a snapshot right
        // after this event, which also refreshes this.environment.
        this.state = {
          seq: message.seq,
          environment_id: String(body.environment_id),
          tangibles: {},
          active_field_id: null,
          camera_pose: null,
          assigned_patterns: {},
          color_bindings: {},
          brightness: next.brightness,
          playback: null,
          anonymized: next.anonymized,
          defined_patterns: next.defined_patterns,
          added_fields: next.added_fields,
          extra_allowed: {},
        };
        return;
      case "pattern_defined": {
        const pid = String(body.pattern_id);
        const source = String(body.source);
        next.defined_patterns[pid] = source;
        this.patterns[pid] = scanPatternSource(source);
        break;
      }
      case "field_added": {
        let ordinal = body.ordinal as number | undefined;
        if (ordinal == null) {
          const existing = effectiveFields(this.environment, next);
          ordinal = existing.reduce((m, f) => Math.max(m, f.ordinal), 0) + 1;
        }
        next.added_fields.push({
          environment_id: next.environment_id,
          ordinal,
          field: normalizeField(body.field as FieldData),
        });
        break;
      }
      case "pattern_allocated": {
        const fid = String(body.field_id);
        const pid = String(body.pattern_id);
        const field = fieldById(this.environment, next, fid);
        if (field !== null && !allowedPatterns(next, field).includes(pid)) {
          const extra = next.extra_allowed[fid] ?? [];
          extra.push(pid);
          next.extra_allowed[fid] = extra;
        }
        break;
      }
      default:
        throw new Error(`unknown event type ${message.type}`);
    }
    this.state = next;
  }

  private derivedCamera(state: SessionStateData): PoseData | null {
    const env = this.environment;
    if (env === null) return null;
    for (const tid of Object.keys(state.tangibles).sort()) {
      const spec = env.tangibles.find((t) => t.id === tid);
      if (spec !== undefined && spec.role === "view_controller") {
        return state.tangibles[tid];
      }
    }
    return null;
  }

  /** Snapshot message a server would send for the mirrored state. */
  toSnapshot(): SnapshotMsg {
    if (this.state === null || this.environment === null) {
      throw new Error("store is empty");
    }
    return {
      kind: "snapshot",
      seq: this.state.seq,
      state: structuredClone(this.state),
      environment: structuredClone(this.environment),
      patterns: structuredClone(this.patterns),
    };
  }
}

export function normalizePose(raw: Partial<PoseData>): PoseData {
  return {
    x_m: Number(raw.x_m),
    y_m: Number(raw.y_m),
    heading_deg: normalizeHeading(Number(raw.heading_deg)),
    residual_mm: raw.residual_mm === undefined ? 0 : Number(raw.residual_mm),
  };
}

/** Drop empty optional keys so mirrored entries match server serialization. */
function normalizeField(raw: FieldData): FieldData {
  const out: FieldData = {
    id: raw.id,
    label: raw.label,
    region: structuredClone(raw.region),
    clip_id: raw.clip_id,
    allowed_patterns: [...raw.allowed_patterns],
  };
  if (raw.assigned_pattern) out.assigned_pattern = raw.assigned_pattern;
  return out;
}

/**
 * Config fields (ordinal = position, 1-based) plus session-added fields for
 * the current environment, in activation-precedence order.
 */
export function effectiveFields(
  environment: EnvironmentData | null,
  state: SessionStateData,
): EffectiveField[] {
  const out: EffectiveField[] = [];
  if (environment !== null && environment.id === state.environment_id) {
    environment.fields.forEach((field, i) => {
      out.push({ field, ordinal: i + 1 });
    });
  }
  for (const entry of state.added_fields as AddedFieldEntry[]) {
    if (entry.environment_id === state.environment_id) {
      out.push({ field: entry.field, ordinal: entry.ordinal });
    }
  }
  return out;
}

export function fieldById(
  environment: EnvironmentData | null,
  state: SessionStateData,
  fieldId: string,
): EffectiveField | null {
  for (const ef of effectiveFields(environment, state)) {
    if (ef.field.id === fieldId) return ef;
  }
  return null;
}

export function allowedPatterns(
  state: SessionStateData,
  ef: EffectiveField,
): string[] {
  return [...ef.field.allowed_patterns, ...(state.extra_allowed[ef.field.id] ?? [])];
}

export function assignedPatternId(
  state: SessionStateData,
  ef: EffectiveField,
): string | null {
  return state.assigned_patterns[ef.field.id]
    ?? ef.field.assigned_pattern
    ?? null;
}

export function fieldLabel(
  state: SessionStateData,
  ef: EffectiveField,
): string {
  return state.anonymized ? `Scene ${ef.ordinal}` : ef.field.label;
}
