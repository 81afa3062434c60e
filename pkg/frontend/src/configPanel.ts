// Designer panel: builders for every configuration action (each one maps to
// exactly one event message) and the view model the panel renders from the
// mirrored state once those events echo back.

import { ClientEventMsg, FieldData, Rgb } from "./protocol.js";
import {
  SessionStore,
  allowedPatterns,
  assignedPatternId,
  effectiveFields,
  fieldLabel,
} from "./store.js";

export function assignPattern(fieldId: string, patternId: string): ClientEventMsg {
  return { kind: "event", type: "pattern_assigned",
           body: { field_id: fieldId, pattern_id: patternId } };
}

export function pickColor(fieldId: string, param: string, rgb: Rgb): ClientEventMsg {
  return { kind: "event", type: "color_changed",
           body: { field_id: fieldId, param, rgb } };
}

export function setBrightness(value: number): ClientEventMsg {
  return { kind: "event", type: "brightness_changed", body: { value } };
}

export function toggleAnonymize(flag: boolean): ClientEventMsg {
  return { kind: "event", type: "anonymize_toggled", body: { flag } };
}

export function switchEnvironment(environmentId: string): ClientEventMsg {
  return { kind: "event", type: "environment_switched",
           body: { environment_id: environmentId } };
}

export function definePattern(patternId: string, source: string): ClientEventMsg {
  return { kind: "event", type: "pattern_defined",
           body: { pattern_id: patternId, source } };
}

export function addField(field: FieldData): ClientEventMsg {
  return { kind: "event", type: "field_added", body: { field } };
}

export function allocatePattern(fieldId: string, patternId: string): ClientEventMsg {
  return { kind: "event", type: "pattern_allocated",
           body: { field_id: fieldId, pattern_id: patternId } };
}

export interface ParamRow {
  name: string;
  rgb: Rgb;
  /** True when a session color override shadows the pattern default. */
  overridden: boolean;
}

export interface PatternChoice {
  patternId: string;
  name: string;
  assigned: boolean;
}

export interface FieldPanel {
  fieldId: string;
  label: string;
  active: boolean;
  clipId: string;
  choices: PatternChoice[];
  params: ParamRow[];
}

export function panelModel(store: SessionStore): FieldPanel[] {
  const state = store.state;
  if (state === null) return [];
  return effectiveFields(store.environment, state).map((ef) => {
    const assigned = assignedPatternId(state, ef);
    const choices: PatternChoice[] = allowedPatterns(state, ef).map((pid) => ({
      patternId: pid,
      name: store.patterns[pid]?.name ?? pid,
      assigned: pid === assigned,
    }));
    const params: ParamRow[] = [];
    if (assigned !== null) {
      const overrides = state.color_bindings[ef.field.id] ?? {};
      for (const [name, rgb] of store.patterns[assigned]?.params ?? []) {
        const override = overrides[name];
        params.push({
          name,
          rgb: override !== undefined ? override : rgb,
          overridden: override !== undefined,
        });
      }
    }
    return {
      fieldId: ef.field.id,
      label: fieldLabel(state, ef),
      active: state.active_field_id === ef.field.id,
      clipId: ef.field.clip_id,
      choices,
      params,
    };
  });
}
