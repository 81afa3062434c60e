// Render model for a top-view table client: scenario field overlays in the
// display's pixel space plus one marker per tangible the server is tracking.
// Markers come only from mirrored tangible poses, never from playback, so a
// table without the car tangible never shows a vehicle.

import { EnvironmentData, SessionStateData } from "./protocol.js";
import { Viewport, worldToPx } from "./calibration.js";
import {
  EffectiveField,
  SessionStore,
  assignedPatternId,
  effectiveFields,
  fieldLabel,
} from "./store.js";

export type OverlayShape =
  | { kind: "circle"; cxPx: number; cyPx: number; rxPx: number; ryPx: number }
  | { kind: "polygon"; pointsPx: [number, number][] };

export interface FieldOverlay {
  id: string;
  label: string;
  active: boolean;
  assignedPattern: string | null;
  shape: OverlayShape;
}

export interface TangibleMarker {
  tangibleId: string;
  role: "vehicle" | "view_controller";
  xPx: number;
  yPx: number;
  headingDeg: number;
}

export interface TopViewModel {
  displayId: string;
  overlays: FieldOverlay[];
  markers: TangibleMarker[];
}

export function viewportFor(
  environment: EnvironmentData,
  displayId: string,
  resolutionPx: [number, number],
  pixelPitchMm = 1.0,
): Viewport {
  const display = environment.displays.find((d) => d.display_id === displayId);
  if (display === undefined || display.role !== "top_view" || !display.world_rect) {
    throw new Error(`display ${displayId} is not a configured top view`);
  }
  return { worldRect: display.world_rect, resolutionPx, pixelPitchMm };
}

export function topViewModel(
  store: SessionStore,
  displayId: string,
  resolutionPx: [number, number],
): TopViewModel {
  const state = store.state;
  const env = store.environment;
  if (state === null || env === null) {
    return { displayId, overlays: [], markers: [] };
  }
  const vp = viewportFor(env, displayId, resolutionPx);

  const overlays = effectiveFields(env, state).map((ef) =>
    fieldOverlay(state, ef, vp));

  const markers: TangibleMarker[] = [];
  for (const tid of Object.keys(state.tangibles).sort()) {
    const spec = env.tangibles.find((t) => t.id === tid);
    if (spec === undefined) continue;
    const pose = state.tangibles[tid];
    const [xPx, yPx] = worldToPx(vp, pose.x_m, pose.y_m);
    markers.push({
      tangibleId: tid,
      role: spec.role,
      xPx,
      yPx,
      headingDeg: pose.heading_deg,
    });
  }
  return { displayId, overlays, markers };
}

function fieldOverlay(
  state: SessionStateData,
  ef: EffectiveField,
  vp: Viewport,
): FieldOverlay {
  const region = ef.field.region;
  let shape: OverlayShape;
  if ("circle" in region) {
    const [cx, cy, r] = region.circle;
    const [cxPx, cyPx] = worldToPx(vp, cx, cy);
    const [resW, resH] = vp.resolutionPx;
    shape = {
      kind: "circle",
      cxPx,
      cyPx,
      rxPx: (r * resW) / vp.worldRect[2],
      ryPx: (r * resH) / vp.worldRect[3],
    };
  } else {
    shape = {
      kind: "polygon",
      pointsPx: region.polygon.map(([x, y]) => worldToPx(vp, x, y)),
    };
  }
  return {
    id: ef.field.id,
    label: fieldLabel(state, ef),
    active: state.active_field_id === ef.field.id,
    assignedPattern: assignedPatternId(state, ef),
    shape,
  };
}
