// Pixel <-> world mapping for a top-view display that shows exactly its
// configured world_rect.  Matches the server's auto-derived calibration, so
// touch points synthesized in pixels land at the intended world coordinates.

export interface Viewport {
  worldRect: [number, number, number, number]; // x, y, w, h in metres
  resolutionPx: [number, number];
  pixelPitchMm: number;
}

export function worldToPx(vp: Viewport, xM: number, yM: number): [number, number] {
  const [rx, ry, rw, rh] = vp.worldRect;
  const [resW, resH] = vp.resolutionPx;
  return [((xM - rx) * resW) / rw, ((yM - ry) * resH) / rh];
}

export function pxToWorld(vp: Viewport, px: number, py: number): [number, number] {
  const [rx, ry, rw, rh] = vp.worldRect;
  const [resW, resH] = vp.resolutionPx;
  return [rx + (px * rw) / resW, ry + (py * rh) / resH];
}

/** Physical millimetres represented by one pixel step (touch hardware scale). */
export function pxToMm(vp: Viewport, px: number, py: number): [number, number] {
  return [px * vp.pixelPitchMm, py * vp.pixelPitchMm];
}

export function mmToPx(vp: Viewport, xMm: number, yMm: number): [number, number] {
  return [xMm / vp.pixelPitchMm, yMm / vp.pixelPitchMm];
}

/** Metres per pixel along x and y; equal for an isotropic viewport. */
export function metresPerPx(vp: Viewport): [number, number] {
  const [, , rw, rh] = vp.worldRect;
  const [resW, resH] = vp.resolutionPx;
  return [rw / resW, rh / resH];
}
