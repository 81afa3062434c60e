// On-screen stand-in for a physical tangible: synthesizes the three touch
// points its pins would produce at a given world pose, so a mouse drag can
// exercise the whole recognition path of the server.  Works for the usual
// axis-aligned, isotropic table viewports where device and world headings
// coincide; pairwise pin distances are preserved exactly, so recognition at
// the server matches the registered signature with zero residual.

import { Viewport, worldToPx } from "./calibration.js";

export function triadPoints(
  pinsMm: [number, number][],
  vp: Viewport,
  xM: number,
  yM: number,
  headingDeg: number,
): [number, number][] {
  const [cxPx, cyPx] = worldToPx(vp, xM, yM);
  const theta = (headingDeg * Math.PI) / 180;
  const cos = Math.cos(theta);
  const sin = Math.sin(theta);
  return pinsMm.map(([px, py]) => {
    const rx = cos * px - sin * py;
    const ry = sin * px + cos * py;
    return [cxPx + rx / vp.pixelPitchMm, cyPx + ry / vp.pixelPitchMm];
  });
}
