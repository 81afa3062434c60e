// Local motion-clip interpolation.  Displays smooth the vehicle between the
// server's 30 Hz frame broadcasts by replaying the same waypoint math the
// server uses, so a locally computed pose never drifts from the broadcast one.

import { ClipData } from "./protocol.js";

export interface ClipPose {
  x: number;
  y: number;
  heading: number;
}

export function normalizeHeading(deg: number): number {
  let h = deg % 360;
  if (h < 0) h += 360;
  // The h === 0 arm also collapses the negative zero % can produce.
  return h === 360 || h === 0 ? 0 : h;
}

/**
 * Interpolate headings along the shortest arc (350..10 passes through 0).
 * An exact 180 degree difference resolves to the increasing direction.
 */
export function lerpHeading(a: number, b: number, u: number): number {
  let delta = (((b - a) % 360) + 360) % 360;
  if (delta > 180) delta -= 360;
  return normalizeHeading(a + u * delta);
}

/** Pose at clip time t_ms, clamped to the first and last waypoint. */
export function clipPoseAt(clip: ClipData, tMs: number): ClipPose {
  const wps = clip.waypoints;
  const first = wps[0];
  const last = wps[wps.length - 1];
  if (tMs <= first[0]) return { x: first[1], y: first[2], heading: first[3] };
  if (tMs >= last[0]) return { x: last[1], y: last[2], heading: last[3] };
  for (let i = 1; i < wps.length; i++) {
    if (tMs <= wps[i][0]) {
      const [t0, x0, y0, h0] = wps[i - 1];
      const [t1, x1, y1, h1] = wps[i];
      const u = (tMs - t0) / (t1 - t0);
      return {
        x: x0 + u * (x1 - x0),
        y: y0 + u * (y1 - y0),
        heading: lerpHeading(h0, h1, u),
      };
    }
  }
  return { x: last[1], y: last[2], heading: last[3] };
}

export interface PlaybackSample {
  pose: ClipPose;
  inLoopDelay: boolean;
  /** Position inside the current cycle, 0 <= clipTime < duration during animation. */
  clipTime: number;
}

/**
 * Where the vehicle is nowMs into a looped playback that started at epochMs.
 * Each cycle is loop_delay_ms of blacked-out hold at waypoint 0, then the
 * animated clip; t == loop_delay_ms is the first animated instant.
 */
export function playbackAt(clip: ClipData, epochMs: number, nowMs: number): PlaybackSample {
  const cycle = clip.loop_delay_ms + clip.duration_ms;
  let p = (nowMs - epochMs) % cycle;
  if (p < 0) p += cycle;
  if (p < clip.loop_delay_ms) {
    return { pose: clipPoseAt(clip, 0), inLoopDelay: true, clipTime: p };
  }
  const t = p - clip.loop_delay_ms;
  return { pose: clipPoseAt(clip, t), inLoopDelay: false, clipTime: t };
}
