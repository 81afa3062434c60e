import { describe, expect, it } from "vitest";
import {
  clipPoseAt,
  lerpHeading,
  normalizeHeading,
  playbackAt,
} from "../src/clipPlayback.js";
import { ClipData } from "../src/protocol.js";

describe("normalizeHeading", () => {
  it("maps angles into [0, 360)", () => {
    expect(normalizeHeading(0)).toBe(0);
    expect(normalizeHeading(360)).toBe(0);
    expect(normalizeHeading(-10)).toBe(350);
    expect(normalizeHeading(725)).toBe(5);
    expect(normalizeHeading(-360)).toBe(0);
  });
});

describe("lerpHeading", () => {
  it("takes the short way across zero", () => {
    expect(lerpHeading(350, 10, 0.5)).toBe(0);
    expect(lerpHeading(350, 10, 0.25)).toBe(355);
    expect(lerpHeading(10, 350, 0.5)).toBe(0);
  });

  it("resolves the exact 180 degree tie toward increasing angles", () => {
    expect(lerpHeading(0, 180, 0.25)).toBe(45);
    expect(lerpHeading(90, 270, 0.5)).toBe(180);
    expect(lerpHeading(270, 90, 0.5)).toBe(0);
  });

  it("is exact at the endpoints", () => {
    expect(lerpHeading(123, 321, 0)).toBe(123);
    expect(lerpHeading(123, 321, 1)).toBe(321);
  });
});

const APPROACH: ClipData = {
  id: "approach",
  duration_ms: 3000,
  loop_delay_ms: 500,
  waypoints: [
    [0, 0.2, 1.0, 0],
    [3000, 1.5, 1.0, 0],
  ],
};

describe("clipPoseAt", () => {
  it("interpolates linearly between waypoints", () => {
    const pose = clipPoseAt(APPROACH, 1500);
    expect(pose.x).toBeCloseTo(0.85, 12);
    expect(pose.y).toBeCloseTo(1.0, 12);
    expect(pose.heading).toBe(0);
  });

  it("clamps before the first and after the last waypoint", () => {
    expect(clipPoseAt(APPROACH, -50).x).toBeCloseTo(0.2, 12);
    expect(clipPoseAt(APPROACH, 9999).x).toBeCloseTo(1.5, 12);
  });

  it("wraps heading through zero inside a segment", () => {
    const clip: ClipData = {
      id: "swing",
      duration_ms: 1000,
      loop_delay_ms: 0,
      waypoints: [
        [0, 0.0, 0.0, 350],
        [1000, 1.0, 0.0, 10],
      ],
    };
    const pose = clipPoseAt(clip, 500);
    expect(pose.x).toBeCloseTo(0.5, 12);
    expect(pose.heading).toBe(0);
  });

  it("picks the correct segment of a multi-leg clip", () => {
    const clip: ClipData = {
      id: "legs",
      duration_ms: 4000,
      loop_delay_ms: 0,
      waypoints: [
        [0, 0.0, 0.0, 0],
        [1000, 1.0, 0.0, 0],
        [4000, 1.0, 3.0, 90],
      ],
    };
    expect(clipPoseAt(clip, 250).x).toBeCloseTo(0.25, 12);
    const later = clipPoseAt(clip, 2500);
    expect(later.x).toBeCloseTo(1.0, 12);
    expect(later.y).toBeCloseTo(1.5, 12);
    expect(later.heading).toBeCloseTo(45, 12);
  });
});

describe("playbackAt", () => {
  // cycle = 500 delay + 3000 animation = 3500 ms
  it("holds the first waypoint during the loop delay", () => {
    const sample = playbackAt(APPROACH, 1000, 1200);
    expect(sample.inLoopDelay).toBe(true);
    expect(sample.pose.x).toBeCloseTo(0.2, 12);
  });

  it("starts animating at exactly the end of the delay", () => {
    const sample = playbackAt(APPROACH, 1000, 1500);
    expect(sample.inLoopDelay).toBe(false);
    expect(sample.clipTime).toBe(0);
    expect(sample.pose.x).toBeCloseTo(0.2, 12);
  });

  it("advances clip time after the delay", () => {
    const sample = playbackAt(APPROACH, 1000, 3000);
    expect(sample.inLoopDelay).toBe(false);
    expect(sample.clipTime).toBe(1500);
    expect(sample.pose.x).toBeCloseTo(0.85, 12);
  });

  it("loops back into the delay after a full cycle", () => {
    const wrapped = playbackAt(APPROACH, 1000, 1000 + 3500 + 200);
    expect(wrapped.inLoopDelay).toBe(true);
    expect(wrapped.pose.x).toBeCloseTo(0.2, 12);
    const again = playbackAt(APPROACH, 1000, 1000 + 3500 + 500 + 100);
    expect(again.inLoopDelay).toBe(false);
    expect(again.clipTime).toBe(100);
  });

  it("never reports a delay for zero-delay clips", () => {
    const clip: ClipData = { ...APPROACH, loop_delay_ms: 0 };
    for (const offset of [0, 1, 2999, 3000, 3001, 12345]) {
      expect(playbackAt(clip, 500, 500 + offset).inLoopDelay).toBe(false);
    }
  });
});
