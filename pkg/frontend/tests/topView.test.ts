import { describe, expect, it } from "vitest";
import { topViewModel, viewportFor } from "../src/topView.js";
import { worldToPx, pxToWorld } from "../src/calibration.js";
import { SessionStore } from "../src/store.js";
import { baseEnvironment, evt, freshStore, pose } from "./helpers.js";

// table_a shows world rect [0, 0, 2, 3] m; at 1600x2400 px that is
// 0.00125 m/px on both axes, so the mapping oracle is exact by hand.
const RES: [number, number] = [1600, 2400];

describe("viewport mapping", () => {
  it("maps world coordinates to pixels by hand-checked scale", () => {
    const vp = viewportFor(baseEnvironment(), "table_a", RES, 0.25);
    expect(worldToPx(vp, 0.8, 0.8)).toEqual([640, 640]);
    expect(worldToPx(vp, 0, 0)).toEqual([0, 0]);
    expect(worldToPx(vp, 2, 3)).toEqual([1600, 2400]);
  });

  it("inverts exactly", () => {
    const vp = viewportFor(baseEnvironment(), "table_a", RES, 0.25);
    const [x, y] = pxToWorld(vp, 640, 640);
    expect(x).toBeCloseTo(0.8, 12);
    expect(y).toBeCloseTo(0.8, 12);
  });

  it("offsets by the table's world rect origin", () => {
    const vp = viewportFor(baseEnvironment(), "table_b", [1000, 1500]);
    expect(worldToPx(vp, 3.0, 1.5)).toEqual([500, 750]);
    expect(worldToPx(vp, 2.0, 0.0)).toEqual([0, 0]);
  });

  it("refuses displays that are not configured top views", () => {
    expect(() => viewportFor(baseEnvironment(), "pedestal", RES)).toThrow(/top view/);
    expect(() => viewportFor(baseEnvironment(), "nope", RES)).toThrow(/top view/);
  });
});

describe("topViewModel", () => {
  it("projects field overlays into display pixels", () => {
    const model = topViewModel(freshStore(), "table_a", RES);
    expect(model.overlays).toHaveLength(1);
    const overlay = model.overlays[0];
    expect(overlay.id).toBe("drive_field");
    expect(overlay.label).toBe("Vehicle glides across");
    expect(overlay.active).toBe(false);
    expect(overlay.assignedPattern).toBe("sweep_left");
    expect(overlay.shape).toEqual({
      kind: "circle", cxPx: 800, cyPx: 800, rxPx: 360, ryPx: 360,
    });
  });

  it("projects polygon fields vertex by vertex", () => {
    const store = freshStore();
    store.apply(evt(1, "field_added", {
      field: {
        id: "tri",
        label: "Triangle",
        region: { polygon: [[0, 0], [1, 0], [1, 3]] },
        clip_id: "glide",
        allowed_patterns: ["lights_off"],
      },
    }));
    const model = topViewModel(store, "table_a", RES);
    expect(model.overlays[1].shape).toEqual({
      kind: "polygon",
      pointsPx: [[0, 0], [800, 0], [800, 2400]],
    });
  });

  it("shows no vehicle marker while the vehicle tangible is absent", () => {
    const store = freshStore();
    expect(topViewModel(store, "table_a", RES).markers).toEqual([]);
    store.apply(evt(1, "tangible_placed", { tangible_id: "view", pose: pose(0.5, 0.5) }));
    const markers = topViewModel(store, "table_a", RES).markers;
    expect(markers).toHaveLength(1);
    expect(markers.some((m) => m.role === "vehicle")).toBe(false);
  });

  it("places the vehicle marker at the mirrored pose", () => {
    const store = freshStore();
    store.apply(evt(1, "tangible_placed",
      { tangible_id: "car", pose: pose(0.8, 0.8, 90) }));
    const markers = topViewModel(store, "table_a", RES).markers;
    expect(markers).toEqual([{
      tangibleId: "car", role: "vehicle", xPx: 640, yPx: 640, headingDeg: 90,
    }]);
  });

  it("drops the marker again after the tangible is removed", () => {
    const store = freshStore();
    store.apply(evt(1, "tangible_placed", { tangible_id: "car", pose: pose(0.8, 0.8) }));
    store.apply(evt(2, "tangible_removed", { tangible_id: "car" }));
    expect(topViewModel(store, "table_a", RES).markers).toEqual([]);
  });

  it("highlights exactly the active field", () => {
    const store = freshStore();
    store.apply(evt(1, "field_added", {
      field: {
        id: "second",
        label: "Second field",
        region: { circle: [1.5, 2.0, 0.2] },
        clip_id: "glide",
        allowed_patterns: ["lights_off"],
      },
    }));
    store.apply(evt(2, "active_scenario_changed",
      { field_id: "second", clip_id: "glide", epoch_ms: 0 }));
    const model = topViewModel(store, "table_a", RES);
    expect(model.overlays.map((o) => [o.id, o.active])).toEqual([
      ["drive_field", false],
      ["second", true],
    ]);
  });

  it("anonymizes labels as Scene plus ordinal", () => {
    const store = freshStore();
    store.apply(evt(1, "field_added", {
      field: {
        id: "second",
        label: "Second field",
        region: { circle: [1.5, 2.0, 0.2] },
        clip_id: "glide",
        allowed_patterns: ["lights_off"],
      },
    }));
    store.apply(evt(2, "anonymize_toggled", { flag: true }));
    const labels = topViewModel(store, "table_a", RES).overlays.map((o) => o.label);
    expect(labels).toEqual(["Scene 1", "Scene 2"]);
    store.apply(evt(3, "anonymize_toggled", { flag: false }));
    expect(topViewModel(store, "table_a", RES).overlays[0].label)
      .toBe("Vehicle glides across");
  });

  it("renders nothing before the first snapshot", () => {
    const store = new SessionStore();
    const model = topViewModel(store, "table_a", RES);
    expect(model.overlays).toEqual([]);
    expect(model.markers).toEqual([]);
  });
});
