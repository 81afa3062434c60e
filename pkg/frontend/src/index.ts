export * from "./protocol.js";
export * from "./framing.js";
export * from "./dmx.js";
export * from "./clipPlayback.js";
export * from "./calibration.js";
export * from "./store.js";
export * from "./patternScan.js";
export * from "./topView.js";
export * from "./firstPerson.js";
export * from "./configPanel.js";
export * from "./virtualTangible.js";
