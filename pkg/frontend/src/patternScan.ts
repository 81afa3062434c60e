// Display-level scan of pattern source text.  The designer panel needs the
// pattern name, duration and color-param defaults for sources defined live in
// the session; full evaluation stays on the server, which streams rendered
// frames, so a line scan of the declarations is all the client requires.

import { PatternInfo, Rgb } from "./protocol.js";

// A '#' starts a color only when exactly six hex digits follow with no
// word character after them; otherwise it starts a comment.
const PARAM_RE = /^\s*param\s+color\s+([A-Za-z_]\w*)\s*=\s*#([0-9a-fA-F]{6})(?![0-9A-Za-z_])/;
const NAME_RE = /^\s*pattern\s+"([^"]*)"/;
const DURATION_RE = /^\s*duration\s+(\d+)\s*ms\b/;

export function scanPatternSource(source: string): PatternInfo {
  const info: PatternInfo = { source };
  const params: [string, Rgb][] = [];
  for (const line of source.split("\n")) {
    let m = NAME_RE.exec(line);
    if (m !== null && info.name === undefined) {
      info.name = m[1];
      continue;
    }
    m = DURATION_RE.exec(line);
    if (m !== null && info.duration_ms === undefined) {
      info.duration_ms = parseInt(m[1], 10);
      continue;
    }
    m = PARAM_RE.exec(line);
    if (m !== null) {
      params.push([m[1], hexToRgb(m[2])]);
    }
  }
  info.params = params;
  return info;
}

export function hexToRgb(hex: string): Rgb {
  const clean = hex.startsWith("#") ? hex.slice(1) : hex;
  return [
    parseInt(clean.slice(0, 2), 16),
    parseInt(clean.slice(2, 4), 16),
    parseInt(clean.slice(4, 6), 16),
  ];
}

export function rgbToHex(rgb: Rgb): string {
  return rgb.map((c) => c.toString(16).padStart(2, "0").toUpperCase()).join("");
}
