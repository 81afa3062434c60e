// Browser entry point.  One page serves all three client kinds, picked by
// query string:
//
//   ?server=127.0.0.1:8765&view=top_view&display=table_a&pitch=0.25
//   ?server=127.0.0.1:8765&view=first_person
//   ?server=127.0.0.1:8765&view=panel
//
// Top-view pages track pointer drags of a selected virtual tangible and send
// the synthesized touch triads; releasing the pointer stops the touches so
// the server's removal debounce lifts the tangible.

import { hello, isFrame, ServerMessage } from "./protocol.js";
import { SessionStore } from "./store.js";
import { topViewModel, viewportFor } from "./topView.js";
import { firstPersonModel } from "./firstPerson.js";
import { panelModel, assignPattern, pickColor, setBrightness, toggleAnonymize } from "./configPanel.js";
import { triadPoints } from "./virtualTangible.js";
import { pxToWorld } from "./calibration.js";
import { hexToRgb } from "./patternScan.js";

const params = new URLSearchParams(location.search);
const server = params.get("server") ?? "127.0.0.1:8765";
const view = params.get("view") ?? "top_view";
const displayId = params.get("display") ?? "table_a";
const pitchMm = Number(params.get("pitch") ?? "0.25");

const store = new SessionStore();
const canvas = document.createElement("canvas");
canvas.width = innerWidth;
canvas.height = innerHeight;
document.body.style.margin = "0";
document.body.appendChild(canvas);
const ctx = canvas.getContext("2d")!;

// Server-clock estimate: last frame timestamp plus local time since receipt.
let frameAtPerf = 0;
let frameTms = 0;

const socket = new WebSocket(`ws://${server}/`);
socket.onopen = () => {
  const helloMsg = view === "top_view"
    ? hello("top_view", { displayId, resolution: [canvas.width, canvas.height], pixelPitchMm: pitchMm })
    : hello(view);
  socket.send(JSON.stringify(helloMsg));
};
socket.onmessage = (ev) => {
  const message = JSON.parse(String(ev.data)) as ServerMessage;
  if (isFrame(message)) {
    frameAtPerf = performance.now();
    frameTms = message.t_ms;
  }
  store.apply(message);
  if (view === "panel") renderPanel();
};

function serverNow(): number {
  return frameTms + (performance.now() - frameAtPerf);
}

// -- top view ---------------------------------------------------------------

let dragTangible: string | null = null;

canvas.onpointerdown = (ev) => {
  const env = store.environment;
  if (view !== "top_view" || env === null) return;
  // First tangible of each role: left half of the screen drags the vehicle,
  // right half the view controller.  Good enough for mouse-driven demos.
  const role = ev.clientX < canvas.width / 2 ? "vehicle" : "view_controller";
  dragTangible = env.tangibles.find((t) => t.role === role)?.id ?? null;
  canvas.setPointerCapture(ev.pointerId);
  sendTouch(ev);
};
canvas.onpointermove = (ev) => {
  if (dragTangible !== null) sendTouch(ev);
};
canvas.onpointerup = () => {
  dragTangible = null;
  socket.send(JSON.stringify({ kind: "touch", display_id: displayId, points: [] }));
};

function sendTouch(ev: PointerEvent) {
  const env = store.environment;
  const spec = env?.tangibles.find((t) => t.id === dragTangible);
  if (env === undefined || env === null || spec === undefined) return;
  const vp = viewportFor(env, displayId, [canvas.width, canvas.height], pitchMm);
  const [x, y] = pxToWorld(vp, ev.clientX, ev.clientY);
  const points = triadPoints(spec.pins_mm, vp, x, y, 0);
  socket.send(JSON.stringify({ kind: "touch", display_id: displayId, points }));
}

function drawTopView() {
  const model = topViewModel(store, displayId, [canvas.width, canvas.height]);
  ctx.fillStyle = "#101418";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  ctx.font = "16px sans-serif";
  for (const overlay of model.overlays) {
    ctx.strokeStyle = overlay.active ? "#ffd23c" : "#3c78ff";
    ctx.lineWidth = overlay.active ? 4 : 2;
    ctx.beginPath();
    if (overlay.shape.kind === "circle") {
      ctx.ellipse(overlay.shape.cxPx, overlay.shape.cyPx,
                  overlay.shape.rxPx, overlay.shape.ryPx, 0, 0, 2 * Math.PI);
    } else {
      const pts = overlay.shape.pointsPx;
      ctx.moveTo(pts[0][0], pts[0][1]);
      for (const [x, y] of pts.slice(1)) ctx.lineTo(x, y);
      ctx.closePath();
    }
    ctx.stroke();
    ctx.fillStyle = "#c8d2dc";
    const cx = overlay.shape.kind === "circle" ? overlay.shape.cxPx : overlay.shape.pointsPx[0][0];
    const cy = overlay.shape.kind === "circle" ? overlay.shape.cyPx : overlay.shape.pointsPx[0][1];
    ctx.fillText(overlay.label, cx + 8, cy - 8);
  }
  for (const marker of model.markers) {
    ctx.save();
    ctx.translate(marker.xPx, marker.yPx);
    ctx.rotate((marker.headingDeg * Math.PI) / 180);
    ctx.fillStyle = marker.role === "vehicle" ? "#ff5046" : "#46ff8c";
    ctx.fillRect(-18, -12, 36, 24);
    ctx.fillStyle = "#ffffff";
    ctx.fillRect(10, -4, 8, 8);
    ctx.restore();
  }
}

// -- first person -----------------------------------------------------------

function drawFirstPerson() {
  const model = firstPersonModel(store, serverNow());
  const w = canvas.width;
  const h = canvas.height;
  ctx.fillStyle = "#1e2832";
  ctx.fillRect(0, 0, w, h / 2);
  ctx.fillStyle = "#32322d";
  ctx.fillRect(0, h / 2, w, h / 2);
  if (model.vehicle !== null && model.camera !== null && !model.vehicle.inLoopDelay) {
    // Simple perspective: scale by distance along the camera axis.
    const dx = model.vehicle.pose.x - model.camera.x;
    const dy = model.vehicle.pose.y - model.camera.y;
    const dist = Math.max(0.5, Math.hypot(dx, dy));
    const scale = 260 / dist;
    const cx = w / 2 + Math.atan2(dy, dx) * 300;
    ctx.fillStyle = "#dcdcdc";
    ctx.fillRect(cx - scale, h / 2 - scale * 0.8, scale * 2, scale * 0.8);
    // Front light strip, left to right across the body.
    const step = (scale * 2) / model.strip.length;
    model.strip.forEach((pixel, i) => {
      ctx.fillStyle = `#${pixel}`;
      ctx.fillRect(cx - scale + i * step, h / 2 - scale * 0.22, Math.ceil(step), scale * 0.12);
    });
  }
  // Strip telltale along the bottom edge, mirrored from the LED gateway feed.
  const step = w / model.strip.length;
  model.strip.forEach((pixel, i) => {
    ctx.fillStyle = `#${pixel}`;
    ctx.fillRect(i * step, h - 24, Math.ceil(step), 24);
  });
}

// -- designer panel ---------------------------------------------------------

const panelRoot = document.createElement("div");

function renderPanel() {
  panelRoot.innerHTML = "";
  panelRoot.style.cssText = "font-family:sans-serif;padding:12px;max-width:640px";
  const brightness = document.createElement("input");
  brightness.type = "range";
  brightness.min = "0";
  brightness.max = "1";
  brightness.step = "0.05";
  brightness.value = String(store.state?.brightness ?? 1);
  brightness.onchange = () =>
    socket.send(JSON.stringify(setBrightness(Number(brightness.value))));
  panelRoot.append("Brightness ", brightness);

  const anon = document.createElement("button");
  anon.textContent = store.state?.anonymized ? "Show labels" : "Anonymize labels";
  anon.onclick = () =>
    socket.send(JSON.stringify(toggleAnonymize(!store.state?.anonymized)));
  panelRoot.append(" ", anon);

  for (const field of panelModel(store)) {
    const section = document.createElement("fieldset");
    const legend = document.createElement("legend");
    legend.textContent = field.active ? `${field.label} (active)` : field.label;
    section.appendChild(legend);
    for (const choice of field.choices) {
      const b = document.createElement("button");
      b.textContent = choice.assigned ? `[${choice.name}]` : choice.name;
      b.onclick = () =>
        socket.send(JSON.stringify(assignPattern(field.fieldId, choice.patternId)));
      section.appendChild(b);
    }
    for (const param of field.params) {
      const c = document.createElement("input");
      c.type = "color";
      c.value = "#" + param.rgb.map((v) => v.toString(16).padStart(2, "0")).join("");
      c.onchange = () =>
        socket.send(JSON.stringify(pickColor(field.fieldId, param.name, hexToRgb(c.value))));
      section.append(` ${param.name} `, c);
    }
    panelRoot.appendChild(section);
  }
}

if (view === "panel") {
  canvas.remove();
  document.body.appendChild(panelRoot);
} else {
  const redraw = () => {
    if (view === "top_view") drawTopView();
    else drawFirstPerson();
    requestAnimationFrame(redraw);
  };
  requestAnimationFrame(redraw);
}
