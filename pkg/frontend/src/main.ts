/**
 * Viewer entry point: connects to the gateway, renders streamed frames,
 * and turns click-drags into force events. Left-drag on the tree
 * applies a force; left-drag on empty space (or right-drag anywhere)
 * orbits; wheel dollies.
 */

import { OrbitCamera, rayMeshDistance } from "./camera.js";
import { Connection } from "./connection.js";
import { dragToForce } from "./drag.js";
import { Hud } from "./hud.js";
import { MotionClip, Snapshot, WireFrame, parseMotionFile } from "./protocol.js";
import { RenderMode, Renderer } from "./renderer.js";

const canvas = document.getElementById("view") as HTMLCanvasElement;
const hudRoot = document.getElementById("hud") as HTMLElement;
const modeSelect = document.getElementById("mode") as HTMLSelectElement;
const forceScaleInput = document.getElementById("force-scale") as HTMLInputElement;
const durationInput = document.getElementById("duration") as HTMLInputElement;
const motionInput = document.getElementById("motion-file") as HTMLInputElement;

const hud = new Hud(hudRoot);
const renderer = new Renderer(canvas);
const camera = new OrbitCamera();

let snapshot: Snapshot | null = null;
let latestFrame: WireFrame | null = null;
let pendingForce: [number, number, number] | null = null;
let demoClip: MotionClip | null = null;
let demoStart = 0;

function serverUrl(): string {
  const params = new URLSearchParams(location.search);
  const host = params.get("server") ?? `${location.hostname || "localhost"}:8787`;
  return `ws://${host}/ws`;
}

const connection = new Connection(serverUrl(), {
  onStatus: (status, detail) => hud.setStatus(detail ? `${status}: ${detail}` : status),
  onSnapshot: (snap) => {
    snapshot = snap;
    hud.setBudget(snap.budgetMs);
    renderer.setMesh(snap.mesh.positions, snap.mesh.faces);
    frameCamera(snap);
  },
  onFrame: (frame) => {
    latestFrame = frame;
  },
  onAck: (ack) => {
    if (pendingForce) hud.logForce(pendingForce, ack);
    pendingForce = null;
  },
  onMiss: () => {
    if (pendingForce) hud.logForce(pendingForce, "miss");
    pendingForce = null;
  },
  onServerError: (message) => hud.setStatus(`server error: ${message}`),
});

function frameCamera(snap: Snapshot): void {
  const p = snap.mesh.positions;
  let lo = [p[0], p[1], p[2]];
  let hi = [p[0], p[1], p[2]];
  for (let i = 0; i < p.length; i += 3) {
    for (let a = 0; a < 3; a++) {
      lo[a] = Math.min(lo[a], p[i + a]);
      hi[a] = Math.max(hi[a], p[i + a]);
    }
  }
  camera.target = [(lo[0] + hi[0]) / 2, (lo[1] + hi[1]) / 2, (lo[2] + hi[2]) / 2];
  const diag = Math.hypot(hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]);
  camera.distance = Math.max(diag * 1.8, 0.1);
}

// -- input -------------------------------------------------------------

interface PointerState {
  id: number;
  button: number;
  x0: number;
  y0: number;
  x: number;
  y: number;
  orbiting: boolean;
}

let pointer: PointerState | null = null;

canvas.addEventListener("pointerdown", (ev) => {
  if (pointer) return; // one drag at a time
  canvas.setPointerCapture(ev.pointerId);
  const onMesh = snapshot
    ? rayMeshDistance(
        camera.rayThroughPixel(ev.offsetX, ev.offsetY, canvas.clientWidth, canvas.clientHeight),
        currentPositions(),
        snapshot.mesh.faces,
      ) !== null
    : false;
  pointer = {
    id: ev.pointerId,
    button: ev.button,
    x0: ev.offsetX,
    y0: ev.offsetY,
    x: ev.offsetX,
    y: ev.offsetY,
    orbiting: ev.button !== 0 || !onMesh,
  };
});

canvas.addEventListener("pointermove", (ev) => {
  if (!pointer || ev.pointerId !== pointer.id) return;
  const dx = ev.offsetX - pointer.x;
  const dy = ev.offsetY - pointer.y;
  pointer.x = ev.offsetX;
  pointer.y = ev.offsetY;
  if (pointer.orbiting) camera.orbit(-dx * 0.008, dy * 0.008);
});

canvas.addEventListener("pointerup", (ev) => {
  if (!pointer || ev.pointerId !== pointer.id) return;
  const state = pointer;
  pointer = null;
  if (state.orbiting || !snapshot) return;
  const msg = dragToForce(
    camera,
    {
      downX: state.x0, downY: state.y0, upX: ev.offsetX, upY: ev.offsetY,
      width: canvas.clientWidth, height: canvas.clientHeight,
    },
    { forceScale: parseFloat(forceScaleInput.value), duration: parseFloat(durationInput.value) },
    currentPositions(),
    snapshot.mesh.faces,
  );
  if (msg) {
    pendingForce = msg.force;
    connection.sendForce(msg);
  }
});

canvas.addEventListener("wheel", (ev) => {
  ev.preventDefault();
  camera.dolly(Math.exp(ev.deltaY * 0.001));
});

modeSelect.addEventListener("change", () => {
  renderer.mode = modeSelect.value as RenderMode;
});

motionInput.addEventListener("change", async () => {
  const file = motionInput.files?.[0];
  if (!file || !snapshot) return;
  const clip = parseMotionFile(await file.arrayBuffer());
  if (clip.vertexCount !== snapshot.mesh.vertexCount) {
    hud.setStatus(`demo clip has ${clip.vertexCount} vertices, scene has ${snapshot.mesh.vertexCount}`);
    return;
  }
  demoClip = clip;
  demoStart = performance.now();
  hud.setStatus(`demo playback: ${clip.frameCount} frames @ ${clip.fps} fps`);
});

// -- render loop ---------------------------------------------------------

function currentPositions(): Float32Array {
  if (!snapshot) return new Float32Array(0);
  if (latestFrame && latestFrame.kind === 0) return latestFrame.payload;
  return snapshot.mesh.positions;
}

const scratch = { positions: new Float32Array(0) };

function demoPositions(clip: MotionClip, snap: Snapshot): Float32Array {
  const elapsed = (performance.now() - demoStart) / 1000;
  const frame = Math.floor(elapsed * clip.fps) % clip.frameCount;
  const n = snap.mesh.vertexCount * 3;
  if (scratch.positions.length !== n) scratch.positions = new Float32Array(n);
  const base = snap.mesh.positions;
  const disp = clip.displacements;
  const off = frame * n;
  for (let i = 0; i < n; i++) scratch.positions[i] = base[i] + disp[off + i];
  return scratch.positions;
}

function draw(): void {
  requestAnimationFrame(draw);
  const dpr = window.devicePixelRatio || 1;
  const w = Math.floor(canvas.clientWidth * dpr);
  const h = Math.floor(canvas.clientHeight * dpr);
  if (canvas.width !== w || canvas.height !== h) {
    canvas.width = w;
    canvas.height = h;
  }
  if (snapshot) {
    if (demoClip) {
      renderer.updatePositions(demoPositions(demoClip, snapshot));
    } else if (latestFrame) {
      if (latestFrame.kind === 0) renderer.updatePositions(latestFrame.payload);
      else renderer.updateSplats(latestFrame.payload);
    }
  }
  const aspect = canvas.clientWidth / Math.max(canvas.clientHeight, 1);
  renderer.draw(camera.viewMatrix(), camera.projectionMatrix(aspect));
  hud.tick(latestFrame ? latestFrame.timingsMs : null);
}

hud.setStatus("connecting");
connection.connect();
draw();
