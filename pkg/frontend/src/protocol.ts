/**
 * Gateway protocol types and codecs.
 *
 * Mirrors docs/protocol.md exactly; that file is the single source of
 * truth. All multi-byte values little-endian.
 */

export const PROTOCOL_VERSION = 1;
export const WIRE_MAGIC = 0x46545053; // "SPTF" read as LE uint32
export const HEADER_BYTES = 16;
export const TIMINGS_BYTES = 12;
export const KIND_VERTICES = 0;
export const KIND_SPLATS = 1;
export const FLOATS_PER_SPLAT = 10; // mean(3) quat wxyz(4) scale(3)

export interface SnapshotMesh {
  vertexCount: number;
  faceCount: number;
  positions: Float32Array; // vertexCount * 3
  faces: Uint32Array;      // faceCount * 3
}

export interface Snapshot {
  version: number;
  payloadKind: "vertices" | "splats";
  budgetMs: number;
  mesh: SnapshotMesh;
  grid: { resolution: number; voxelCount: number; voxelSize: number; origin: [number, number, number] };
  splats: { count: number; perFace: number } | null;
  config: { dt: number; dampingRatio: number; forceScale: number; integrator: string };
}

export interface WireFrame {
  kind: number;
  index: number;
  simTime: number;
  timingsMs: [number, number, number]; // modal, devoxelize, pose
  payload: Float32Array;
}

export interface ForceMessage {
  voxel?: number;
  ray?: { origin: [number, number, number]; direction: [number, number, number] };
  force: [number, number, number];
  duration: number;
}

function decodeBase64(b64: string): Uint8Array {
  if (typeof atob === "function") {
    const text = atob(b64);
    const out = new Uint8Array(text.length);
    for (let i = 0; i < text.length; i++) out[i] = text.charCodeAt(i);
    return out;
  }
  // node (vitest) path
  return new Uint8Array(Buffer.from(b64, "base64"));
}

/** Parse the /snapshot JSON body (or the websocket snapshot payload). */
export function decodeSnapshot(raw: any): Snapshot {
  const mesh = raw.mesh;
  const posBytes = decodeBase64(mesh.vertices_b64);
  const faceBytes = decodeBase64(mesh.faces_b64);
  const positions = new Float32Array(posBytes.buffer, posBytes.byteOffset, mesh.vertex_count * 3);
  const faces = new Uint32Array(faceBytes.buffer, faceBytes.byteOffset, mesh.face_count * 3);
  if (positions.length !== mesh.vertex_count * 3) {
    throw new Error("snapshot vertex payload length mismatch");
  }
  if (faces.length !== mesh.face_count * 3) {
    throw new Error("snapshot face payload length mismatch");
  }
  return {
    version: raw.version,
    payloadKind: raw.payload_kind,
    budgetMs: raw.budget_ms,
    mesh: {
      vertexCount: mesh.vertex_count,
      faceCount: mesh.face_count,
      positions: positions.slice(),
      faces: faces.slice(),
    },
    grid: {
      resolution: raw.grid.resolution,
      voxelCount: raw.grid.voxel_count,
      voxelSize: raw.grid.voxel_size,
      origin: raw.grid.origin,
    },
    splats: raw.splats
      ? { count: raw.splats.count, perFace: raw.splats.per_face }
      : null,
    config: {
      dt: raw.config.dt,
      dampingRatio: raw.config.damping_ratio,
      forceScale: raw.config.force_scale,
      integrator: raw.config.integrator,
    },
  };
}

/** Parse one binary websocket frame. Throws on malformed input. */
export function parseWireFrame(buffer: ArrayBuffer): WireFrame {
  if (buffer.byteLength < HEADER_BYTES + TIMINGS_BYTES) {
    throw new Error(`wire frame too short: ${buffer.byteLength} bytes`);
  }
  const view = new DataView(buffer);
  if (view.getUint32(0, true) !== WIRE_MAGIC) {
    throw new Error("bad wire frame magic");
  }
  const kind = view.getUint8(4);
  const index = view.getUint32(8, true);
  const simTime = view.getFloat32(12, true);
  const timingsMs: [number, number, number] = [
    view.getFloat32(16, true),
    view.getFloat32(20, true),
    view.getFloat32(24, true),
  ];
  const payloadBytes = buffer.byteLength - HEADER_BYTES - TIMINGS_BYTES;
  if (payloadBytes % 4 !== 0) {
    throw new Error("wire frame payload not float-aligned");
  }
  const payload = new Float32Array(buffer, HEADER_BYTES + TIMINGS_BYTES, payloadBytes / 4);
  const width = kind === KIND_VERTICES ? 3 : FLOATS_PER_SPLAT;
  if (payload.length % width !== 0) {
    throw new Error(`payload length ${payload.length} inconsistent with kind ${kind}`);
  }
  return { kind, index, simTime, timingsMs, payload };
}

/**
 * Split a golden-capture container (uint32 length prefix per frame)
 * into individual frame buffers. The whole buffer must be consumed.
 */
export function splitCapture(buffer: ArrayBuffer): ArrayBuffer[] {
  const view = new DataView(buffer);
  const frames: ArrayBuffer[] = [];
  let offset = 0;
  while (offset < buffer.byteLength) {
    if (offset + 4 > buffer.byteLength) throw new Error("truncated capture length");
    const length = view.getUint32(offset, true);
    offset += 4;
    if (offset + length > buffer.byteLength) throw new Error("truncated capture frame");
    frames.push(buffer.slice(offset, offset + length));
    offset += length;
  }
  return frames;
}

export function helloMessage(): string {
  return JSON.stringify({ type: "hello", version: PROTOCOL_VERSION });
}

export function snapshotRequest(): string {
  return JSON.stringify({ type: "snapshot" });
}

export function encodeForce(msg: ForceMessage): string {
  const body: Record<string, unknown> = {
    type: "force",
    force: msg.force,
    duration: msg.duration,
  };
  if (msg.voxel !== undefined) body.voxel = msg.voxel;
  else if (msg.ray) body.ray = msg.ray;
  else throw new Error("force message needs a voxel or a ray");
  return JSON.stringify(body);
}

/** Parsed MOTN motion file for demo-mode playback. */
export interface MotionClip {
  vertexCount: number;
  frameCount: number;
  fps: number;
  displacements: Float32Array; // frameCount * vertexCount * 3
}

export function parseMotionFile(buffer: ArrayBuffer): MotionClip {
  const view = new DataView(buffer);
  const magic = view.getUint32(0, true);
  if (magic !== 0x4e544f4d) throw new Error("not a MOTN file"); // "MOTN" LE
  const vertexCount = view.getUint32(4, true);
  const frameCount = view.getUint32(8, true);
  const fps = view.getFloat32(12, true);
  const expected = frameCount * vertexCount * 3;
  const displacements = new Float32Array(buffer, 16, expected);
  return { vertexCount, frameCount, fps, displacements };
}
