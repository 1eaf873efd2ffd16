/**
 * Click-drag to force event: the mouse-down point picks (by ray), the
 * drag vector becomes the force direction in the camera plane at the
 * pick depth, and drag length times the force-scale slider sets the
 * magnitude.
 */

import { OrbitCamera, Ray, length, normalize, rayMeshDistance, scale } from "./camera.js";
import { ForceMessage } from "./protocol.js";

export interface DragSettings {
  forceScale: number; // slider value, force units per pixel
  duration: number;   // seconds
}

export interface DragInput {
  downX: number;
  downY: number;
  upX: number;
  upY: number;
  width: number;
  height: number;
}

const MIN_DRAG_PIXELS = 2;

/**
 * Build the force message for a completed drag, or null when the drag
 * is empty (no pixels moved, zero force scale, or the pick ray misses
 * the mesh entirely).
 */
export function dragToForce(
  camera: OrbitCamera,
  input: DragInput,
  settings: DragSettings,
  meshPositions?: Float32Array,
  meshFaces?: Uint32Array,
): ForceMessage | null {
  const dx = input.upX - input.downX;
  const dy = input.upY - input.downY;
  const pixels = Math.hypot(dx, dy);
  if (pixels < MIN_DRAG_PIXELS || settings.forceScale === 0) return null;

  const ray: Ray = camera.rayThroughPixel(input.downX, input.downY, input.width, input.height);

  let depth = camera.distance; // fall back to the orbit target depth
  if (meshPositions && meshFaces) {
    const hit = rayMeshDistance(ray, meshPositions, meshFaces);
    if (hit === null) return null; // picking empty space applies no force
    depth = hit;
  }

  const world = camera.unprojectDrag(dx, dy, depth, input.width, input.height);
  const direction = normalize(world);
  const magnitude = pixels * settings.forceScale;
  const force = scale(direction, magnitude);
  return {
    ray: {
      origin: [ray.origin[0], ray.origin[1], ray.origin[2]],
      direction: [ray.direction[0], ray.direction[1], ray.direction[2]],
    },
    force: [force[0], force[1], force[2]],
    duration: settings.duration,
  };
}

export function dragLength(input: DragInput): number {
  return Math.hypot(input.upX - input.downX, input.upY - input.downY);
}

export { length as vecLength };
