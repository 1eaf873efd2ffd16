/**
 * Orbit camera and the small amount of linear algebra the viewer needs.
 * Column-major 4x4 matrices, right-handed, -z forward in view space.
 */

export type Vec3 = [number, number, number];

export function add(a: Vec3, b: Vec3): Vec3 {
  return [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
}

export function sub(a: Vec3, b: Vec3): Vec3 {
  return [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
}

export function scale(a: Vec3, s: number): Vec3 {
  return [a[0] * s, a[1] * s, a[2] * s];
}

export function dot(a: Vec3, b: Vec3): number {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

export function cross(a: Vec3, b: Vec3): Vec3 {
  return [
    a[1] * b[2] - a[2] * b[1],
    a[2] * b[0] - a[0] * b[2],
    a[0] * b[1] - a[1] * b[0],
  ];
}

export function length(a: Vec3): number {
  return Math.hypot(a[0], a[1], a[2]);
}

export function normalize(a: Vec3): Vec3 {
  const len = length(a);
  if (len === 0) throw new Error("cannot normalize a zero vector");
  return scale(a, 1 / len);
}

export interface Ray {
  origin: Vec3;
  direction: Vec3;
}

/**
 * Orbit camera: yaw/pitch around a target at a distance, z-up world.
 */
export class OrbitCamera {
  target: Vec3 = [0, 0, 0.5];
  distance = 3.0;
  yaw = 0.6;
  pitch = 0.3;
  fovY = (45 * Math.PI) / 180;
  near = 0.01;
  far = 100.0;

  eye(): Vec3 {
    const cp = Math.cos(this.pitch);
    return add(this.target, [
      this.distance * cp * Math.cos(this.yaw),
      this.distance * cp * Math.sin(this.yaw),
      this.distance * Math.sin(this.pitch),
    ]);
  }

  /** View basis in world space: right, up, forward (toward the target). */
  basis(): { right: Vec3; up: Vec3; forward: Vec3 } {
    const forward = normalize(sub(this.target, this.eye()));
    const worldUp: Vec3 = [0, 0, 1];
    let right = cross(forward, worldUp);
    if (length(right) < 1e-9) right = [1, 0, 0]; // looking straight down
    right = normalize(right);
    const up = normalize(cross(right, forward));
    return { right, up, forward };
  }

  viewMatrix(): Float32Array {
    const { right, up, forward } = this.basis();
    const e = this.eye();
    // rows of the rotation part are the basis vectors; translation brings eye to origin
    return new Float32Array([
      right[0], up[0], -forward[0], 0,
      right[1], up[1], -forward[1], 0,
      right[2], up[2], -forward[2], 0,
      -dot(right, e), -dot(up, e), dot(forward, e), 1,
    ]);
  }

  projectionMatrix(aspect: number): Float32Array {
    const f = 1 / Math.tan(this.fovY / 2);
    const { near, far } = this;
    return new Float32Array([
      f / aspect, 0, 0, 0,
      0, f, 0, 0,
      0, 0, (far + near) / (near - far), -1,
      0, 0, (2 * far * near) / (near - far), 0,
    ]);
  }

  /** World-space ray through a pixel; px/py in CSS pixels, origin top-left. */
  rayThroughPixel(px: number, py: number, width: number, height: number): Ray {
    const ndcX = (2 * px) / width - 1;
    const ndcY = 1 - (2 * py) / height;
    const aspect = width / height;
    const tanHalf = Math.tan(this.fovY / 2);
    const { right, up, forward } = this.basis();
    const direction = normalize(
      add(
        add(scale(right, ndcX * aspect * tanHalf), scale(up, ndcY * tanHalf)),
        forward,
      ),
    );
    return { origin: this.eye(), direction };
  }

  /**
   * World displacement of a screen-space drag, taken in the camera
   * plane at `depth` along the view direction (pixels -> world units).
   */
  unprojectDrag(
    dx: number,
    dy: number,
    depth: number,
    width: number,
    height: number,
  ): Vec3 {
    const tanHalf = Math.tan(this.fovY / 2);
    const worldPerPixelY = (2 * depth * tanHalf) / height;
    const aspect = width / height;
    const worldPerPixelX = (2 * depth * tanHalf * aspect) / width;
    const { right, up } = this.basis();
    // screen y grows downward
    return add(scale(right, dx * worldPerPixelX), scale(up, -dy * worldPerPixelY));
  }

  orbit(dYaw: number, dPitch: number): void {
    this.yaw += dYaw;
    const limit = Math.PI / 2 - 0.01;
    this.pitch = Math.min(limit, Math.max(-limit, this.pitch + dPitch));
  }

  dolly(factor: number): void {
    this.distance = Math.min(1e4, Math.max(1e-3, this.distance * factor));
  }
}

/**
 * First intersection of a ray with a triangle mesh (Moller-Trumbore).
 * Returns the hit distance or null. Small meshes only; the viewer uses
 * it to estimate pick depth before the server resolves the real pick.
 */
export function rayMeshDistance(
  ray: Ray,
  positions: Float32Array,
  faces: Uint32Array,
): number | null {
  const [ox, oy, oz] = ray.origin;
  const [dx, dy, dz] = ray.direction;
  let best: number | null = null;
  for (let f = 0; f < faces.length; f += 3) {
    const a = faces[f] * 3;
    const b = faces[f + 1] * 3;
    const c = faces[f + 2] * 3;
    const e1x = positions[b] - positions[a];
    const e1y = positions[b + 1] - positions[a + 1];
    const e1z = positions[b + 2] - positions[a + 2];
    const e2x = positions[c] - positions[a];
    const e2y = positions[c + 1] - positions[a + 1];
    const e2z = positions[c + 2] - positions[a + 2];
    const px = dy * e2z - dz * e2y;
    const py = dz * e2x - dx * e2z;
    const pz = dx * e2y - dy * e2x;
    const det = e1x * px + e1y * py + e1z * pz;
    if (Math.abs(det) < 1e-12) continue;
    const inv = 1 / det;
    const tx = ox - positions[a];
    const ty = oy - positions[a + 1];
    const tz = oz - positions[a + 2];
    const u = (tx * px + ty * py + tz * pz) * inv;
    if (u < -1e-9 || u > 1 + 1e-9) continue;
    const qx = ty * e1z - tz * e1y;
    const qy = tz * e1x - tx * e1z;
    const qz = tx * e1y - ty * e1x;
    const v = (dx * qx + dy * qy + dz * qz) * inv;
    if (v < -1e-9 || u + v > 1 + 1e-9) continue;
    const t = (e2x * qx + e2y * qy + e2z * qz) * inv;
    if (t > 1e-9 && (best === null || t < best)) best = t;
  }
  return best;
}
