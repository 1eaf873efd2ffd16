/**
 * WebGL2 renderer: point cloud, wireframe, and oriented splat ellipses
 * (unlit impostors, no spherical harmonics, matching the upstream
 * scope). Splat quads are expanded in the vertex shader from the two
 * tangent axes of each Gaussian's rotation/scale.
 */

import { Vec3 } from "./camera.js";

export type RenderMode = "points" | "splats" | "wireframe";

const POINT_VS = `#version 300 es
layout(location=0) in vec3 position;
uniform mat4 u_view;
uniform mat4 u_proj;
uniform float u_pointSize;
void main() {
  gl_Position = u_proj * u_view * vec4(position, 1.0);
  gl_PointSize = u_pointSize;
}`;

const POINT_FS = `#version 300 es
precision mediump float;
uniform vec4 u_color;
out vec4 outColor;
void main() { outColor = u_color; }`;

const SPLAT_VS = `#version 300 es
layout(location=0) in vec2 corner;      // quad corner in [-1,1]^2
layout(location=1) in vec3 center;      // per instance
layout(location=2) in vec4 quat;        // per instance, w x y z
layout(location=3) in vec3 scale;       // per instance
uniform mat4 u_view;
uniform mat4 u_proj;
out vec2 v_uv;

mat3 quatToMat(vec4 q) {
  float w = q.x, x = q.y, y = q.z, z = q.w;
  return mat3(
    1.0-2.0*(y*y+z*z), 2.0*(x*y+w*z),     2.0*(x*z-w*y),
    2.0*(x*y-w*z),     1.0-2.0*(x*x+z*z), 2.0*(y*z+w*x),
    2.0*(x*z+w*y),     2.0*(y*z-w*x),     1.0-2.0*(x*x+y*y));
}

void main() {
  mat3 R = quatToMat(quat);
  // columns 2 and 3 of the rotation span the face plane; the ellipse
  // uses them scaled by the tangent scales (3 sigma footprint)
  vec3 axis1 = R[1] * scale.y * 3.0;
  vec3 axis2 = R[2] * scale.z * 3.0;
  vec3 world = center + corner.x * axis1 + corner.y * axis2;
  v_uv = corner;
  gl_Position = u_proj * u_view * vec4(world, 1.0);
}`;

const SPLAT_FS = `#version 300 es
precision mediump float;
in vec2 v_uv;
uniform vec4 u_color;
out vec4 outColor;
void main() {
  float r2 = dot(v_uv, v_uv);
  if (r2 > 1.0) discard;
  float alpha = exp(-3.0 * r2) * u_color.a;
  outColor = vec4(u_color.rgb, alpha);
}`;

/** Quaternion (w,x,y,z) to column-major 3x3, exported for tests. */
export function quatToMat3(q: [number, number, number, number]): number[] {
  const [w, x, y, z] = q;
  return [
    1 - 2 * (y * y + z * z), 2 * (x * y + w * z), 2 * (x * z - w * y),
    2 * (x * y - w * z), 1 - 2 * (x * x + z * z), 2 * (y * z + w * x),
    2 * (x * z + w * y), 2 * (y * z - w * x), 1 - 2 * (x * x + y * y),
  ];
}

/** The two in-plane ellipse axes of a posed splat (tests + CPU paths). */
export function splatAxes(
  quat: [number, number, number, number],
  scaleVec: [number, number, number],
): { axis1: Vec3; axis2: Vec3 } {
  const m = quatToMat3(quat);
  // columns 1 and 2 (0-based) are the tangent directions r2, r3
  return {
    axis1: [m[3] * scaleVec[1], m[4] * scaleVec[1], m[5] * scaleVec[1]],
    axis2: [m[6] * scaleVec[2], m[7] * scaleVec[2], m[8] * scaleVec[2]],
  };
}

function compile(gl: WebGL2RenderingContext, type: number, src: string): WebGLShader {
  const shader = gl.createShader(type)!;
  gl.shaderSource(shader, src);
  gl.compileShader(shader);
  if (!gl.getShaderParameter(shader, gl.COMPILE_STATUS)) {
    throw new Error(`shader compile failed: ${gl.getShaderInfoLog(shader)}`);
  }
  return shader;
}

function link(gl: WebGL2RenderingContext, vs: string, fs: string): WebGLProgram {
  const program = gl.createProgram()!;
  gl.attachShader(program, compile(gl, gl.VERTEX_SHADER, vs));
  gl.attachShader(program, compile(gl, gl.FRAGMENT_SHADER, fs));
  gl.linkProgram(program);
  if (!gl.getProgramParameter(program, gl.LINK_STATUS)) {
    throw new Error(`program link failed: ${gl.getProgramInfoLog(program)}`);
  }
  return program;
}

/** Unique undirected edges from a triangle list (for wireframe mode). */
export function edgesFromFaces(faces: Uint32Array): Uint32Array {
  const seen = new Set<number>();
  const out: number[] = [];
  const push = (a: number, b: number) => {
    const key = a < b ? a * 0x100000 + b : b * 0x100000 + a;
    if (!seen.has(key)) {
      seen.add(key);
      out.push(a, b);
    }
  };
  for (let i = 0; i < faces.length; i += 3) {
    push(faces[i], faces[i + 1]);
    push(faces[i + 1], faces[i + 2]);
    push(faces[i + 2], faces[i]);
  }
  return new Uint32Array(out);
}

export class Renderer {
  private gl: WebGL2RenderingContext;
  private pointProgram: WebGLProgram;
  private splatProgram: WebGLProgram;
  private positionBuffer: WebGLBuffer;
  private edgeBuffer: WebGLBuffer;
  private cornerBuffer: WebGLBuffer;
  private instanceBuffer: WebGLBuffer;
  private edgeCount = 0;
  private vertexCount = 0;
  private splatCount = 0;
  mode: RenderMode = "points";

  constructor(private canvas: HTMLCanvasElement) {
    const gl = canvas.getContext("webgl2", { antialias: true });
    if (!gl) throw new Error("WebGL2 unavailable");
    this.gl = gl;
    this.pointProgram = link(gl, POINT_VS, POINT_FS);
    this.splatProgram = link(gl, SPLAT_VS, SPLAT_FS);
    this.positionBuffer = gl.createBuffer()!;
    this.edgeBuffer = gl.createBuffer()!;
    this.instanceBuffer = gl.createBuffer()!;
    this.cornerBuffer = gl.createBuffer()!;
    gl.bindBuffer(gl.ARRAY_BUFFER, this.cornerBuffer);
    gl.bufferData(
      gl.ARRAY_BUFFER,
      new Float32Array([-1, -1, 1, -1, -1, 1, 1, -1, 1, 1, -1, 1]),
      gl.STATIC_DRAW,
    );
    gl.enable(gl.BLEND);
    gl.blendFunc(gl.SRC_ALPHA, gl.ONE_MINUS_SRC_ALPHA);
    gl.clearColor(0.07, 0.09, 0.11, 1.0);
  }

  setMesh(positions: Float32Array, faces: Uint32Array): void {
    const gl = this.gl;
    this.vertexCount = positions.length / 3;
    gl.bindBuffer(gl.ARRAY_BUFFER, this.positionBuffer);
    gl.bufferData(gl.ARRAY_BUFFER, positions, gl.DYNAMIC_DRAW);
    const edges = edgesFromFaces(faces);
    this.edgeCount = edges.length;
    gl.bindBuffer(gl.ELEMENT_ARRAY_BUFFER, this.edgeBuffer);
    gl.bufferData(gl.ELEMENT_ARRAY_BUFFER, edges, gl.STATIC_DRAW);
  }

  updatePositions(positions: Float32Array): void {
    const gl = this.gl;
    gl.bindBuffer(gl.ARRAY_BUFFER, this.positionBuffer);
    gl.bufferSubData(gl.ARRAY_BUFFER, 0, positions);
  }

  /** Per-splat payload rows: mean(3) quat(4) scale(3). */
  updateSplats(payload: Float32Array): void {
    const gl = this.gl;
    this.splatCount = payload.length / 10;
    gl.bindBuffer(gl.ARRAY_BUFFER, this.instanceBuffer);
    gl.bufferData(gl.ARRAY_BUFFER, payload, gl.DYNAMIC_DRAW);
  }

  draw(view: Float32Array, proj: Float32Array): void {
    const gl = this.gl;
    gl.viewport(0, 0, this.canvas.width, this.canvas.height);
    gl.clear(gl.COLOR_BUFFER_BIT | gl.DEPTH_BUFFER_BIT);
    if (this.mode === "splats" && this.splatCount > 0) {
      this.drawSplats(view, proj);
    } else if (this.vertexCount > 0) {
      this.drawPoints(view, proj, this.mode === "wireframe");
    }
  }

  private drawPoints(view: Float32Array, proj: Float32Array, wire: boolean): void {
    const gl = this.gl;
    gl.useProgram(this.pointProgram);
    gl.uniformMatrix4fv(gl.getUniformLocation(this.pointProgram, "u_view"), false, view);
    gl.uniformMatrix4fv(gl.getUniformLocation(this.pointProgram, "u_proj"), false, proj);
    gl.uniform1f(gl.getUniformLocation(this.pointProgram, "u_pointSize"), 3.0);
    gl.uniform4f(gl.getUniformLocation(this.pointProgram, "u_color"), 0.55, 0.85, 0.55, 1.0);
    gl.bindBuffer(gl.ARRAY_BUFFER, this.positionBuffer);
    gl.enableVertexAttribArray(0);
    gl.vertexAttribPointer(0, 3, gl.FLOAT, false, 0, 0);
    if (wire) {
      gl.bindBuffer(gl.ELEMENT_ARRAY_BUFFER, this.edgeBuffer);
      gl.drawElements(gl.LINES, this.edgeCount, gl.UNSIGNED_INT, 0);
    } else {
      gl.drawArrays(gl.POINTS, 0, this.vertexCount);
    }
  }

  private drawSplats(view: Float32Array, proj: Float32Array): void {
    const gl = this.gl;
    gl.useProgram(this.splatProgram);
    gl.uniformMatrix4fv(gl.getUniformLocation(this.splatProgram, "u_view"), false, view);
    gl.uniformMatrix4fv(gl.getUniformLocation(this.splatProgram, "u_proj"), false, proj);
    gl.uniform4f(gl.getUniformLocation(this.splatProgram, "u_color"), 0.6, 0.8, 0.55, 0.85);

    gl.bindBuffer(gl.ARRAY_BUFFER, this.cornerBuffer);
    gl.enableVertexAttribArray(0);
    gl.vertexAttribPointer(0, 2, gl.FLOAT, false, 0, 0);
    gl.vertexAttribDivisor(0, 0);

    const stride = 10 * 4;
    gl.bindBuffer(gl.ARRAY_BUFFER, this.instanceBuffer);
    gl.enableVertexAttribArray(1);
    gl.vertexAttribPointer(1, 3, gl.FLOAT, false, stride, 0);
    gl.vertexAttribDivisor(1, 1);
    gl.enableVertexAttribArray(2);
    gl.vertexAttribPointer(2, 4, gl.FLOAT, false, stride, 12);
    gl.vertexAttribDivisor(2, 1);
    gl.enableVertexAttribArray(3);
    gl.vertexAttribPointer(3, 3, gl.FLOAT, false, stride, 28);
    gl.vertexAttribDivisor(3, 1);

    gl.drawArraysInstanced(gl.TRIANGLES, 0, 6, this.splatCount);
  }
}
