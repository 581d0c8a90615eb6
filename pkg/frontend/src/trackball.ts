/**
 * Light-direction trackball: drags move a point on the unit disk, mapped to
 * a rear-hemisphere camera-frame direction (z toward the viewer, so the
 * center is the frontal flash (0,0,1)). Also shades the gray-ball preview
 * locally so light feedback is instant while a server frame is in flight.
 */

export type Vec3 = [number, number, number];

// keep directions at least ~11 degrees above the camera plane
const MIN_Z = 0.2;
const MAX_TILT = Math.sqrt(1 - MIN_Z * MIN_Z);

export class LightTrackball {
  private u = 0;
  private v = 0;

  constructor(private readonly sensitivity = 0.005) {}

  /** Screen-space drag (pixels, y down) to an updated camera-frame direction. */
  drag(dx: number, dy: number): Vec3 {
    this.u += dx * this.sensitivity;
    this.v -= dy * this.sensitivity;
    const r = Math.hypot(this.u, this.v);
    if (r > MAX_TILT) {
      this.u *= MAX_TILT / r;
      this.v *= MAX_TILT / r;
    }
    return this.direction();
  }

  reset(): Vec3 {
    this.u = 0;
    this.v = 0;
    return this.direction();
  }

  direction(): Vec3 {
    const z = Math.sqrt(Math.max(1 - this.u * this.u - this.v * this.v, 0));
    return [this.u, this.v, z];
  }
}

/**
 * Lambertian gray ball under a camera-frame light, as RGBA bytes.
 * Pixels outside the disk are transparent.
 */
export function shadeBall(size: number, light: Vec3): Uint8ClampedArray {
  const out = new Uint8ClampedArray(size * size * 4);
  const norm = Math.hypot(light[0], light[1], light[2]) || 1;
  const lx = light[0] / norm;
  const ly = light[1] / norm;
  const lz = light[2] / norm;
  for (let row = 0; row < size; row++) {
    for (let col = 0; col < size; col++) {
      const x = ((col + 0.5) / size) * 2 - 1;
      const y = 1 - ((row + 0.5) / size) * 2;
      const zz = 1 - x * x - y * y;
      if (zz < 0) continue;
      const nz = Math.sqrt(zz);
      const lambert = Math.max(x * lx + y * ly + nz * lz, 0);
      const value = Math.round(255 * Math.min(0.15 + 0.8 * lambert, 1));
      const o = (row * size + col) * 4;
      out[o] = value;
      out[o + 1] = value;
      out[o + 2] = value;
      out[o + 3] = 255;
    }
  }
  // marker at the brightest point (normal aligned with the light)
  const mc = Math.round(((lx + 1) / 2) * size);
  const mr = Math.round(((1 - ly) / 2) * size);
  for (let r = mr - 1; r <= mr + 1; r++) {
    for (let c = mc - 1; c <= mc + 1; c++) {
      if (r < 0 || c < 0 || r >= size || c >= size) continue;
      const o = (r * size + c) * 4;
      if (out[o + 3] === 0) continue;
      out[o] = 70;
      out[o + 1] = 120;
      out[o + 2] = 255;
    }
  }
  return out;
}
