/**
 * Orbit camera over a target point (z-up world), serializable to the render
 * service's camera schema.
 */

import type { CameraJson } from "./schema.js";
import type { Vec3 } from "./trackball.js";

const MAX_ELEVATION = (85 * Math.PI) / 180;

export interface OrbitState {
  azimuth: number;
  elevation: number;
  distance: number;
  target: Vec3;
}

export class OrbitCamera {
  azimuth: number;
  elevation: number;
  distance: number;
  target: Vec3;

  constructor(
    init: Partial<OrbitState> = {},
    private readonly rotateSpeed = 0.008,
    private readonly zoomSpeed = 0.0015,
  ) {
    this.azimuth = init.azimuth ?? 0;
    this.elevation = init.elevation ?? 0.3;
    this.distance = init.distance ?? 2.5;
    this.target = init.target ?? [0, 0, 0];
  }

  /** Drag (pixels, y down) rotates; wheel delta zooms multiplicatively. */
  update(dx: number, dy: number, dwheel = 0): void {
    this.azimuth -= dx * this.rotateSpeed;
    this.elevation = clamp(
      this.elevation + dy * this.rotateSpeed,
      -MAX_ELEVATION,
      MAX_ELEVATION,
    );
    this.distance *= Math.exp(dwheel * this.zoomSpeed);
  }

  position(): Vec3 {
    const ce = Math.cos(this.elevation);
    return [
      this.target[0] + this.distance * ce * Math.cos(this.azimuth),
      this.target[1] + this.distance * ce * Math.sin(this.azimuth),
      this.target[2] + this.distance * Math.sin(this.elevation),
    ];
  }

  toCameraJson(fovDeg: number, width: number, height: number): CameraJson {
    return {
      position: [...this.position()],
      target: [...this.target],
      up: [0, 0, 1],
      fov_deg: fovDeg,
      width,
      height,
    };
  }

  /** Start from a scene's default camera (service metadata). */
  static fromDefault(cam: Record<string, unknown>): OrbitCamera {
    const target = (cam.target as Vec3 | undefined) ?? [0, 0, 0];
    const position = (cam.position as Vec3 | undefined) ?? [2.5, 0, 0.5];
    const d: Vec3 = [
      position[0] - target[0],
      position[1] - target[1],
      position[2] - target[2],
    ];
    const distance = Math.hypot(d[0], d[1], d[2]) || 2.5;
    return new OrbitCamera({
      target,
      distance,
      azimuth: Math.atan2(d[1], d[0]),
      elevation: Math.asin(clamp(d[2] / distance, -1, 1)),
    });
  }
}

function clamp(x: number, lo: number, hi: number): number {
  return Math.min(Math.max(x, lo), hi);
}
