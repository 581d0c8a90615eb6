import { describe, expect, it } from "vitest";

import { OrbitCamera } from "../src/orbit.js";
import { CameraSchema, RenderRequestSchema } from "../src/schema.js";

describe("OrbitCamera", () => {
  it("wheel in then out by equal amounts restores the distance", () => {
    const cam = new OrbitCamera({ distance: 3 });
    cam.update(0, 0, 240);
    cam.update(0, 0, -240);
    expect(cam.distance).toBeCloseTo(3, 12);
  });

  it("clamps elevation to +-85 degrees", () => {
    const cam = new OrbitCamera();
    cam.update(0, 1e6);
    expect(cam.elevation).toBeCloseTo((85 * Math.PI) / 180, 9);
    cam.update(0, -1e6);
    expect(cam.elevation).toBeCloseTo((-85 * Math.PI) / 180, 9);
  });

  it("orbits at a fixed radius around the target", () => {
    const cam = new OrbitCamera({ target: [1, -2, 0.5], distance: 2 });
    for (const [dx, dy] of [[50, 0], [0, 30], [-120, -10]] as const) {
      cam.update(dx, dy);
      const p = cam.position();
      const r = Math.hypot(p[0] - 1, p[1] + 2, p[2] - 0.5);
      expect(r).toBeCloseTo(2, 9);
    }
  });

  it("serializes to the exact render-request camera schema", () => {
    const cam = new OrbitCamera({ target: [0, 0, -0.3], distance: 2.2 });
    cam.update(33, -21, 120);
    const json = cam.toCameraJson(60, 256, 256);
    expect(() => CameraSchema.parse(json)).not.toThrow();
    const request = {
      camera: json,
      light_dir: [0.1, 0.2, 0.97],
      frame: "camera" as const,
      latent: "mean",
    };
    expect(() => RenderRequestSchema.parse(request)).not.toThrow();
  });

  it("recovers orbit parameters from a default camera", () => {
    const cam = OrbitCamera.fromDefault({
      position: [2, 2, 1],
      target: [0, 0, 0],
    });
    const p = cam.position();
    expect(p[0]).toBeCloseTo(2, 9);
    expect(p[1]).toBeCloseTo(2, 9);
    expect(p[2]).toBeCloseTo(1, 9);
  });
});
