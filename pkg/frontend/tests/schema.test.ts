import { describe, expect, it } from "vitest";

import { OrbitCamera } from "../src/orbit.js";
import { RenderRequestSchema, SceneListSchema } from "../src/schema.js";
import { LightTrackball } from "../src/trackball.js";

describe("wire schema", () => {
  it("accepts every request the UI state machine can emit", () => {
    const tb = new LightTrackball();
    const cam = new OrbitCamera({ target: [0.2, -0.1, -0.4] });
    for (let k = 0; k < 250; k++) {
      cam.update((k % 13) - 6, (k % 7) - 3, (k % 5) - 2);
      const light = tb.drag((k % 11) - 5, (k % 9) - 4);
      for (const res of [128, 256, 512]) {
        const req = {
          camera: cam.toCameraJson(60, res, res),
          light_dir: [...light],
          frame: "camera" as const,
          latent: "mean",
        };
        expect(() => RenderRequestSchema.parse(req)).not.toThrow();
      }
    }
  });

  it("rejects out-of-contract requests", () => {
    const cam = new OrbitCamera().toCameraJson(60, 256, 256);
    const base = { camera: cam, light_dir: [0, 0, 1], frame: "camera" as const, latent: "mean" };
    expect(() => RenderRequestSchema.parse({ ...base, light_dir: [0, 0, 0] })).toThrow();
    expect(() =>
      RenderRequestSchema.parse({ ...base, camera: { ...cam, width: 8 } }),
    ).toThrow();
    expect(() =>
      RenderRequestSchema.parse({ ...base, camera: { ...cam, fov_deg: 170 } }),
    ).toThrow();
    expect(() => RenderRequestSchema.parse({ ...base, frame: "local" })).toThrow();
  });

  it("parses scene listings", () => {
    const listing = [
      {
        id: "desk",
        name: "desk",
        splat_count: 1589,
        default_camera: { position: [1, 0, 0], target: [0, 0, 0] },
        bounds: { min: [-1, -1, -1], max: [1, 1, 1] },
      },
    ];
    expect(SceneListSchema.parse(listing)[0]!.id).toBe("desk");
  });
});
