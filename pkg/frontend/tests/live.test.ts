/**
 * Integration against a live render service. Skipped unless RELIGHTD_URL is
 * set (e.g. `relightfield serve --scenes scenes --port 8000` then
 * `npm run test:live`). Walks the real UI path: list scenes, drag the
 * trackball, send the emitted request, and assert the frame changes.
 */

import { describe, expect, it } from "vitest";

import { RenderClient } from "../src/api.js";
import { OrbitCamera } from "../src/orbit.js";
import { LightTrackball } from "../src/trackball.js";

const base = process.env.RELIGHTD_URL;

describe.skipIf(!base)("live service", () => {
  it("trackball drags change the rendered frame", async () => {
    const client = new RenderClient(base!);
    const scenes = await client.scenes();
    expect(scenes.length).toBeGreaterThan(0);
    const scene = scenes[0]!;

    const lights = await client.lights(scene.id);
    expect(lights.directions.length).toBe(18);

    const cam = OrbitCamera.fromDefault(scene.default_camera);
    const tb = new LightTrackball();
    const before = await client.render(scene.id, {
      camera: cam.toCameraJson(60, 128, 128),
      light_dir: [...tb.direction()],
      frame: "camera",
      latent: "mean",
    });
    const dragged = tb.drag(120, -60); // a decisive light move
    const after = await client.render(scene.id, {
      camera: cam.toCameraJson(60, 128, 128),
      light_dir: [...dragged],
      frame: "camera",
      latent: "mean",
    });
    const a = new Uint8Array(await before.arrayBuffer());
    const b = new Uint8Array(await after.arrayBuffer());
    expect(a.length).toBeGreaterThan(8);
    expect(Buffer.compare(Buffer.from(a), Buffer.from(b))).not.toBe(0);
  }, 120_000);
});
