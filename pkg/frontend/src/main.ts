/**
 * Viewer wiring: scene picker, orbit camera on the frame canvas, light
 * trackball on the gray-ball canvas, resolution/latent selectors. Every
 * interaction issues a render request through the latest-wins queue and the
 * returned frame replaces the display; the ball preview shades locally so
 * light feedback never waits on the server.
 */

import { ApiError, RenderClient, apiBaseFromLocation } from "./api.js";
import { OrbitCamera } from "./orbit.js";
import type { RenderRequest, SceneInfo } from "./schema.js";
import { LatestWins } from "./sequencer.js";
import { LightTrackball, shadeBall, type Vec3 } from "./trackball.js";

const RESOLUTIONS = [128, 256, 512];
const BALL_SIZE = 96;

interface ViewerState {
  scene: SceneInfo | null;
  orbit: OrbitCamera;
  light: Vec3;
  resolution: number;
  latent: string;
}

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function setBanner(text: string): void {
  const banner = el<HTMLDivElement>("banner");
  banner.textContent = text;
  banner.style.display = text ? "block" : "none";
}

function main(): void {
  const client = new RenderClient(apiBaseFromLocation(location.search, location.origin));
  const frame = el<HTMLImageElement>("frame");
  const ball = el<HTMLCanvasElement>("ball");
  const picker = el<HTMLSelectElement>("scene-picker");
  const resolutionSel = el<HTMLSelectElement>("resolution");
  const latentSel = el<HTMLSelectElement>("latent");
  const status = el<HTMLSpanElement>("status");

  const trackball = new LightTrackball();
  const state: ViewerState = {
    scene: null,
    orbit: new OrbitCamera(),
    light: trackball.direction(),
    resolution: 256,
    latent: "mean",
  };

  let lastUrl: string | null = null;
  const queue = new LatestWins<RenderRequest, Blob>(
    (req) => {
      if (!state.scene) return Promise.reject(new ApiError("no scene selected"));
      return client.render(state.scene.id, req);
    },
    (blob) => {
      const url = URL.createObjectURL(blob);
      frame.src = url;
      if (lastUrl) URL.revokeObjectURL(lastUrl);
      lastUrl = url;
      status.textContent = "";
    },
    (err) => {
      // keep the last good frame, just flag the failure
      status.textContent = err instanceof ApiError ? err.message : String(err);
    },
  );

  const drawBall = (): void => {
    const ctx = ball.getContext("2d");
    if (!ctx) return;
    const img = ctx.createImageData(BALL_SIZE, BALL_SIZE);
    img.data.set(shadeBall(BALL_SIZE, state.light));
    ctx.putImageData(img, 0, 0);
  };

  const requestRender = (): void => {
    if (!state.scene) return;
    queue.request({
      camera: state.orbit.toCameraJson(60, state.resolution, state.resolution),
      light_dir: [...state.light],
      frame: "camera",
      latent: state.latent,
    });
  };

  const selectScene = (scene: SceneInfo): void => {
    state.scene = scene;
    state.orbit = OrbitCamera.fromDefault(scene.default_camera);
    latentSel.innerHTML = "";
    latentSel.append(new Option("mean latent", "mean"));
    state.latent = "mean";
    drawBall();
    requestRender();
  };

  const connect = async (): Promise<void> => {
    setBanner("");
    try {
      const scenes = await client.scenes();
      picker.innerHTML = "";
      if (!scenes.length) {
        setBanner("no scenes loaded on the service");
        return;
      }
      for (const s of scenes) {
        picker.append(new Option(`${s.name} (${s.splat_count} splats)`, s.id));
      }
      selectScene(scenes[0]!);
      picker.onchange = () => {
        const found = scenes.find((s) => s.id === picker.value);
        if (found) selectScene(found);
      };
    } catch (err) {
      setBanner(`${err instanceof ApiError ? err.message : err} — click to retry`);
    }
  };
  el<HTMLDivElement>("banner").onclick = () => void connect();

  for (const r of RESOLUTIONS) resolutionSel.append(new Option(`${r} px`, String(r)));
  resolutionSel.value = "256";
  resolutionSel.onchange = () => {
    state.resolution = Number(resolutionSel.value);
    requestRender();
  };
  latentSel.onchange = () => {
    state.latent = latentSel.value;
    requestRender();
  };

  const dragHandler = (
    node: HTMLElement,
    onDrag: (dx: number, dy: number) => void,
  ): void => {
    node.addEventListener("pointerdown", (down) => {
      down.preventDefault();
      node.setPointerCapture(down.pointerId);
      let x = down.clientX;
      let y = down.clientY;
      const move = (ev: PointerEvent) => {
        onDrag(ev.clientX - x, ev.clientY - y);
        x = ev.clientX;
        y = ev.clientY;
      };
      const upHandler = () => {
        node.removeEventListener("pointermove", move);
        node.removeEventListener("pointerup", upHandler);
      };
      node.addEventListener("pointermove", move);
      node.addEventListener("pointerup", upHandler);
    });
  };

  dragHandler(ball, (dx, dy) => {
    state.light = trackball.drag(dx, dy);
    drawBall();
    requestRender();
  });
  dragHandler(frame, (dx, dy) => {
    state.orbit.update(dx, dy);
    requestRender();
  });
  frame.addEventListener("wheel", (ev) => {
    ev.preventDefault();
    state.orbit.update(0, 0, ev.deltaY);
    requestRender();
  });

  drawBall();
  void connect();
}

main();
