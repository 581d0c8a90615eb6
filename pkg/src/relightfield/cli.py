"""Command-line entry point for the full pipeline.

Subcommands: fit-probes, synth, augment, train, render, eval, serve,
export-viewer-config. Exit codes: 0 success, 1 usage error, 2 runtime error.
All randomness is controlled by --seed where a command has any.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .errors import RelightFieldError


class _Parser(argparse.ArgumentParser):
    class UsageError(Exception):
        pass

    def error(self, message):
        self.print_usage(sys.stderr)
        raise _Parser.UsageError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="relightfield",
                description="relightable Gaussian-splat radiance fields")
    p.add_argument("--version", action="version", version=f"relightfield {__version__}")
    sub = p.add_subparsers(dest="command", metavar="command")

    fp = sub.add_parser("fit-probes", help="recover flash directions from gray-ball probes")
    fp.add_argument("--probes", required=True, help="directory with dir_00.png .. dir_17.png")
    fp.add_argument("--out", required=True, help="output directions.json")
    fp.add_argument("--starts", type=int, default=8)

    sy = sub.add_parser("synth", help="generate a synthetic capture with ground truth")
    sy.add_argument("--preset", required=True, choices=["cornell", "plane", "spheres"])
    sy.add_argument("--views", type=int, default=6)
    sy.add_argument("--test-views", type=int, default=2)
    sy.add_argument("--size", type=int, default=64)
    sy.add_argument("--points", type=int, default=1600)
    sy.add_argument("--seed", type=int, default=0)
    sy.add_argument("--out", required=True, help="output directory (train/ and test/)")

    au = sub.add_parser("augment", help="relight a capture to the 18 training directions")
    au.add_argument("--dataset", required=True, help="dataset directory (from synth or a real capture)")
    au.add_argument("--relighter", default="oracle", help="identity | oracle | http(s) URL")
    au.add_argument("--directions", default="", help="direction-set JSON (default: built-in grid)")
    au.add_argument("--color-match", choices=["on", "off"], default="on")
    au.add_argument("--concurrency", type=int, default=1)
    au.add_argument("--retries", type=int, default=0)

    tr = sub.add_parser("train", help="train a relightable scene from an augmented dataset")
    tr.add_argument("--dataset", required=True)
    tr.add_argument("--out", required=True, help="output scene file (.rlf)")
    tr.add_argument("--config", default="", help="TrainConfig JSON (overridden by flags below)")
    tr.add_argument("--warmup", type=int, default=None)
    tr.add_argument("--main", type=int, default=None)
    tr.add_argument("--seed", type=int, default=None)
    tr.add_argument("--overweight", default="", help="comma-separated view ids")
    tr.add_argument("--checkpoint-every", type=int, default=None)
    tr.add_argument("--quiet", action="store_true")

    rd = sub.add_parser("render", help="render one frame from a scene file")
    rd.add_argument("--scene", required=True)
    rd.add_argument("--light", required=True, help="x,y,z light direction")
    rd.add_argument("--frame", choices=["world", "camera"], default="world")
    rd.add_argument("--camera", required=True, help="camera JSON file")
    rd.add_argument("--latent", default="mean")
    rd.add_argument("--out", required=True, help="output PNG")
    rd.add_argument("--url", default="", help="render via a running service instead of locally")

    ev = sub.add_parser("eval", help="score a scene against a ground-truth dataset")
    ev.add_argument("--scene", required=True)
    ev.add_argument("--test", required=True, help="dataset directory with relit/ ground truth")
    ev.add_argument("--out", required=True, help="report JSON path")
    ev.add_argument("--csv", default="", help="optional CSV export")
    ev.add_argument("--normalize", choices=["on", "off"], default="on")
    ev.add_argument("--name", default="scene")

    se = sub.add_parser("serve", help="run the HTTP render service")
    se.add_argument("--scenes", default=os.environ.get("RELIGHTD_SCENES", "."))
    se.add_argument("--host", default=os.environ.get("RELIGHTD_HOST", "127.0.0.1"))
    se.add_argument("--port", type=int, default=int(os.environ.get("RELIGHTD_PORT", "8000")))
    se.add_argument("--max-concurrent", type=int,
                    default=int(os.environ.get("RELIGHTD_MAX_CONCURRENT", "2")))
    se.add_argument("--cors", default=os.environ.get("RELIGHTD_CORS", ""))

    xv = sub.add_parser("export-viewer-config", help="write the browser viewer's config JSON")
    xv.add_argument("--api", required=True, help="service base URL")
    xv.add_argument("--scene", default="", help="optional default scene id")
    xv.add_argument("--out", required=True)
    return p


def _parse_triple(text):
    parts = [float(x) for x in text.split(",")]
    if len(parts) != 3:
        raise ValueError(f"expected x,y,z, got {text!r}")
    v = np.asarray(parts)
    n = np.linalg.norm(v)
    if n < 1e-8:
        raise ValueError("direction must be normalizable")
    return v / n


def _cmd_fit_probes(args):
    from PIL import Image

    from .probes import FIT_RESOLUTION, ProbeImage, fit_direction_set
    from .directions import save_direction_set

    targets = []
    for k in range(18):
        path = os.path.join(args.probes, f"dir_{k:02d}.png")
        with Image.open(path) as im:
            gray = im.convert("L")
            if gray.size != (FIT_RESOLUTION, FIT_RESOLUTION):
                gray = gray.resize((FIT_RESOLUTION, FIT_RESOLUTION), Image.BILINEAR)
            pixels = np.asarray(gray, dtype=np.float64) / 255.0
        targets.append(ProbeImage.from_pixels(pixels))
    fits = fit_direction_set(targets)
    save_direction_set(np.stack([d.v for d, _ in fits]), args.out)
    print(f"fit {len(fits)} probes -> {args.out}")
    return 0


def _cmd_synth(args):
    from .augment import save_multilight
    from .datasets import save_multiview
    from .synth import preset_cameras, synth_scene

    train_poses, test_poses = preset_cameras(args.preset, args.views, args.size,
                                             interleaved=args.test_views)
    base, _ = synth_scene(args.preset, args.views, args.size, seed=args.seed,
                          n_points=args.points, poses=train_poses, id_prefix="train")
    save_multiview(base, os.path.join(args.out, "train"))
    print(f"wrote {len(base.views)} training views -> {args.out}/train")
    if test_poses:
        tbase, truth = synth_scene(args.preset, len(test_poses), args.size, seed=args.seed + 1,
                                   n_points=max(args.points // 4, 64), poses=test_poses,
                                   id_prefix="test")
        save_multilight(truth, os.path.join(args.out, "test"))
        print(f"wrote {len(tbase.views)} test views with ground truth -> {args.out}/test")
    return 0


def _cmd_augment(args):
    from .augment import augment
    from .datasets import load_multiview
    from .directions import default_light_grid, load_direction_set, Frame
    from .relighters import RelighterSpec

    ds = load_multiview(args.dataset)
    if args.directions:
        dirs, frame = load_direction_set(args.directions)
        if frame is not Frame.CAMERA:
            raise RelightFieldError("augmentation directions must be camera-frame")
    else:
        dirs = default_light_grid()
    spec = RelighterSpec.parse(args.relighter)
    augment(ds, spec, dirs, color_match=args.color_match == "on", out_dir=args.dataset,
            concurrency=args.concurrency, retries=args.retries)
    print(f"augmented {len(ds.views)} views x {len(dirs)} lights -> {args.dataset}/relit")
    return 0


def _cmd_train(args):
    from .augment import load_multilight
    from .scenefile import save_scene
    from .training import TrainConfig, train

    cfg = TrainConfig.from_json(args.config) if args.config else TrainConfig()
    if args.warmup is not None:
        cfg.warmup_iters = args.warmup
    if args.main is not None:
        cfg.main_iters = args.main
    if args.seed is not None:
        cfg.seed = args.seed
    if args.overweight:
        cfg.overweight_view_ids = args.overweight.split(",")
    if args.checkpoint_every is not None:
        cfg.checkpoint_every = args.checkpoint_every
        cfg.checkpoint_path = args.out

    ml = load_multilight(args.dataset)

    def progress(stage, it, loss):
        total = cfg.scaled_iters()[0 if stage == "warmup" else 1]
        if not args.quiet and (it % 100 == 0 or it == total):
            print(f"[{stage} {it}/{total}] loss {loss:.5f}", flush=True)

    scene = train(ml, cfg, on_iteration=progress)
    scene.meta["name"] = os.path.splitext(os.path.basename(args.out))[0]
    save_scene(scene, args.out)
    print(f"trained scene with {scene.splat_count} splats -> {args.out}")
    return 0


def _load_camera_json(path):
    from .datasets import look_at

    with open(path) as f:
        doc = json.load(f)
    return look_at(
        doc["position"], doc["target"], up=tuple(doc.get("up", (0, 0, 1))),
        fov_deg=doc.get("fov_deg", 55.0), width=doc.get("width", 256),
        height=doc.get("height", 256),
    )


def _cmd_render(args):
    light = _parse_triple(args.light)
    if args.url:
        import requests

        with open(args.camera) as f:
            camera = json.load(f)
        body = {"camera": camera, "light_dir": light.tolist(), "frame": args.frame,
                "latent": args.latent}
        scene_id = os.path.splitext(os.path.basename(args.scene))[0]
        resp = requests.post(f"{args.url.rstrip('/')}/api/scenes/{scene_id}/render",
                             json=body, timeout=300)
        if resp.status_code != 200:
            raise RelightFieldError(f"service returned {resp.status_code}: {resp.text}")
        with open(args.out, "wb") as f:
            f.write(resp.content)
        print(f"rendered via {args.url} -> {args.out}")
        return 0

    from PIL import Image

    from .directions import Direction, Frame, to_world
    from .render import render
    from .scenefile import load_scene

    scene = load_scene(args.scene)
    cam = _load_camera_json(args.camera)
    direction = Direction(light, Frame(args.frame))
    if direction.frame is Frame.CAMERA:
        direction = to_world(direction, cam.rotation)
    latent = None
    if args.latent != "mean":
        latent = scene.latent_for(args.latent)
    out = render(scene, cam, direction, latent)
    arr = np.clip(np.round(out.color * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(args.out)
    print(f"rendered {cam.width}x{cam.height} -> {args.out}")
    return 0


def _cmd_eval(args):
    from .augment import load_multilight
    from .metrics import evaluate
    from .scenefile import load_scene

    scene = load_scene(args.scene)
    test = load_multilight(args.test)
    report = evaluate(scene, test, normalize=args.normalize == "on", scene_name=args.name)
    report.save_json(args.out)
    if args.csv:
        report.save_csv(args.csv)
    agg = report.aggregates
    print(f"evaluated {len(report.entries)} renders: psnr {agg['psnr']:.2f} dB, "
          f"ssim {agg['ssim']:.4f} -> {args.out}")
    return 0


def _cmd_serve(args):
    import uvicorn

    from .service import create_app

    app = create_app(args.scenes, max_concurrent=args.max_concurrent, cors_origin=args.cors)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def _cmd_export_viewer_config(args):
    doc = {"api_url": args.api.rstrip("/")}
    if args.scene:
        doc["default_scene"] = args.scene
    with open(args.out, "w") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")
    print(f"viewer config -> {args.out}")
    return 0


_COMMANDS = {
    "fit-probes": _cmd_fit_probes,
    "synth": _cmd_synth,
    "augment": _cmd_augment,
    "train": _cmd_train,
    "render": _cmd_render,
    "eval": _cmd_eval,
    "serve": _cmd_serve,
    "export-viewer-config": _cmd_export_viewer_config,
}


def run(argv) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _Parser.UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    if not args.command:
        parser.print_usage(sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except RelightFieldError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
