"""Single-file binary container for trained scenes (magic "RLF1").

Layout, all little-endian:

    magic "RLF1" | u32 version | u32 header_len | header JSON
    | parameter arrays (<f4, C order, in the fixed order below)
    | u32 meta_len | metadata JSON | u32 CRC-32

The CRC covers everything between the version field and the checksum, so a
truncated or corrupted payload fails closed. Files are published with an
atomic rename and never mutated afterwards.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
import zlib

import numpy as np

from .errors import BadMagicError, BadVersionError, ChecksumError, SceneFileError
from .splats import FEATURE_DIM, LATENT_DIM, MLP_HIDDEN, MLP_INPUT, AppearanceMLP, SplatScene

MAGIC = b"RLF1"
VERSION = 1

_MLP_ORDER = ("w1", "b1", "w2", "b2", "w3", "b3")


def _mlp_shapes():
    return {
        "w1": (MLP_INPUT, MLP_HIDDEN),
        "b1": (MLP_HIDDEN,),
        "w2": (MLP_HIDDEN, MLP_HIDDEN),
        "b2": (MLP_HIDDEN,),
        "w3": (MLP_HIDDEN, 3),
        "b3": (3,),
    }


def _array_order(g, n_latents):
    shapes = [
        ("positions", (g, 3)),
        ("quats", (g, 4)),
        ("log_scales", (g, 3)),
        ("logit_opacities", (g,)),
        ("features", (g, FEATURE_DIM)),
    ]
    shapes += [(f"mlp.{k}", v) for k, v in _mlp_shapes().items()]
    shapes += [("latents", (n_latents, LATENT_DIM)), ("background", (3,))]
    return shapes


def save_scene(scene: SplatScene, path):
    """Serialize a scene; the file appears atomically at `path`."""
    g = scene.splat_count
    header = {
        "splats": g,
        "feature_dim": FEATURE_DIM,
        "latent_dim": LATENT_DIM,
        "mlp": {"input": MLP_INPUT, "hidden": MLP_HIDDEN, "out": 3},
        "latent_ids": list(scene.latent_ids),
        "dtype": "<f4",
    }
    header_bytes = json.dumps(header, sort_keys=True).encode()
    meta_bytes = json.dumps(scene.meta, sort_keys=True).encode()

    def get(name):
        if name.startswith("mlp."):
            return getattr(scene.mlp, name[4:])
        return getattr(scene, name)

    body = bytearray()
    body += struct.pack("<I", len(header_bytes))
    body += header_bytes
    for name, shape in _array_order(g, len(scene.latents)):
        arr = np.ascontiguousarray(get(name), dtype="<f4")
        if arr.shape != shape:
            raise SceneFileError(f"{name}: expected shape {shape}, got {arr.shape}")
        body += arr.tobytes()
    body += struct.pack("<I", len(meta_bytes))
    body += meta_bytes
    crc = zlib.crc32(bytes(body))

    directory = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".rlf.tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(MAGIC)
            f.write(struct.pack("<I", VERSION))
            f.write(body)
            f.write(struct.pack("<I", crc))
        os.replace(tmp, path)
    except OSError as e:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise SceneFileError(f"failed writing scene to {path}: {e}") from e


def load_scene(path) -> SplatScene:
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as e:
        raise SceneFileError(f"cannot read {path}: {e}") from e

    if len(blob) < 8 or blob[:4] != MAGIC:
        raise BadMagicError(f"{path}: not a scene container")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != VERSION:
        raise BadVersionError(f"{path}: found version {version}, expected {VERSION}")
    if len(blob) < 12:
        raise ChecksumError(f"{path}: truncated container")
    body = blob[8:-4]
    (crc_stored,) = struct.unpack_from("<I", blob, len(blob) - 4)
    if zlib.crc32(body) != crc_stored:
        raise ChecksumError(f"{path}: payload checksum mismatch")

    off = 0

    def take(n):
        nonlocal off
        if off + n > len(body):
            raise ChecksumError(f"{path}: payload shorter than its header claims")
        chunk = body[off:off + n]
        off += n
        return chunk

    (header_len,) = struct.unpack("<I", take(4))
    header = json.loads(take(header_len))
    g = header["splats"]
    n_latents = len(header["latent_ids"])

    arrays = {}
    for name, shape in _array_order(g, n_latents):
        count = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(take(count * 4), dtype="<f4").reshape(shape).copy()
        arrays[name] = arr
    (meta_len,) = struct.unpack("<I", take(4))
    meta = json.loads(take(meta_len))

    mlp = AppearanceMLP(**{k: arrays[f"mlp.{k}"] for k in _MLP_ORDER})
    return SplatScene(
        positions=arrays["positions"],
        quats=arrays["quats"],
        log_scales=arrays["log_scales"],
        logit_opacities=arrays["logit_opacities"],
        features=arrays["features"],
        mlp=mlp,
        latent_ids=list(header["latent_ids"]),
        latents=arrays["latents"],
        background=arrays["background"],
        meta=meta,
    )
