import numpy as np
import pytest

from conftest import random_scene
from relightfield.errors import BadMagicError, BadVersionError, ChecksumError
from relightfield.scenefile import load_scene, save_scene
from relightfield.splats import SplatScene


def _assert_bit_identical(a: SplatScene, b: SplatScene):
    for name in ("positions", "quats", "log_scales", "logit_opacities", "features", "latents", "background"):
        assert getattr(a, name).tobytes() == getattr(b, name).tobytes(), name
    for k, v in a.mlp.params().items():
        assert v.tobytes() == b.mlp.params()[k].tobytes(), f"mlp.{k}"
    assert a.latent_ids == b.latent_ids
    assert a.meta == b.meta


def test_roundtrip_bit_exact(rng, tmp_path):
    scene = random_scene(rng, n_splats=7, n_latents=3)
    scene.meta = {"scene_radius": 1.5, "config_hash": "abc", "version": 1}
    path = tmp_path / "scene.rlf"
    save_scene(scene, path)
    back = load_scene(path)
    _assert_bit_identical(scene, back)


def test_double_load_equal(rng, tmp_path):
    scene = random_scene(rng, n_splats=3)
    path = tmp_path / "scene.rlf"
    save_scene(scene, path)
    _assert_bit_identical(load_scene(path), load_scene(path))


def test_zero_latents(rng, tmp_path):
    scene = random_scene(rng, n_splats=3, n_latents=0)
    path = tmp_path / "scene.rlf"
    save_scene(scene, path)
    back = load_scene(path)
    assert back.latents.shape == (0, 128)
    assert back.latent_ids == []


def test_truncated_file_fails_checksum(rng, tmp_path):
    scene = random_scene(rng, n_splats=4)
    path = tmp_path / "scene.rlf"
    save_scene(scene, path)
    blob = path.read_bytes()
    (tmp_path / "cut.rlf").write_bytes(blob[: len(blob) // 2])
    with pytest.raises(ChecksumError):
        load_scene(tmp_path / "cut.rlf")


def test_corrupted_payload_fails_checksum(rng, tmp_path):
    scene = random_scene(rng, n_splats=4)
    path = tmp_path / "scene.rlf"
    save_scene(scene, path)
    blob = bytearray(path.read_bytes())
    blob[100] ^= 0xFF
    (tmp_path / "bad.rlf").write_bytes(bytes(blob))
    with pytest.raises(ChecksumError):
        load_scene(tmp_path / "bad.rlf")


def test_empty_file_bad_magic(tmp_path):
    path = tmp_path / "empty.rlf"
    path.write_bytes(b"")
    with pytest.raises(BadMagicError):
        load_scene(path)


def test_wrong_magic(tmp_path):
    path = tmp_path / "not.rlf"
    path.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(BadMagicError):
        load_scene(path)


def test_unknown_version(rng, tmp_path):
    scene = random_scene(rng, n_splats=3)
    path = tmp_path / "scene.rlf"
    save_scene(scene, path)
    blob = bytearray(path.read_bytes())
    blob[4] = 99
    vpath = tmp_path / "v99.rlf"
    vpath.write_bytes(bytes(blob))
    with pytest.raises(BadVersionError) as exc:
        load_scene(vpath)
    assert "99" in str(exc.value) and "1" in str(exc.value)


def test_atomic_write_leaves_no_temp(rng, tmp_path):
    scene = random_scene(rng, n_splats=3)
    save_scene(scene, tmp_path / "scene.rlf")
    leftovers = [p for p in tmp_path.iterdir() if p.suffix == ".tmp"]
    assert leftovers == []
