import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from conftest import random_scene
from relightfield.scenefile import save_scene
from relightfield.service import create_app


@pytest.fixture(scope="module")
def scene_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("scenes")
    rng = np.random.default_rng(11)
    for name in ("alpha", "beta"):
        scene = random_scene(rng, n_splats=12, n_latents=2)
        scene.meta = {
            "name": name,
            "scene_radius": 1.0,
            "scene_center": [0.0, 0.0, 0.0],
            "light_dirs_camera": np.round(
                np.random.default_rng(0).normal(size=(18, 3)), 4
            ).tolist(),
            "unlit_available": True,
            "default_camera": {"position": [0, 0, 3], "target": [0, 0, 0],
                               "up": [0, 1, 0], "fov_deg": 50.0},
        }
        # normalize stored light dirs
        dirs = np.asarray(scene.meta["light_dirs_camera"])
        scene.meta["light_dirs_camera"] = (dirs / np.linalg.norm(dirs, axis=1, keepdims=True)).tolist()
        save_scene(scene, d / f"{name}.rlf")
    return d


@pytest.fixture(scope="module")
def client(scene_dir):
    return TestClient(create_app(scene_dir, max_concurrent=2))


def _request(frame="world", light=(0.0, 0.0, 1.0), latent="mean", **cam):
    camera = {"position": [0.0, 0.0, 3.0], "target": [0.0, 0.0, 0.0], "up": [0.0, 1.0, 0.0],
              "fov_deg": 50.0, "width": 32, "height": 32}
    camera.update(cam)
    return {"camera": camera, "light_dir": list(light), "frame": frame, "latent": latent}


def test_list_scenes(client):
    resp = client.get("/api/scenes")
    assert resp.status_code == 200
    ids = [s["id"] for s in resp.json()]
    assert ids == ["alpha", "beta"]
    info = resp.json()[0]
    assert info["splat_count"] == 12
    assert "min" in info["bounds"] and "max" in info["bounds"]


def test_scene_ids_stable(client):
    a = [s["id"] for s in client.get("/api/scenes").json()]
    b = [s["id"] for s in client.get("/api/scenes").json()]
    assert a == b


def test_empty_directory_lists_nothing(tmp_path):
    empty = TestClient(create_app(tmp_path))
    assert empty.get("/api/scenes").json() == []


def test_lights_endpoint(client):
    resp = client.get("/api/scenes/alpha/lights")
    assert resp.status_code == 200
    doc = resp.json()
    assert len(doc["directions"]) == 18
    norms = np.linalg.norm(np.asarray(doc["directions"]), axis=1)
    np.testing.assert_allclose(norms, 1.0, atol=1e-6)
    assert doc["unlit_available"] is True


def test_lights_unknown_scene(client):
    assert client.get("/api/scenes/nope/lights").status_code == 404


def test_render_returns_png_with_timing(client):
    resp = client.post("/api/scenes/alpha/render", json=_request())
    assert resp.status_code == 200
    assert resp.headers["content-type"] == "image/png"
    assert float(resp.headers["x-render-millis"]) > 0.0
    assert resp.content[:8] == b"\x89PNG\r\n\x1a\n"


def test_render_deterministic_bytes(client):
    a = client.post("/api/scenes/alpha/render", json=_request()).content
    b = client.post("/api/scenes/alpha/render", json=_request()).content
    assert a == b


def test_camera_frame_equals_world_for_identity_rotation(client):
    # camera at +z looking at origin with up +y has identity-like mapping for
    # its own frame; compare the transported direction explicitly
    world = client.post("/api/scenes/alpha/render", json=_request(frame="world", light=(0, 1, 0))).content
    cam = client.post("/api/scenes/alpha/render", json=_request(frame="camera", light=(0, 1, 0))).content
    assert world == cam  # this camera's rotation maps (0,1,0) to itself


def test_unknown_scene_404(client):
    assert client.post("/api/scenes/nope/render", json=_request()).status_code == 404


def test_validation_names_field(client):
    bad = _request()
    bad["camera"]["width"] = 8
    resp = client.post("/api/scenes/alpha/render", json=bad)
    assert resp.status_code == 422
    assert "width" in json.dumps(resp.json())


def test_fov_bounds(client):
    bad = _request()
    bad["camera"]["fov_deg"] = 150.0
    assert client.post("/api/scenes/alpha/render", json=bad).status_code == 422


def test_degenerate_light_rejected(client):
    bad = _request(light=(0.0, 0.0, 0.0))
    assert client.post("/api/scenes/alpha/render", json=bad).status_code == 422


def test_unknown_latent_rejected(client):
    resp = client.post("/api/scenes/alpha/render", json=_request(latent="v99"))
    assert resp.status_code == 422
    assert "latent" in json.dumps(resp.json())


def test_named_latent_changes_output(client):
    mean = client.post("/api/scenes/alpha/render", json=_request()).content
    v0 = client.post("/api/scenes/alpha/render", json=_request(latent="v0")).content
    assert mean != v0


def test_scene_files_not_mutated(client, scene_dir):
    import hashlib

    digest = {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in scene_dir.iterdir()}
    for _ in range(100):
        client.post("/api/scenes/beta/render", json=_request())
        client.get("/api/scenes")
    after = {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in scene_dir.iterdir()}
    assert digest == after


def test_hot_reload_picks_up_new_scene(scene_dir):
    local = TestClient(create_app(scene_dir))
    rng = np.random.default_rng(5)
    scene = random_scene(rng, n_splats=4)
    save_scene(scene, scene_dir / "gamma.rlf")
    try:
        ids = [s["id"] for s in local.get("/api/scenes").json()]
        assert "gamma" in ids
    finally:
        (scene_dir / "gamma.rlf").unlink()
    ids = [s["id"] for s in local.get("/api/scenes").json()]
    assert "gamma" not in ids
