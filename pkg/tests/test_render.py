import numpy as np
import pytest

from conftest import front_camera, random_scene
from relightfield.directions import Direction, unlit_encoding
from relightfield.errors import FrameError
from relightfield.render import backward, forward, render, render_with_grads
from relightfield.splats import (
    FEATURE_DIM,
    LATENT_DIM,
    AppearanceMLP,
    SplatScene,
    quat_to_rot,
)

LIGHT = Direction.world(*np.array([0.3, 0.4, 0.87]) / np.linalg.norm([0.3, 0.4, 0.87]))


def single_splat_scene(rng, opacity_logit=8.0):
    scene = random_scene(rng, n_splats=1)
    scene.positions[:] = np.array([[0.0, 0.0, 0.0]], dtype=np.float32)
    scene.quats[:] = np.array([[1.0, 0.0, 0.0, 0.0]], dtype=np.float32)
    scene.log_scales[:] = np.log(0.4)
    scene.logit_opacities[:] = opacity_logit
    return scene


def test_empty_pixels_show_background(rng):
    scene = random_scene(rng, n_splats=2)
    scene.positions[:] = np.array([[5.0, 5.0, 0.0], [5.0, 5.5, 0.2]], dtype=np.float32)
    cam = front_camera(16, 16)
    out = render(scene, cam, LIGHT)
    want = np.broadcast_to(scene.background.astype(np.float64), out.color.shape)
    np.testing.assert_allclose(out.color, want, atol=1e-12)
    np.testing.assert_allclose(out.transmittance, 1.0, atol=1e-12)
    assert np.all(out.contributing == 0)


def test_opaque_splat_dominates_center(rng):
    scene = single_splat_scene(rng, opacity_logit=8.0)
    cam = front_camera(9, 9)
    out = render(scene, cam, LIGHT, latent=np.zeros(LATENT_DIM))
    # weight at the covered center pixel is >= 0.98 (alpha clip at 0.99)
    assert out.weight_sum[4, 4] >= 0.98
    assert out.transmittance[4, 4] <= 0.02


def test_compositing_conservation(rng):
    for _ in range(20):
        scene = random_scene(rng, n_splats=12)
        cam = front_camera(12, 12, distance=float(rng.uniform(2.0, 4.0)))
        out = render(scene, cam, LIGHT)
        np.testing.assert_allclose(out.weight_sum + out.transmittance, 1.0, atol=1e-5)


def test_permutation_invariance(rng):
    scene = random_scene(rng, n_splats=10)
    cam = front_camera(10, 10)
    base = render(scene, cam, LIGHT).color
    perm = rng.permutation(10)
    permuted = SplatScene(
        positions=scene.positions[perm],
        quats=scene.quats[perm],
        log_scales=scene.log_scales[perm],
        logit_opacities=scene.logit_opacities[perm],
        features=scene.features[perm],
        mlp=scene.mlp,
        latent_ids=scene.latent_ids,
        latents=scene.latents,
        background=scene.background,
    )
    np.testing.assert_allclose(render(permuted, cam, LIGHT).color, base, atol=1e-6)


def test_light_changes_color_not_geometry(rng):
    scene = random_scene(rng, n_splats=8)
    cam = front_camera(12, 12)
    out_a = render(scene, cam, LIGHT)
    other = Direction.world(*np.array([-0.5, 0.2, 0.84]) / np.linalg.norm([-0.5, 0.2, 0.84]))
    out_b = render(scene, cam, other)
    assert np.mean(np.abs(out_a.color - out_b.color)) > 0.0
    assert out_a.transmittance.tobytes() == out_b.transmittance.tobytes()


def test_unlit_token_renders(rng):
    scene = random_scene(rng, n_splats=4)
    cam = front_camera(8, 8)
    out = render(scene, cam, unlit_encoding())
    assert np.all(np.isfinite(out.color))
    lit = render(scene, cam, LIGHT)
    assert np.mean(np.abs(out.color - lit.color)) > 0.0


def test_camera_frame_light_rejected(rng):
    scene = random_scene(rng, n_splats=2)
    with pytest.raises(FrameError):
        render(scene, front_camera(), Direction.camera(0, 0, 1))


def test_render_deterministic(rng):
    scene = random_scene(rng, n_splats=16)
    cam = front_camera(16, 16)
    a = render(scene, cam, LIGHT).color
    b = render(scene, cam, LIGHT).color
    assert a.tobytes() == b.tobytes()


def test_mlp_zero_weights_give_half():
    mlp = AppearanceMLP(
        w1=np.zeros((FEATURE_DIM + 32 + LATENT_DIM, 128), dtype=np.float32),
        b1=np.zeros(128, dtype=np.float32),
        w2=np.zeros((128, 128), dtype=np.float32),
        b2=np.zeros(128, dtype=np.float32),
        w3=np.zeros((128, 3), dtype=np.float32),
        b3=np.zeros(3, dtype=np.float32),
    )
    out = mlp.forward(np.random.default_rng(0).normal(size=(5, FEATURE_DIM + 32 + LATENT_DIM)))
    np.testing.assert_allclose(out, 0.5, atol=1e-12)


def test_mlp_output_in_unit_range(rng):
    mlp = AppearanceMLP.create(rng)
    x = rng.normal(size=(100, FEATURE_DIM + 32 + LATENT_DIM)) * 10.0
    y = mlp.forward(x)
    assert np.all(y > 0.0) and np.all(y < 1.0)


def test_mlp_sensitive_to_light_encoding(rng):
    mlp = AppearanceMLP.create(rng)
    x = rng.normal(size=(1, FEATURE_DIM + 32 + LATENT_DIM))
    x2 = x.copy()
    x2[0, FEATURE_DIM + 16:FEATURE_DIM + 32] += 0.5
    assert np.max(np.abs(mlp.forward(x) - mlp.forward(x2))) > 0.0


def test_zero_adjoint_gives_zero_grads(rng):
    scene = random_scene(rng, n_splats=4)
    cam = front_camera(8, 8)
    _, grads = render_with_grads(scene, cam, LIGHT, scene.latents[0], np.zeros((8, 8, 3)), exact=True)
    assert np.all(grads.positions == 0.0)
    assert np.all(grads.latent == 0.0)
    assert all(np.all(v == 0.0) for v in grads.mlp.values())


def test_latent_grad_zero_when_nothing_visible(rng):
    scene = random_scene(rng, n_splats=2)
    scene.positions[:, 2] = 50.0  # behind the camera at distance 3
    cam = front_camera(8, 8)
    out, grads = render_with_grads(scene, cam, LIGHT, scene.latents[0],
                                   np.ones((8, 8, 3)), exact=True)
    np.testing.assert_allclose(out.transmittance, 1.0)
    assert np.all(grads.latent == 0.0)


def _fd_check(scene, cam, light, latent, adjoint, rel_tol=1e-4, abs_floor=1e-7, h=1e-4,
              max_kink_skips=8):
    """Central finite differences against every analytic gradient.

    Probes that straddle a ReLU kink (activation sign flip between the two
    evaluations) are skipped; their count is bounded so the check cannot
    silently degrade into a no-op.
    """
    import copy

    out, grads = render_with_grads(scene, cam, light, latent, adjoint, exact=True)
    skips = []

    def value(s, lat=None):
        o, cache = forward(s, cam, light, lat if lat is not None else latent,
                           exact=True, with_cache=True)
        x = cache.mlp_cache[0]
        mlp = cache.mlp
        pre1 = x @ mlp.w1 + mlp.b1
        pre2 = np.maximum(pre1, 0.0) @ mlp.w2 + mlp.b2
        signs = np.concatenate([(pre1 > 0).reshape(-1), (pre2 > 0).reshape(-1)])
        return float(np.sum(o.color * adjoint)), signs

    def check(name, got, up, down):
        (vu, su), (vd, sd) = up, down
        if su.shape != sd.shape or not np.array_equal(su, sd):
            skips.append(name)
            return
        fd = (vu - vd) / (2 * h)
        err = abs(got - fd)
        tol = max(abs_floor, rel_tol * max(abs(got), abs(fd)))
        assert err <= tol, f"{name}: analytic {got:.8e} vs fd {fd:.8e} (err {err:.2e})"

    def perturbed(attr, idx, delta):
        s = copy.deepcopy(scene)
        arr = getattr(s, attr).astype(np.float64)
        arr[idx] += delta
        setattr(s, attr, arr.astype(getattr(s, attr).dtype))
        return s

    for gidx in range(scene.splat_count):
        for attr, width in (("positions", 3), ("quats", 4), ("log_scales", 3)):
            for k in range(width):
                up = value(perturbed(attr, (gidx, k), h))
                down = value(perturbed(attr, (gidx, k), -h))
                check(f"{attr}[{gidx},{k}]", getattr(grads, attr)[gidx, k], up, down)
        up = value(perturbed("logit_opacities", gidx, h))
        down = value(perturbed("logit_opacities", gidx, -h))
        check(f"logit_opacity[{gidx}]", grads.logit_opacities[gidx], up, down)
        for k in (0, FEATURE_DIM // 2, FEATURE_DIM - 1):
            up = value(perturbed("features", (gidx, k), h))
            down = value(perturbed("features", (gidx, k), -h))
            check(f"feature[{gidx},{k}]", grads.features[gidx, k], up, down)

    latent64 = np.asarray(latent, dtype=np.float64)
    for k in (0, LATENT_DIM // 2, LATENT_DIM - 1):
        lp, lm = latent64.copy(), latent64.copy()
        lp[k] += h
        lm[k] -= h
        check(f"latent[{k}]", grads.latent[k], value(scene, lp), value(scene, lm))

    sampler = np.random.default_rng(0)
    for name in ("w1", "b1", "w2", "b2", "w3", "b3"):
        arr = getattr(scene.mlp, name)
        flat_size = arr.reshape(-1).size
        for k in sampler.choice(flat_size, size=min(4, flat_size), replace=False):
            evals = []
            for delta in (h, -h):
                s = copy.deepcopy(scene)
                sarr = getattr(s.mlp, name).astype(np.float64).reshape(-1)
                sarr[k] += delta
                setattr(s.mlp, name, sarr.reshape(arr.shape).astype(arr.dtype))
                evals.append(value(s))
            check(f"mlp.{name}[{k}]", grads.mlp[name].reshape(-1)[k], evals[0], evals[1])

    assert len(skips) <= max_kink_skips, f"too many kink-straddling probes skipped: {skips}"


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(7)
    scene = random_scene(rng, n_splats=5, max_opacity=0.9)
    # float64 storage so finite differences see exactly what backward saw
    scene.positions = scene.positions.astype(np.float64)
    scene.quats = scene.quats.astype(np.float64)
    scene.log_scales = scene.log_scales.astype(np.float64)
    scene.logit_opacities = scene.logit_opacities.astype(np.float64)
    scene.features = scene.features.astype(np.float64)
    scene.mlp = scene.mlp.astype(np.float64)
    cam = front_camera(8, 8)
    adjoint = rng.normal(size=(8, 8, 3))
    latent = rng.normal(size=LATENT_DIM) * 0.3
    _fd_check(scene, cam, LIGHT, latent, adjoint)


def test_quat_to_rot_orthonormal(rng):
    q = rng.normal(size=(20, 4))
    r = quat_to_rot(q)
    eye = np.einsum("gij,gkj->gik", r, r)
    np.testing.assert_allclose(eye, np.broadcast_to(np.eye(3), (20, 3, 3)), atol=1e-12)
    np.testing.assert_allclose(np.linalg.det(r), 1.0, atol=1e-12)


def test_production_matches_exact_mode(rng):
    # the bounding-box cull only drops sub-1e-4 tail contributions
    scene = random_scene(rng, n_splats=10)
    cam = front_camera(16, 16)
    fast = render(scene, cam, LIGHT).color
    exact = render(scene, cam, LIGHT, exact=True).color
    assert np.max(np.abs(fast - exact)) < 5e-3
