import numpy as np
import pytest
from skimage.metrics import structural_similarity

from relightfield.errors import ShapeError
from relightfield.metrics import MetricEntry, MetricReport, psnr, ssim, ssim_with_grad


def test_psnr_identical_is_capped():
    img = np.random.default_rng(1).uniform(size=(8, 8, 3))
    assert psnr(img, img) == 99.0


def test_psnr_uniform_difference_closed_form():
    a = np.zeros((8, 8, 3))
    assert psnr(a, a + 0.1) == pytest.approx(20.0, abs=1e-9)
    assert psnr(a, a + 0.5) == pytest.approx(6.0206, abs=1e-3)


def test_psnr_shape_mismatch():
    with pytest.raises(ShapeError):
        psnr(np.zeros((4, 4, 3)), np.zeros((5, 4, 3)))


def test_psnr_monotone_in_noise():
    rng = np.random.default_rng(3)
    base = rng.uniform(0.3, 0.7, size=(16, 16, 3))
    noise = rng.normal(size=base.shape)
    values = [psnr(base, np.clip(base + amp * noise, 0, 1)) for amp in (0.01, 0.02, 0.05, 0.1, 0.2)]
    assert all(x > y for x, y in zip(values, values[1:]))


def test_ssim_self_is_one():
    img = np.random.default_rng(2).uniform(size=(16, 16, 3))
    assert ssim(img, img) == pytest.approx(1.0, abs=1e-12)


def test_ssim_symmetry():
    rng = np.random.default_rng(4)
    a = rng.uniform(size=(16, 16, 3))
    b = rng.uniform(size=(16, 16, 3))
    assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-9)


def test_ssim_matches_skimage():
    rng = np.random.default_rng(5)
    for shape in [(16, 16, 3), (24, 31, 3)]:
        a = rng.uniform(size=shape)
        b = np.clip(a + rng.normal(scale=0.1, size=shape), 0, 1)
        want = structural_similarity(
            a,
            b,
            channel_axis=2,
            gaussian_weights=True,
            sigma=1.5,
            use_sample_covariance=False,
            data_range=1.0,
        )
        assert ssim(a, b) == pytest.approx(want, abs=1e-12)


def test_ssim_inverted_texture_is_low():
    rng = np.random.default_rng(6)
    a = rng.uniform(size=(32, 32, 3))
    assert ssim(a, 1.0 - a) < 0.2


def test_ssim_range():
    rng = np.random.default_rng(7)
    for _ in range(10):
        a = rng.uniform(size=(12, 12, 3))
        b = rng.uniform(size=(12, 12, 3))
        assert -1.0 <= ssim(a, b) <= 1.0


def test_ssim_too_small_raises():
    with pytest.raises(ShapeError):
        ssim(np.zeros((8, 8, 3)), np.zeros((8, 8, 3)))


def test_ssim_grad_matches_finite_differences():
    rng = np.random.default_rng(8)
    a = rng.uniform(0.2, 0.8, size=(13, 12, 3))
    b = rng.uniform(0.2, 0.8, size=(13, 12, 3))
    val, grad = ssim_with_grad(a, b)
    assert val == pytest.approx(ssim(a, b), abs=1e-12)
    h = 1e-5
    for idx in [(0, 0, 0), (6, 5, 1), (12, 11, 2), (3, 9, 0), (8, 2, 2)]:
        ap, am = a.copy(), a.copy()
        ap[idx] += h
        am[idx] -= h
        fd = (ssim(ap, b) - ssim(am, b)) / (2 * h)
        assert grad[idx] == pytest.approx(fd, rel=1e-4, abs=1e-9)


def test_evaluate_normalize_removes_global_offset():
    # evaluation with LAB normalization must beat raw metrics when the
    # prediction differs from truth by a pure luminance shift
    import sys

    sys.path.insert(0, "tests")
    from conftest import front_camera, random_scene

    from relightfield.colorspace import lab_to_srgb, srgb_to_lab
    from relightfield.datasets import MultiLightDataset, MultiViewDataset, View
    from relightfield.directions import default_light_grid
    from relightfield.metrics import evaluate
    from relightfield.render import render

    rng = np.random.default_rng(12)
    scene = random_scene(rng, n_splats=24, spread=0.7)
    cam = front_camera(24, 24)
    grid = default_light_grid()
    view = View("t0", np.zeros((24, 24, 3)), cam)
    relit = {}
    world = {}
    for k in range(18):
        d = cam.rotation.m @ grid[k]
        world[("t0", k)] = d
        from relightfield.directions import sh_basis

        img = np.clip(render(scene, cam, sh_basis(d), scene.mean_latent()).color, 0, 1)
        lab = srgb_to_lab(img)
        lab[..., 0] = np.clip(lab[..., 0] + 8.0, 0, 100)  # truth = render + L offset
        relit[("t0", k)] = lab_to_srgb(lab)
    test_set = MultiLightDataset(
        base=MultiViewDataset(views=[view]), light_dirs_camera=grid,
        relit=relit, light_dirs_world=world,
    )
    plain = evaluate(scene, test_set, normalize=False).aggregates["psnr"]
    normed = evaluate(scene, test_set, normalize=True).aggregates["psnr"]
    assert normed > plain


def test_report_aggregates_recomputable():
    rep = MetricReport(scene="s")
    rng = np.random.default_rng(9)
    for i in range(10):
        rep.entries.append(MetricEntry(view=f"v{i}", light=i % 3, psnr=float(rng.uniform(10, 40)), ssim=float(rng.uniform(0, 1))))
    agg = rep.aggregates
    assert agg["psnr"] == pytest.approx(np.mean([e.psnr for e in rep.entries]), abs=1e-9)
    assert agg["ssim"] == pytest.approx(np.mean([e.ssim for e in rep.entries]), abs=1e-9)
    assert agg["lpips"] is None


def test_report_empty_aggregates():
    rep = MetricReport(scene="empty")
    assert rep.aggregates == {"psnr": 0.0, "ssim": 0.0, "lpips": None}


def test_report_json_csv_roundtrip(tmp_path):
    rep = MetricReport(scene="s", entries=[MetricEntry("v0", 0, 30.0, 0.9)])
    jpath = tmp_path / "report.json"
    cpath = tmp_path / "report.csv"
    rep.save_json(jpath)
    rep.save_csv(cpath)
    import json

    doc = json.loads(jpath.read_text())
    assert doc["scene"] == "s"
    assert doc["entries"][0]["psnr"] == 30.0
    assert "view,light,psnr,ssim" in cpath.read_text()
