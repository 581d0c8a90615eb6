import json

import numpy as np
import pytest
from scipy.special import sph_harm_y

from relightfield.directions import (
    Direction,
    Frame,
    Rotation3,
    default_light_grid,
    load_direction_set,
    save_direction_set,
    sh_basis,
    sh_basis_jacobian,
    sh_encode,
    to_world,
    unlit_encoding,
)
from relightfield.errors import FrameError, InvalidDirectionError

BAND0 = 0.28209479177387814


def reference_real_sh(d):
    """Independent oracle: real SH from scipy's complex harmonics.

    Positive-sign convention: the sqrt(2)*(-1)^m factor cancels the
    Condon-Shortley phase scipy bakes into Y_l^m.
    """
    x, y, z = d
    polar = np.arccos(np.clip(z, -1.0, 1.0))
    azim = np.arctan2(y, x)
    out = []
    for l in range(4):
        for m in range(-l, l + 1):
            ylm = sph_harm_y(l, abs(m), polar, azim)
            if m > 0:
                out.append(np.sqrt(2.0) * (-1.0) ** m * ylm.real)
            elif m < 0:
                out.append(np.sqrt(2.0) * (-1.0) ** m * ylm.imag)
            else:
                out.append(ylm.real)
    return np.array(out)


def random_unit(rng, n):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def test_band0_constant_at_pole():
    enc = sh_encode(Direction.camera(0.0, 0.0, 1.0))
    assert enc.coeffs[0] == pytest.approx(0.2820948, abs=1e-7)


def test_pole_zonal_values():
    enc = sh_encode(Direction.camera(0.0, 0.0, 1.0))
    # only m=0 terms survive at the pole
    nonzonal = [i for i in range(16) if i not in (0, 2, 6, 12)]
    assert np.all(enc.coeffs[nonzonal] == 0.0)
    assert enc.coeffs[2] == pytest.approx(0.4886025, abs=1e-7)
    assert enc.coeffs[6] == pytest.approx(0.6307831, abs=1e-7)
    assert enc.coeffs[12] == pytest.approx(0.7463527, abs=1e-7)


def test_band0_same_for_opposite_poles():
    up = sh_encode(Direction.camera(0.0, 0.0, 1.0))
    down = sh_encode(Direction.camera(0.0, 0.0, -1.0))
    assert up.coeffs[0] == down.coeffs[0]


def test_matches_scipy_oracle():
    rng = np.random.default_rng(7)
    for d in random_unit(rng, 50):
        got = sh_basis(d)
        want = reference_real_sh(d)
        np.testing.assert_allclose(got, want, atol=1e-12)


def test_band0_constant_over_sphere():
    rng = np.random.default_rng(11)
    basis = sh_basis(random_unit(rng, 10_000))
    assert np.all(np.isfinite(basis))
    assert np.max(np.abs(basis[:, 0] - BAND0)) < 1e-7


def test_encode_deterministic():
    d = Direction(np.array([0.3, -0.5, 0.81]) / np.linalg.norm([0.3, -0.5, 0.81]), Frame.CAMERA)
    a = sh_encode(d).coeffs
    b = sh_encode(d).coeffs
    assert a.tobytes() == b.tobytes()


def test_basis_jacobian_matches_finite_differences():
    rng = np.random.default_rng(3)
    h = 1e-6
    for d in random_unit(rng, 10):
        jac = sh_basis_jacobian(d)
        for k in range(3):
            dp, dm = d.copy(), d.copy()
            dp[k] += h
            dm[k] -= h
            fd = (sh_basis(dp) - sh_basis(dm)) / (2 * h)
            np.testing.assert_allclose(jac[:, k], fd, atol=1e-7)


def test_construction_renormalizes_small_error():
    d = Direction.camera(0.0, 0.0, 1.0 + 5e-4)
    assert np.linalg.norm(d.v) == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("bad", [(0.0, 0.0, 1.01), (0.0, 0.0, 0.0), (np.nan, 0.0, 1.0)])
def test_construction_rejects_bad_vectors(bad):
    with pytest.raises(InvalidDirectionError):
        Direction.camera(*bad)


def test_to_world_identity():
    out = to_world(Direction.camera(0.0, 1.0, 0.0), Rotation3.identity())
    assert out.frame is Frame.WORLD
    np.testing.assert_allclose(out.v, [0.0, 1.0, 0.0], atol=1e-12)


def test_to_world_quarter_turn_about_z():
    rot = Rotation3(np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]))
    out = to_world(Direction.camera(1.0, 0.0, 0.0), rot)
    np.testing.assert_allclose(out.v, [0.0, 1.0, 0.0], atol=1e-12)


def test_to_world_rejects_world_input():
    with pytest.raises(FrameError):
        to_world(Direction.world(0.0, 0.0, 1.0), Rotation3.identity())


def test_to_world_preserves_norm():
    rng = np.random.default_rng(23)
    for _ in range(50):
        q = rng.normal(size=4)
        q /= np.linalg.norm(q)
        w, x, y, z = q
        m = np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )
        d = Direction(random_unit(rng, 1)[0], Frame.CAMERA)
        out = to_world(d, Rotation3(m))
        assert abs(np.linalg.norm(out.v) - 1.0) < 1e-6


def test_rotation_validation():
    with pytest.raises(ValueError):
        Rotation3(np.diag([1.0, 1.0, -1.0]))  # reflection
    with pytest.raises(ValueError):
        Rotation3(np.full((3, 3), 0.5))


def test_unlit_encoding_disjoint_from_real_directions():
    assert np.all(unlit_encoding() == 0.0)
    assert unlit_encoding().shape == (16,)


def test_default_grid_shape_and_norms():
    grid = default_light_grid()
    assert grid.shape == (18, 3)
    np.testing.assert_allclose(np.linalg.norm(grid, axis=1), 1.0, atol=1e-12)
    assert np.all(grid[:, 2] > 0.0)  # rear hemisphere, toward the camera
    assert np.all(grid[:, 2] < 0.999)  # none frontal


def test_direction_set_roundtrip(tmp_path):
    path = tmp_path / "directions.json"
    save_direction_set(default_light_grid(), path)
    dirs, frame = load_direction_set(path)
    assert frame is Frame.CAMERA
    np.testing.assert_allclose(dirs, default_light_grid(), atol=1e-12)
    doc = json.loads(path.read_text())
    assert doc["frame"] == "camera"
    assert len(doc["directions"]) == 18


def test_packaged_grid_matches_generator():
    from relightfield.directions import packaged_light_grid_path

    dirs, frame = load_direction_set(packaged_light_grid_path())
    assert frame is Frame.CAMERA
    np.testing.assert_allclose(dirs, default_light_grid(), atol=1e-15)
