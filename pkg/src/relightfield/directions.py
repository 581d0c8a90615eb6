"""Unit directions with explicit reference frames and their spherical-harmonics encoding.

Conventions fixed here, used everywhere else:

* Camera-local frame: x right, y up, z pointing from the scene toward the
  camera. A frontal flash therefore has direction (0, 0, 1).
* Real spherical harmonics use the standard graphics convention: fully
  orthonormalized, all-positive signs (no Condon-Shortley factor). The first
  four bands give 16 coefficients ordered (l, m) = (0,0), (1,-1), (1,0),
  (1,1), (2,-2) ... (3,3).
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import FrameError, InvalidDirectionError

# Renormalize inputs this close to unit length; reject anything further out.
NORM_SLACK = 1e-3

SH_DIM = 16

# Orthonormalization constants sqrt((2l+1)/(4*pi) * (l-|m|)!/(l+|m|)!) folded
# into each basis polynomial.
_C0 = 0.28209479177387814  # 1/(2 sqrt(pi))
_C1 = 0.4886025119029199  # sqrt(3/(4 pi))
_C2 = 1.0925484305920792  # sqrt(15/(4 pi))
_C3 = 0.31539156525252005  # sqrt(5/(16 pi))
_C4 = 0.5462742152960396  # sqrt(15/(16 pi))
_C5 = 0.5900435899266435  # sqrt(35/(32 pi))
_C6 = 2.890611442640554  # sqrt(105/(4 pi))
_C7 = 0.4570457994644658  # sqrt(21/(32 pi))
_C8 = 0.3731763325901154  # sqrt(7/(16 pi))
_C9 = 1.445305721320277  # sqrt(105/(16 pi))


class Frame(enum.Enum):
    CAMERA = "camera"
    WORLD = "world"


@dataclass(frozen=True)
class Direction:
    """Unit 3-vector tagged with the frame it lives in."""

    v: np.ndarray
    frame: Frame

    def __post_init__(self):
        v = np.asarray(self.v, dtype=np.float64)
        if v.shape != (3,) or not np.all(np.isfinite(v)):
            raise InvalidDirectionError(f"direction must be a finite 3-vector, got {self.v!r}")
        n = float(np.linalg.norm(v))
        if abs(n - 1.0) > NORM_SLACK:
            raise InvalidDirectionError(f"direction norm {n:.6f} outside [1-{NORM_SLACK}, 1+{NORM_SLACK}]")
        object.__setattr__(self, "v", v / n)

    @staticmethod
    def camera(x, y, z) -> "Direction":
        return Direction(np.array([x, y, z], dtype=np.float64), Frame.CAMERA)

    @staticmethod
    def world(x, y, z) -> "Direction":
        return Direction(np.array([x, y, z], dtype=np.float64), Frame.WORLD)


@dataclass(frozen=True)
class Rotation3:
    """Proper rotation matrix (row-major 3x3)."""

    m: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m, dtype=np.float64)
        if m.shape != (3, 3) or not np.all(np.isfinite(m)):
            raise ValueError("rotation must be a finite 3x3 matrix")
        if not np.allclose(m.T @ m, np.eye(3), atol=1e-5):
            raise ValueError("matrix is not orthonormal")
        if abs(np.linalg.det(m) - 1.0) > 1e-5:
            raise ValueError("matrix determinant is not +1")
        object.__setattr__(self, "m", m)

    @staticmethod
    def identity() -> "Rotation3":
        return Rotation3(np.eye(3))


@dataclass(frozen=True)
class ShEncoding:
    """16 real SH basis values of a unit direction (bands 0..3)."""

    coeffs: np.ndarray = field(default_factory=lambda: np.zeros(SH_DIM))

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.float64)
        if c.shape != (SH_DIM,) or not np.all(np.isfinite(c)):
            raise ValueError(f"encoding must be {SH_DIM} finite values")
        object.__setattr__(self, "coeffs", c)


def sh_basis(dirs: np.ndarray) -> np.ndarray:
    """Evaluate the 16 basis functions for an (..., 3) array of unit vectors."""
    d = np.asarray(dirs, dtype=np.float64)
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    xx, yy, zz = x * x, y * y, z * z
    out = np.empty(d.shape[:-1] + (SH_DIM,), dtype=np.float64)
    out[..., 0] = _C0
    out[..., 1] = _C1 * y
    out[..., 2] = _C1 * z
    out[..., 3] = _C1 * x
    out[..., 4] = _C2 * x * y
    out[..., 5] = _C2 * y * z
    out[..., 6] = _C3 * (3.0 * zz - 1.0)
    out[..., 7] = _C2 * x * z
    out[..., 8] = _C4 * (xx - yy)
    out[..., 9] = _C5 * y * (3.0 * xx - yy)
    out[..., 10] = _C6 * x * y * z
    out[..., 11] = _C7 * y * (5.0 * zz - 1.0)
    out[..., 12] = _C8 * z * (5.0 * zz - 3.0)
    out[..., 13] = _C7 * x * (5.0 * zz - 1.0)
    out[..., 14] = _C9 * z * (xx - yy)
    out[..., 15] = _C5 * x * (xx - 3.0 * yy)
    return out


def sh_basis_jacobian(dirs: np.ndarray) -> np.ndarray:
    """d(basis)/d(x,y,z) for an (..., 3) array; returns (..., 16, 3).

    Derivatives of the raw polynomials; callers constraining the input to the
    sphere must compose with the normalization Jacobian themselves.
    """
    d = np.asarray(dirs, dtype=np.float64)
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    xx, yy, zz = x * x, y * y, z * z
    zero = np.zeros_like(x)
    jac = np.empty(d.shape[:-1] + (SH_DIM, 3), dtype=np.float64)
    jac[..., 0, :] = 0.0
    jac[..., 1, 0], jac[..., 1, 1], jac[..., 1, 2] = zero, _C1 + zero, zero
    jac[..., 2, 0], jac[..., 2, 1], jac[..., 2, 2] = zero, zero, _C1 + zero
    jac[..., 3, 0], jac[..., 3, 1], jac[..., 3, 2] = _C1 + zero, zero, zero
    jac[..., 4, 0], jac[..., 4, 1], jac[..., 4, 2] = _C2 * y, _C2 * x, zero
    jac[..., 5, 0], jac[..., 5, 1], jac[..., 5, 2] = zero, _C2 * z, _C2 * y
    jac[..., 6, 0], jac[..., 6, 1], jac[..., 6, 2] = zero, zero, 6.0 * _C3 * z
    jac[..., 7, 0], jac[..., 7, 1], jac[..., 7, 2] = _C2 * z, zero, _C2 * x
    jac[..., 8, 0], jac[..., 8, 1], jac[..., 8, 2] = 2.0 * _C4 * x, -2.0 * _C4 * y, zero
    jac[..., 9, 0], jac[..., 9, 1], jac[..., 9, 2] = 6.0 * _C5 * x * y, 3.0 * _C5 * (xx - yy), zero
    jac[..., 10, 0], jac[..., 10, 1], jac[..., 10, 2] = _C6 * y * z, _C6 * x * z, _C6 * x * y
    jac[..., 11, 0], jac[..., 11, 1], jac[..., 11, 2] = zero, _C7 * (5.0 * zz - 1.0), 10.0 * _C7 * y * z
    jac[..., 12, 0], jac[..., 12, 1], jac[..., 12, 2] = zero, zero, _C8 * (15.0 * zz - 3.0)
    jac[..., 13, 0], jac[..., 13, 1], jac[..., 13, 2] = _C7 * (5.0 * zz - 1.0), zero, 10.0 * _C7 * x * z
    jac[..., 14, 0], jac[..., 14, 1], jac[..., 14, 2] = 2.0 * _C9 * x * z, -2.0 * _C9 * y * z, _C9 * (xx - yy)
    jac[..., 15, 0], jac[..., 15, 1], jac[..., 15, 2] = 3.0 * _C5 * (xx - yy), -6.0 * _C5 * x * y, zero
    return jac


def sh_encode(d: Direction) -> ShEncoding:
    """Encode a unit direction as its 16 first-four-band SH basis values."""
    return ShEncoding(sh_basis(d.v))


def unlit_encoding() -> np.ndarray:
    """Reserved all-zero encoding marking the original capture illumination.

    Distinguishable from every real direction because those always carry the
    band-0 constant 0.28209479 in slot 0.
    """
    return np.zeros(SH_DIM, dtype=np.float64)


def to_world(l: Direction, rot: Rotation3) -> Direction:
    """Transport a camera-local direction to world via the camera-to-world rotation."""
    if l.frame is not Frame.CAMERA:
        raise FrameError(f"expected a camera-local direction, got frame {l.frame.value!r}")
    return Direction(rot.m @ l.v, Frame.WORLD)


def default_light_grid() -> np.ndarray:
    """The 18 default camera-local flash directions: a 3x6 rear-hemisphere grid.

    Elevations {20, 45, 70} degrees toward the camera axis crossed with
    azimuth steps of 60 degrees. Returns an (18, 3) array of unit vectors.
    The same set ships as ``data/directions_default.json``; probe fitting can
    regenerate a set from real captures.
    """
    dirs = []
    for elev_deg in (20.0, 45.0, 70.0):
        e = math.radians(elev_deg)
        for k in range(6):
            a = math.radians(60.0 * k)
            dirs.append((math.cos(e) * math.cos(a), math.cos(e) * math.sin(a), math.sin(e)))
    return np.asarray(dirs, dtype=np.float64)


def packaged_light_grid_path() -> str:
    """Filesystem path of the shipped default direction-set file."""
    from importlib.resources import files

    return str(files("relightfield").joinpath("data/directions_default.json"))


def save_direction_set(dirs, path, frame: Frame = Frame.CAMERA):
    """Write a direction-set file: {"frame": ..., "directions": [[x,y,z], ...]}."""
    arr = np.asarray(dirs, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError("directions must be an (N, 3) array")
    doc = {"frame": frame.value, "directions": [[float(c) for c in row] for row in arr]}
    with open(path, "w") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


def load_direction_set(path):
    """Read a direction-set file; returns (directions (N,3), Frame)."""
    with open(path) as f:
        doc = json.load(f)
    frame = Frame(doc["frame"])
    arr = np.asarray(doc["directions"], dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"{path}: malformed direction list")
    norms = np.linalg.norm(arr, axis=1)
    if np.any(np.abs(norms - 1.0) > NORM_SLACK):
        raise InvalidDirectionError(f"{path}: non-unit directions in set")
    return arr / norms[:, None], frame
