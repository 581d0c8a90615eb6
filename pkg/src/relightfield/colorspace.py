"""sRGB <-> CIELAB conversion and LAB statistics matching.

Fixed constants: sRGB primaries with the D65 white point
(Xn, Yn, Zn) = (0.95047, 1.0, 1.08883), linearization via the standard sRGB
EOTF, and the usual CIELAB cube-root compression with the 6/29 knee. L lands
in [0, 100].

Statistics matching maps one or more prediction images so that their joint
per-channel LAB mean/std equal a reference image's, which both corrects
relighter color drift against the capture and normalizes predictions before
metric computation. Means/stds are population statistics over every pixel,
accumulated in double precision so the result is independent of any parallel
pixel split.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError

# Std floor: below this the per-channel division is skipped in favor of a
# pure mean shift (constant images would otherwise divide by zero).
STD_FLOOR = 1e-4

_RGB2XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_XYZ2RGB = np.linalg.inv(_RGB2XYZ)
_WHITE = np.array([0.95047, 1.0, 1.08883])
_DELTA = 6.0 / 29.0


@dataclass(frozen=True)
class LabStats:
    """Per-channel (L, a, b) mean and population std."""

    mean: np.ndarray
    std: np.ndarray


def _check_image(img):
    a = np.asarray(img, dtype=np.float64)
    if a.ndim != 3 or a.shape[2] != 3 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ShapeError(f"expected an HxWx3 image, got shape {np.shape(img)}")
    return a


def srgb_to_linear(c):
    c = np.asarray(c, dtype=np.float64)
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def linear_to_srgb(c):
    c = np.asarray(c, dtype=np.float64)
    c = np.maximum(c, 0.0)
    return np.where(c <= 0.0031308, c * 12.92, 1.055 * c ** (1.0 / 2.4) - 0.055)


def srgb_to_lab(img):
    """Convert an HxWx3 sRGB image in [0,1] to CIELAB (D65)."""
    rgb = _check_image(img)
    xyz = srgb_to_linear(rgb) @ _RGB2XYZ.T
    t = xyz / _WHITE
    f = np.where(t > _DELTA**3, np.cbrt(t), t / (3.0 * _DELTA**2) + 4.0 / 29.0)
    lab = np.empty_like(xyz)
    lab[..., 0] = 116.0 * f[..., 1] - 16.0
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return lab


def lab_to_srgb(lab):
    """Inverse of srgb_to_lab, clamped to [0,1]."""
    lab = _check_image(lab)
    fy = (lab[..., 0] + 16.0) / 116.0
    fx = fy + lab[..., 1] / 500.0
    fz = fy - lab[..., 2] / 200.0
    f = np.stack([fx, fy, fz], axis=-1)
    t = np.where(f > _DELTA, f**3, 3.0 * _DELTA**2 * (f - 4.0 / 29.0))
    rgb = linear_to_srgb((t * _WHITE) @ _XYZ2RGB.T)
    return np.clip(rgb, 0.0, 1.0)


def lab_stats(img) -> LabStats:
    """Population mean/std per LAB channel of one image."""
    lab = srgb_to_lab(img)
    flat = lab.reshape(-1, 3)
    return LabStats(mean=flat.mean(axis=0), std=flat.std(axis=0))


def _joint_lab_stats(labs):
    flat = np.concatenate([l.reshape(-1, 3) for l in labs], axis=0)
    return flat.mean(axis=0), flat.std(axis=0)


def _affine_map(lab, mu_src, sigma_src, mu_ref, sigma_ref):
    scale = np.where(sigma_src < STD_FLOOR, 0.0, sigma_ref / np.maximum(sigma_src, STD_FLOOR))
    return (lab - mu_src) * scale + mu_ref


def match_stats_joint(predictions, reference):
    """Map a stack of prediction images onto the reference's LAB statistics.

    One affine map per channel is computed from the joint statistics of the
    whole stack and applied identically to every image, so relative
    brightness between the images is preserved.
    """
    ref = _check_image(reference)
    preds = [_check_image(p) for p in predictions]
    for p in preds:
        if p.shape != ref.shape:
            raise ShapeError(f"prediction shape {p.shape} != reference shape {ref.shape}")
    if not preds:
        return []
    labs = [srgb_to_lab(p) for p in preds]
    mu_p, sigma_p = _joint_lab_stats(labs)
    ref_stats = lab_stats(ref)
    return [lab_to_srgb(_affine_map(l, mu_p, sigma_p, ref_stats.mean, ref_stats.std)) for l in labs]


def normalize_to_reference(pred, ref):
    """Single-image LAB statistics transfer (used to normalize predictions
    against ground truth before computing metrics)."""
    p = _check_image(pred)
    r = _check_image(ref)
    if p.shape != r.shape:
        raise ShapeError(f"prediction shape {p.shape} != reference shape {r.shape}")
    lab = srgb_to_lab(p)
    mu_p, sigma_p = _joint_lab_stats([lab])
    ref_stats = lab_stats(r)
    return lab_to_srgb(_affine_map(lab, mu_p, sigma_p, ref_stats.mean, ref_stats.std))
