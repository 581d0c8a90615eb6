"""Image-quality metrics (PSNR, SSIM) and per-scene relighting reports.

SSIM uses the reference recipe: 11x11 Gaussian window with sigma 1.5,
K1 = 0.01, K2 = 0.03, dynamic range 1, population covariances, computed per
channel and averaged. The SSIM map is only evaluated where the window is
fully inside the image, which makes the value independent of any padding
policy. A hand-derived gradient of the mean SSIM w.r.t. the first image
backs the D-SSIM term of the training loss.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError

PSNR_CAP = 99.0

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
_K1, _K2 = 0.01, 0.03
_C1 = (_K1) ** 2
_C2 = (_K2) ** 2
_PAD = SSIM_WINDOW // 2


def _gauss_kernel():
    r = _PAD
    t = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-(t * t) / (2.0 * SSIM_SIGMA**2))
    return k / k.sum()


_KERNEL = _gauss_kernel()


def _check_pair(a, b, min_side=1):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.ndim != 3 or a.shape[2] != 3:
        raise ShapeError(f"expected HxWx3 images, got {a.shape}")
    if min(a.shape[0], a.shape[1]) < min_side:
        raise ShapeError(f"images too small: {a.shape}, need min side {min_side}")
    return a, b


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB on [0,1] images, capped at 99."""
    a, b = _check_pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse <= 0.0:
        return PSNR_CAP
    return min(10.0 * np.log10(1.0 / mse), PSNR_CAP)


def _filter2(img):
    # separable Gaussian, zero padding; callers crop to the valid interior
    from scipy.ndimage import correlate1d

    out = correlate1d(img, _KERNEL, axis=1, mode="constant", cval=0.0)
    return correlate1d(out, _KERNEL, axis=0, mode="constant", cval=0.0)


def _ssim_channel_maps(a, b):
    mu_a, mu_b = _filter2(a), _filter2(b)
    e_aa, e_bb, e_ab = _filter2(a * a), _filter2(b * b), _filter2(a * b)
    var_a = e_aa - mu_a * mu_a
    var_b = e_bb - mu_b * mu_b
    cov = e_ab - mu_a * mu_b
    a1 = 2.0 * mu_a * mu_b + _C1
    a2 = 2.0 * cov + _C2
    b1 = mu_a * mu_a + mu_b * mu_b + _C1
    b2 = var_a + var_b + _C2
    return mu_a, mu_b, a1, a2, b1, b2


def ssim(a, b) -> float:
    """Mean SSIM over channels; requires min image side >= 11."""
    a, b = _check_pair(a, b, min_side=SSIM_WINDOW)
    total = 0.0
    for c in range(3):
        _, _, a1, a2, b1, b2 = _ssim_channel_maps(a[..., c], b[..., c])
        s = (a1 * a2) / (b1 * b2)
        total += float(np.mean(s[_PAD:-_PAD, _PAD:-_PAD]))
    return total / 3.0


def ssim_with_grad(a, b):
    """Returns (mean SSIM, d(mean SSIM)/da) for HxWx3 images.

    The Gaussian filter with zero padding is self-adjoint, so the backward
    pass reuses the forward filter on the (interior-masked) adjoint maps.
    """
    a, b = _check_pair(a, b, min_side=SSIM_WINDOW)
    h, w, _ = a.shape
    n_valid = (h - 2 * _PAD) * (w - 2 * _PAD) * 3
    grad = np.zeros_like(a)
    total = 0.0
    for c in range(3):
        ac, bc = a[..., c], b[..., c]
        mu_a, mu_b, a1, a2, b1, b2 = _ssim_channel_maps(ac, bc)
        s = (a1 * a2) / (b1 * b2)
        total += float(np.sum(s[_PAD:-_PAD, _PAD:-_PAD]))
        wgt = np.zeros_like(s)
        wgt[_PAD:-_PAD, _PAD:-_PAD] = 1.0 / n_valid
        inv_bb = 1.0 / (b1 * b2)
        g_mu = 2.0 * wgt * (mu_b * (a2 - a1) * inv_bb + mu_a * s * (1.0 / b2 - 1.0 / b1))
        g_eaa = -wgt * s / b2
        g_eab = 2.0 * wgt * a1 * inv_bb
        grad[..., c] = _filter2(g_mu) + _filter2(g_eaa) * 2.0 * ac + _filter2(g_eab) * bc
    return total / n_valid, grad


@dataclass
class MetricEntry:
    view: str
    light: int
    psnr: float
    ssim: float


@dataclass
class MetricReport:
    """Per-(view, light) metrics plus per-scene aggregates."""

    scene: str
    entries: list[MetricEntry] = field(default_factory=list)

    @property
    def aggregates(self):
        if not self.entries:
            return {"psnr": 0.0, "ssim": 0.0, "lpips": None}
        return {
            "psnr": float(np.mean([e.psnr for e in self.entries])),
            "ssim": float(np.mean([e.ssim for e in self.entries])),
            # column reserved; computing it needs a pretrained network
            "lpips": None,
        }

    def to_dict(self):
        return {
            "scene": self.scene,
            "entries": [
                {"view": e.view, "light": e.light, "psnr": e.psnr, "ssim": e.ssim}
                for e in self.entries
            ],
            "aggregates": self.aggregates,
        }

    def save_json(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)
            f.write("\n")

    def save_csv(self, path):
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["view", "light", "psnr", "ssim"])
            for e in self.entries:
                writer.writerow([e.view, e.light, f"{e.psnr:.6f}", f"{e.ssim:.6f}"])


def evaluate(scene, test, normalize: bool = False, scene_name: str = "scene") -> "MetricReport":
    """Render every (view, light) of a ground-truth dataset with the mean
    latent and score it; optionally LAB-normalize predictions to the ground
    truth first (the treatment applied to every method before reporting)."""
    from .colorspace import normalize_to_reference
    from .directions import sh_basis
    from .render import render

    report = MetricReport(scene=scene_name)
    if not test.base.views:
        return report
    latent = scene.mean_latent() if len(scene.latents) else None
    train_ids = set(scene.latent_ids)
    for view in test.base.views:
        if view.id in train_ids:
            import warnings

            warnings.warn(f"evaluation view {view.id} was also a training view")
        for k in range(len(test.light_dirs_camera)):
            enc = sh_basis(test.light_dirs_world[(view.id, k)])
            pred = np.clip(render(scene, view.pose, enc, latent).color, 0.0, 1.0)
            truth = test.relit[(view.id, k)]
            if normalize:
                pred = normalize_to_reference(pred, truth)
            report.entries.append(
                MetricEntry(view=view.id, light=k, psnr=psnr(pred, truth), ssim=ssim(pred, truth))
            )
    return report
