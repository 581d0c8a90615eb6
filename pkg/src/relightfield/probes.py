"""Recover flash directions from photographed gray-ball light probes.

A probe image is an orthographic render of a unit sphere facing the viewer
(view axis +z of the camera-local frame). Shading is ambient + Lambertian
diffuse + a Phong specular lobe gated by a Schlick Fresnel term; fitting
minimizes mean L1 over the sphere interior, jointly over the light direction
and the five shading parameters, with Adam restarted from a small hemisphere
grid of initial directions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .directions import Direction, Frame
from .errors import DegenerateProbeError, FrameError, ShapeError

FIT_RESOLUTION = 64
DEFAULT_STARTS = 8
FIT_ITERS = 500
FIT_STEP = 0.05
POLISH_ITERS = 300
POLISH_STEP = 0.01


@dataclass(frozen=True)
class LightProbeModel:
    """Gray-ball shading parameters."""

    ambient: float
    albedo: float
    spec_intensity: float
    spec_hardness: float
    fresnel: float

    def __post_init__(self):
        vals = (self.ambient, self.albedo, self.spec_intensity, self.spec_hardness, self.fresnel)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("probe model parameters must be finite")
        if self.ambient < 0 or self.albedo < 0 or self.spec_intensity < 0:
            raise ValueError("ambient/albedo/specular intensity must be >= 0")
        if self.spec_hardness < 1:
            raise ValueError("specular hardness must be >= 1")
        if not 0.0 <= self.fresnel <= 1.0:
            raise ValueError("fresnel must be in [0, 1]")


@dataclass
class ProbeImage:
    """Square grayscale probe with its inscribed-disk mask."""

    pixels: np.ndarray
    mask: np.ndarray

    @staticmethod
    def from_pixels(pixels) -> "ProbeImage":
        px = np.asarray(pixels, dtype=np.float64)
        if px.ndim != 2 or px.shape[0] != px.shape[1]:
            raise ShapeError(f"probe must be square grayscale, got {px.shape}")
        nx, ny, _ = _disk_grid(px.shape[0])
        mask = nx * nx + ny * ny <= 1.0
        return ProbeImage(pixels=np.clip(px, 0.0, 1.0), mask=mask)


def _disk_grid(size):
    # pixel centers mapped to [-1, 1]^2, y up
    c = (np.arange(size) + 0.5) / size * 2.0 - 1.0
    nx = np.broadcast_to(c[None, :], (size, size))
    ny = np.broadcast_to(-c[:, None], (size, size))
    nz2 = 1.0 - nx * nx - ny * ny
    return nx, ny, nz2


def _shade(nx, ny, nz, l, model):
    """Shading and the per-pixel pieces needed for gradients."""
    ndotl = nx * l[0] + ny * l[1] + nz * l[2]
    diffuse = np.maximum(ndotl, 0.0)
    # r = reflect(-l, n) = 2 (n.l) n - l; specular uses r.v with v = +z
    rdotv = 2.0 * ndotl * nz - l[2]
    spec_base = np.maximum(rdotv, 0.0)
    spec_pow = spec_base**model.spec_hardness
    fresnel_term = model.fresnel + (1.0 - model.fresnel) * (1.0 - nz) ** 5
    raw = (
        model.ambient
        + model.albedo * diffuse
        + fresnel_term * model.spec_intensity * spec_pow
    )
    return raw, ndotl, diffuse, spec_base, spec_pow, fresnel_term


def render_probe(l: Direction, model: LightProbeModel, size: int) -> ProbeImage:
    """Orthographic gray-ball render under a camera-local directional light."""
    if l.frame is not Frame.CAMERA:
        raise FrameError("probe lights live in the camera-local frame")
    if size < 16:
        raise ValueError("probe size must be >= 16")
    nx, ny, nz2 = _disk_grid(size)
    mask = nz2 >= 0.0
    nz = np.sqrt(np.maximum(nz2, 0.0))
    raw, *_ = _shade(nx, ny, nz, l.v, model)
    pixels = np.where(mask, np.clip(raw, 0.0, 1.0), 0.0)
    return ProbeImage(pixels=pixels, mask=mask)


def _loss_and_grad(params, target_px, mask, nx, ny, nz):
    """Mean L1 over the mask and its gradient w.r.t. the raw parameters.

    params = (theta, phi, p_ambient, p_albedo, p_spec, p_hard, p_fresnel)
    with softplus transforms for the nonnegative quantities, 1 + exp for
    hardness (log-space, so large exponents stay reachable), and a sigmoid
    for fresnel.
    """
    theta, phi, p_amb, p_alb, p_spec, p_hard, p_fres = params
    sp = lambda x: np.logaddexp(0.0, x)  # softplus
    sig = lambda x: 1.0 / (1.0 + np.exp(-x))
    amb, alb, spec = sp(p_amb), sp(p_alb), sp(p_spec)
    hard = 1.0 + math.exp(min(p_hard, 8.0))
    fres = sig(p_fres)
    st, ct = math.sin(theta), math.cos(theta)
    cp, sps = math.cos(phi), math.sin(phi)
    l = np.array([st * cp, st * sps, ct])

    model = LightProbeModel(amb, alb, spec, hard, fres)
    raw, ndotl, diffuse, spec_base, spec_pow, fresnel_term = _shade(nx, ny, nz, l, model)
    clipped = np.clip(raw, 0.0, 1.0)
    err = clipped - target_px
    n = mask.sum()
    loss = float(np.abs(err[mask]).mean())

    g = np.where(mask & (raw > 0.0) & (raw < 1.0), np.sign(err) / n, 0.0)

    diff_on = ndotl > 0.0
    spec_on = spec_base > 0.0
    g_amb = float(g.sum())
    g_alb = float((g * diffuse).sum())
    g_spec = float((g * fresnel_term * spec_pow).sum())
    with np.errstate(divide="ignore"):
        log_base = np.where(spec_on, np.log(np.maximum(spec_base, 1e-300)), 0.0)
    g_hard = float((g * fresnel_term * spec * spec_pow * log_base).sum())
    g_fres = float((g * (1.0 - (1.0 - nz) ** 5) * spec * spec_pow).sum())

    # dI/dl = albedo * n * [n.l>0] + fres_term * spec * hard * base^(h-1) * (2 nz n - e_z)
    spec_chain = fresnel_term * spec * hard * np.where(spec_on, spec_base ** (hard - 1.0), 0.0)
    gl = np.empty(3)
    for k, nk in enumerate((nx, ny, nz)):
        dterm = alb * np.where(diff_on, nk, 0.0)
        sterm = spec_chain * (2.0 * nz * nk - (1.0 if k == 2 else 0.0))
        gl[k] = float((g * (dterm + sterm)).sum())
    dl_dtheta = np.array([ct * cp, ct * sps, -st])
    dl_dphi = np.array([-st * sps, st * cp, 0.0])

    grad = np.array(
        [
            gl @ dl_dtheta,
            gl @ dl_dphi,
            g_amb * sig(p_amb),
            g_alb * sig(p_alb),
            g_spec * sig(p_spec),
            g_hard * (hard - 1.0) * (1.0 if p_hard < 8.0 else 0.0),
            g_fres * fres * (1.0 - fres),
        ]
    )
    return loss, grad, l, model


def _adam_fit(params0, target_px, mask, nx, ny, nz, iters, step, lr_floor=1e-4):
    params = params0.copy()
    m = np.zeros_like(params)
    v = np.zeros_like(params)
    best = (np.inf, None, None, params0.copy())
    for t in range(1, iters + 1):
        loss, grad, l, model = _loss_and_grad(params, target_px, mask, nx, ny, nz)
        if loss < best[0]:
            best = (loss, l, model, params.copy())
        lr = lr_floor + (step - lr_floor) * 0.5 * (1.0 + math.cos(math.pi * (t - 1) / iters))
        m = 0.9 * m + 0.1 * grad
        v = 0.999 * v + 0.001 * grad * grad
        mhat = m / (1.0 - 0.9**t)
        vhat = v / (1.0 - 0.999**t)
        params -= lr * mhat / (np.sqrt(vhat) + 1e-8)
    loss, grad, l, model = _loss_and_grad(params, target_px, mask, nx, ny, nz)
    if loss < best[0]:
        best = (loss, l, model, params.copy())
    return best


def _start_grid(starts):
    # hemisphere grid biased toward the viewer axis
    pts = []
    rings = [(math.radians(20.0), 4), (math.radians(55.0), starts - 4)] if starts > 4 else [(math.radians(35.0), starts)]
    for theta, count in rings:
        for k in range(max(count, 0)):
            pts.append((theta, 2.0 * math.pi * (k + 0.5) / max(count, 1)))
    return pts[:starts]


def fit_light_direction(target: ProbeImage, starts: int = DEFAULT_STARTS):
    """Fit light direction and shading parameters to one probe image.

    Returns (direction, model, residual) where residual is the final mean L1
    over the sphere interior.
    """
    if starts < 1:
        raise ValueError("need at least one start")
    px = np.asarray(target.pixels, dtype=np.float64)
    mask = np.asarray(target.mask, dtype=bool)
    if px.shape != mask.shape:
        raise ShapeError("probe pixels and mask disagree")
    if not mask.any() or float(px[mask].max()) <= 0.0:
        raise DegenerateProbeError("probe has no signal inside the sphere region")

    size = px.shape[0]
    nx, ny, nz2 = _disk_grid(size)
    nz = np.sqrt(np.maximum(nz2, 0.0))

    mean_val = float(px[mask].mean())
    p_amb0 = math.log(math.expm1(max(0.25 * mean_val, 1e-3)))
    p_alb0 = math.log(math.expm1(max(mean_val, 1e-3)))
    best = (np.inf, None, None, None)
    for theta, phi in _start_grid(starts):
        params0 = np.array([theta, phi, p_amb0, p_alb0, math.log(math.expm1(0.1)), math.log(8.0), -2.0])
        result = _adam_fit(params0, px, mask, nx, ny, nz, FIT_ITERS, FIT_STEP)
        if result[0] < best[0]:
            best = result
    # polish the winner at a small step to settle the L1 plateau
    polished = _adam_fit(best[3], px, mask, nx, ny, nz, POLISH_ITERS, POLISH_STEP,
                         lr_floor=1e-6)
    if polished[0] < best[0]:
        best = polished
    residual, l, model, _ = best
    return Direction(l, Frame.CAMERA), model, residual


def fit_direction_set(targets):
    """Fit each probe independently; order preserved; errors carry the index."""
    out = []
    for i, t in enumerate(targets):
        try:
            d, model, _ = fit_light_direction(t)
        except DegenerateProbeError as e:
            raise DegenerateProbeError(f"probe {i}: {e}") from e
        out.append((d, model))
    return out
