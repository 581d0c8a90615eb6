"""Differentiable front-to-back Gaussian-splat renderer.

Forward model per splat: the world covariance R diag(s^2) R^T is pushed
through the camera and the local-affine (EWA) Jacobian of the pinhole
projection, floored with 0.3 px^2 of screen-space blur; per-pixel opacity is
alpha = sigmoid(logit) * exp(-0.5 d^T S^-1 d), clipped at 0.99; splats are
composited front to back in camera-depth order (stable ties by index), and
each splat's RGB comes from the appearance MLP conditioned on its feature,
the SH-encoded view direction toward it, the SH-encoded world light
direction, and an auxiliary latent. Remaining transmittance falls through to
a constant background color.

Per-splat projection, covariance and appearance run batched in numpy; the
per-pixel compositing loops are numba kernels that walk splats in depth
order (forward) and reverse (backward), so products/sums are plain
sequential float64 arithmetic: bit-deterministic, exactly telescoping, no
pair buffers. Sub-1/255 contributions are skipped inside each splat's
bounding box in production mode; the `exact` flag keeps every contribution
at every pixel and exists for gradient checking.

All gradients (MLP parameters, features, opacities, scales, rotations,
positions, latent) are analytic; the alpha clip contributes zero gradient
in its saturated region.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .datasets import CameraPose
from .directions import Direction, Frame, sh_basis, sh_basis_jacobian
from .errors import FrameError
from .splats import LATENT_DIM, SplatScene, quat_to_rot

ALPHA_CLIP = 0.99
COV_BLUR = 0.3  # px^2 added to the projected covariance diagonal
MIN_RADIUS_PX = 0.25  # skip splats whose 3-sigma footprint is below this
CONTRIB_ALPHA = 1.0 / 255.0
_FLIP = np.array([1.0, -1.0, -1.0])  # stored camera frame -> y-down/z-forward


@dataclass
class RenderOutput:
    color: np.ndarray  # (H, W, 3)
    transmittance: np.ndarray  # (H, W)
    weight_sum: np.ndarray  # (H, W), independent sum of compositing weights
    contributing: np.ndarray  # (H, W) int32 splats with alpha >= 1/255
    millis: float = 0.0


@dataclass
class RenderGrads:
    positions: np.ndarray
    quats: np.ndarray
    log_scales: np.ndarray
    logit_opacities: np.ndarray
    features: np.ndarray
    mlp: dict
    latent: np.ndarray


@njit(cache=True)
def _composite_forward(x0, y0, x1, y1, mu, inv3, opac, colors, bg, thresh, h, w):
    color = np.zeros((h, w, 3))
    tmap = np.ones((h, w))
    wsum = np.zeros((h, w))
    contrib = np.zeros((h, w), dtype=np.int32)
    for g in range(len(opac)):
        ia, ib, ic = inv3[g, 0], inv3[g, 1], inv3[g, 2]
        op = opac[g]
        mx, my = mu[g, 0], mu[g, 1]
        c0, c1, c2 = colors[g, 0], colors[g, 1], colors[g, 2]
        for yy in range(y0[g], y1[g]):
            dy = yy + 0.5 - my
            for xx in range(x0[g], x1[g]):
                dx = xx + 0.5 - mx
                q = ia * dx * dx + 2.0 * ib * dx * dy + ic * dy * dy
                alpha = op * np.exp(-0.5 * q)
                if alpha < thresh:
                    continue
                if alpha > ALPHA_CLIP:
                    alpha = ALPHA_CLIP
                t = tmap[yy, xx]
                wgt = alpha * t
                color[yy, xx, 0] += wgt * c0
                color[yy, xx, 1] += wgt * c1
                color[yy, xx, 2] += wgt * c2
                wsum[yy, xx] += wgt
                if alpha >= CONTRIB_ALPHA:
                    contrib[yy, xx] += 1
                tmap[yy, xx] = t * (1.0 - alpha)
    for yy in range(h):
        for xx in range(w):
            t = tmap[yy, xx]
            color[yy, xx, 0] += t * bg[0]
            color[yy, xx, 1] += t * bg[1]
            color[yy, xx, 2] += t * bg[2]
    return color, tmap, wsum, contrib


@njit(cache=True)
def _composite_backward(x0, y0, x1, y1, mu, inv3, opac, colors, bg, thresh, tmap, adj):
    """Reverse sweep: restores per-splat transmittance by division and keeps
    the after-this-splat color accumulator per pixel."""
    h, w = tmap.shape
    n = len(opac)
    tcur = tmap.copy()
    acc = np.empty((h, w, 3))
    for yy in range(h):
        for xx in range(w):
            t = tmap[yy, xx]
            acc[yy, xx, 0] = t * bg[0]
            acc[yy, xx, 1] = t * bg[1]
            acc[yy, xx, 2] = t * bg[2]
    d_color = np.zeros((n, 3))
    d_op = np.zeros(n)
    d_mu = np.zeros((n, 2))
    d_inv = np.zeros((n, 3))
    for g in range(n - 1, -1, -1):
        ia, ib, ic = inv3[g, 0], inv3[g, 1], inv3[g, 2]
        op = opac[g]
        mx, my = mu[g, 0], mu[g, 1]
        c0, c1, c2 = colors[g, 0], colors[g, 1], colors[g, 2]
        dc0 = dc1 = dc2 = dop = dmx = dmy = dia = dib = dic = 0.0
        for yy in range(y0[g], y1[g]):
            dy = yy + 0.5 - my
            for xx in range(x0[g], x1[g]):
                dx = xx + 0.5 - mx
                q = ia * dx * dx + 2.0 * ib * dx * dy + ic * dy * dy
                raw = op * np.exp(-0.5 * q)
                if raw < thresh:
                    continue
                alpha = raw if raw <= ALPHA_CLIP else ALPHA_CLIP
                tb = tcur[yy, xx] / (1.0 - alpha)
                wgt = alpha * tb
                a0 = adj[yy, xx, 0]
                a1 = adj[yy, xx, 1]
                a2 = adj[yy, xx, 2]
                dc0 += wgt * a0
                dc1 += wgt * a1
                dc2 += wgt * a2
                if raw <= ALPHA_CLIP:
                    inv1m = 1.0 / (1.0 - alpha)
                    dal = (
                        a0 * (tb * c0 - acc[yy, xx, 0] * inv1m)
                        + a1 * (tb * c1 - acc[yy, xx, 1] * inv1m)
                        + a2 * (tb * c2 - acc[yy, xx, 2] * inv1m)
                    )
                    dq = -0.5 * dal * raw
                    dop += dal * raw / op
                    ddx = dq * (2.0 * ia * dx + 2.0 * ib * dy)
                    ddy = dq * (2.0 * ib * dx + 2.0 * ic * dy)
                    dmx -= ddx
                    dmy -= ddy
                    dia += dq * dx * dx
                    dib += dq * 2.0 * dx * dy
                    dic += dq * dy * dy
                acc[yy, xx, 0] += wgt * c0
                acc[yy, xx, 1] += wgt * c1
                acc[yy, xx, 2] += wgt * c2
                tcur[yy, xx] = tb
        d_color[g, 0] = dc0
        d_color[g, 1] = dc1
        d_color[g, 2] = dc2
        d_op[g] = dop
        d_mu[g, 0] = dmx
        d_mu[g, 1] = dmy
        d_inv[g, 0] = dia
        d_inv[g, 1] = dib
        d_inv[g, 2] = dic
    return d_color, d_op, d_mu, d_inv


class _ForwardCache:
    __slots__ = (
        "scene", "cam", "dtype", "exact", "height", "width", "light_enc", "latent",
        "order", "t_cam", "mu", "cov", "inv_cov", "opacity", "colors",
        "mlp", "mlp_cache", "view_dirs", "view_dist", "rot", "scales2", "perspective",
        "bbox", "thresh", "t_map", "output",
    )


def _light_encoding(light):
    if light is None:
        return np.zeros(16, dtype=np.float64)
    if isinstance(light, Direction):
        if light.frame is not Frame.WORLD:
            raise FrameError("render expects a world-frame light direction")
        return sh_basis(light.v)
    arr = np.asarray(light, dtype=np.float64)
    if arr.shape != (16,):
        raise ValueError("light must be a Direction, a 16-vector encoding, or None")
    return arr


def forward(scene: SplatScene, cam: CameraPose, light, latent=None, exact: bool = False,
            with_cache: bool = False):
    """Render the scene; `light` is a world Direction, a 16-vector encoding
    (e.g. the zero 'unlit' token), or None for unlit. `latent` defaults to
    the scene's mean latent, falling back to zeros for latent-free scenes."""
    dtype = np.float64 if exact else np.float32
    h, w = cam.height, cam.width
    light_enc = _light_encoding(light)
    if latent is None:
        latent = scene.mean_latent() if len(scene.latents) else np.zeros(LATENT_DIM)
    latent = np.asarray(latent, dtype=dtype)
    if latent.shape != (LATENT_DIM,):
        raise ValueError(f"latent must have {LATENT_DIM} entries")

    positions = scene.positions.astype(np.float64)
    t_cam = ((positions - cam.position) @ scene_rotation(cam)) * _FLIP
    tz = t_cam[:, 2]
    finite = np.isfinite(t_cam).all(axis=1)
    vis = (tz > 1e-8) & finite

    rot = quat_to_rot(scene.quats)
    scales2 = np.exp(2.0 * scene.log_scales.astype(np.float64))
    vcov = np.einsum("gij,gj,gkj->gik", rot, scales2, rot)

    wm = (scene_rotation(cam) * _FLIP[None, :]).T  # world -> y-down/z-forward camera
    fx, fy = cam.fx, cam.fy
    with np.errstate(divide="ignore", invalid="ignore"):
        inv_z = np.where(vis, 1.0 / tz, 0.0)
    mu_x = fx * t_cam[:, 0] * inv_z + cam.cx
    mu_y = fy * t_cam[:, 1] * inv_z + cam.cy

    jac = np.zeros((scene.splat_count, 2, 3))
    jac[:, 0, 0] = fx * inv_z
    jac[:, 0, 2] = -fx * t_cam[:, 0] * inv_z**2
    jac[:, 1, 1] = fy * inv_z
    jac[:, 1, 2] = -fy * t_cam[:, 1] * inv_z**2
    perspective = np.einsum("gij,jk->gik", jac, wm)
    cov2 = np.einsum("gij,gjk,glk->gil", perspective, vcov, perspective)
    cov_a = cov2[:, 0, 0] + COV_BLUR
    cov_b = cov2[:, 0, 1]
    cov_c = cov2[:, 1, 1] + COV_BLUR
    det = cov_a * cov_c - cov_b * cov_b
    vis &= det > 1e-12
    with np.errstate(divide="ignore", invalid="ignore"):
        inv_det = np.where(vis, 1.0 / det, 0.0)
    inv_a = cov_c * inv_det
    inv_b = -cov_b * inv_det
    inv_c = cov_a * inv_det

    opacity = 1.0 / (1.0 + np.exp(-scene.logit_opacities.astype(np.float64)))

    if not exact:
        lam_max = 0.5 * (cov_a + cov_c) + np.sqrt(np.maximum(0.25 * (cov_a - cov_c) ** 2 + cov_b**2, 0.0))
        vis &= 3.0 * np.sqrt(np.maximum(lam_max, 0.0)) >= MIN_RADIUS_PX
        vis &= opacity > CONTRIB_ALPHA  # below the output quantum everywhere
        # per-axis extent of the alpha >= 1/255 ellipse, capped at 3 sigma
        r_m = np.sqrt(np.clip(2.0 * np.log(np.maximum(opacity, 1e-12) * 255.0), 0.01, 9.0))
        with np.errstate(invalid="ignore"):
            rad_x = r_m * np.sqrt(np.maximum(cov_a, 0.0))
            rad_y = r_m * np.sqrt(np.maximum(cov_c, 0.0))
        rad_x = np.where(np.isfinite(rad_x), rad_x, 0.0)
        rad_y = np.where(np.isfinite(rad_y), rad_y, 0.0)
        x0 = np.clip(np.floor(mu_x - rad_x), 0, w).astype(np.int32)
        x1 = np.clip(np.ceil(mu_x + rad_x) + 1, 0, w).astype(np.int32)
        y0 = np.clip(np.floor(mu_y - rad_y), 0, h).astype(np.int32)
        y1 = np.clip(np.ceil(mu_y + rad_y) + 1, 0, h).astype(np.int32)
        vis &= (x1 > x0) & (y1 > y0)
        thresh = CONTRIB_ALPHA
    else:
        x0 = np.zeros(scene.splat_count, dtype=np.int32)
        x1 = np.full(scene.splat_count, w, dtype=np.int32)
        y0 = np.zeros(scene.splat_count, dtype=np.int32)
        y1 = np.full(scene.splat_count, h, dtype=np.int32)
        thresh = 0.0

    vis_idx = np.flatnonzero(vis)
    order = vis_idx[np.argsort(tz[vis_idx], kind="stable")]

    # appearance of every surviving splat
    dvec = positions[order] - cam.position
    dist = np.linalg.norm(dvec, axis=1, keepdims=True)
    view_dirs = dvec / np.maximum(dist, 1e-12)
    mlp = scene.mlp.astype(dtype)
    inputs = np.concatenate(
        [
            scene.features[order].astype(dtype),
            sh_basis(view_dirs).astype(dtype),
            np.broadcast_to(light_enc.astype(dtype), (len(order), 16)),
            np.broadcast_to(latent, (len(order), LATENT_DIM)),
        ],
        axis=1,
    )
    colors, mlp_cache = mlp.forward(inputs, cache=True)
    colors = np.ascontiguousarray(colors, dtype=np.float64)

    mu = np.ascontiguousarray(np.stack([mu_x[order], mu_y[order]], axis=1))
    inv3 = np.ascontiguousarray(np.stack([inv_a[order], inv_b[order], inv_c[order]], axis=1))
    bbox = (np.ascontiguousarray(x0[order]), np.ascontiguousarray(y0[order]),
            np.ascontiguousarray(x1[order]), np.ascontiguousarray(y1[order]))
    opac = np.ascontiguousarray(opacity[order])
    bg = scene.background.astype(np.float64)

    color, t_map, wsum, contrib = _composite_forward(
        bbox[0], bbox[1], bbox[2], bbox[3], mu, inv3, opac, colors, bg, thresh, h, w
    )
    out = RenderOutput(color=color, transmittance=t_map, weight_sum=wsum, contributing=contrib)

    if not with_cache:
        return out
    cache = _ForwardCache()
    cache.scene, cache.cam, cache.dtype, cache.exact = scene, cam, dtype, exact
    cache.height, cache.width = h, w
    cache.light_enc, cache.latent = light_enc, latent
    cache.order, cache.t_cam = order, t_cam
    cache.mu = mu
    cache.cov = (cov_a, cov_b, cov_c, det)
    cache.inv_cov = inv3
    cache.opacity, cache.colors = opac, colors
    cache.mlp, cache.mlp_cache = mlp, mlp_cache
    cache.view_dirs, cache.view_dist = view_dirs, dist
    cache.rot, cache.scales2, cache.perspective = rot, scales2, perspective
    cache.bbox, cache.thresh = bbox, thresh
    cache.t_map, cache.output = t_map, out
    return out, cache


def scene_rotation(cam: CameraPose):
    return cam.rotation.m


def _quat_backward(quats, g_rot):
    """Pull rotation-matrix adjoints back to raw (unnormalized) quaternions."""
    q = np.asarray(quats, dtype=np.float64)
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    qh = q / norm
    w, x, y, z = qh[:, 0], qh[:, 1], qh[:, 2], qh[:, 3]
    zero = np.zeros_like(w)

    def m3(rows):
        return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)

    dr_dw = 2.0 * m3([[zero, -z, y], [z, zero, -x], [-y, x, zero]])
    dr_dx = 2.0 * m3([[zero, y, z], [y, -2 * x, -w], [z, w, -2 * x]])
    dr_dy = 2.0 * m3([[-2 * y, x, w], [x, zero, z], [-w, z, -2 * y]])
    dr_dz = 2.0 * m3([[-2 * z, -w, x], [w, -2 * z, y], [x, y, zero]])
    g_hat = np.stack(
        [np.einsum("gij,gij->g", g_rot, d) for d in (dr_dw, dr_dx, dr_dy, dr_dz)], axis=-1
    )
    # through normalization: d(q/|q|) = (I - qh qh^T)/|q|
    return (g_hat - qh * np.sum(g_hat * qh, axis=-1, keepdims=True)) / norm


def backward(cache: _ForwardCache, adjoint) -> RenderGrads:
    """Gradients of <adjoint, rendered color> w.r.t. scene parameters."""
    scene, cam = cache.scene, cache.cam
    h, w = cache.height, cache.width
    adjoint = np.ascontiguousarray(adjoint, dtype=np.float64)
    if adjoint.shape != (h, w, 3):
        raise ValueError("adjoint must match the rendered image shape")

    g = scene.splat_count
    order = cache.order
    n_vis = len(order)
    grads = RenderGrads(
        positions=np.zeros((g, 3)),
        quats=np.zeros((g, 4)),
        log_scales=np.zeros((g, 3)),
        logit_opacities=np.zeros(g),
        features=np.zeros_like(scene.features, dtype=np.float64),
        mlp={k: np.zeros_like(v, dtype=np.float64) for k, v in scene.mlp.params().items()},
        latent=np.zeros(LATENT_DIM),
    )
    if n_vis == 0:
        return grads

    x0, y0, x1, y1 = cache.bbox
    d_colors, d_op, d_mu, d_inv = _composite_backward(
        x0, y0, x1, y1, cache.mu, cache.inv_cov, cache.opacity, cache.colors,
        scene.background.astype(np.float64), cache.thresh, cache.t_map, adjoint,
    )

    # opacity -> logit
    grads.logit_opacities[order] = d_op * cache.opacity * (1.0 - cache.opacity)

    # inverse covariance -> covariance entries (a, b, c)
    ia, ib, ic = cache.inv_cov[:, 0], cache.inv_cov[:, 1], cache.inv_cov[:, 2]
    # G_Sigma = -M G_M M with G_M = [[dA, dB/2], [dB/2, dC]]
    gm00, gm01, gm11 = d_inv[:, 0], 0.5 * d_inv[:, 1], d_inv[:, 2]
    m00, m01, m11 = ia, ib, ic
    t00 = m00 * gm00 + m01 * gm01
    t01 = m00 * gm01 + m01 * gm11
    t10 = m01 * gm00 + m11 * gm01
    t11 = m01 * gm01 + m11 * gm11
    gs00 = -(t00 * m00 + t01 * m01)
    gs01 = -(t00 * m01 + t01 * m11)
    gs10 = -(t10 * m00 + t11 * m01)
    gs11 = -(t10 * m01 + t11 * m11)
    g_sigma = np.empty((n_vis, 2, 2))
    g_sigma[:, 0, 0] = gs00
    g_sigma[:, 0, 1] = 0.5 * (gs01 + gs10)
    g_sigma[:, 1, 0] = g_sigma[:, 0, 1]
    g_sigma[:, 1, 1] = gs11

    # covariance = P V P^T (+ blur), V = R diag(s2) R^T
    pmat = cache.perspective[order]
    vmat = np.einsum("gij,gj,gkj->gik", cache.rot[order], cache.scales2[order], cache.rot[order])
    g_p = 2.0 * np.einsum("gij,gjk,gkl->gil", g_sigma, pmat, vmat)
    g_v = np.einsum("gji,gjk,gkl->gil", pmat, g_sigma, pmat)

    rot = cache.rot[order]
    s2 = cache.scales2[order]
    g_rot = 2.0 * np.einsum("gij,gjk,gk->gik", g_v, rot, s2)
    g_s2 = np.einsum("gji,gjk,gki->gi", rot, g_v, rot)
    grads.log_scales[order] = g_s2 * 2.0 * s2  # d exp(2 ls)/d ls
    grads.quats[order] = _quat_backward(scene.quats[order], g_rot)

    # P = J Wm: gradient w.r.t. the projection Jacobian entries
    wm = (scene_rotation(cam) * _FLIP[None, :]).T
    g_j = np.einsum("gij,kj->gik", g_p, wm)

    t = cache.t_cam[order]
    tx, ty, tz = t[:, 0], t[:, 1], t[:, 2]
    fx, fy = cam.fx, cam.fy
    inv_z = 1.0 / tz
    d_t = np.zeros((n_vis, 3))
    # through the projected mean
    d_t[:, 0] += d_mu[:, 0] * fx * inv_z
    d_t[:, 1] += d_mu[:, 1] * fy * inv_z
    d_t[:, 2] += -d_mu[:, 0] * fx * tx * inv_z**2 - d_mu[:, 1] * fy * ty * inv_z**2
    # through the Jacobian entries J00, J02, J11, J12
    d_t[:, 0] += g_j[:, 0, 2] * (-fx * inv_z**2)
    d_t[:, 1] += g_j[:, 1, 2] * (-fy * inv_z**2)
    d_t[:, 2] += (
        g_j[:, 0, 0] * (-fx * inv_z**2)
        + g_j[:, 1, 1] * (-fy * inv_z**2)
        + g_j[:, 0, 2] * (2.0 * fx * tx * inv_z**3)
        + g_j[:, 1, 2] * (2.0 * fy * ty * inv_z**3)
    )
    d_pos = d_t @ wm  # t = Wm (p - campos)

    # appearance path
    mlp_grads, d_inputs = cache.mlp.backward(cache.mlp_cache, d_colors.astype(cache.dtype))
    for k in grads.mlp:
        grads.mlp[k] += mlp_grads[k].astype(np.float64)
    d_inputs = d_inputs.astype(np.float64)
    nf = scene.features.shape[1]
    grads.features[order] = d_inputs[:, :nf]
    d_view_enc = d_inputs[:, nf:nf + 16]
    grads.latent = d_inputs[:, nf + 32:].sum(axis=0)

    # view-direction encoding -> position
    jac_sh = sh_basis_jacobian(cache.view_dirs)
    d_dir = np.einsum("gkc,gk->gc", jac_sh, d_view_enc)
    vd = cache.view_dirs
    proj = d_dir - vd * np.sum(vd * d_dir, axis=1, keepdims=True)
    d_pos += proj / cache.view_dist

    grads.positions[order] = d_pos
    return grads


def render(scene: SplatScene, cam: CameraPose, light, latent=None, exact: bool = False) -> RenderOutput:
    return forward(scene, cam, light, latent, exact=exact)


def render_with_grads(scene: SplatScene, cam: CameraPose, light, latent, adjoint,
                      exact: bool = False):
    """Render and return (output, gradients of <adjoint, color>)."""
    out, cache = forward(scene, cam, light, latent, exact=exact, with_cache=True)
    return out, backward(cache, adjoint)
