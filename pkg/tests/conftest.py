import numpy as np
import pytest

from relightfield.datasets import look_at
from relightfield.splats import (
    FEATURE_DIM,
    LATENT_DIM,
    AppearanceMLP,
    SplatScene,
)


def random_scene(rng, n_splats=6, spread=0.5, max_opacity=0.95, n_latents=2):
    """Small random scene centered at the origin with well-separated depths.

    Depth separation keeps the sort order stable under the finite-difference
    probes used by the gradient checks.
    """
    positions = rng.uniform(-spread, spread, size=(n_splats, 3))
    positions[:, 2] = np.linspace(-spread, spread, n_splats) + rng.uniform(-0.02, 0.02, n_splats)
    quats = rng.normal(size=(n_splats, 4))
    quats /= np.linalg.norm(quats, axis=1, keepdims=True)
    logit_cap = np.log(max_opacity / (1.0 - max_opacity))
    scene = SplatScene(
        positions=positions.astype(np.float32),
        quats=quats.astype(np.float32),
        log_scales=rng.uniform(-2.2, -1.2, size=(n_splats, 3)).astype(np.float32),
        logit_opacities=rng.uniform(-1.0, logit_cap, size=n_splats).astype(np.float32),
        features=(rng.standard_normal((n_splats, FEATURE_DIM)) * 0.5).astype(np.float32),
        mlp=AppearanceMLP.create(rng),
        latent_ids=[f"v{i}" for i in range(n_latents)],
        latents=(rng.standard_normal((n_latents, LATENT_DIM)) * 0.3).astype(np.float32),
        background=rng.uniform(0.0, 1.0, size=3).astype(np.float32),
    )
    return scene


def front_camera(width=8, height=8, distance=3.0, fov=50.0):
    return look_at([0.0, 0.0, distance], [0.0, 0.0, 0.0], up=(0, 1, 0),
                   fov_deg=fov, width=width, height=height)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
