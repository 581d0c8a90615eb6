"""Relightable Gaussian-splat radiance fields.

Pipeline: recover flash directions from gray-ball probes, augment a
single-illumination multi-view capture into an 18-direction multi-light
dataset through a pluggable relighter, train a splat scene whose appearance
MLP is conditioned on light direction, view direction and per-image latents,
then serve it for interactive relighting over HTTP.
"""

__version__ = "0.1.0"
