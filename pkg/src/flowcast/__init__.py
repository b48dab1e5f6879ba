"""Stochastic video prediction with appearance and motion latents.

The model predicts future frames two ways at once: an appearance decoder
paints each frame directly, and a flow decoder estimates dense motion that
warps the previous frame forward. A learned occlusion mask blends the two,
so static regions come from warping and newly revealed content from the
appearance stream. Both streams carry their own latent variables, trained
with a time-factorized variational bound.
"""

__version__ = "0.1.0"
