"""Reconstruction and KL terms for the variational training objective.

The objective sums a squared-error likelihood term and per-step KL
divergences over the predicted span. With two latent streams the bound has
separate pixel and flow KL terms; the single-stream variant drops the flow
term. Reconstruction is applied to the fused prediction and, with small or
unit weights, to each stream's own output so both decoders receive a direct
learning signal.
"""

from dataclasses import dataclass, fields
from typing import NamedTuple

import torch


class GaussianParams(NamedTuple):
    """Diagonal Gaussian with log-variance parametrization."""

    mean: torch.Tensor
    logvar: torch.Tensor


def gaussian_kl(q, p):
    """KL(q || p) between diagonal Gaussians, summed over the last axis.

    Accepts parameter tensors of shape (..., d) and returns shape (...).
    Closed form per dimension:
        0.5 * (exp(lv_q - lv_p) + (mu_p - mu_q)^2 / exp(lv_p) - 1 + lv_p - lv_q)
    """
    if q.mean.shape != p.mean.shape:
        raise ValueError(
            f"distribution shapes differ: {tuple(q.mean.shape)} vs {tuple(p.mean.shape)}"
        )
    if q.mean.shape != q.logvar.shape or p.mean.shape != p.logvar.shape:
        raise ValueError("mean and logvar shapes must match")
    term = (
        torch.exp(q.logvar - p.logvar)
        + (p.mean - q.mean) ** 2 / torch.exp(p.logvar)
        - 1.0
        + p.logvar
        - q.logvar
    )
    return 0.5 * term.sum(dim=-1)


def _stack_steps(seq):
    # accept a (B, T, ...) tensor or a list of per-step (B, ...) tensors
    if torch.is_tensor(seq):
        return seq
    return torch.stack(list(seq), dim=1)


def recon_l2(pred, target):
    """Squared error summed over pixels and time, averaged over the batch.

    Both arguments are (B, T, C, H, W) tensors or length-T lists of
    (B, C, H, W) tensors.
    """
    pred = _stack_steps(pred)
    target = _stack_steps(target)
    if pred.shape != target.shape:
        raise ValueError(
            f"prediction shape {tuple(pred.shape)} does not match "
            f"target {tuple(target.shape)}"
        )
    b = pred.shape[0]
    return ((pred - target) ** 2).sum() / b


def kl_sum(q_seq, p_seq):
    """Sum of per-step KL terms, each averaged over the batch."""
    if len(q_seq) != len(p_seq):
        raise ValueError(f"step count mismatch: {len(q_seq)} vs {len(p_seq)}")
    total = None
    for q, p in zip(q_seq, p_seq):
        step = gaussian_kl(q, p).mean()
        total = step if total is None else total + step
    if total is None:
        raise ValueError("empty step sequence")
    return total


@dataclass
class LossBreakdown:
    """Scalar terms of one training objective evaluation.

    `total` is the minimized quantity and always equals
    recon_combined + recon_appearance + recon_motion + beta * (kl_pixel + kl_flow),
    where the recon fields already include their stream weights.
    """

    recon_combined: torch.Tensor
    recon_appearance: torch.Tensor
    recon_motion: torch.Tensor
    kl_pixel: torch.Tensor
    kl_flow: torch.Tensor
    beta: float
    total: torch.Tensor

    def detached(self):
        """Same breakdown with plain floats, for logging."""
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = float(v.detach()) if torch.is_tensor(v) else float(v)
        return LossBreakdown(**out)

    def to_dict(self):
        d = self.detached()
        return {f.name: getattr(d, f.name) for f in fields(self)}


def _zero_like(ref):
    return torch.zeros((), dtype=ref.dtype, device=ref.device)


def elbo_baseline(combined, appearance, motion, targets, q_pixel, p_pixel,
                  beta, recon_weights=(1.0, 1.0, 1.0)):
    """Objective for the single-latent-stream variant.

    combined, appearance, motion, targets: per-step image sequences (lists of
    (B, C, H, W) or (B, T, C, H, W) tensors). `motion` may be None when the
    model has no warping branch; its term is then zero.
    q_pixel, p_pixel: per-step GaussianParams for posterior and prior.
    recon_weights: (combined, appearance, motion) multipliers.
    """
    w_c, w_a, w_m = recon_weights
    rc = w_c * recon_l2(combined, targets)
    ra = w_a * recon_l2(appearance, targets) if w_a != 0 else _zero_like(rc)
    if motion is not None and w_m != 0:
        rm = w_m * recon_l2(motion, targets)
    else:
        rm = _zero_like(rc)
    klp = kl_sum(q_pixel, p_pixel)
    klf = _zero_like(rc)
    total = rc + ra + rm + beta * (klp + klf)
    return LossBreakdown(rc, ra, rm, klp, klf, beta, total)


def elbo_slamp(combined, appearance, motion, targets, q_pixel, p_pixel,
               q_flow, p_flow, beta, recon_weights=(1.0, 1.0, 1.0)):
    """Objective for the two-latent-stream variant.

    Adds the flow-stream KL to the baseline objective; both KL terms share
    the same weight beta.
    """
    w_c, w_a, w_m = recon_weights
    rc = w_c * recon_l2(combined, targets)
    ra = w_a * recon_l2(appearance, targets) if w_a != 0 else _zero_like(rc)
    rm = w_m * recon_l2(motion, targets) if w_m != 0 else _zero_like(rc)
    klp = kl_sum(q_pixel, p_pixel)
    klf = kl_sum(q_flow, p_flow)
    total = rc + ra + rm + beta * (klp + klf)
    return LossBreakdown(rc, ra, rm, klp, klf, beta, total)
