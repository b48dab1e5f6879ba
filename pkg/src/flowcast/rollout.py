"""Temporal engine: training and generation rollouts over a video.

Index conventions (0-based): a rollout over L = t_cond + t_pred frames
predicts targets t = 1 .. L-1, each from history up to t-1, so the first
predicted frame is the second frame of the clip (first_pred_index = 2 in
1-based counting). In train mode latents come from the posteriors at every
step; in generate mode they come from the posteriors while ground truth is
available (t < t_cond) and from the learned priors afterwards, with
generated frames feeding back as history.
"""

import math
from dataclasses import dataclass, field

import torch

from .model.network import SkipRunningAverage
from .model.recurrent import reparameterize
from .warp import combine, inverse_warp

FIRST_PRED_INDEX = 2  # 1-based label of the first predicted frame


class FrameAccessError(RuntimeError):
    """A generation rollout tried to read ground truth past the window."""


class GuardedVideo:
    """View over (B, T, C, H, W) frames that refuses reads beyond a limit."""

    def __init__(self, frames, limit):
        if frames.dim() != 5:
            raise ValueError(f"expected (B, T, C, H, W), got {tuple(frames.shape)}")
        if not 1 <= limit <= frames.shape[1]:
            raise ValueError(f"limit {limit} outside [1, {frames.shape[1]}]")
        self._frames = frames
        self.limit = limit
        self.reads = []

    @property
    def batch(self):
        return self._frames.shape[0]

    @property
    def length(self):
        return self._frames.shape[1]

    def frame(self, t):
        if t >= self.limit:
            raise FrameAccessError(
                f"frame {t} requested but only frames below {self.limit} are readable"
            )
        self.reads.append(t)
        return self._frames[:, t]


@dataclass
class RolloutConfig:
    t_cond: int = 5
    t_pred: int = 10
    variant: str = "slamp"

    def __post_init__(self):
        self.validate()

    def validate(self):
        min_cond = 2 if self.variant == "slamp" else 1
        if self.t_cond < min_cond:
            raise ValueError(
                f"t_cond must be >= {min_cond} for variant {self.variant!r}, "
                f"got {self.t_cond}"
            )
        if self.t_pred < 1:
            raise ValueError(f"t_pred must be >= 1, got {self.t_pred}")

    @property
    def length(self):
        return self.t_cond + self.t_pred


@dataclass
class RolloutOutput:
    """Per-step signals of one rollout; lists are indexed by target step.

    target_indices[i] is the 0-based frame index predicted by entry i.
    Posterior lists may be shorter than prior lists in generate mode, where
    posteriors exist only for conditioning-phase steps.
    """

    target_indices: list = field(default_factory=list)
    combined: list = field(default_factory=list)       # fused prediction per step
    appearance: list = field(default_factory=list)     # direct decoder output
    motion: list = field(default_factory=list)         # warped previous frame
    flows: list = field(default_factory=list)
    masks: list = field(default_factory=list)
    posterior_pixel: list = field(default_factory=list)
    prior_pixel: list = field(default_factory=list)
    posterior_flow: list = field(default_factory=list)
    prior_flow: list = field(default_factory=list)
    latents_pixel: list = field(default_factory=list)
    latents_flow: list = field(default_factory=list)

    def stacked_from(self, first_target):
        """Fused frames for targets >= first_target as (B, n, C, H, W)."""
        chosen = [f for t, f in zip(self.target_indices, self.combined)
                  if t >= first_target]
        return torch.stack(chosen, dim=1)


def scheduled_sampling_prob(iteration, k):
    """Probability of feeding the ground-truth frame at this iteration.

    Inverse sigmoid decay: eps_i = k / (k + exp(i / k)).
    """
    if k <= 0:
        raise ValueError(f"k must be positive, got {k}")
    try:
        return k / (k + math.exp(iteration / k))
    except OverflowError:
        return 0.0


class _Engine:
    """Shared single-step machinery for both rollout modes."""

    def __init__(self, model, batch, device, dtype):
        self.model = model
        self.cfg = model.config
        self.states = {
            "posterior_pixel": model.posterior_pixel.init_state(batch, device, dtype),
            "prior_pixel": model.prior_pixel.init_state(batch, device, dtype),
            "predictor_pixel": model.predictor_pixel.init_state(batch, device, dtype),
        }
        if self.cfg.two_stream:
            self.states.update({
                "posterior_flow": model.posterior_flow.init_state(batch, device, dtype),
                "prior_flow": model.prior_flow.init_state(batch, device, dtype),
                "predictor_flow": model.predictor_flow.init_state(batch, device, dtype),
            })
        self.skip_avg = SkipRunningAverage()
        # history features of the most recent fed frame
        self.prev_frame = None
        self.prev_feat = None
        self.prev_motion_feat = None  # MotionEnc(feed[t-2], feed[t-1])

    def start(self, first_frame):
        feat, skips = self.model.pixel_encode(first_frame)
        self.skip_avg.update(skips)
        self.prev_frame = first_frame
        self.prev_feat = feat
        if self.cfg.two_stream:
            # zero-motion bootstrap: the first pair is the frame with itself
            self.prev_motion_feat = self.model.motion_encode(first_frame, first_frame)

    def _head(self, name, h):
        state, params = getattr(self.model, name).step(h, self.states[name])
        self.states[name] = state
        return params

    def _predict(self, name, h, z):
        state, g = getattr(self.model, name).step(h, z, self.states[name])
        self.states[name] = state
        return g

    def posterior_params(self, gt_frame):
        """Advance posterior heads on information up to and including gt_frame."""
        h_t, _ = self.model.pixel_encode(gt_frame)
        q_pixel = self._head("posterior_pixel", h_t)
        q_flow = None
        if self.cfg.two_stream:
            h_f = self.model.motion_encode(self.prev_frame, gt_frame)
            q_flow = self._head("posterior_flow", h_f)
        return q_pixel, q_flow

    def prior_params(self):
        """Advance prior heads on information up to the previous frame."""
        p_pixel = self._head("prior_pixel", self.prev_feat)
        p_flow = None
        if self.cfg.two_stream:
            p_flow = self._head("prior_flow", self.prev_motion_feat)
        return p_pixel, p_flow

    def decode(self, z_pixel, z_flow):
        """Latents -> (combined, appearance, warped, flow, mask)."""
        skips = self.skip_avg.value()
        g_pixel = self._predict("predictor_pixel", self.prev_feat, z_pixel)
        x_p = self.model.appearance_decode(g_pixel, skips)
        if not self.cfg.has_motion:
            return x_p, x_p, None, None, None
        if self.cfg.two_stream:
            g_flow = self._predict("predictor_flow", self.prev_motion_feat, z_flow)
        else:
            g_flow = g_pixel
        flow = self.model.flow_decode(g_flow, skips)
        x_f = inverse_warp(self.prev_frame, flow)
        mask = self.model.mask_predict(x_p, x_f)
        x_hat = combine(x_p, x_f, mask)
        return x_hat, x_p, x_f, flow, mask

    def advance(self, new_frame):
        """Commit `new_frame` as history for the next step."""
        feat, skips = self.model.pixel_encode(new_frame)
        self.skip_avg.update(skips)
        if self.cfg.two_stream:
            self.prev_motion_feat = self.model.motion_encode(self.prev_frame, new_frame)
        self.prev_frame = new_frame
        self.prev_feat = feat


def _noise_like(params, generator):
    return torch.randn(params.mean.shape, generator=generator,
                       dtype=params.mean.dtype, device=params.mean.device)


def _normalize_flags(use_generated, batch, length, device):
    if use_generated is None:
        return torch.zeros(batch, length, dtype=torch.bool, device=device)
    flags = torch.as_tensor(use_generated, dtype=torch.bool, device=device)
    if flags.dim() == 1:
        flags = flags.unsqueeze(0).expand(batch, -1)
    if flags.shape != (batch, length):
        raise ValueError(
            f"use_generated shape {tuple(flags.shape)} incompatible with "
            f"({batch}, {length})"
        )
    return flags


def train_rollout(model, video, config, generator, use_generated=None):
    """Posterior-driven rollout over the first t_cond + t_pred frames.

    video: (B, T, C, H, W) ground truth with T >= t_cond + t_pred.
    generator: torch.Generator for the reparameterization noise.
    use_generated: optional per-step booleans, (L,) or (B, L); entry t makes
    the model's own prediction replace ground truth as the history frame
    t - 1 consumed at step t (scheduled sampling). Entries 0 and 1 have no
    effect since the first history frame is always ground truth.
    """
    if video.dim() != 5:
        raise ValueError(f"expected (B, T, C, H, W), got {tuple(video.shape)}")
    L = config.length
    if video.shape[1] < L:
        raise ValueError(
            f"video has {video.shape[1]} frames, rollout needs {L}"
        )
    if config.variant != model.config.variant:
        raise ValueError(
            f"rollout variant {config.variant!r} != model variant "
            f"{model.config.variant!r}"
        )
    batch = video.shape[0]
    flags = _normalize_flags(use_generated, batch, L, video.device)

    engine = _Engine(model, batch, video.device, video.dtype)
    engine.start(video[:, 0])
    out = RolloutOutput()

    for t in range(1, L):
        gt_t = video[:, t]
        q_pixel, q_flow = engine.posterior_params(gt_t)
        p_pixel, p_flow = engine.prior_params()
        z_pixel = reparameterize(q_pixel, _noise_like(q_pixel, generator))
        z_flow = None
        if model.config.two_stream:
            z_flow = reparameterize(q_flow, _noise_like(q_flow, generator))
        x_hat, x_p, x_f, flow, mask = engine.decode(z_pixel, z_flow)

        out.target_indices.append(t)
        out.combined.append(x_hat)
        out.appearance.append(x_p)
        out.posterior_pixel.append(q_pixel)
        out.prior_pixel.append(p_pixel)
        out.latents_pixel.append(z_pixel)
        if model.config.has_motion:
            out.motion.append(x_f)
            out.flows.append(flow)
            out.masks.append(mask)
        if model.config.two_stream:
            out.posterior_flow.append(q_flow)
            out.prior_flow.append(p_flow)
            out.latents_flow.append(z_flow)

        if t + 1 < L:
            pick = flags[:, t + 1].view(batch, 1, 1, 1)
            engine.advance(torch.where(pick, x_hat, gt_t))

    return out


def generate(model, video, config, generator):
    """Generation rollout: posteriors during conditioning, priors after.

    video: (B, T, C, H, W) tensor or a GuardedVideo; only frames below
    t_cond are ever read. Returns (frames, RolloutOutput) where frames is
    (B, t_pred, C, H, W), the fused predictions for steps t_cond .. L-1.
    """
    if isinstance(video, GuardedVideo):
        guard = video
        if guard.limit > config.t_cond:
            raise ValueError(
                f"guard admits frames below {guard.limit}, conditioning is "
                f"{config.t_cond}"
            )
    else:
        if video.dim() != 5:
            raise ValueError(f"expected (B, T, C, H, W), got {tuple(video.shape)}")
        guard = GuardedVideo(video, config.t_cond)
    if guard.limit < config.t_cond:
        raise ValueError(
            f"need {config.t_cond} conditioning frames, guard allows {guard.limit}"
        )
    if config.variant != model.config.variant:
        raise ValueError(
            f"rollout variant {config.variant!r} != model variant "
            f"{model.config.variant!r}"
        )

    L = config.length
    first = guard.frame(0)
    engine = _Engine(model, guard.batch, first.device, first.dtype)
    engine.start(first)
    out = RolloutOutput()

    for t in range(1, L):
        conditioning = t < config.t_cond
        if conditioning:
            gt_t = guard.frame(t)
            q_pixel, q_flow = engine.posterior_params(gt_t)
            p_pixel, p_flow = engine.prior_params()
            z_pixel = reparameterize(q_pixel, _noise_like(q_pixel, generator))
            z_flow = None
            if model.config.two_stream:
                z_flow = reparameterize(q_flow, _noise_like(q_flow, generator))
            out.posterior_pixel.append(q_pixel)
            if model.config.two_stream:
                out.posterior_flow.append(q_flow)
        else:
            p_pixel, p_flow = engine.prior_params()
            z_pixel = reparameterize(p_pixel, _noise_like(p_pixel, generator))
            z_flow = None
            if model.config.two_stream:
                z_flow = reparameterize(p_flow, _noise_like(p_flow, generator))
        x_hat, x_p, x_f, flow, mask = engine.decode(z_pixel, z_flow)

        out.target_indices.append(t)
        out.combined.append(x_hat)
        out.appearance.append(x_p)
        out.prior_pixel.append(p_pixel)
        out.latents_pixel.append(z_pixel)
        if model.config.has_motion:
            out.motion.append(x_f)
            out.flows.append(flow)
            out.masks.append(mask)
        if model.config.two_stream:
            out.prior_flow.append(p_flow)
            out.latents_flow.append(z_flow)

        if t + 1 < L:
            # frame t is readable ground truth while t < t_cond; afterwards
            # the model's own prediction becomes the history frame
            engine.advance(guard.frame(t) if t < config.t_cond else x_hat)

    frames = out.stacked_from(config.t_cond)
    return frames, out
