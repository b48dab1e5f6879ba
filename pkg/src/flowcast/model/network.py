"""The full predictive model: encoders, latent heads, predictors, decoders."""

import torch
import torch.nn as nn

from .blocks import ConvDecoder, ConvEncoder, MaskNet
from .config import ModelConfig
from .recurrent import GaussianHead, Predictor, reparameterize  # noqa: F401


def skip_running_average(history):
    """Element-wise mean over a list of per-stage skip tensor lists."""
    if not history:
        raise ValueError("skip history is empty")
    stages = len(history[0])
    if any(len(entry) != stages for entry in history):
        raise ValueError("skip entries have inconsistent stage counts")
    out = []
    for s in range(stages):
        acc = history[0][s]
        for entry in history[1:]:
            acc = acc + entry[s]
        out.append(acc / len(history))
    return out


class SkipRunningAverage:
    """Streaming version of skip_running_average with O(1) state per stage."""

    def __init__(self):
        self._sums = None
        self.count = 0

    def update(self, skips):
        if self._sums is None:
            self._sums = list(skips)
        else:
            if len(skips) != len(self._sums):
                raise ValueError("skip stage count changed mid-stream")
            self._sums = [a + b for a, b in zip(self._sums, skips)]
        self.count += 1

    def value(self):
        if self.count == 0:
            raise ValueError("skip history is empty")
        return [s / self.count for s in self._sums]


class VideoPredictor(nn.Module):
    """Two-stream (or reduced) stochastic video prediction model.

    Holds every learnable piece; the time loop lives in the rollout module
    and calls the per-step methods below.
    """

    def __init__(self, config):
        super().__init__()
        if not isinstance(config, ModelConfig):
            config = ModelConfig.from_dict(dict(config))
        self.config = config
        c = config

        self.pixel_encoder = ConvEncoder(c.channels, c.encoder_channels,
                                         c.feature_dim, c.image_size)
        skip_ch = list(c.encoder_channels)
        self.appearance_decoder = ConvDecoder(c.feature_dim, c.encoder_channels,
                                              c.channels, c.image_size,
                                              skip_channels=skip_ch, head="sigmoid")
        if c.has_motion:
            self.flow_decoder = ConvDecoder(c.feature_dim, c.encoder_channels,
                                            2, c.image_size, skip_channels=skip_ch,
                                            head="flow", flow_bound=c.flow_bound)
            self.mask_net = MaskNet(2 * c.channels, c.mask_channels, c.se_reduction)
        if c.two_stream:
            self.motion_encoder = ConvEncoder(2 * c.channels, c.encoder_channels,
                                              c.feature_dim, c.image_size)

        lv = dict(logvar_min=c.logvar_min, logvar_max=c.logvar_max)
        self.posterior_pixel = GaussianHead(c.feature_dim, c.hidden_dim,
                                            c.latent_pixel, c.posterior_layers, **lv)
        self.prior_pixel = GaussianHead(c.feature_dim, c.hidden_dim,
                                        c.latent_pixel, c.prior_layers, **lv)
        self.predictor_pixel = Predictor(c.feature_dim + c.latent_pixel,
                                         c.hidden_dim, c.feature_dim,
                                         c.predictor_layers)
        if c.two_stream:
            self.posterior_flow = GaussianHead(c.feature_dim, c.hidden_dim,
                                               c.latent_flow, c.posterior_layers, **lv)
            self.prior_flow = GaussianHead(c.feature_dim, c.hidden_dim,
                                           c.latent_flow, c.prior_layers, **lv)
            self.predictor_flow = Predictor(c.feature_dim + c.latent_flow,
                                            c.hidden_dim, c.feature_dim,
                                            c.predictor_layers)

    # per-step operations used by the rollout engine

    def pixel_encode(self, frame):
        """Frame -> (feature vector, per-stage skips)."""
        return self.pixel_encoder(frame)

    def motion_encode(self, frame_prev, frame_cur):
        """Concatenated frame pair -> motion feature vector."""
        if not self.config.two_stream:
            raise RuntimeError(f"variant {self.config.variant!r} has no motion encoder")
        if frame_prev.shape != frame_cur.shape:
            raise ValueError(
                f"frame shapes differ: {tuple(frame_prev.shape)} vs {tuple(frame_cur.shape)}"
            )
        feat, _ = self.motion_encoder(torch.cat([frame_prev, frame_cur], dim=-3))
        return feat

    def appearance_decode(self, g, skips):
        return self.appearance_decoder(g, skips)

    def flow_decode(self, g, skips):
        if not self.config.has_motion:
            raise RuntimeError(f"variant {self.config.variant!r} has no flow decoder")
        return self.flow_decoder(g, skips)

    def mask_predict(self, x_p, x_f):
        if not self.config.has_motion:
            raise RuntimeError(f"variant {self.config.variant!r} has no mask net")
        if x_p.shape != x_f.shape:
            raise ValueError(
                f"stream shapes differ: {tuple(x_p.shape)} vs {tuple(x_f.shape)}"
            )
        return self.mask_net(torch.cat([x_p, x_f], dim=-3))


def parameter_count(module):
    return sum(p.numel() for p in module.parameters())
