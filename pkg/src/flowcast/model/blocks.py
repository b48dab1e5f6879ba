"""Convolutional building blocks: encoders, decoders, and the mask CNN."""

import torch
import torch.nn as nn


def _norm_groups(channels):
    return 4 if channels % 4 == 0 else 1


class SqueezeExcite(nn.Module):
    """Channel reweighting from globally pooled statistics."""

    def __init__(self, channels, reduction=4):
        super().__init__()
        hidden = max(1, channels // reduction)
        self.fc1 = nn.Linear(channels, hidden)
        self.fc2 = nn.Linear(hidden, channels)

    def forward(self, x):
        s = x.mean(dim=(2, 3))
        s = torch.nn.functional.leaky_relu(self.fc1(s), 0.2)
        s = torch.sigmoid(self.fc2(s))
        return x * s.unsqueeze(-1).unsqueeze(-1)


class ConvEncoder(nn.Module):
    """Stride-2 stages down to a bounded feature vector.

    Returns the feature vector plus one skip tensor per stage (finest
    resolution first) so decoders can reuse spatial detail.
    """

    def __init__(self, in_channels, stage_channels, feature_dim, image_size):
        super().__init__()
        stage_channels = tuple(stage_channels)
        if image_size % (2 ** len(stage_channels)) != 0:
            raise ValueError(
                f"image size {image_size} incompatible with {len(stage_channels)} "
                f"halving stages"
            )
        self.image_size = image_size
        self.in_channels = in_channels
        self.stages = nn.ModuleList()
        prev = in_channels
        for ch in stage_channels:
            self.stages.append(nn.Sequential(
                nn.Conv2d(prev, ch, 4, stride=2, padding=1),
                nn.GroupNorm(_norm_groups(ch), ch),
                nn.LeakyReLU(0.2),
            ))
            prev = ch
        bottleneck = image_size // (2 ** len(stage_channels))
        self.head = nn.Sequential(
            nn.Conv2d(prev, feature_dim, bottleneck),
            nn.Tanh(),
        )

    def forward(self, x):
        if x.shape[-1] != self.image_size or x.shape[-2] != self.image_size:
            raise ValueError(
                f"expected {self.image_size}x{self.image_size} input, "
                f"got {tuple(x.shape[-2:])}"
            )
        if x.shape[-3] != self.in_channels:
            raise ValueError(
                f"expected {self.in_channels} input channels, got {x.shape[-3]}"
            )
        skips = []
        for stage in self.stages:
            x = stage(x)
            skips.append(x)
        feat = self.head(x).flatten(1)
        return feat, skips


class ConvDecoder(nn.Module):
    """Mirror of ConvEncoder: feature vector back up to an image.

    skip_channels, when given, lists the encoder stage widths whose outputs
    are concatenated at matching resolutions. head selects the output
    nonlinearity: "sigmoid" for images in [0,1], "flow" for tanh scaled to
    +/- flow_bound pixels.
    """

    def __init__(self, feature_dim, stage_channels, out_channels, image_size,
                 skip_channels=None, head="sigmoid", flow_bound=None):
        super().__init__()
        stage_channels = tuple(stage_channels)
        if head not in ("sigmoid", "flow"):
            raise ValueError(f"unknown decoder head {head!r}")
        if head == "flow" and (flow_bound is None or flow_bound <= 0):
            raise ValueError("flow head needs a positive flow_bound")
        self.head_kind = head
        self.flow_bound = flow_bound
        skip_channels = list(skip_channels) if skip_channels else [0] * len(stage_channels)
        if len(skip_channels) != len(stage_channels):
            raise ValueError("skip_channels must align with stage_channels")

        bottleneck = image_size // (2 ** len(stage_channels))
        self.entry = nn.Sequential(
            nn.ConvTranspose2d(feature_dim, stage_channels[-1], bottleneck),
            nn.GroupNorm(_norm_groups(stage_channels[-1]), stage_channels[-1]),
            nn.LeakyReLU(0.2),
        )
        self.ups = nn.ModuleList()
        for i in range(len(stage_channels) - 1, 0, -1):
            self.ups.append(nn.Sequential(
                nn.ConvTranspose2d(stage_channels[i] + skip_channels[i],
                                   stage_channels[i - 1], 4, stride=2, padding=1),
                nn.GroupNorm(_norm_groups(stage_channels[i - 1]), stage_channels[i - 1]),
                nn.LeakyReLU(0.2),
            ))
        self.final = nn.ConvTranspose2d(stage_channels[0] + skip_channels[0],
                                        out_channels, 4, stride=2, padding=1)

    def forward(self, feat, skips=None):
        x = self.entry(feat.unsqueeze(-1).unsqueeze(-1))
        n = len(self.ups) + 1
        for i, up in enumerate(self.ups):
            if skips is not None:
                x = torch.cat([x, skips[n - 1 - i]], dim=1)
            x = up(x)
        if skips is not None:
            x = torch.cat([x, skips[0]], dim=1)
        x = self.final(x)
        if self.head_kind == "sigmoid":
            return torch.sigmoid(x)
        return torch.tanh(x) * self.flow_bound


class MaskNet(nn.Module):
    """Stride-1 CNN deciding per pixel which prediction stream to trust.

    Five 3x3 convolutions at constant resolution with a squeeze-excite
    block after each pair, sigmoid at the end.
    """

    def __init__(self, in_channels, width=64, se_reduction=4):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(in_channels, width, 3, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(width, width, 3, padding=1),
            nn.LeakyReLU(0.2),
            SqueezeExcite(width, se_reduction),
            nn.Conv2d(width, width, 3, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(width, width, 3, padding=1),
            nn.LeakyReLU(0.2),
            SqueezeExcite(width, se_reduction),
            nn.Conv2d(width, 1, 3, padding=1),
        )

    def forward(self, x):
        return torch.sigmoid(self.net(x))
