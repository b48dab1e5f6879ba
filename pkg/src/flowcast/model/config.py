"""Model hyperparameters and their validation."""

from dataclasses import dataclass, asdict

VARIANTS = ("baseline", "slamp", "appearance")


@dataclass
class ModelConfig:
    """Sizes and switches for every learnable component.

    variant:
      - "slamp": two latent streams (pixel and flow), separate predictors,
        appearance + flow decoders fused by a mask.
      - "baseline": one latent stream and one predictor feeding both
        decoders and the mask.
      - "appearance": one stream, appearance decoder only (no warping);
        mainly for ablations and parameter accounting.
    """

    image_size: int = 64
    channels: int = 1
    feature_dim: int = 128
    latent_pixel: int = 20
    latent_flow: int = 20
    hidden_dim: int = 256
    posterior_layers: int = 1
    prior_layers: int = 1
    predictor_layers: int = 2
    encoder_channels: tuple = (32, 64, 128)
    mask_channels: int = 64
    se_reduction: int = 4
    logvar_min: float = -10.0
    logvar_max: float = 10.0
    # flow displacements are tanh-bounded by this many pixels; None picks
    # half the image width
    max_flow: float = None
    variant: str = "slamp"

    def __post_init__(self):
        self.encoder_channels = tuple(int(c) for c in self.encoder_channels)
        self.validate()

    def validate(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}, expected one of {VARIANTS}")
        for name in ("image_size", "channels", "feature_dim", "latent_pixel",
                     "latent_flow", "hidden_dim", "posterior_layers",
                     "prior_layers", "predictor_layers", "mask_channels",
                     "se_reduction"):
            v = getattr(self, name)
            if not isinstance(v, int) or v <= 0:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        if not self.encoder_channels:
            raise ValueError("encoder_channels must not be empty")
        if any(c <= 0 for c in self.encoder_channels):
            raise ValueError(f"encoder channels must be positive, got {self.encoder_channels}")
        depth = len(self.encoder_channels)
        if self.image_size % (2 ** depth) != 0:
            raise ValueError(
                f"image_size {self.image_size} not divisible by 2^{depth} "
                f"(one halving per encoder stage)"
            )
        if self.logvar_min >= self.logvar_max:
            raise ValueError("logvar_min must be below logvar_max")
        if self.max_flow is not None and self.max_flow <= 0:
            raise ValueError(f"max_flow must be positive, got {self.max_flow}")

    @property
    def flow_bound(self):
        return float(self.max_flow) if self.max_flow is not None else self.image_size / 2.0

    @property
    def bottleneck_size(self):
        return self.image_size // (2 ** len(self.encoder_channels))

    @property
    def two_stream(self):
        return self.variant == "slamp"

    @property
    def has_motion(self):
        return self.variant in ("slamp", "baseline")

    def to_dict(self):
        d = asdict(self)
        d["encoder_channels"] = list(self.encoder_channels)
        return d

    @classmethod
    def from_dict(cls, d):
        names = set(cls.__dataclass_fields__)
        extra = set(d) - names
        if extra:
            raise ValueError(f"unknown model config keys: {sorted(extra)}")
        return cls(**d)
