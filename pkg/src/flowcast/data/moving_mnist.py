"""Seeded generator for bouncing-digit videos.

Digits move linearly in continuous coordinates and reflect off the canvas
walls; each bounce draws a fresh velocity (uniform direction pointing away
from the wall, uniform speed within the configured range). Positions are
rounded to integers only when rasterizing, and overlapping digits blend by
per-pixel maximum. Identical (config, digits, seed) gives bit-identical
output.
"""

import hashlib
import json
import math
from dataclasses import dataclass, asdict

import numpy as np


@dataclass
class DigitState:
    glyph_index: int
    position: tuple  # (row, col) of the glyph's top-left corner, continuous
    velocity: tuple  # (d_row, d_col) per frame


@dataclass
class GeneratorConfig:
    canvas_size: int = 32
    num_digits: int = 1
    num_frames: int = 15
    speed_min: float = 1.0
    speed_max: float = 2.0
    channels: int = 1

    def validate(self):
        if self.num_frames < 1:
            raise ValueError(f"num_frames must be >= 1, got {self.num_frames}")
        if self.num_digits not in (1, 2):
            raise ValueError(f"num_digits must be 1 or 2, got {self.num_digits}")
        if self.speed_min < 0 or self.speed_max < self.speed_min:
            raise ValueError(
                f"need 0 <= speed_min <= speed_max, got "
                f"[{self.speed_min}, {self.speed_max}]"
            )
        if self.channels != 1:
            raise ValueError(f"only single-channel output is supported, got {self.channels}")
        if self.canvas_size < 1:
            raise ValueError(f"canvas_size must be positive, got {self.canvas_size}")

    def to_dict(self):
        return asdict(self)

    def fingerprint(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


@dataclass
class Video:
    """A clip plus the generator bookkeeping needed for analysis.

    frames: (T, C, H, W) float32 in [0, 1]
    positions: (T, D, 2) float64 continuous top-left positions per digit
    bounces: (T-1, D) bool, True when the step from frame t to t+1 reflected
    """

    frames: np.ndarray
    seed: int
    config_hash: str
    positions: np.ndarray
    bounces: np.ndarray


def _random_velocity(rng, speed_min, speed_max):
    angle = rng.uniform(0.0, 2.0 * math.pi)
    speed = rng.uniform(speed_min, speed_max)
    return (speed * math.sin(angle), speed * math.cos(angle))


def _bounce_velocity(rng, speed_min, speed_max, low_hit, high_hit):
    # uniform direction constrained to point away from every violated wall
    dr, dc = _random_velocity(rng, speed_min, speed_max)
    if low_hit[0]:
        dr = abs(dr)
    elif high_hit[0]:
        dr = -abs(dr)
    if low_hit[1]:
        dc = abs(dc)
    elif high_hit[1]:
        dc = -abs(dc)
    return (dr, dc)


def _reflect(value, bound):
    # fold into [0, bound] by mirroring at the violated edge
    if bound <= 0:
        return 0.0
    while value < 0.0 or value > bound:
        if value < 0.0:
            value = -value
        else:
            value = 2.0 * bound - value
    return value


def would_bounce(state, bounds):
    """True when advancing by the current velocity exits the canvas."""
    nr = state.position[0] + state.velocity[0]
    nc = state.position[1] + state.velocity[1]
    return not (0.0 <= nr <= bounds[0] and 0.0 <= nc <= bounds[1])


def step_digit(state, bounds, rng, speed_min=1.0, speed_max=2.0):
    """Advance one frame; reflect and resample velocity at walls.

    bounds: (max_row, max_col) for the glyph's top-left corner, i.e.
    canvas minus glyph extent. Must be nonnegative.
    """
    if bounds[0] < 0 or bounds[1] < 0:
        raise ValueError(f"glyph larger than canvas: bounds {bounds}")
    nr = state.position[0] + state.velocity[0]
    nc = state.position[1] + state.velocity[1]
    low_hit = (nr < 0.0, nc < 0.0)
    high_hit = (nr > bounds[0], nc > bounds[1])
    if not any(low_hit) and not any(high_hit):
        return DigitState(state.glyph_index, (nr, nc), state.velocity)
    position = (_reflect(nr, bounds[0]), _reflect(nc, bounds[1]))
    velocity = _bounce_velocity(rng, speed_min, speed_max, low_hit, high_hit)
    return DigitState(state.glyph_index, position, velocity)


def _rasterize(frame, glyph, position):
    r = int(round(position[0]))
    c = int(round(position[1]))
    gh, gw = glyph.shape
    region = frame[0, r : r + gh, c : c + gw]
    np.maximum(region, glyph, out=region)


def generate_moving_mnist(config, digits, seed):
    """Render a seeded bouncing-digit Video from an ImageSet of glyphs."""
    config.validate()
    gh, gw = digits.height, digits.width
    bounds = (config.canvas_size - gh, config.canvas_size - gw)
    if bounds[0] < 0 or bounds[1] < 0:
        raise ValueError(
            f"glyph {gh}x{gw} does not fit canvas {config.canvas_size}"
        )
    rng = np.random.default_rng(seed)
    states = []
    for _ in range(config.num_digits):
        glyph_index = int(rng.integers(0, digits.count))
        position = (rng.uniform(0.0, bounds[0]), rng.uniform(0.0, bounds[1]))
        velocity = _random_velocity(rng, config.speed_min, config.speed_max)
        states.append(DigitState(glyph_index, position, velocity))

    T, D = config.num_frames, config.num_digits
    frames = np.zeros((T, config.channels, config.canvas_size, config.canvas_size),
                      dtype=np.float32)
    positions = np.zeros((T, D, 2), dtype=np.float64)
    bounces = np.zeros((max(T - 1, 0), D), dtype=bool)

    for t in range(T):
        for d, st in enumerate(states):
            _rasterize(frames[t], digits.pixels[st.glyph_index], st.position)
            positions[t, d] = st.position
        if t == T - 1:
            break
        for d in range(D):
            bounces[t, d] = would_bounce(states[d], bounds)
            states[d] = step_digit(states[d], bounds, rng,
                                   config.speed_min, config.speed_max)

    return Video(frames, int(seed), config.fingerprint(), positions, bounces)
