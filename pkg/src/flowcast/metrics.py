"""Evaluation: per-frame PSNR/SSIM, best-of-N sampling, diversity, flow color.

The best-of-N protocol draws N stochastic futures per test clip, scores each
sample by its frame-averaged metric, and reports per-frame curves of the
per-metric best samples averaged over the test set with 95% confidence
half-widths computed across clips.
"""

import math
from dataclasses import dataclass, field

import numpy as np


def psnr(a, b, max_val=1.0, cap_db=100.0):
    """10 * log10(max_val^2 / MSE); exact matches return cap_db."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return cap_db
    return 10.0 * math.log10(max_val * max_val / mse)


def _gaussian_kernel(size, sigma):
    half = (size - 1) / 2.0
    x = np.arange(size, dtype=np.float64) - half
    k = np.exp(-(x ** 2) / (2.0 * sigma ** 2))
    return k / k.sum()


def _window_means(img, kernel):
    # separable valid-mode windowed means via sliding windows
    win = len(kernel)
    rows = np.lib.stride_tricks.sliding_window_view(img, win, axis=0)
    rows = rows @ kernel
    cols = np.lib.stride_tricks.sliding_window_view(rows, win, axis=1)
    return cols @ kernel


def ssim(a, b, window=11, sigma=1.5, k1=0.01, k2=0.03, max_val=1.0):
    """Mean local structural similarity over valid window positions.

    Accepts (H, W) or (C, H, W); channels are scored independently and
    averaged.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a = a[None]
        b = b[None]
    if a.ndim != 3:
        raise ValueError(f"expected (H, W) or (C, H, W), got {a.shape}")
    h, w = a.shape[-2:]
    if h < window or w < window:
        raise ValueError(f"image {h}x{w} smaller than window {window}")

    kernel = _gaussian_kernel(window, sigma)
    c1 = (k1 * max_val) ** 2
    c2 = (k2 * max_val) ** 2
    scores = []
    for ca, cb in zip(a, b):
        mu_a = _window_means(ca, kernel)
        mu_b = _window_means(cb, kernel)
        var_a = _window_means(ca * ca, kernel) - mu_a ** 2
        var_b = _window_means(cb * cb, kernel) - mu_b ** 2
        cov = _window_means(ca * cb, kernel) - mu_a * mu_b
        num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
        den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
        scores.append(np.mean(num / den))
    return float(np.mean(scores))


METRIC_FNS = {"psnr": psnr, "ssim": ssim}


@dataclass
class MetricCurve:
    """Per-frame scores of the selected samples, aggregated over clips."""

    name: str
    per_frame_mean: np.ndarray   # (T_pred,)
    half_width: np.ndarray       # (T_pred,) 95% CI over clips
    mean: float                  # scalar: frame-averaged, clip-averaged
    best_indices: list           # chosen sample id per clip

    def to_dict(self):
        return {
            "name": self.name,
            "per_frame_mean": [float(v) for v in self.per_frame_mean],
            "half_width": [float(v) for v in self.half_width],
            "mean": float(self.mean),
            "best_indices": [int(i) for i in self.best_indices],
        }


@dataclass
class EvalReport:
    curves: dict
    n_samples: int
    seed: int
    t_cond: int
    t_pred: int
    clips: int
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        d = {
            "curves": {k: v.to_dict() for k, v in self.curves.items()},
            "n_samples": self.n_samples,
            "seed": self.seed,
            "t_cond": self.t_cond,
            "t_pred": self.t_pred,
            "clips": self.clips,
        }
        d.update(self.extra)
        return d


def sample_seed(base_seed, clip_id, sample_id):
    """Deterministic per-(clip, sample) seed; nested in sample_id."""
    ss = np.random.SeedSequence(entropy=int(base_seed),
                                spawn_key=(int(clip_id), int(sample_id)))
    return int(ss.generate_state(1)[0])


def _confidence_half_width(values, axis=0):
    values = np.asarray(values, dtype=np.float64)
    n = values.shape[axis]
    if n < 2:
        return np.zeros(values.mean(axis=axis).shape)
    return 1.96 * values.std(axis=axis, ddof=1) / math.sqrt(n)


def best_of_n_eval(model, clips, rollout_config, n_samples=100,
                   metric_names=("psnr", "ssim"), seed=0):
    """Score clips under the best-of-N protocol.

    clips: indexable collection of (T, C, H, W) arrays with
    T >= t_cond + t_pred. Each sample uses a seed derived from
    (seed, clip index, sample index), so sample sets are nested across
    growing N and the whole evaluation is deterministic.
    """
    import torch

    from .rollout import generate

    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    for name in metric_names:
        if name not in METRIC_FNS:
            raise ValueError(f"unknown metric {name!r}")

    t_cond, t_pred = rollout_config.t_cond, rollout_config.t_pred
    n_clips = len(clips)
    if n_clips == 0:
        raise ValueError("no clips to evaluate")

    # per metric: (clip, sample, frame) scores
    scores = {m: np.zeros((n_clips, n_samples, t_pred)) for m in metric_names}
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            for ci in range(n_clips):
                clip = np.asarray(clips[ci], dtype=np.float32)
                video = torch.from_numpy(clip).unsqueeze(0)
                gt = clip[t_cond : t_cond + t_pred]
                for si in range(n_samples):
                    gen = torch.Generator().manual_seed(sample_seed(seed, ci, si))
                    frames, _ = generate(model, video, rollout_config, gen)
                    pred = frames[0].numpy()
                    for m in metric_names:
                        fn = METRIC_FNS[m]
                        for t in range(t_pred):
                            scores[m][ci, si, t] = fn(pred[t], gt[t])
    finally:
        if was_training:
            model.train()

    curves = {}
    for m in metric_names:
        per_sample = scores[m].mean(axis=2)            # (clip, sample)
        best = per_sample.argmax(axis=1)               # per-clip winner
        chosen = scores[m][np.arange(n_clips), best]   # (clip, frame)
        curves[m] = MetricCurve(
            name=m,
            per_frame_mean=chosen.mean(axis=0),
            half_width=_confidence_half_width(chosen, axis=0),
            mean=float(chosen.mean()),
            best_indices=list(best),
        )
    return EvalReport(curves, n_samples, seed, t_cond, t_pred, n_clips)


def diversity_average(samples):
    """Per-pixel mean and variance across generated samples.

    samples: (S, ...) array or list of equally shaped arrays. The variance
    map is zero exactly where all samples agree.
    """
    if len(samples) == 0:
        raise ValueError("no samples to average")
    stack = np.stack([np.asarray(s, dtype=np.float64) for s in samples])
    return stack.mean(axis=0), stack.var(axis=0)


def flow_to_color(flow, max_magnitude=None):
    """False-color rendering of a flow field as (H, W, 3) in [0, 1].

    Hue encodes direction, saturation encodes magnitude relative to
    max_magnitude (the field's own maximum when None), value is 1 so zero
    flow renders white.
    """
    from matplotlib.colors import hsv_to_rgb

    flow = np.asarray(flow, dtype=np.float64)
    if flow.ndim != 3 or flow.shape[0] != 2:
        raise ValueError(f"expected (2, H, W) flow, got {flow.shape}")
    if not np.all(np.isfinite(flow)):
        raise ValueError("flow contains non-finite values")
    d_row, d_col = flow[0], flow[1]
    magnitude = np.hypot(d_row, d_col)
    if max_magnitude is None:
        max_magnitude = magnitude.max()
    if max_magnitude <= 0:
        max_magnitude = 1.0
    hue = (np.arctan2(d_row, d_col) / (2.0 * math.pi)) % 1.0
    sat = np.clip(magnitude / max_magnitude, 0.0, 1.0)
    hsv = np.stack([hue, sat, np.ones_like(hue)], axis=-1)
    return hsv_to_rgb(hsv)
