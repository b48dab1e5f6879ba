"""PNG rendering of rollouts: sequence grids, masks, flow colorings, curves."""

from pathlib import Path

import numpy as np
from PIL import Image

from .metrics import flow_to_color

_PAD = 2  # pixels between grid cells


def to_rgb(frame):
    """(C, H, W) or (H, W) array in [0, 1] -> (H, W, 3) float."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim == 2:
        frame = frame[None]
    if frame.shape[0] == 1:
        frame = np.repeat(frame, 3, axis=0)
    if frame.shape[0] != 3:
        raise ValueError(f"cannot render {frame.shape[0]} channels")
    return np.clip(np.moveaxis(frame, 0, -1), 0.0, 1.0)


def save_png(path, image):
    """Write an (H, W, 3) or (H, W) float array in [0, 1] as 8-bit PNG."""
    arr = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    data = np.rint(arr * 255.0).astype(np.uint8)
    Image.fromarray(data).save(path)
    return Path(path)


def image_grid(rows, pad_value=0.25):
    """Stack rows of equal-size (H, W, 3) cells into one image.

    rows: list of lists of cells; None cells render as flat pad_value.
    """
    if not rows or not rows[0]:
        raise ValueError("empty grid")
    ref = next(c for row in rows for c in row if c is not None)
    h, w, _ = ref.shape
    n_cols = max(len(r) for r in rows)
    grid = np.full((len(rows) * (h + _PAD) + _PAD,
                    n_cols * (w + _PAD) + _PAD, 3), pad_value)
    for ri, row in enumerate(rows):
        for ci, cell in enumerate(row):
            if cell is None:
                continue
            if cell.shape != ref.shape:
                raise ValueError(f"cell {ri},{ci} shape {cell.shape} != {ref.shape}")
            r0 = _PAD + ri * (h + _PAD)
            c0 = _PAD + ci * (w + _PAD)
            grid[r0 : r0 + h, c0 : c0 + w] = cell
    return grid


def rollout_grid(gt_frames, output, t_cond):
    """Row-per-signal grid: ground truth, fused, appearance, warped, mask, flow.

    gt_frames: (T, C, H, W) array covering the whole rollout window. Rows
    for signals the variant does not produce are omitted. Column t aligns
    with frame index t; cells without a prediction stay blank.
    """
    T = gt_frames.shape[0]
    by_target = {t: i for i, t in enumerate(output.target_indices)}

    def cells(seq, render):
        row = [None] * T
        for t, i in by_target.items():
            if i < len(seq):
                row[t] = render(seq[i][0].detach().numpy())
        return row

    rows = [[to_rgb(f) for f in gt_frames]]
    rows.append(cells(output.combined, to_rgb))
    rows.append(cells(output.appearance, to_rgb))
    if output.motion:
        rows.append(cells(output.motion, to_rgb))
        rows.append(cells(output.masks, to_rgb))
        max_mag = max(float(np.abs(f.detach().numpy()).max()) for f in output.flows)
        rows.append(cells(output.flows,
                          lambda f: flow_to_color(f, max_mag if max_mag > 0 else None)))
    return image_grid(rows)


def metric_curve_figure(curves, path, t_cond):
    """Line plot per metric with confidence band, one subplot each."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    names = list(curves)
    fig, axes = plt.subplots(1, len(names), figsize=(5 * len(names), 3.5))
    if len(names) == 1:
        axes = [axes]
    for ax, name in zip(axes, names):
        curve = curves[name]
        x = np.arange(len(curve.per_frame_mean)) + t_cond + 1
        mean = np.asarray(curve.per_frame_mean)
        hw = np.asarray(curve.half_width)
        ax.plot(x, mean, marker="o", markersize=3)
        ax.fill_between(x, mean - hw, mean + hw, alpha=0.25)
        ax.set_xlabel("frame")
        ax.set_ylabel(name)
        ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)
