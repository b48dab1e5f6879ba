"""Differentiable warping and two-stream fusion.

Flow convention used throughout: a flow field stores per-pixel displacements
(d_row, d_col) pointing from the target frame back to the source frame, in
raw pixel units. The warped output at target position p samples the source
image at p + flow(p), i.e. inverse warping with bilinear interpolation.
"""

import torch


def _as_batched(x):
    # accept (C, H, W) or (B, C, H, W); return 4-d plus a flag to undo
    if x.dim() == 3:
        return x.unsqueeze(0), True
    if x.dim() == 4:
        return x, False
    raise ValueError(f"expected 3-d or 4-d tensor, got shape {tuple(x.shape)}")


def bilinear_sample(image, coords):
    """Sample `image` at continuous positions with bilinear interpolation.

    image:  (B, C, H, W) or (C, H, W)
    coords: (B, 2, Ho, Wo) or (2, Ho, Wo); channel 0 holds row coordinates,
            channel 1 column coordinates, in pixel units where (0, 0) is the
            center of the top-left pixel.

    Coordinates outside the image are clamped to the border (edge pixels
    repeat). Differentiable with respect to both the image and the
    coordinates.
    """
    image, unbatch = _as_batched(image)
    coords, _ = _as_batched(coords)
    if coords.shape[1] != 2:
        raise ValueError(f"coords must have 2 channels, got {coords.shape[1]}")
    if coords.shape[0] != image.shape[0]:
        raise ValueError(
            f"batch mismatch: image {image.shape[0]} vs coords {coords.shape[0]}"
        )
    b, c, h, w = image.shape
    ho, wo = coords.shape[2], coords.shape[3]

    rows = coords[:, 0].clamp(0, h - 1)
    cols = coords[:, 1].clamp(0, w - 1)
    r0 = rows.floor()
    c0 = cols.floor()
    # fractional weights keep the gradient wrt coords; floor contributes zero
    wr = (rows - r0).unsqueeze(1)
    wc = (cols - c0).unsqueeze(1)
    r1 = (r0 + 1).clamp(max=h - 1)
    c1 = (c0 + 1).clamp(max=w - 1)

    flat = image.reshape(b, c, h * w)

    def corner(r, col):
        # NaN coordinates must surface as NaN output, not as a bad gather
        # index; the NaN fractional weights above already poison the blend
        idx = torch.nan_to_num(r * w + col, nan=0.0)
        idx = idx.long().reshape(b, 1, ho * wo).expand(-1, c, -1)
        return flat.gather(2, idx).reshape(b, c, ho, wo)

    v00 = corner(r0, c0)
    v01 = corner(r0, c1)
    v10 = corner(r1, c0)
    v11 = corner(r1, c1)

    out = (
        v00 * (1 - wr) * (1 - wc)
        + v01 * (1 - wr) * wc
        + v10 * wr * (1 - wc)
        + v11 * wr * wc
    )
    return out.squeeze(0) if unbatch else out


def identity_grid(h, w, dtype=torch.float32, device=None):
    """Pixel-center coordinate grid of shape (2, H, W), rows then cols."""
    r = torch.arange(h, dtype=dtype, device=device)
    c = torch.arange(w, dtype=dtype, device=device)
    gr, gc = torch.meshgrid(r, c, indexing="ij")
    return torch.stack([gr, gc], dim=0)


def inverse_warp(source, flow):
    """Warp `source` so that output(p) = source(p + flow(p)).

    source: (B, C, H, W) or (C, H, W)
    flow:   (B, 2, H, W) or (2, H, W), displacements in pixels
            (channel 0 = d_row, channel 1 = d_col)
    """
    src, unbatch = _as_batched(source)
    flw, _ = _as_batched(flow)
    if flw.shape[1] != 2:
        raise ValueError(f"flow must have 2 channels, got {flw.shape[1]}")
    if flw.shape[-2:] != src.shape[-2:] or flw.shape[0] != src.shape[0]:
        raise ValueError(
            f"flow shape {tuple(flw.shape)} does not match source {tuple(src.shape)}"
        )
    h, w = src.shape[-2:]
    grid = identity_grid(h, w, dtype=flw.dtype, device=flw.device)
    out = bilinear_sample(src, grid.unsqueeze(0) + flw)
    return out.squeeze(0) if unbatch else out


def combine(appearance, warped, mask):
    """Blend the two prediction streams with a per-pixel mask.

    out = mask * appearance + (1 - mask) * warped

    mask has a single channel broadcast across image channels; values must
    lie in [0, 1]. White (1) selects the appearance stream, black (0) the
    warped stream.
    """
    if appearance.shape != warped.shape:
        raise ValueError(
            f"stream shapes differ: {tuple(appearance.shape)} vs {tuple(warped.shape)}"
        )
    if mask.shape[-2:] != appearance.shape[-2:]:
        raise ValueError(
            f"mask spatial size {tuple(mask.shape[-2:])} does not match "
            f"images {tuple(appearance.shape[-2:])}"
        )
    if mask.dim() not in (appearance.dim(), appearance.dim() - 1):
        raise ValueError(f"mask rank {mask.dim()} incompatible with images")
    lo = float(mask.detach().min()) if mask.numel() else 0.0
    hi = float(mask.detach().max()) if mask.numel() else 0.0
    if lo < 0.0 or hi > 1.0:
        raise ValueError(f"mask values must lie in [0, 1], got [{lo}, {hi}]")
    if mask.dim() == appearance.dim() - 1:
        mask = mask.unsqueeze(-3)
    return mask * appearance + (1 - mask) * warped
