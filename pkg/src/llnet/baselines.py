"""Classical enhancement baselines: HE, CLAHE, gamma adjustment.

Histogram equalization uses a fixed convention: intensities are quantized
to bins with round(v * (bins - 1)), and level v maps to
(CDF(v) - CDF_min) / (1 - CDF_min) where CDF_min is the smallest nonzero
CDF value. A single occupied bin (constant image) maps to 0. The mapping is
clamped to [0, 1] because CLAHE applies a tile's mapping to levels that may
not occur inside that tile.

CLAHE clips each tile histogram at clip_limit * tile_area, redistributes
the excess uniformly (iterating until stable or 100 rounds), derives the
equalization mapping per tile, and blends mappings bilinearly between tile
centers; border regions extrapolate with the nearest tile's own mapping.
With a 1x1 tile grid and clipping disabled it reduces exactly to
hist_equalize.
"""

from __future__ import annotations

import numpy as np

from .corpus import gamma_darken
from .images import validate_image

CLAHE_MAX_ROUNDS = 100


def quantize_levels(img, bins: int) -> np.ndarray:
    """Map [0, 1] intensities to integer levels 0 .. bins-1."""
    a = validate_image(img)
    return np.clip(np.rint(a * (bins - 1)), 0, bins - 1).astype(np.intp)


def equalization_lut(hist, bins: int) -> np.ndarray:
    """Level -> [0, 1] mapping from a histogram, CDF_min-anchored."""
    total = float(hist.sum())
    if total <= 0:
        return np.zeros(bins)
    cdf = np.cumsum(hist, dtype=np.float64) / total
    nonzero = cdf[cdf > 0]
    cdf_min = float(nonzero[0])
    denom = 1.0 - cdf_min
    if denom <= 0.0:
        # single occupied bin: fixed convention, everything maps to 0
        return np.zeros(bins)
    return np.clip((cdf - cdf_min) / denom, 0.0, 1.0)


def hist_equalize(img, bins: int = 256) -> np.ndarray:
    """Global histogram equalization with the documented CDF remap."""
    if bins < 2:
        raise ValueError(f"bins must be >= 2, got {bins}")
    levels = quantize_levels(img, bins)
    hist = np.bincount(levels.ravel(), minlength=bins)
    return equalization_lut(hist, bins)[levels]


def clip_histogram(hist, clip: int) -> np.ndarray:
    """Clip bins at clip and spread the excess uniformly.

    Iterates because redistribution can push bins back over the limit;
    stops when no excess remains or after CLAHE_MAX_ROUNDS rounds, leaving
    every bin at most clip plus the last round's per-bin share (< bins
    counts in total).
    """
    h = np.asarray(hist, dtype=np.int64).copy()
    bins = len(h)
    for _ in range(CLAHE_MAX_ROUNDS):
        over = h > clip
        excess = int((h[over] - clip).sum())
        if excess == 0:
            break
        h[over] = clip
        share, rem = divmod(excess, bins)
        h += share
        if rem:
            h[:rem] += 1
    return h


def _axis_edges(dim: int, n_tiles: int) -> np.ndarray:
    edges = np.rint(np.arange(n_tiles + 1) * dim / n_tiles).astype(int)
    if np.any(np.diff(edges) < 1):
        raise ValueError(
            f"invalid tile grid: {n_tiles} tiles do not fit a dimension of {dim}")
    return edges


def _interp_coords(centers, dim):
    pos = np.arange(dim, dtype=np.float64)
    lo = np.clip(np.searchsorted(centers, pos, side="right") - 1, 0,
                 len(centers) - 1)
    hi = np.minimum(lo + 1, len(centers) - 1)
    span = centers[hi] - centers[lo]
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(span > 0, (pos - centers[lo]) / np.where(span > 0, span, 1.0),
                     0.0)
    return lo, hi, np.clip(t, 0.0, 1.0)


def clahe(img, tiles=(8, 8), clip_limit: float = 0.01, bins: int = 256) -> np.ndarray:
    """Contrast-limited adaptive histogram equalization."""
    if bins < 2:
        raise ValueError(f"bins must be >= 2, got {bins}")
    if clip_limit <= 0 or clip_limit > 1:
        raise ValueError(f"clip_limit must lie in (0, 1], got {clip_limit}")
    a = validate_image(img)
    t_rows, t_cols = int(tiles[0]), int(tiles[1])
    if t_rows < 1 or t_cols < 1:
        raise ValueError(f"invalid tile grid {tiles}")
    h, w = a.shape
    row_edges = _axis_edges(h, t_rows)
    col_edges = _axis_edges(w, t_cols)
    levels = quantize_levels(a, bins)

    luts = np.empty((t_rows, t_cols, bins))
    for i in range(t_rows):
        for j in range(t_cols):
            block = levels[row_edges[i]:row_edges[i + 1],
                           col_edges[j]:col_edges[j + 1]]
            hist = np.bincount(block.ravel(), minlength=bins)
            clip = max(1, int(round(clip_limit * block.size)))
            luts[i, j] = equalization_lut(clip_histogram(hist, clip), bins)

    row_centers = (row_edges[:-1] + row_edges[1:] - 1) / 2.0
    col_centers = (col_edges[:-1] + col_edges[1:] - 1) / 2.0
    i0, i1, ty = _interp_coords(row_centers, h)
    j0, j1, tx = _interp_coords(col_centers, w)

    ty = ty[:, None]
    tx = tx[None, :]
    i0 = i0[:, None]
    i1 = i1[:, None]
    j0 = j0[None, :]
    j1 = j1[None, :]
    out = ((1 - ty) * (1 - tx) * luts[i0, j0, levels]
           + ty * (1 - tx) * luts[i1, j0, levels]
           + (1 - ty) * tx * luts[i0, j1, levels]
           + ty * tx * luts[i1, j1, levels])
    return np.clip(out, 0.0, 1.0)


def gamma_adjust(img, gamma: float) -> np.ndarray:
    """Max-preserving power law, shared with the corruption pipeline.

    gamma < 1 brightens, gamma > 1 darkens, gamma = 1 is the identity.
    """
    return gamma_darken(img, gamma)
