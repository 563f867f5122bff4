"""Procedural grayscale scenes for demos and tests.

The generator composes smooth illumination gradients, overlapping geometric
shapes with soft edges, and mild band-limited texture, then rescales to a
well-lit range with the maximum near 1. The scenes carry edge and contrast
structure at several scales, which is what the patch enhancer needs to
learn from; they stand in for a photographic corpus in environments that
ship no image data.
"""

from __future__ import annotations

import numpy as np

from .rng import make_rng


def _box_blur(a: np.ndarray, k: int) -> np.ndarray:
    if k <= 1:
        return a
    pad = k // 2
    kernel = np.ones(k) / k

    def along(v):
        return np.convolve(np.pad(v, pad, mode="edge"), kernel, mode="valid")

    out = np.apply_along_axis(along, 0, a)
    return np.apply_along_axis(along, 1, out)


def synthetic_image(seed, height: int = 128, width: int = 128) -> np.ndarray:
    """One deterministic scene in [0, 1] with max intensity near 1."""
    rng = make_rng(seed)
    ys, xs = np.mgrid[0:height, 0:width]
    ys = ys / max(height - 1, 1)
    xs = xs / max(width - 1, 1)

    img = np.full((height, width), 0.45)
    for _ in range(2 + int(rng.random() * 2)):
        fy = 0.3 + 1.4 * rng.random()
        fx = 0.3 + 1.4 * rng.random()
        phase = 2 * np.pi * rng.random()
        img += 0.12 * np.cos(2 * np.pi * (fy * ys + fx * xs) + phase)

    n_shapes = 6 + int(rng.random() * 8)
    for _ in range(n_shapes):
        cy = rng.random()
        cx = rng.random()
        ry = 0.04 + 0.25 * rng.random()
        rx = 0.04 + 0.25 * rng.random()
        delta = (0.15 + 0.4 * rng.random()) * (1 if rng.random() < 0.5 else -1)
        if rng.random() < 0.5:
            mask = (((ys - cy) / ry) ** 2 + ((xs - cx) / rx) ** 2) <= 1.0
        else:
            mask = (np.abs(ys - cy) <= ry) & (np.abs(xs - cx) <= rx)
        img = img + delta * mask

    img = _box_blur(img, 3)
    texture = _box_blur(rng.random((height, width)) - 0.5, 3)
    img = img + 0.35 * texture

    lo = 0.08 * rng.random()
    hi = 0.9 + 0.1 * rng.random()
    span = img.max() - img.min()
    if span <= 0:
        return np.full((height, width), hi)
    return lo + (img - img.min()) / span * (hi - lo)


def synthetic_corpus(seed, count: int, height: int = 128,
                     width: int = 128) -> list:
    """count scenes with per-image sub-seeds derived from seed."""
    return [synthetic_image((seed, i), height, width) for i in range(count)]
