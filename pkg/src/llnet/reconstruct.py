"""Whole-image enhancement by overlapping patch inference.

An image is tiled into overlapping square patches on a stride grid (with
final origins flush against the bottom/right borders so every pixel is
covered), each patch runs through the model, and the outputs are averaged
per pixel. Accumulation happens in a canonical origin order, so the result
does not depend on the order patches are supplied or processed in.
"""

from __future__ import annotations

import math

import numpy as np

from .images import validate_image


def _normalize_stride(stride) -> tuple:
    if isinstance(stride, (int, np.integer)):
        stride = (int(stride), int(stride))
    sr, sc = int(stride[0]), int(stride[1])
    if sr < 1 or sc < 1:
        raise ValueError(f"stride must be positive, got {stride}")
    return sr, sc


def _axis_origins(dim: int, patch_side: int, step: int) -> list:
    last = dim - patch_side
    origins = list(range(0, last + 1, step))
    if origins[-1] != last:
        origins.append(last)  # flush with the border, no padding
    return origins


def tile(img, patch_side: int = 17, stride=(3, 3)) -> tuple:
    """Flattened patches and their origins.

    Returns (patches, origins): patches is (n, patch_side^2) with rows in
    row-major window order, origins is (n, 2) int rows (row, col) of each
    patch's top-left corner, ordered row-major over the origin grid.
    """
    a = validate_image(img)
    sr, sc = _normalize_stride(stride)
    if sr > patch_side or sc > patch_side:
        # a stride beyond the patch side would leave uncovered pixels
        raise ValueError(
            f"stride {stride} exceeds patch side {patch_side}")
    if a.shape[0] < patch_side or a.shape[1] < patch_side:
        raise ValueError(
            f"image shape {a.shape} is smaller than the patch side {patch_side}")
    rows = _axis_origins(a.shape[0], patch_side, sr)
    cols = _axis_origins(a.shape[1], patch_side, sc)
    n = len(rows) * len(cols)
    patches = np.empty((n, patch_side * patch_side))
    origins = np.empty((n, 2), dtype=int)
    k = 0
    for r in rows:
        for c in cols:
            patches[k] = a[r:r + patch_side, c:c + patch_side].ravel()
            origins[k] = (r, c)
            k += 1
    return patches, origins


def reassemble(patches, origins, shape, patch_side: int | None = None) -> np.ndarray:
    """Per-pixel mean of all patches covering each pixel.

    shape is (height, width). Every pixel must be covered by at least one
    patch. Patches are first sorted by origin, which fixes the accumulation
    order regardless of input order.
    """
    patches = np.asarray(patches, dtype=np.float64)
    origins = np.asarray(origins, dtype=int)
    if patches.ndim != 2 or origins.shape != (patches.shape[0], 2):
        raise ValueError("need (n, d) patches with matching (n, 2) origins")
    if patch_side is None:
        patch_side = math.isqrt(patches.shape[1])
    if patch_side * patch_side != patches.shape[1]:
        raise ValueError(f"patch length {patches.shape[1]} is not a square")
    height, width = int(shape[0]), int(shape[1])
    if len(patches) == 0:
        raise ValueError("no patches to reassemble")
    if (origins.min() < 0 or origins[:, 0].max() > height - patch_side
            or origins[:, 1].max() > width - patch_side):
        raise ValueError("patch origins fall outside the target image")

    order = np.lexsort((origins[:, 1], origins[:, 0]))
    patches = patches[order].reshape(-1, patch_side, patch_side)
    origins = origins[order]

    acc = np.zeros((height, width))
    cnt = np.zeros((height, width))
    rows = origins[:, 0]
    cols = origins[:, 1]
    ones = np.ones(len(patches))
    for dr in range(patch_side):
        for dc in range(patch_side):
            np.add.at(acc, (rows + dr, cols + dc), patches[:, dr, dc])
            np.add.at(cnt, (rows + dr, cols + dc), ones)
    if cnt.min() == 0.0:
        holes = np.argwhere(cnt == 0.0)
        raise ValueError(
            f"{len(holes)} pixels uncovered, first at {tuple(holes[0])}")
    return acc / cnt


def enhance_image(model, img, stride=(3, 3), batch_size: int = 4096) -> np.ndarray:
    """Tile, run every patch through the model, and reassemble."""
    a = validate_image(img)
    side = model.patch_side
    patches, origins = tile(a, side, stride)
    out = np.empty_like(patches)
    for start in range(0, len(patches), batch_size):
        out[start:start + batch_size] = model.infer(patches[start:start + batch_size])
    return reassemble(out, origins, a.shape, side)


def relative_patch_size(patch_w: float, patch_h: float, image_w: float,
                        image_h: float) -> float:
    """Patch diagonal divided by image diagonal (dimensionless)."""
    for name, v in (("patch_w", patch_w), ("patch_h", patch_h),
                    ("image_w", image_w), ("image_h", image_h)):
        if v <= 0:
            raise ValueError(f"{name} must be positive, got {v}")
    return math.hypot(patch_w, patch_h) / math.hypot(image_w, image_h)
