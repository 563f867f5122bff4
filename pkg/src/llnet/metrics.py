"""Image quality metrics: PSNR and windowed SSIM.

SSIM follows the reference conventions: an 11x11 Gaussian window with
sigma 1.5, unit-normalized weights, constants C1 = (0.01 * peak)^2 and
C2 = (0.03 * peak)^2, evaluated at valid window positions only (no
padding) and averaged.

The window correlation folds mirrored taps together (w[k] * (left + right))
and the final mean uses math.fsum, so the score is bitwise invariant under
mirroring both images and under any summation reordering.
"""

from __future__ import annotations

import math

import numpy as np

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
C1_FACTOR = 0.01
C2_FACTOR = 0.03


def _check_pair(reference, test):
    a = np.asarray(reference, dtype=np.float64)
    b = np.asarray(test, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.ndim != 2:
        raise ValueError("metrics expect 2-D grayscale images")
    return a, b


def psnr(reference, test, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; +inf for identical images."""
    a, b = _check_pair(reference, test)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    """Unit-sum 1-D Gaussian taps (symmetric by construction)."""
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def _corr1d_sym(a: np.ndarray, taps: np.ndarray, axis: int) -> np.ndarray:
    """Valid correlation along one axis with a symmetric odd-length kernel.

    Mirrored taps are folded into w[k] * (x[left] + x[right]); the
    commutative inner sum makes the output bitwise invariant under
    reflection of the input along that axis.
    """
    k = len(taps)
    half = k // 2
    v = np.moveaxis(a, axis, -1)
    n = v.shape[-1] - k + 1
    out = taps[half] * v[..., half:half + n]
    for t in range(half):
        out = out + taps[t] * (v[..., t:t + n] + v[..., k - 1 - t:k - 1 - t + n])
    return np.moveaxis(out, -1, axis)


def _window_mean(a: np.ndarray, taps: np.ndarray) -> np.ndarray:
    return _corr1d_sym(_corr1d_sym(a, taps, 0), taps, 1)


def ssim_map(reference, test, peak: float = 1.0) -> np.ndarray:
    """Local SSIM at every valid window position."""
    a, b = _check_pair(reference, test)
    if a.shape[0] < SSIM_WINDOW or a.shape[1] < SSIM_WINDOW:
        raise ValueError(
            f"images must be at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {a.shape}")
    taps = gaussian_window()
    c1 = (C1_FACTOR * peak) ** 2
    c2 = (C2_FACTOR * peak) ** 2

    mu_a = _window_mean(a, taps)
    mu_b = _window_mean(b, taps)
    e_aa = _window_mean(a * a, taps)
    e_bb = _window_mean(b * b, taps)
    e_ab = _window_mean(a * b, taps)
    var_a = e_aa - mu_a * mu_a
    var_b = e_bb - mu_b * mu_b
    cov = e_ab - mu_a * mu_b

    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return num / den


def ssim(reference, test, peak: float = 1.0) -> float:
    """Mean structural similarity; exactly 1.0 for identical images."""
    values = ssim_map(reference, test, peak)
    return math.fsum(values.ravel().tolist()) / values.size
