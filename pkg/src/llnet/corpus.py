"""Synthetic corruption pipeline and training-pair generation.

Training data is manufactured from well-lit grayscale images: random square
patches are darkened with a max-preserving power law (gamma drawn uniformly
from [2, 5]) and then perturbed with additive Gaussian noise whose standard
deviation is sqrt(B) * 25/255 with B uniform on [0, 1]. Corruption order is
always gamma first, noise second.

Determinism: every patch of image i is produced from the portable stream
seeded with (seed, TAG_IMAGE, i), so generation is reproducible and could be
parallelized per image without changing the output. Per patch the stream is
consumed in a fixed order: row, column, gamma (when the mode darkens), B
(when the mode adds noise), then the Box-Muller block for the noise. The
final shuffle uses its own (seed, TAG_SHUFFLE) stream.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .fileutil import atomic_write_bytes
from .rng import child_key, gaussians, make_rng, permutation, randint_below

PATCH_SIDE = 17
GAMMA_RANGE = (2.0, 5.0)
SIGMA_BASE = 25.0 / 255.0

MODES = ("dark_and_noise", "dark_only", "noise_only", "none")

TAG_IMAGE = 31
TAG_SHUFFLE = 32

DATASET_MAGIC = b"LLDS"
DATASET_VERSION = 1


class DatasetFormatError(Exception):
    """Dataset cache file cannot be parsed; offset marks the failing byte."""

    def __init__(self, message, offset=None):
        super().__init__(message)
        self.offset = offset


@dataclass
class CorruptionSpec:
    gamma_range: tuple = GAMMA_RANGE
    sigma_base: float = SIGMA_BASE
    mode: str = "dark_and_noise"

    def __post_init__(self):
        lo, hi = self.gamma_range
        if lo > hi:
            raise ValueError(f"gamma_range low {lo} exceeds high {hi}")
        if self.sigma_base < 0:
            raise ValueError("sigma_base must be nonnegative")
        if self.mode not in MODES:
            raise ValueError(f"unknown corruption mode {self.mode!r}")

    @property
    def darkens(self) -> bool:
        return self.mode in ("dark_and_noise", "dark_only")

    @property
    def noises(self) -> bool:
        return self.mode in ("dark_and_noise", "noise_only")


@dataclass
class TrainingPair:
    """One (corrupted, clean) example plus its corruption record."""

    corrupted: np.ndarray
    clean: np.ndarray
    gamma_used: float
    noise_sigma_used: float
    source: tuple | None = None  # (image_id, row, col)


@dataclass
class PatchDataset:
    """Column-wise storage of training pairs."""

    clean: np.ndarray       # (n, patch_side^2)
    corrupted: np.ndarray   # (n, patch_side^2)
    gamma: np.ndarray       # (n,)
    sigma: np.ndarray       # (n,)
    patch_side: int = PATCH_SIDE
    sources: list | None = None

    def __len__(self):
        return self.clean.shape[0]

    def __getitem__(self, i) -> TrainingPair:
        return TrainingPair(self.corrupted[i], self.clean[i],
                            float(self.gamma[i]), float(self.sigma[i]),
                            None if self.sources is None else self.sources[i])

    def subset(self, index) -> "PatchDataset":
        src = None
        if self.sources is not None:
            src = [self.sources[i] for i in np.atleast_1d(np.arange(len(self))[index])]
        return PatchDataset(self.clean[index], self.corrupted[index],
                            self.gamma[index], self.sigma[index],
                            self.patch_side, src)

    def pairs(self) -> tuple:
        """(corrupted, clean) arrays in the layout the trainers expect."""
        return self.corrupted, self.clean

    def fingerprint(self) -> str:
        return hashlib.sha256(_dataset_bytes(self)).hexdigest()


def gamma_darken(img, gamma: float) -> np.ndarray:
    """Max-preserving power law: out = m^(1-gamma) * in^gamma, m = max pixel.

    gamma = 1 is the identity, gamma > 1 darkens every pixel, gamma < 1
    brightens. An all-zero image is returned unchanged.
    """
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    a = np.asarray(img, dtype=np.float64)
    m = float(a.max())
    if m <= 0.0:
        return a.copy()
    out = m ** (1.0 - gamma) * np.power(a, gamma)
    if gamma >= 1.0:
        # round-off guard: darkening must never push a pixel above its input
        out = np.minimum(out, a)
    return np.clip(out, 0.0, 1.0)


def _apply_noise(img, sigma: float, rng) -> np.ndarray:
    a = np.asarray(img, dtype=np.float64)
    if sigma == 0.0:
        return a.copy()
    noise = gaussians(rng, a.size).reshape(a.shape)
    return np.clip(a + sigma * noise, 0.0, 1.0)


def add_gaussian_noise(img, sigma: float, seed) -> np.ndarray:
    """Additive iid Gaussian noise, clamped to [0, 1], seed-deterministic."""
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    return _apply_noise(img, sigma, make_rng(seed))


def sample_corruption(spec: CorruptionSpec, rng) -> tuple:
    """(gamma, sigma) drawn per the corruption mode.

    gamma is uniform on gamma_range (1.0 when the mode does not darken);
    sigma is sqrt(B) * sigma_base with B uniform on [0, 1] (0.0 when the
    mode does not add noise).
    """
    if spec.darkens:
        lo, hi = spec.gamma_range
        gamma = lo + (hi - lo) * rng.random()
    else:
        gamma = 1.0
    sigma = math.sqrt(rng.random()) * spec.sigma_base if spec.noises else 0.0
    return gamma, sigma


def make_dataset(images, patches_per_image: int, spec: CorruptionSpec, seed,
                 patch_side: int = PATCH_SIDE) -> PatchDataset:
    """Sample, corrupt, and shuffle patches from every image.

    Patch origins are uniform over all valid top-left coordinates, with
    replacement; each patch gets its own (gamma, sigma). The returned
    dataset is globally shuffled.
    """
    if patches_per_image < 1:
        raise ValueError("patches_per_image must be >= 1")
    dim = patch_side * patch_side
    total = len(images) * patches_per_image
    clean = np.empty((total, dim))
    corrupted = np.empty((total, dim))
    gamma_used = np.empty(total)
    sigma_used = np.empty(total)
    sources = []
    k = 0
    for i, img in enumerate(images):
        a = np.asarray(img, dtype=np.float64)
        if a.ndim != 2:
            raise ValueError(f"image {i} is not 2-D")
        if a.shape[0] < patch_side or a.shape[1] < patch_side:
            raise ValueError(
                f"image {i} with shape {a.shape} is smaller than the "
                f"{patch_side}x{patch_side} patch")
        rng = make_rng(child_key(seed, TAG_IMAGE, i))
        max_r = a.shape[0] - patch_side
        max_c = a.shape[1] - patch_side
        for _ in range(patches_per_image):
            r = randint_below(rng, max_r + 1)
            c = randint_below(rng, max_c + 1)
            window = a[r:r + patch_side, c:c + patch_side]
            gamma, sigma = sample_corruption(spec, rng)
            dark = gamma_darken(window, gamma)
            noisy = _apply_noise(dark, sigma, rng) if spec.noises else dark
            clean[k] = window.ravel()
            corrupted[k] = noisy.ravel()
            gamma_used[k] = gamma
            sigma_used[k] = sigma
            sources.append((i, r, c))
            k += 1
    order = permutation(make_rng(child_key(seed, TAG_SHUFFLE)), total)
    return PatchDataset(clean[order], corrupted[order], gamma_used[order],
                        sigma_used[order], patch_side,
                        [sources[j] for j in order])


def split_dataset(ds: PatchDataset) -> tuple:
    """50/50 split in stored order: first half train, second half validation."""
    half = len(ds) // 2
    return ds.subset(slice(0, half)), ds.subset(slice(half, len(ds)))


def generate_dataset(images, patches_per_image: int, spec: CorruptionSpec,
                     seed) -> tuple:
    """make_dataset followed by the 50/50 split."""
    return split_dataset(make_dataset(images, patches_per_image, spec, seed))


def _dataset_bytes(ds: PatchDataset) -> bytes:
    n = len(ds)
    header = DATASET_MAGIC + struct.pack("<IQI", DATASET_VERSION, n,
                                         ds.patch_side)
    body = np.empty((n, 2 * ds.patch_side ** 2 + 2))
    dim = ds.patch_side ** 2
    body[:, :dim] = ds.clean
    body[:, dim:2 * dim] = ds.corrupted
    body[:, 2 * dim] = ds.gamma
    body[:, 2 * dim + 1] = ds.sigma
    return header + np.ascontiguousarray(body, dtype="<f8").tobytes()


def save_dataset(ds: PatchDataset, path):
    """Write the dataset cache file atomically.

    Per-pair payload is little-endian float64: clean patch, corrupted patch,
    gamma, sigma. Source coordinates are not stored.
    """
    atomic_write_bytes(path, _dataset_bytes(ds))


def load_dataset(path) -> PatchDataset:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 20:
        raise DatasetFormatError(
            f"truncated dataset header: {len(data)} bytes", offset=len(data))
    if data[:4] != DATASET_MAGIC:
        raise DatasetFormatError(f"bad magic {data[:4]!r}", offset=0)
    version, n, patch_side = struct.unpack("<IQI", data[4:20])
    if version != DATASET_VERSION:
        raise DatasetFormatError(f"unsupported dataset version {version}",
                                 offset=4)
    if patch_side < 1 or patch_side > 4096:
        raise DatasetFormatError(f"implausible patch_side {patch_side}",
                                 offset=16)
    dim = patch_side * patch_side
    row = 2 * dim + 2
    need = n * row * 8
    if len(data) - 20 != need:
        raise DatasetFormatError(
            f"payload size mismatch: header says {need} bytes of pairs, file "
            f"has {len(data) - 20}", offset=20)
    body = np.frombuffer(data, dtype="<f8", offset=20).reshape(n, row)
    return PatchDataset(body[:, :dim].astype(np.float64),
                        body[:, dim:2 * dim].astype(np.float64),
                        body[:, 2 * dim].astype(np.float64),
                        body[:, 2 * dim + 1].astype(np.float64),
                        int(patch_side), None)
