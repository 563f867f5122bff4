"""Seeded, portable random streams.

Everything random in this package is derived from one documented recipe so
that datasets and training runs are reproducible bit-for-bit:

* bit generator: PCG64 seeded through ``numpy.random.SeedSequence``; a seed
  is an int or a tuple of ints (tuples namespace independent sub-streams),
* uniform doubles come from ``Generator.random()`` (the raw bit stream),
* Gaussians are produced by Box-Muller on that uniform stream, not by
  numpy's distribution methods, whose algorithms may change between numpy
  releases,
* permutations are argsort over iid uniform keys (stable sort),
* bounded ints are floor(u * n).
"""

from __future__ import annotations

import numpy as np

Seed = "int | tuple[int, ...]"


def as_key(seed) -> tuple[int, ...]:
    """Normalize a seed (int or tuple of ints) to a tuple key."""
    if isinstance(seed, (int, np.integer)):
        return (int(seed),)
    return tuple(int(s) for s in seed)


def child_key(seed, *tags: int) -> tuple[int, ...]:
    """Derive a namespaced sub-seed by appending tag ints."""
    return as_key(seed) + tuple(int(t) for t in tags)


def make_rng(seed) -> np.random.Generator:
    """Generator(PCG64) for the given seed key."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(as_key(seed))))


def uniforms(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.random(n)


def gaussians(rng: np.random.Generator, n: int) -> np.ndarray:
    """n standard normals via Box-Muller.

    Draws ceil(n/2) uniform pairs; the cosine block precedes the sine block,
    and a trailing extra value is dropped. u1 is mapped to (0, 1] so the log
    never sees zero.
    """
    if n == 0:
        return np.empty(0)
    m = (n + 1) // 2
    u1 = 1.0 - rng.random(m)
    u2 = rng.random(m)
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    return np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]


def randint_below(rng: np.random.Generator, n: int) -> int:
    """One int uniform on [0, n)."""
    return min(int(rng.random() * n), n - 1)


def permutation(rng: np.random.Generator, n: int) -> np.ndarray:
    """Random permutation of range(n): argsort of iid uniform keys."""
    return np.argsort(rng.random(n), kind="stable")
