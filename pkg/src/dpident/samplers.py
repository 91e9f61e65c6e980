"""Seeded, reproducible random sources.

All randomness in the package flows through :class:`RngSeed`, a
(seed, stream) pair mapped onto numpy's counter-based Philox generator.
Sub-streams are derived by mixing index tuples into the stream word with a
splitmix64 hash, so every (grid cell, trial, arm) combination owns an
independent generator no matter how work is scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    """One round of the splitmix64 mixer (public-domain constants)."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK64
    return (z ^ (z >> 31)) & _MASK64


@dataclass(frozen=True)
class RngSeed:
    """A reproducible random source identified by (seed, stream)."""

    seed: int
    stream: int = 0

    def __post_init__(self) -> None:
        for name in ("seed", "stream"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)):
                raise TypeError(f"{name} must be an integer")
            object.__setattr__(self, name, int(value) & _MASK64)

    def generator(self) -> np.random.Generator:
        """A fresh generator; identical (seed, stream) replays identically."""
        return np.random.Generator(
            np.random.Philox(key=np.array([self.seed, self.stream], dtype=np.uint64))
        )

    def substream(self, *indices: int) -> "RngSeed":
        """Derive an independent child stream from an index tuple."""
        acc = self.stream
        for idx in indices:
            acc = _splitmix64(acc ^ _splitmix64(int(idx) & _MASK64))
        return RngSeed(self.seed, acc)


def sample_gaussian(
    mean: np.ndarray,
    covariance: np.ndarray | None,
    n: int,
    rng: RngSeed,
) -> np.ndarray:
    """Draw ``n`` i.i.d. Gaussian rows.

    Args:
        mean: length-d mean vector.
        covariance: None for the identity, a length-d vector for a diagonal
            covariance, or a (d, d) positive-semidefinite matrix (factored
            symmetrically via its eigendecomposition).
        n: number of rows, at least 1.
        rng: random source.

    Returns:
        An (n, d) float array.
    """
    if n < 1:
        raise ValueError("need n >= 1")
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    d = mean.size
    gen = rng.generator()
    z = gen.standard_normal((n, d))
    if covariance is None:
        return mean + z
    cov = np.asarray(covariance, dtype=float)
    if cov.ndim == 1:
        if cov.shape != (d,) or np.any(cov < 0):
            raise ValueError("diagonal covariance must be d nonnegative reals")
        return mean + z * np.sqrt(cov)
    if cov.shape != (d, d) or not np.allclose(cov, cov.T, atol=1e-10):
        raise ValueError("full covariance must be a symmetric (d, d) matrix")
    evals, evecs = np.linalg.eigh(cov)
    if evals.min() < -1e-9 * max(evals.max(), 1.0):
        raise ValueError("covariance is not positive semidefinite")
    root = evecs * np.sqrt(np.clip(evals, 0.0, None))
    return mean + z @ root.T


def sample_product(mean: np.ndarray, n: int, rng: RngSeed) -> np.ndarray:
    """Draw ``n`` rows of independent +-1 coordinates with the given means."""
    if n < 1:
        raise ValueError("need n >= 1")
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    if np.any(np.abs(mean) > 1.0):
        raise ValueError("product means must lie in [-1, 1]")
    gen = rng.generator()
    heads = gen.random((n, mean.size)) < (1.0 + mean) / 2.0
    return np.where(heads, 1.0, -1.0)


def sample_laplace(scale: float, rng: RngSeed) -> float:
    """One draw from the Laplace distribution with the given scale (> 0)."""
    if not scale > 0:
        raise ValueError("scale must be positive")
    return float(rng.generator().laplace(0.0, scale))


def sample_chi(d: int, scale: float, rng: RngSeed, size: int | None = None):
    """Draw ``scale * sqrt(sum of d squared standard normals)``.

    Returns a float when ``size`` is None, else an array of ``size``
    independent draws from the same stream.
    """
    if d < 1:
        raise ValueError("need d >= 1")
    if not scale > 0:
        raise ValueError("scale must be positive")
    gen = rng.generator()
    z = gen.standard_normal((1 if size is None else size, d))
    out = scale * np.sqrt((z * z).sum(axis=1))
    return float(out[0]) if size is None else out


def unit_sphere(d: int, rng: RngSeed) -> np.ndarray:
    """A uniform point on the unit sphere in R^d."""
    gen = rng.generator()
    while True:
        v = gen.standard_normal(d)
        norm = np.linalg.norm(v)
        if norm > 1e-12:
            return v / norm
