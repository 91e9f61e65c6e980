"""The computationally efficient private tester.

The tester reads only row and column sums of a clamped, rescaled Gram
matrix.  A ladder of saturating unit ramps counts how many sums overflow
successive levels of width ``level_width``; the integerized overflow score
both drives an early rejection branch and certifies that the folded total
(the row/column sums pushed through a reflecting saturation) has bounded
sensitivity, so a single Laplace draw privatizes the release.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import EfficientParams, Family, TestProblem, Verdict
from .gram import ScaledGram, build_gram, row_col_sums, scale_center
from .reductions import product_mean_zero, whiten
from .samplers import RngSeed

# Tolerance added before flooring the per-level ratios, so that sums of
# clamped terms landing exactly on an integer do not flicker across
# platforms' rounding.
FLOOR_TOLERANCE = 1e-9


def ramp(x, level: int, width: float):
    """Saturating unit ramp: ``max(min(1, |x|/width - level), 0)``.

    Even in ``x``, nondecreasing in ``|x|``, and 1/width-Lipschitz.
    Vectorizes over ``x``.
    """
    if level < 1:
        raise ValueError("level must be >= 1")
    if not width > 0:
        raise ValueError("width must be positive")
    return np.clip(np.abs(x) / width - level, 0.0, 1.0)


def level_score(v, level: int, params: EfficientParams) -> float:
    """Ramp mass of all row sums plus all column sums at one level."""
    rows, cols = row_col_sums(_matrix_of(v))
    return _level_scores_from_sums(rows, cols, params)[level - 1]


def level_scores_from_sums(
    row_sums: np.ndarray, col_sums: np.ndarray, params: EfficientParams
) -> np.ndarray:
    """All per-level ramp scores, index k-1 holding level k."""
    return _level_scores_from_sums(row_sums, col_sums, params)


def _level_scores_from_sums(row_sums, col_sums, params) -> np.ndarray:
    scaled = np.abs(np.concatenate([row_sums, col_sums])) / params.level_width
    scores = np.empty(params.num_levels)
    for k in range(1, params.num_levels + 1):
        scores[k - 1] = np.clip(scaled - k, 0.0, 1.0).sum()
    return scores


def overflow_score(v, params: EfficientParams) -> float:
    """Integerized total overflow across levels.

    Each level's ramp score is divided by ``2 + 2*n*decay**(k-1)`` and
    floored (with a 1e-9 tolerance); the overflow score is the sum of the
    floors.  Level k's divisor shrinks geometrically, so only widespread
    saturation at deep levels can make the score large.
    """
    rows, cols = row_col_sums(_matrix_of(v))
    scores = _level_scores_from_sums(rows, cols, params)
    return overflow_from_level_scores(scores, params)


def overflow_from_level_scores(
    scores: np.ndarray, params: EfficientParams
) -> float:
    """Floor-and-sum step of the overflow score, given per-level scores."""
    total = 0.0
    for k in range(1, params.num_levels + 1):
        divisor = 2.0 + 2.0 * params.n * params.decay ** (k - 1)
        total += math.floor(scores[k - 1] / divisor + FLOOR_TOLERANCE)
    return total


def fold(x, fold_bound: float):
    """Reflecting saturation: identity on [-b, b], slope -1 beyond.

    ``fold(x) = x`` for |x| <= b, ``2b - x`` above, ``-2b - x`` below.
    1-Lipschitz and odd.  Vectorizes over ``x``.
    """
    if not fold_bound > 0:
        raise ValueError("fold_bound must be positive")
    x = np.asarray(x, dtype=float)
    out = np.where(
        x > fold_bound,
        2.0 * fold_bound - x,
        np.where(x < -fold_bound, -2.0 * fold_bound - x, x),
    )
    return out if out.ndim else float(out)


def folded_total(v, params: EfficientParams) -> float:
    """Sum of the folded row sums plus the folded column sums.

    When every row/column sum is inside the fold bound this equals exactly
    twice the sum of the matrix entries.
    """
    rows, cols = row_col_sums(_matrix_of(v))
    return folded_total_from_sums(rows, cols, params)


def folded_total_from_sums(row_sums, col_sums, params) -> float:
    b = params.fold_bound
    return float(fold(row_sums, b).sum() + fold(col_sums, b).sum())


@dataclass(frozen=True)
class MatrixMechanismTrace:
    """Everything the mechanism computed on one invocation.

    ``noisy_total`` is NaN when the early-rejection branch fired (the
    Laplace draw is consumed but discarded, keeping the random-variate
    count per invocation fixed).
    """

    level_scores: tuple[float, ...]
    overflow: float
    early_reject_prob: float
    folded: float
    noisy_total: float
    threshold: float
    verdict: Verdict


def _matrix_of(v) -> np.ndarray:
    return v.matrix if isinstance(v, ScaledGram) else np.asarray(v, dtype=float)


def mechanism_on_sums(
    row_sums: np.ndarray,
    col_sums: np.ndarray,
    params: EfficientParams,
    rng: RngSeed,
) -> tuple[Verdict, MatrixMechanismTrace]:
    """Run the private decision given precomputed row/column sums.

    Stage one rejects outright with probability ``min(1, overflow *
    epsilon / num_levels)`` (one uniform draw).  Stage two adds Laplace
    noise of scale ``4*(K+2)*width/eps + 48*K/eps**2`` to the folded total
    and rejects iff the noisy value strictly exceeds ``threshold_rate*n**2``.
    """
    scores = _level_scores_from_sums(row_sums, col_sums, params)
    overflow = overflow_from_level_scores(scores, params)
    folded = folded_total_from_sums(row_sums, col_sums, params)
    p_early = min(1.0, overflow * params.epsilon / params.num_levels)

    gen = rng.generator()
    early = bool(gen.uniform() < p_early)
    noise = float(gen.laplace(0.0, params.noise_scale))
    if early:
        verdict = Verdict.REJECT_NULL
        noisy = math.nan
    else:
        noisy = folded + noise
        verdict = (
            Verdict.REJECT_NULL if noisy > params.threshold else Verdict.ACCEPT_NULL
        )
    trace = MatrixMechanismTrace(
        level_scores=tuple(float(s) for s in scores),
        overflow=overflow,
        early_reject_prob=p_early,
        folded=folded,
        noisy_total=noisy,
        threshold=params.threshold,
        verdict=verdict,
    )
    return verdict, trace


def matrix_mechanism(
    v, params: EfficientParams, rng: RngSeed
) -> tuple[Verdict, MatrixMechanismTrace]:
    """Private threshold test on a scaled Gram matrix (or raw square matrix)."""
    rows, cols = row_col_sums(_matrix_of(v))
    return mechanism_on_sums(rows, cols, params, rng)


def efficient_test(
    data: np.ndarray,
    problem: TestProblem,
    params: EfficientParams,
    rng: RngSeed,
) -> Verdict:
    """Full pipeline: reduce, build the Gram matrix, scale, decide.

    Known-covariance Gaussian data is whitened against the null mean and
    covariance; product data goes through the randomized mean-zero
    transform.  Note the product transform halves mean distances, so its
    ``params`` should be derived at ``alpha/2``.  The unknown-covariance
    family has its own pipeline in the variants module.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[1] != problem.d:
        raise ValueError("data dimension does not match the problem")
    if data.shape[0] != params.n:
        raise ValueError("data sample count does not match params.n")
    if problem.family is Family.GAUSSIAN_KNOWN_COV:
        sigma = problem.covariance
        if sigma is None:
            sigma = np.eye(problem.d)
        reduced = whiten(data, problem.null_mean, sigma)
    elif problem.family is Family.BOOLEAN_PRODUCT:
        reduced = product_mean_zero(data, problem.null_mean, rng.substream(0))
    else:
        raise ValueError(
            "unknown-covariance problems are handled by the variants module"
        )
    t = build_gram(reduced)
    v = scale_center(t, problem.d, params.entry_scale)
    verdict, _ = matrix_mechanism(v, params, rng.substream(1))
    return verdict
