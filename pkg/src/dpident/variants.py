"""Unknown-covariance, tolerant, and Boolean-product testing variants.

All three reuse the two core mechanisms; what changes is the matrix fed in
(a difference of Gram matrices for unknown covariance), the thresholds kept
for the analysis (tolerant), or a preprocessing step (product).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .core import (
    EfficientParams,
    Family,
    InefficientParams,
    TestProblem,
    Verdict,
    derive_efficient_params,
)
from .extension_tester import ExtensionOracle, extend_statistic
from .gram import ScaledGram, as_dataset, build_gram, row_col_sums, scale_center
from .matrix_tester import mechanism_on_sums
from .reductions import product_mean_zero
from .samplers import RngSeed


@dataclass(frozen=True)
class UnknownCovStats:
    """The centered comparison matrix ``U = X X^T - W W^T`` built from the
    three-way sample split."""

    u: np.ndarray
    n: int

    @property
    def total(self) -> float:
        return float(self.u.sum())


def pair_difference_samples(
    data: np.ndarray, rng: RngSeed | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic 3N split: the first N rows pass through unchanged, the
    remaining 2N are consumed as consecutive pairs ``(y - z)/sqrt(2)``.

    Under the null both halves are mean-zero with the same covariance, so
    their Gram matrices cancel in expectation.  ``rng`` is accepted for
    interface stability but the split takes no random choices.
    """
    x = as_dataset(data)
    if x.shape[0] % 3 != 0:
        raise ValueError("unknown-covariance testing needs a multiple of 3 rows")
    n = x.shape[0] // 3
    first = x[:n]
    rest = x[n:]
    diffs = (rest[0::2] - rest[1::2]) / math.sqrt(2.0)
    return first, diffs


def build_u_matrix(x_part: np.ndarray, w_part: np.ndarray) -> UnknownCovStats:
    x = as_dataset(x_part)
    w = as_dataset(w_part)
    if x.shape != w.shape:
        raise ValueError("the two halves must have matching shapes")
    u = x @ x.T - w @ w.T
    u = (u + u.T) / 2.0
    return UnknownCovStats(u=u, n=x.shape[0])


def _clamp_u(stats: UnknownCovStats, entry_scale: float) -> ScaledGram:
    """Entrywise scale-and-clamp of U.  No diagonal centering: the trace
    already cancels between the two halves under the null."""
    v = stats.u / entry_scale
    n_clipped = int(np.count_nonzero(np.abs(v) > 1.0))
    return ScaledGram(
        matrix=np.clip(v, -1.0, 1.0), clipped=n_clipped > 0, n_clipped=n_clipped
    )


def _u_membership_ok(stats: UnknownCovStats, params: InefficientParams) -> bool:
    """Typical-set clauses adapted to U (diagonal included in the entry
    clause -- U has no fixed diagonal to subtract)."""
    u = stats.u
    n, d = params.n, params.d
    ell = params.set_slack
    if float(np.abs(u).max()) > ell * math.sqrt(d):
        return False
    if float(np.abs(u.sum(axis=1)).max()) > ell * (math.sqrt(n * d) + params.alpha * n):
        return False
    gen = RngSeed(17).generator()
    worst = np.zeros(n)
    for _ in range(4):
        order = gen.permutation(n)
        block = u[np.ix_(order, order)]
        prefix = np.cumsum(np.cumsum(block, axis=0), axis=1)
        np.maximum(worst, np.abs(np.diagonal(prefix)), out=worst)
    for k in range(1, n + 1):
        if worst[k - 1] > k * ell * (math.sqrt(k * d) + k):
            return False
    return True


def unknown_cov_test(
    data: np.ndarray,
    problem: TestProblem,
    params: EfficientParams | InefficientParams,
    rng: RngSeed,
    tester: str = "efficient",
    oracle: ExtensionOracle | None = None,
) -> Verdict:
    """Identity test against N(0, Sigma) with Sigma unknown.

    ``data`` holds 3N rows; ``params`` is derived for N (the retained
    block).  The efficient path feeds the clamped U matrix through the
    matrix mechanism; the sample-optimal path privately releases the
    clipped total of U, falling back to the oracle extension when the
    U-clauses fail.
    """
    if problem.family is not Family.GAUSSIAN_UNKNOWN_COV:
        raise ValueError("unknown_cov_test expects the gaussian-unknown family")
    x = as_dataset(data)
    if x.shape[1] != problem.d:
        raise ValueError("data dimension does not match the problem")
    if not np.allclose(problem.null_mean, 0.0):
        x = x - problem.null_mean
    first, diffs = pair_difference_samples(x)
    if first.shape[0] != params.n:
        raise ValueError("params.n must equal one third of the row count")
    stats = build_u_matrix(first, diffs)

    if tester == "efficient":
        assert isinstance(params, EfficientParams)
        scaled = _clamp_u(stats, params.entry_scale)
        rows, cols = row_col_sums(scaled.matrix)
        verdict, _ = mechanism_on_sums(rows, cols, params, rng.substream(1))
        return verdict
    if tester == "inefficient":
        assert isinstance(params, InefficientParams)
        if oracle is None:
            raise ValueError("the sample-optimal path needs an extension oracle")
        if _u_membership_ok(stats, params):
            released = max(0.0, min(stats.total, params.stat_cap))
        else:
            released = extend_statistic(oracle, np.vstack([first, diffs]))
        noise = float(rng.substream(2).generator().laplace(0.0, params.noise_scale))
        return (
            Verdict.REJECT_NULL
            if released + noise > params.threshold
            else Verdict.ACCEPT_NULL
        )
    raise ValueError(f"unknown tester {tester!r}")


@dataclass(frozen=True)
class TolerantThresholds:
    """Decision and analysis constants for the tolerant variant.

    Both testers keep their decision thresholds; what the tolerant analysis
    changes is the accept-side bookkeeping: nulls are anything within
    ``null_radius`` of the reference, and the efficient accept bound is the
    slightly inflated quarter-threshold.
    """

    decision_threshold: float
    accept_bound: float
    null_radius: float


def tolerant_thresholds(
    params: EfficientParams | InefficientParams,
) -> TolerantThresholds:
    if isinstance(params, EfficientParams):
        return TolerantThresholds(
            decision_threshold=params.threshold,
            accept_bound=1.01 * params.threshold / 4.0,
            null_radius=params.alpha / 2.0,
        )
    return TolerantThresholds(
        decision_threshold=params.threshold,
        accept_bound=params.threshold,
        null_radius=params.alpha / 2.0,
    )


def product_test(
    data: np.ndarray,
    problem: TestProblem,
    rng: RngSeed,
    params: EfficientParams | None = None,
    polylog_factor: float | None = None,
    cap_c: float = 100.0,
) -> Verdict:
    """Identity test for Boolean product distributions on {-1, 1}^d.

    Applies the mean-zeroing transform (which halves the mean gap) and runs
    the Gaussian matrix mechanism at alpha/2.  ``params`` may be passed
    pre-derived; it must already be the alpha/2 derivation.
    """
    if problem.family is not Family.BOOLEAN_PRODUCT:
        raise ValueError("product_test expects the product family")
    x = as_dataset(data)
    if x.shape[1] != problem.d:
        raise ValueError("data dimension does not match the problem")
    if params is None:
        params = derive_efficient_params(
            x.shape[0],
            problem.d,
            problem.alpha / 2.0,
            problem.epsilon,
            polylog_factor=polylog_factor,
            cap_c=cap_c,
        )
    elif params.alpha != problem.alpha / 2.0:
        raise ValueError("params must be derived at alpha/2 for the product family")
    transformed = product_mean_zero(x, problem.null_mean, rng.substream(0))
    scaled = scale_center(build_gram(transformed), problem.d, params.entry_scale)
    rows, cols = row_col_sums(scaled.matrix)
    verdict, _ = mechanism_on_sums(rows, cols, params, rng.substream(1))
    return verdict


def tolerant_problem(problem: TestProblem) -> TestProblem:
    """A copy of the problem marked tolerant (null = alpha/2 ball)."""
    return replace(problem, tolerant=True)
