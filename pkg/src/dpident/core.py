"""Shared problem descriptions and derived tester constants.

Both testers consume a frozen parameter bundle derived purely from
(n, d, alpha, epsilon) plus two explicit configuration knobs:

* ``polylog_factor`` -- the poly-logarithmic slack the theory leaves
  unspecified (entry scaling for the matrix tester, typical-set slack for
  the extension tester); defaults to ``ceil(log2 n)**2``.
* ``cap_c`` -- the constant in the calibration predicate; default 100.

Derivations never raise just because a configuration is out of the theory's
regime: they surface a ``calibrated`` flag instead, so experiments can probe
the boundary honestly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum, IntEnum

import numpy as np


class Family(str, Enum):
    """Distribution family a test problem refers to."""

    GAUSSIAN_KNOWN_COV = "gaussian"
    GAUSSIAN_UNKNOWN_COV = "gaussian-unknown"
    BOOLEAN_PRODUCT = "product"


class Verdict(IntEnum):
    """Outcome of a single test: accept (0) or reject (1) the null."""

    ACCEPT_NULL = 0
    REJECT_NULL = 1


def _check_range(name: str, value: float, low: float, high: float) -> None:
    if not (low < value <= high) or not math.isfinite(value):
        raise ValueError(f"{name} must lie in ({low}, {high}], got {value!r}")


@dataclass(frozen=True, eq=False)
class TestProblem:
    """One identity-testing instance.

    The null hypothesis is "the data's mean is ``null_mean``" (with the given
    covariance when the family knows it); the alternative is "the mean is at
    least ``alpha`` away" -- in Mahalanobis distance for known-covariance
    Gaussians, Euclidean distance otherwise.  ``tolerant`` relaxes the null
    to a ball of radius ``alpha/2``.
    """

    family: Family
    null_mean: np.ndarray
    alpha: float
    epsilon: float
    covariance: np.ndarray | None = None
    tolerant: bool = False

    def __post_init__(self) -> None:
        mean = np.atleast_1d(np.asarray(self.null_mean, dtype=float))
        if mean.ndim != 1 or mean.size < 1 or not np.all(np.isfinite(mean)):
            raise ValueError("null_mean must be a finite 1-D vector")
        object.__setattr__(self, "null_mean", mean)
        _check_range("alpha", self.alpha, 0.0, 0.5)
        _check_range("epsilon", self.epsilon, 0.0, 0.5)
        family = Family(self.family)
        object.__setattr__(self, "family", family)
        if family is Family.BOOLEAN_PRODUCT:
            if np.any(np.abs(mean) > 0.5):
                raise ValueError(
                    "product-family null mean must lie in [-1/2, 1/2]^d"
                )
            if self.covariance is not None:
                raise ValueError("product family takes no covariance")
        if self.covariance is not None:
            if family is not Family.GAUSSIAN_KNOWN_COV:
                raise ValueError(
                    "covariance may only be supplied for the known-covariance "
                    "Gaussian family"
                )
            cov = np.asarray(self.covariance, dtype=float)
            if cov.shape != (mean.size, mean.size):
                raise ValueError("covariance shape must be (d, d)")
            if not np.allclose(cov, cov.T, atol=1e-10):
                raise ValueError("covariance must be symmetric")
            if np.linalg.eigvalsh(cov).min() <= 0:
                raise ValueError("covariance must be positive definite")
            object.__setattr__(self, "covariance", cov)

    @property
    def d(self) -> int:
        return int(self.null_mean.size)


@dataclass(frozen=True)
class EfficientParams:
    """Derived constants for the matrix-mechanism tester.

    Attributes:
        num_levels: number of overflow levels, ``floor(log2 n)``.
        sum_bound: typical bound on scaled row/column sums,
            ``sqrt(n) + alpha*n/sqrt(d)``.
        level_width: width of each overflow level,
            ``sum_bound + 16*num_levels/epsilon``.
        decay: per-level divisor decay, ``8*num_levels/(epsilon*level_width)``
            (never above 1/2 by construction).
        entry_scale: Gram entries are divided by this
            (``polylog_factor * sqrt(d)``).
        threshold_rate: rejection threshold per squared sample count,
            ``alpha**2 / entry_scale``.
        calibrated: whether ``threshold_rate * n**2`` clears the
            ``cap_c * (sum_bound*log2(n)/eps + log2(n)**2/eps**2)`` bar the
            accuracy analysis needs (base-2 logs).
    """

    n: int
    d: int
    alpha: float
    epsilon: float
    num_levels: int
    sum_bound: float
    level_width: float
    decay: float
    entry_scale: float
    threshold_rate: float
    calibrated: bool
    polylog_factor: float
    cap_c: float

    @property
    def threshold(self) -> float:
        """Rejection threshold for the noisy folded total."""
        return self.threshold_rate * self.n**2

    @property
    def fold_bound(self) -> float:
        """Folding point of the saturating total: (num_levels+2)*width."""
        return (self.num_levels + 2) * self.level_width

    @property
    def noise_scale(self) -> float:
        """Laplace scale of the folded-total release."""
        k, eps = self.num_levels, self.epsilon
        return 4 * (k + 2) * self.level_width / eps + 48 * k / eps**2


def derive_efficient_params(
    n: int,
    d: int,
    alpha: float,
    epsilon: float,
    polylog_factor: float | None = None,
    cap_c: float = 100.0,
) -> EfficientParams:
    """Derive the matrix tester's constants from a problem size.

    Args:
        n: sample count, at least 4 (so there are at least two levels).
        d: dimension, at least 1.
        alpha: distance parameter in (0, 1/2].
        epsilon: privacy parameter in (0, 1/2].
        polylog_factor: multiplier on sqrt(d) for the entry scale; defaults
            to ``ceil(log2 n)**2``.
        cap_c: constant of the calibration predicate (default 100).

    Returns:
        A frozen EfficientParams bundle.  Pure: identical inputs give
        bit-identical outputs.
    """
    n = int(n)
    d = int(d)
    if n < 4:
        raise ValueError(f"need n >= 4, got {n}")
    if d < 1:
        raise ValueError(f"need d >= 1, got {d}")
    _check_range("alpha", alpha, 0.0, 0.5)
    _check_range("epsilon", epsilon, 0.0, 0.5)
    if polylog_factor is None:
        polylog_factor = float(math.ceil(math.log2(n)) ** 2)
    if polylog_factor < 1:
        raise ValueError(f"need polylog_factor >= 1, got {polylog_factor}")
    if cap_c < 1:
        raise ValueError(f"need cap_c >= 1, got {cap_c}")

    num_levels = int(math.floor(math.log2(n)))
    sum_bound = math.sqrt(n) + alpha * n / math.sqrt(d)
    level_width = sum_bound + 16.0 * num_levels / epsilon
    decay = 8.0 * num_levels / (epsilon * level_width)
    entry_scale = polylog_factor * math.sqrt(d)
    threshold_rate = alpha**2 / entry_scale
    log_n = math.log2(n)
    calibrated = threshold_rate * n**2 >= cap_c * (
        sum_bound * log_n / epsilon + log_n**2 / epsilon**2
    )
    # level_width >= 16*num_levels/epsilon makes this automatic; assert it
    # anyway so a future edit cannot silently break the privacy analysis.
    assert decay <= 0.5 + 1e-12
    return EfficientParams(
        n=n,
        d=d,
        alpha=float(alpha),
        epsilon=float(epsilon),
        num_levels=num_levels,
        sum_bound=sum_bound,
        level_width=level_width,
        decay=decay,
        entry_scale=entry_scale,
        threshold_rate=threshold_rate,
        calibrated=bool(calibrated),
        polylog_factor=float(polylog_factor),
        cap_c=float(cap_c),
    )


@dataclass(frozen=True)
class InefficientParams:
    """Derived constants for the typical-set / extension tester.

    ``set_slack`` is the log-factor slack of the typical set's clauses,
    ``drift_bound`` the worst change of the squared-row-sum statistic along
    one in-set row swap, and ``ext_lipschitz`` the Lipschitz constant (per
    differing row) of the released statistic.  Calibrated means
    ``drift_bound <= ext_lipschitz``.
    """

    n: int
    d: int
    alpha: float
    epsilon: float
    set_slack: float
    cap_c: float
    drift_bound: float
    ext_lipschitz: float
    calibrated: bool

    @property
    def stat_cap(self) -> float:
        """Upper clip of the test statistic: alpha**2 * n**2."""
        return self.alpha**2 * self.n**2

    @property
    def threshold(self) -> float:
        """Release threshold: half the statistic cap."""
        return self.stat_cap / 2.0

    @property
    def noise_scale(self) -> float:
        """Laplace scale of the release: ext_lipschitz / epsilon."""
        return self.ext_lipschitz / self.epsilon


def derive_inefficient_params(
    n: int,
    d: int,
    alpha: float,
    epsilon: float,
    polylog_factor: float | None = None,
    cap_c: float = 100.0,
) -> InefficientParams:
    """Derive the extension tester's constants.

    ``polylog_factor`` is the typical-set slack (default ``ceil(log2 n)**2``);
    ``cap_c`` the constant trading Lipschitz scale against accuracy.  The
    derivation computes

    * ``drift_bound = 6 * slack * (sqrt(n*d) + alpha*n + cap_c/epsilon)``
    * ``ext_lipschitz = (epsilon / cap_c) * alpha**2 * n**2``

    and sets ``calibrated`` iff the first is at most the second.
    """
    n = int(n)
    d = int(d)
    if n < 1 or d < 1:
        raise ValueError("need n >= 1 and d >= 1")
    _check_range("alpha", alpha, 0.0, 0.5)
    _check_range("epsilon", epsilon, 0.0, 0.5)
    if polylog_factor is None:
        polylog_factor = float(math.ceil(math.log2(max(n, 2))) ** 2)
    if polylog_factor < 1:
        raise ValueError(f"need polylog_factor >= 1, got {polylog_factor}")
    if cap_c < 1:
        raise ValueError(f"need cap_c >= 1, got {cap_c}")
    set_slack = float(polylog_factor)
    drift_bound = 6.0 * set_slack * (
        math.sqrt(n * d) + alpha * n + cap_c / epsilon
    )
    ext_lipschitz = (epsilon / cap_c) * alpha**2 * n**2
    return InefficientParams(
        n=n,
        d=d,
        alpha=float(alpha),
        epsilon=float(epsilon),
        set_slack=set_slack,
        cap_c=float(cap_c),
        drift_bound=drift_bound,
        ext_lipschitz=ext_lipschitz,
        calibrated=bool(drift_bound <= ext_lipschitz),
    )
