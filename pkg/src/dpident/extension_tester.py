"""The sample-optimal (computationally heavy) private tester.

The statistic is the squared norm of the dataset's row sum, centered by
``n*d`` and clipped into ``[0, alpha^2 n^2]``.  Inside a "typical set" --
datasets whose Gram matrix satisfies entry, row/column, and subset
concentration clauses -- that statistic moves by at most ``ext_lipschitz``
per changed row, so adding one Laplace draw of scale
``ext_lipschitz/epsilon`` gives privacy.  Off the typical set the release
falls back to a McShane-style lower extension over a finite reference set,
which is Lipschitz by construction.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .core import InefficientParams, Verdict
from .gram import as_dataset, build_gram
from .samplers import RngSeed, sample_gaussian, unit_sphere


class ClauseKind(str, Enum):
    ENTRY_BOUND = "entry"
    ROW_COL_BOUND = "row_col"
    SUBSET_BOUND = "subset"


@dataclass(frozen=True)
class ClauseCheck:
    """Worst deviation of one clause family against its bound.

    ``margin`` is (worst deviation) - bound: positive means violated.
    ``subset_size`` is set only for subset clauses.
    """

    kind: ClauseKind
    subset_size: int | None
    margin: float


@dataclass(frozen=True)
class MembershipReport:
    in_set: bool
    violated_clauses: tuple[ClauseCheck, ...]
    checks: tuple[ClauseCheck, ...]

    def worst_margin(self) -> float:
        return max(c.margin for c in self.checks)


def _subset_bound(k: int, params: InefficientParams) -> float:
    ell = params.set_slack
    return k * ell * (math.sqrt(k * params.d) + k)


def _exhaustive_subset_margins(
    x: np.ndarray, params: InefficientParams
) -> dict[int, float]:
    """Worst |subset sum - k*d| deviation per size, over all 2^n-1 subsets."""
    n, d = x.shape
    worst: dict[int, float] = {}
    masks = np.arange(1, 2**n, dtype=np.uint32)
    for start in range(0, masks.size, 1 << 16):
        chunk = masks[start : start + (1 << 16)]
        bits = (chunk[:, None] >> np.arange(n)) & 1
        sums = bits.astype(float) @ x
        sizes = bits.sum(axis=1)
        dev = np.abs((sums**2).sum(axis=1) - sizes * d)
        for k in range(1, n + 1):
            sel = sizes == k
            if sel.any():
                value = float(dev[sel].max())
                worst[k] = max(worst.get(k, 0.0), value)
    return worst


def _sampled_subset_margins(
    x: np.ndarray, params: InefficientParams, subset_cap: int, rng: RngSeed
) -> dict[int, float]:
    """Worst deviation per size over ``subset_cap`` random permutations'
    prefixes (a uniform permutation's k-prefix is a uniform k-subset)."""
    n, d = x.shape
    gen = rng.generator()
    worst = np.zeros(n)
    for _ in range(subset_cap):
        order = gen.permutation(n)
        prefix = np.cumsum(x[order], axis=0)
        dev = np.abs((prefix**2).sum(axis=1) - np.arange(1, n + 1) * d)
        np.maximum(worst, dev, out=worst)
    return {k: float(worst[k - 1]) for k in range(1, n + 1)}


def membership_report(
    data: np.ndarray,
    params: InefficientParams,
    subset_cap: int = 8,
    rng: RngSeed | None = None,
    extra_subsets: list[np.ndarray] | None = None,
) -> MembershipReport:
    """Check the typical set's three clause families on a dataset.

    Clauses, with ``ell = set_slack``:

    * entry: ``|T_ii - d| <= ell*sqrt(d)`` and ``|T_ij| <= ell*sqrt(d)``;
    * row/col: ``|sum_j T_ij - d| <= ell*(sqrt(n*d) + alpha*n)`` (the Gram
      matrix is symmetric, so rows cover columns);
    * subsets: ``|sum_{i,j in S} T_ij - |S|*d| <= |S|*ell*(sqrt(|S|*d)+|S|)``,
      exhaustively for n <= 20, else on ``subset_cap`` random permutations'
      prefixes (one uniform subset per size each), plus any
      ``extra_subsets`` passed explicitly (index arrays).

    Returns a report whose ``violated_clauses`` lists each failed clause
    with its worst margin.
    """
    x = as_dataset(data)
    n, d = x.shape
    if x.shape[0] != params.n or d != params.d:
        raise ValueError("data shape does not match params")
    ell = params.set_slack
    t = build_gram(x)

    checks: list[ClauseCheck] = []
    diag_dev = float(np.abs(np.diagonal(t) - d).max())
    off = np.abs(t).copy()
    np.fill_diagonal(off, 0.0)
    entry_dev = max(diag_dev, float(off.max()) if n > 1 else 0.0)
    checks.append(
        ClauseCheck(ClauseKind.ENTRY_BOUND, None, entry_dev - ell * math.sqrt(d))
    )

    row_dev = float(np.abs(t.sum(axis=1) - d).max())
    row_bound = ell * (math.sqrt(n * d) + params.alpha * n)
    checks.append(ClauseCheck(ClauseKind.ROW_COL_BOUND, None, row_dev - row_bound))

    if n <= 20:
        per_size = _exhaustive_subset_margins(x, params)
    else:
        per_size = _sampled_subset_margins(
            x, params, subset_cap, rng if rng is not None else RngSeed(0)
        )
    if extra_subsets:
        for idx in extra_subsets:
            idx = np.asarray(idx, dtype=int)
            k = idx.size
            dev = abs(float((x[idx].sum(axis=0) ** 2).sum()) - k * d)
            per_size[k] = max(per_size.get(k, 0.0), dev)
    for k in sorted(per_size):
        checks.append(
            ClauseCheck(
                ClauseKind.SUBSET_BOUND, k, per_size[k] - _subset_bound(k, params)
            )
        )

    violated = tuple(c for c in checks if c.margin > 0)
    return MembershipReport(
        in_set=not violated, violated_clauses=violated, checks=tuple(checks)
    )


def clipped_statistic(data: np.ndarray, params: InefficientParams) -> float:
    """``max(0, min(||row sum||^2 - n*d, alpha^2 n^2))``."""
    x = as_dataset(data)
    total = x.sum(axis=0)
    raw = float(total @ total) - x.shape[0] * x.shape[1]
    return max(0.0, min(raw, params.stat_cap))


@dataclass(frozen=True)
class ExtensionOracle:
    """Finite reference set for the Lipschitz extension.

    Every reference dataset is a member of the typical set and carries its
    clipped-statistic value; ``ext_lipschitz`` is the per-row Lipschitz
    constant of the extension.
    """

    reference_points: tuple[tuple[np.ndarray, float], ...]
    ext_lipschitz: float

    def __post_init__(self) -> None:
        if not self.reference_points:
            raise ValueError("oracle needs at least one reference point")


def rows_differing(a: np.ndarray, b: np.ndarray) -> int:
    """Number of row positions where the two datasets disagree."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("datasets must share a shape")
    return int(np.any(a != b, axis=1).sum())


def extend_statistic(oracle: ExtensionOracle, query: np.ndarray) -> float:
    """McShane-style lower extension over the reference set.

    ``min_ref (value_ref + ext_lipschitz * rows_differing(query, ref))`` --
    Lipschitz in the row-difference metric by construction, and equal to the
    stored value whenever the query is itself a reference point (given the
    reference values are mutually Lipschitz-consistent).
    """
    q = as_dataset(query)
    return min(
        value + oracle.ext_lipschitz * rows_differing(q, ref)
        for ref, value in oracle.reference_points
    )


def save_oracle(oracle: ExtensionOracle, path) -> None:
    """Persist an oracle to a flat .npz file (rows + value per record)."""
    refs = np.stack([ref for ref, _ in oracle.reference_points])
    values = np.array([value for _, value in oracle.reference_points])
    np.savez(path, refs=refs, values=values, lipschitz=oracle.ext_lipschitz)


def load_oracle(path) -> ExtensionOracle:
    with np.load(path) as payload:
        refs = payload["refs"]
        values = payload["values"]
        lipschitz = float(payload["lipschitz"])
    points = tuple((refs[i].copy(), float(values[i])) for i in range(refs.shape[0]))
    return ExtensionOracle(reference_points=points, ext_lipschitz=lipschitz)


def build_reference_oracle(
    params: InefficientParams,
    rng: RngSeed,
    null_points: int = 4,
    alt_points: int = 4,
    subset_cap: int = 8,
    max_tries: int = 200,
) -> ExtensionOracle:
    """Populate an oracle with in-set Gaussian draws from the null and the
    alpha-shell alternative, storing their clipped-statistic values."""
    points: list[tuple[np.ndarray, float]] = []
    tries = 0
    want = [(0.0, null_points), (params.alpha, alt_points)]
    for radius, count in want:
        accepted = 0
        while accepted < count:
            tries += 1
            if tries > max_tries:
                raise RuntimeError("could not populate the oracle with in-set draws")
            sub = rng.substream(3, int(radius > 0), tries)
            mean = (
                np.zeros(params.d)
                if radius == 0
                else radius * unit_sphere(params.d, sub.substream(1))
            )
            draw = sample_gaussian(mean, None, params.n, sub.substream(2))
            report = membership_report(
                draw, params, subset_cap=subset_cap, rng=sub.substream(3)
            )
            if report.in_set:
                points.append((draw, clipped_statistic(draw, params)))
                accepted += 1
    return ExtensionOracle(
        reference_points=tuple(points), ext_lipschitz=params.ext_lipschitz
    )


def inefficient_test(
    data: np.ndarray,
    params: InefficientParams,
    oracle: ExtensionOracle,
    rng: RngSeed,
    noise_scale: float | None = None,
    subset_cap: int = 8,
) -> Verdict:
    """Private release of the clipped statistic with a Laplace draw.

    Inside the typical set the released value is the clipped statistic
    itself; outside, the extension over the oracle.  Rejects iff the noisy
    value strictly exceeds ``alpha^2 n^2 / 2``.  Passing ``noise_scale=0``
    gives the deterministic (non-private) threshold comparison for
    debugging; the default scale is ``ext_lipschitz/epsilon``.
    """
    if not params.calibrated:
        warnings.warn(
            "running the extension tester outside its calibrated regime "
            "(drift_bound > ext_lipschitz); the privacy analysis does not "
            "cover this configuration",
            RuntimeWarning,
            stacklevel=2,
        )
    report = membership_report(data, params, subset_cap=subset_cap, rng=rng.substream(0))
    if report.in_set:
        released = clipped_statistic(data, params)
    else:
        released = extend_statistic(oracle, data)
    scale = params.noise_scale if noise_scale is None else float(noise_scale)
    noise = float(rng.substream(1).generator().laplace(0.0, scale)) if scale > 0 else 0.0
    return Verdict.REJECT_NULL if released + noise > params.threshold else Verdict.ACCEPT_NULL


def interpolation_counterexample() -> dict[str, np.ndarray]:
    """The frozen 3-dimensional quadruple showing that an earlier pairwise
    typical set admits no in-set one-row interpolation between the pairs
    {a, b} and {c, d}."""
    return {
        "a": np.array([1.0, 0.0, 1.0]),
        "b": np.array([-1.0, 0.0, 1.0]),
        "c": np.array([0.0, 1.0, 1.0]),
        "d": np.array([0.0, -1.0, 1.0]),
    }


def prior_pair_set_contains(x1: np.ndarray, x2: np.ndarray, slack: float = 2.0) -> bool:
    """Membership in the earlier pairwise typical set for n = 2:
    ``||x_i||^2 <= slack`` and ``|<x_i, x1 + x2>| <= slack`` for both rows."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    total = x1 + x2
    for x in (x1, x2):
        if float(x @ x) > slack or abs(float(x @ total)) > slack:
            return False
    return True
