"""Experiment orchestration: power sweeps, concentration checks, drift audits.

Everything here is plumbing around the library modules: deterministic
seeding per trial, Wilson intervals over verdict counts, CSV/JSON
persistence, and the randomized audit suites that hammer the deterministic
drift bounds with adjacent input pairs.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np
from scipy import stats as scipy_stats

from .core import (
    EfficientParams,
    Family,
    InefficientParams,
    TestProblem,
    Verdict,
    derive_efficient_params,
    derive_inefficient_params,
)
from .couplings import (
    couple_shifted_normals,
    decomposition_coupling,
    decomposition_shift,
    tv_normal_shift,
)
from .extension_tester import (
    build_reference_oracle,
    clipped_statistic,
    inefficient_test,
    membership_report,
)
from .gram import build_gram
from .matrix_tester import (
    _level_scores_from_sums,
    efficient_test,
    folded_total_from_sums,
    overflow_from_level_scores,
)
from .samplers import RngSeed, sample_gaussian, sample_product, unit_sphere
from .variants import unknown_cov_test

MODES = ("test", "sweep", "verify-sensitivity", "coupling", "oracles")
TESTERS = ("efficient", "inefficient", "nonprivate")

_ORACLE_STREAM = 2**62
_COUPLING_STREAM = 11


def _package_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str = "sweep"
    family: Family = Family.GAUSSIAN_KNOWN_COV
    d: int = 16
    alpha: float = 0.25
    epsilon: float = 0.5
    tolerant: bool = False
    n: int | None = None
    n_grid: tuple[int, ...] = ()
    trials: int = 100
    seed: int = 0
    tester: str = "efficient"
    hypothesis: str = "null"
    out: str | None = None
    polylog_factor: float | None = None
    cap_c: float = 100.0
    workers: int = 1

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.tester not in TESTERS:
            raise ValueError(f"tester must be one of {TESTERS}")
        if self.hypothesis not in ("null", "alt"):
            raise ValueError("hypothesis must be 'null' or 'alt'")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        object.__setattr__(self, "family", Family(self.family))
        object.__setattr__(self, "n_grid", tuple(int(v) for v in self.n_grid))

    def grid(self) -> tuple[int, ...]:
        if self.n_grid:
            return self.n_grid
        if self.n is not None:
            return (int(self.n),)
        raise ValueError("config needs n or n_grid")

    def config_hash(self) -> str:
        payload = json.dumps(
            dataclasses.asdict(self), sort_keys=True, default=str
        ).encode()
        return hashlib.sha256(payload).hexdigest()[:16]


@dataclass(frozen=True)
class TrialRecord:
    config_hash: str
    seed: int
    grid_index: int
    trial_index: int
    hypothesis: int
    verdict: Verdict
    statistic: float
    wall_time: float


def wilson_interval(
    successes: int, trials: int, z: float = 1.959963984540054
) -> tuple[float, float]:
    """Wilson 95% score interval; well behaved at the 0/1 boundary."""
    if trials < 1:
        raise ValueError("trials must be positive")
    if not 0 <= successes <= trials:
        raise ValueError("successes out of range")
    p = successes / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = (z / denom) * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials**2))
    # center +- half contains p mathematically; rounding can leave it a few
    # ulps outside, so clamp rather than let callers see lo > p.
    return min(p, max(0.0, center - half)), max(p, min(1.0, center + half))


def nonprivate_test(data: np.ndarray) -> Verdict:
    """The folklore baseline, no privacy: reject when ``||row sum||^2``
    exceeds the 3/4-quantile of its exact null law.

    Under the null the row sum is N(0, n*I_d), so the statistic is
    ``n * chi^2_d`` and the threshold pins the type-I error at 1/4 for
    every (n, d).  The type-II error against mean-shift alternatives then
    falls below 1/3 once n passes ~1.7*sqrt(d)/alpha^2, which is the
    baseline rate the private testers get compared to.
    """
    x = np.asarray(data, dtype=float)
    n, d = x.shape
    total = x.sum(axis=0)
    stat = float(total @ total)
    threshold = n * float(scipy_stats.chi2.ppf(0.75, d))
    return Verdict.REJECT_NULL if stat > threshold else Verdict.ACCEPT_NULL


def _draw_mean(
    config: ExperimentConfig, hypothesis: int, rng: RngSeed
) -> np.ndarray:
    """Null means are zero (or anything inside alpha/2 when tolerant); the
    alternative is drawn uniformly on the radius-alpha sphere."""
    d = config.d
    if hypothesis == 0:
        if not config.tolerant:
            return np.zeros(d)
        radius = float(rng.generator().uniform(0.0, config.alpha / 2.0))
        return radius * unit_sphere(d, rng.substream(1))
    return config.alpha * unit_sphere(d, rng.substream(1))


def _sample_rows(
    config: ExperimentConfig, mean: np.ndarray, rows: int, rng: RngSeed
) -> np.ndarray:
    if config.family is Family.BOOLEAN_PRODUCT:
        return sample_product(mean, rows, rng)
    if config.family is Family.GAUSSIAN_UNKNOWN_COV:
        # Fixed non-identity spherical covariance, so the sweep actually
        # runs the tester against a covariance it was not told.
        return sample_gaussian(mean, np.full(config.d, 0.5), rows, rng)
    return sample_gaussian(mean, None, rows, rng)


def _core_alpha(config: ExperimentConfig) -> float:
    return (
        config.alpha / 2.0
        if config.family is Family.BOOLEAN_PRODUCT
        else config.alpha
    )


def derive_params_for(
    config: ExperimentConfig, n: int
) -> EfficientParams | InefficientParams | None:
    """Parameter derivation matching what the per-trial dispatch will run."""
    if config.tester == "nonprivate":
        return None
    if config.tester == "efficient":
        core_n = n // 3 if config.family is Family.GAUSSIAN_UNKNOWN_COV else n
        polylog = config.polylog_factor
        if config.family is Family.GAUSSIAN_UNKNOWN_COV:
            # The U statistic differences two independent Gram matrices, so
            # its null entries carry twice the variance of a single Gram's;
            # widening the entry scale by sqrt(2) restores the same clamp
            # geometry (the slack factor is a free constant).
            if polylog is None:
                polylog = float(math.ceil(math.log2(max(core_n, 2))) ** 2)
            polylog *= math.sqrt(2.0)
        return derive_efficient_params(
            core_n,
            config.d,
            _core_alpha(config),
            config.epsilon,
            polylog_factor=polylog,
            cap_c=config.cap_c,
        )
    if config.family is not Family.GAUSSIAN_KNOWN_COV:
        raise ValueError(
            "the sample-optimal tester sweep supports the known-covariance "
            "Gaussian family only"
        )
    return derive_inefficient_params(
        n,
        config.d,
        config.alpha,
        config.epsilon,
        polylog_factor=config.polylog_factor,
        cap_c=config.cap_c,
    )


def _single_trial(
    config: ExperimentConfig,
    n: int,
    grid_idx: int,
    trial_idx: int,
    hypothesis: int,
    params,
    oracle,
) -> TrialRecord:
    start = time.perf_counter()
    rng = RngSeed(config.seed).substream(grid_idx, trial_idx, hypothesis)
    mean = _draw_mean(config, hypothesis, rng.substream(0))
    rows = 3 * (n // 3) if config.family is Family.GAUSSIAN_UNKNOWN_COV else n
    data = _sample_rows(config, mean, rows, rng.substream(1))

    problem = TestProblem(
        family=config.family,
        null_mean=np.zeros(config.d),
        alpha=config.alpha,
        epsilon=config.epsilon,
        tolerant=config.tolerant,
    )
    if config.tester == "nonprivate":
        verdict = nonprivate_test(data)
    elif config.tester == "efficient":
        if config.family is Family.GAUSSIAN_UNKNOWN_COV:
            verdict = unknown_cov_test(
                data, problem, params, rng.substream(2), tester="efficient"
            )
        else:
            verdict = efficient_test(data, problem, params, rng.substream(2))
    else:
        verdict = inefficient_test(data, params, oracle, rng.substream(2))

    total = data.sum(axis=0)
    stat = float(total @ total) - data.shape[0] * config.d
    return TrialRecord(
        config_hash=config.config_hash(),
        seed=config.seed,
        grid_index=grid_idx,
        trial_index=trial_idx,
        hypothesis=hypothesis,
        verdict=verdict,
        statistic=stat,
        wall_time=time.perf_counter() - start,
    )


def run_single_test(config: ExperimentConfig) -> TrialRecord:
    """One seeded draw-and-test run (the CLI's ``test`` mode)."""
    n = config.grid()[0]
    params = derive_params_for(config, n)
    oracle = None
    if config.tester == "inefficient":
        oracle = build_reference_oracle(
            params, RngSeed(config.seed).substream(0, _ORACLE_STREAM)
        )
    hypothesis = 0 if config.hypothesis == "null" else 1
    return _single_trial(config, n, 0, 0, hypothesis, params, oracle)


def run_power_sweep(
    config: ExperimentConfig, keep_records: bool = False
) -> tuple[list[dict], list[TrialRecord]]:
    """Empirical type-I/type-II rates with Wilson intervals per grid point.

    Each (grid point, trial, hypothesis) triple owns an RNG substream, so
    results do not depend on worker count or completion order.
    """
    rows: list[dict] = []
    records: list[TrialRecord] = []
    for grid_idx, n in enumerate(config.grid()):
        params = derive_params_for(config, n)
        oracle = None
        if config.tester == "inefficient":
            oracle = build_reference_oracle(
                params, RngSeed(config.seed).substream(grid_idx, _ORACLE_STREAM)
            )

        tasks = [
            (trial, hyp) for trial in range(config.trials) for hyp in (0, 1)
        ]
        if config.workers > 1:
            with ThreadPoolExecutor(max_workers=config.workers) as pool:
                results = list(
                    pool.map(
                        lambda th: _single_trial(
                            config, n, grid_idx, th[0], th[1], params, oracle
                        ),
                        tasks,
                    )
                )
        else:
            results = [
                _single_trial(config, n, grid_idx, trial, hyp, params, oracle)
                for trial, hyp in tasks
            ]

        false_rejects = sum(
            1
            for r in results
            if r.hypothesis == 0 and r.verdict is Verdict.REJECT_NULL
        )
        false_accepts = sum(
            1
            for r in results
            if r.hypothesis == 1 and r.verdict is Verdict.ACCEPT_NULL
        )
        t1_lo, t1_hi = wilson_interval(false_rejects, config.trials)
        t2_lo, t2_hi = wilson_interval(false_accepts, config.trials)
        rows.append(
            {
                "n": n,
                "trials": config.trials,
                "type1": false_rejects / config.trials,
                "type1_lo": t1_lo,
                "type1_hi": t1_hi,
                "type2": false_accepts / config.trials,
                "type2_lo": t2_lo,
                "type2_hi": t2_hi,
            }
        )
        if keep_records:
            records.extend(results)
    return rows, records


# ---------------------------------------------------------------------------
# Gram concentration suite
# ---------------------------------------------------------------------------


def check_gram_concentration(
    data: np.ndarray,
    mean: np.ndarray,
    alpha: float,
    mult: float = 10.0,
    diag_center: float | None = None,
    subset_cap: int = 4,
    rng: RngSeed | None = None,
) -> list[str]:
    """Names of the Gram concentration clauses the dataset violates.

    Four clause families, with explicit constants standing in for the
    asymptotic ones: total sum near ``n*center + n^2 ||mean||^2``, entries
    near their centers, row sums, and random-subset sums.  ``diag_center``
    defaults to d (identity/product case); pass the covariance trace for
    scaled covariances.
    """
    x = np.asarray(data, dtype=float)
    n, d = x.shape
    center = float(d if diag_center is None else diag_center)
    mu = np.asarray(mean, dtype=float)
    mu_sq = float(mu @ mu)
    log_factor = math.sqrt(math.log(max(n, d, 3)))
    t = build_gram(x)
    failed: list[str] = []

    total_bound = mult * (n * math.sqrt(d) + alpha * n * math.sqrt(n))
    if abs(float(t.sum()) - (n * center + n * n * mu_sq)) > total_bound:
        failed.append("total-sum")

    entry_bound = mult * math.sqrt(d) * log_factor
    diag_dev = float(np.abs(np.diagonal(t) - center).max())
    off = np.abs(t).copy()
    np.fill_diagonal(off, 0.0)
    off_dev = float(off.max()) if n > 1 else 0.0
    if diag_dev > entry_bound or off_dev > entry_bound:
        failed.append("entries")

    row_bound = mult * log_factor * (math.sqrt(n * d) + alpha * n)
    if float(np.abs(t.sum(axis=1) - center).max()) > row_bound:
        failed.append("row-sums")

    gen = (rng if rng is not None else RngSeed(0)).generator()
    worst = np.zeros(n)
    for _ in range(subset_cap):
        order = gen.permutation(n)
        prefix = np.cumsum(x[order], axis=0)
        sizes = np.arange(1, n + 1)
        dev = np.abs((prefix**2).sum(axis=1) - sizes * center)
        np.maximum(worst, dev, out=worst)
    sizes = np.arange(1, n + 1)
    subset_bounds = mult * log_factor * (sizes * np.sqrt(sizes * d) + sizes**2)
    if bool((worst > subset_bounds).any()):
        failed.append("subset-sums")
    return failed


@dataclass(frozen=True)
class OracleFamilyResult:
    name: str
    datasets: int
    simultaneous_passes: int
    clause_failures: dict[str, int] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.simultaneous_passes >= math.ceil(0.95 * self.datasets)


@dataclass(frozen=True)
class TailCheckRow:
    weights: str
    t: float
    frequency: float
    bound: float

    @property
    def passed(self) -> bool:
        return self.frequency <= self.bound


@dataclass(frozen=True)
class OracleReport:
    families: tuple[OracleFamilyResult, ...]
    tails: tuple[TailCheckRow, ...]

    @property
    def passed(self) -> bool:
        return all(f.passed for f in self.families) and all(
            t.passed for t in self.tails
        )


def _weighted_square_tail_frequency(
    weights: np.ndarray, t: float, draws: int, rng: RngSeed, safety: float
) -> TailCheckRow:
    a = np.asarray(weights, dtype=float)
    norm2 = float(np.sqrt(a @ a))
    norm_inf = float(np.abs(a).max())
    threshold = 2.0 * norm2 * math.sqrt(t) + 2.0 * norm_inf * t
    gen = rng.generator()
    exceed = 0
    remaining = draws
    center = float(a.sum())
    while remaining > 0:
        chunk = min(remaining, 20_000)
        g = gen.standard_normal((chunk, a.size))
        z = (g * g) @ a
        exceed += int(np.count_nonzero(np.abs(z - center) >= threshold))
        remaining -= chunk
    label = "uniform" if np.allclose(a, a[0]) else "decaying"
    return TailCheckRow(
        weights=label,
        t=t,
        frequency=exceed / draws,
        bound=2.0 * math.exp(-t) * safety,
    )


def run_oracle_suite(
    config: ExperimentConfig,
    datasets_per_family: int = 200,
    mult: float = 10.0,
    tail_draws: int = 100_000,
    tail_safety: float = 1.5,
) -> OracleReport:
    """Concentration checks behind both testers' accuracy analyses.

    For each family, 200 seeded datasets (half null, half with a mean of
    norm up to ``2*alpha``) must satisfy all four Gram clauses
    simultaneously on at least 95% of draws.  The scaled-covariance entry
    re-centers diagonals and row sums at the covariance trace.  Weighted
    squared-Gaussian sums are checked against their exponential tail bound.
    """
    root = RngSeed(config.seed)
    n = config.n if config.n is not None else 256
    d = config.d
    alpha = config.alpha
    cases = [
        ("gaussian", Family.GAUSSIAN_KNOWN_COV, None),
        ("product", Family.BOOLEAN_PRODUCT, None),
        ("gaussian-half-cov", Family.GAUSSIAN_KNOWN_COV, 0.5),
    ]
    families: list[OracleFamilyResult] = []
    for case_idx, (name, family, cov_scale) in enumerate(cases):
        clause_failures: dict[str, int] = {}
        passes = 0
        for t_idx in range(datasets_per_family):
            rng = root.substream(case_idx, t_idx)
            if t_idx % 2 == 0:
                mean = np.zeros(d)
            else:
                radius = float(
                    rng.substream(0).generator().uniform(0.0, 2.0 * alpha)
                )
                mean = radius * unit_sphere(d, rng.substream(1))
            if family is Family.BOOLEAN_PRODUCT:
                data = sample_product(mean, n, rng.substream(2))
                center = float(d)
            elif cov_scale is None:
                data = sample_gaussian(mean, None, n, rng.substream(2))
                center = float(d)
            else:
                data = sample_gaussian(
                    mean, cov_scale * np.ones(d), n, rng.substream(2)
                )
                center = cov_scale * d
            failed = check_gram_concentration(
                data,
                mean,
                alpha,
                mult=mult,
                diag_center=center,
                rng=rng.substream(3),
            )
            if not failed:
                passes += 1
            for clause in failed:
                clause_failures[clause] = clause_failures.get(clause, 0) + 1
        families.append(
            OracleFamilyResult(
                name=name,
                datasets=datasets_per_family,
                simultaneous_passes=passes,
                clause_failures=clause_failures,
            )
        )

    tails: list[TailCheckRow] = []
    weight_sets = [np.ones(64), 1.0 / (1.0 + np.arange(64.0))]
    for w_idx, weights in enumerate(weight_sets):
        for t_idx, t in enumerate((1.0, 2.0, 4.0, 8.0)):
            tails.append(
                _weighted_square_tail_frequency(
                    weights,
                    t,
                    tail_draws,
                    root.substream(100, w_idx, t_idx),
                    tail_safety,
                )
            )
    return OracleReport(families=tuple(families), tails=tuple(tails))


# ---------------------------------------------------------------------------
# Sensitivity audit
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AuditRow:
    lemma: str
    pairs: int
    violations: int
    worst_margin: float
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.violations == 0


def parameter_consistency(params: EfficientParams) -> tuple[str, ...]:
    """Preconditions the drift bounds assume about the derived parameters.

    A consistently derived parameter set ties the geometric decay to the
    level width (``decay * epsilon * level_width == 8 * num_levels``), keeps
    the width at or above its floor, the decay at most 1/2, and the
    threshold rate equal to ``alpha^2 / entry_scale``.  Mis-scaling any one
    field after derivation (say, halving the width without re-deriving the
    decay) breaks one of these identities even though the drift margins on
    sampled pairs may stay quiet.
    """
    failures: list[str] = []
    k = params.num_levels
    target = 8.0 * k
    if abs(params.decay * params.epsilon * params.level_width - target) > 1e-6 * target:
        failures.append("decay-width product mismatch")
    if params.level_width < 16.0 * k / params.epsilon - 1e-9:
        failures.append("level width below its floor")
    if params.decay > 0.5 + 1e-12:
        failures.append("decay above one half")
    expected_rate = params.alpha**2 / params.entry_scale
    if abs(params.threshold_rate - expected_rate) > 1e-9 * expected_rate:
        failures.append("threshold rate mismatch")
    return tuple(failures)


_BASE_KINDS = ("uniform", "constant", "biased", "blocks", "rowscaled")


def _symmetric_base(n: int, kind: str, gen: np.random.Generator) -> np.ndarray:
    if kind == "uniform":
        m = gen.uniform(-1.0, 1.0, size=(n, n))
    elif kind == "constant":
        m = np.full((n, n), float(gen.uniform(-1.0, 1.0)))
    elif kind == "biased":
        bias = gen.uniform(-1.0, 1.0, size=n)
        prob = (1.0 + np.add.outer(bias, bias) / 2.0) / 2.0
        m = np.where(gen.random((n, n)) < prob, 1.0, -1.0)
    elif kind == "blocks":
        split = max(1, int(gen.integers(1, n)))
        values = gen.uniform(-1.0, 1.0, size=3)
        m = np.full((n, n), values[2])
        m[:split, :split] = values[0]
        m[split:, split:] = values[1]
    elif kind == "rowscaled":
        scale = gen.uniform(0.0, 1.0, size=n)
        m = gen.uniform(-1.0, 1.0, size=(n, n)) * np.outer(scale, scale)
    else:
        raise ValueError(f"unknown base kind {kind!r}")
    return np.triu(m) + np.triu(m, 1).T


def _replacement_row(n: int, gen: np.random.Generator) -> np.ndarray:
    style = int(gen.integers(3))
    if style == 0:
        return gen.uniform(-1.0, 1.0, size=n)
    if style == 1:
        return np.full(n, float(gen.uniform(-1.0, 1.0)))
    bias = float(gen.uniform(-1.0, 1.0))
    return np.where(gen.random(n) < (1.0 + bias) / 2.0, 1.0, -1.0)


def _drift_stats(row_sums: np.ndarray, col_sums: np.ndarray, params: EfficientParams):
    scores = _level_scores_from_sums(row_sums, col_sums, params)
    overflow = overflow_from_level_scores(scores, params)
    folded = folded_total_from_sums(row_sums, col_sums, params)
    return scores, overflow, folded


def _audit_matrix_drift(
    config: ExperimentConfig,
    cells: list[tuple[int, int]],
    pairs_per_cell: int,
    fault_tau_half: bool,
    tol: float,
) -> tuple[AuditRow, AuditRow, AuditRow]:
    root = RngSeed(config.seed)
    level_worst = overflow_worst = fold_worst = -math.inf
    level_pairs = overflow_pairs = fold_pairs = 0
    level_viol = overflow_viol = fold_viol = 0
    notes: list[str] = []

    for cell_idx, (n, d) in enumerate(cells):
        params = derive_efficient_params(
            n,
            d,
            config.alpha,
            config.epsilon,
            polylog_factor=config.polylog_factor,
            cap_c=config.cap_c,
        )
        if fault_tau_half:
            params = dataclasses.replace(
                params, level_width=params.level_width / 2.0
            )
        inconsistencies = parameter_consistency(params)
        if inconsistencies:
            overflow_viol += len(inconsistencies)
            notes.extend(
                f"n={n} d={d}: {msg}" for msg in inconsistencies
            )
        k = params.num_levels
        tau = params.level_width
        cap = k / params.epsilon
        fold_bound_drift = 4.0 * (k + 2) * tau + 48.0 * k / params.epsilon

        bases = 12
        per_base = math.ceil(pairs_per_cell / bases)
        for base_idx in range(bases):
            gen = root.substream(20, cell_idx, base_idx).generator()
            base = _symmetric_base(n, _BASE_KINDS[base_idx % len(_BASE_KINDS)], gen)
            base_sums = base.sum(axis=1)
            s_a, f_a, g_a = _drift_stats(base_sums, base_sums, params)
            for _ in range(per_base):
                # Adjacent pair: replace a single row of the matrix and leave
                # everything else alone.  Only the r-th row sum moves, while
                # every column sum shifts by the difference of the old and
                # new row entries.
                r = int(gen.integers(n))
                w = _replacement_row(n, gen)
                new_row_sums = base_sums.copy()
                new_row_sums[r] = w.sum()
                new_col_sums = base_sums - base[:, r] + w

                s_b, f_b, g_b = _drift_stats(new_row_sums, new_col_sums, params)

                level_pairs += 1
                for lvl in range(1, k):
                    delta = abs(s_a[lvl] - s_b[lvl])
                    margin = delta - (
                        1.0 + (4.0 / tau) * min(s_a[lvl - 1], s_b[lvl - 1])
                    )
                    # the bound holds from either side's lower level score,
                    # so the min is the harder (still valid) check
                    level_worst = max(level_worst, margin)
                    if margin > tol:
                        level_viol += 1

                if min(f_a, f_b) <= cap:
                    overflow_pairs += 1
                    margin = abs(f_a - f_b) - k
                    overflow_worst = max(overflow_worst, margin)
                    if margin > tol:
                        overflow_viol += 1

                if min(f_a, f_b) <= cap:
                    fold_pairs += 1
                    margin = abs(g_a - g_b) - fold_bound_drift
                    fold_worst = max(fold_worst, margin)
                    if margin > tol:
                        fold_viol += 1

    return (
        AuditRow("level-score-drift", level_pairs, level_viol, level_worst),
        AuditRow(
            "overflow-drift",
            overflow_pairs,
            overflow_viol,
            overflow_worst,
            note="; ".join(notes),
        ),
        AuditRow("fold-drift", fold_pairs, fold_viol, fold_worst),
    )


def _audit_clipped_drift(
    config: ExperimentConfig,
    cells: list[tuple[int, int]],
    pairs_per_cell: int,
    tol: float,
) -> AuditRow:
    root = RngSeed(config.seed)
    worst = -math.inf
    pairs = 0
    violations = 0
    for cell_idx, (n, d) in enumerate(cells):
        params = derive_inefficient_params(
            n,
            d,
            config.alpha,
            config.epsilon,
            polylog_factor=config.polylog_factor,
            cap_c=config.cap_c,
        )
        max_swap = max(
            1,
            min(n, int(params.cap_c / config.epsilon), 8),
        )
        for pair_idx in range(pairs_per_cell):
            rng = root.substream(21, cell_idx, pair_idx)
            gen = rng.generator()
            for attempt in range(25):
                sub = rng.substream(attempt)
                x = sample_gaussian(np.zeros(d), None, n, sub.substream(0))
                k = int(gen.integers(1, max_swap + 1))
                swap = gen.choice(n, size=k, replace=False)
                y = x.copy()
                shift = (
                    config.alpha * unit_sphere(d, sub.substream(1))
                    if gen.random() < 0.5
                    else np.zeros(d)
                )
                y[swap] = sample_gaussian(shift, None, k, sub.substream(2))
                in_a = membership_report(
                    x, params, subset_cap=4, rng=sub.substream(3), extra_subsets=[swap]
                ).in_set
                in_b = membership_report(
                    y, params, subset_cap=4, rng=sub.substream(4), extra_subsets=[swap]
                ).in_set
                if in_a and in_b:
                    break
            else:
                continue
            pairs += 1
            delta = abs(clipped_statistic(x, params) - clipped_statistic(y, params))
            margin = delta - k * params.drift_bound
            worst = max(worst, margin)
            if margin > tol:
                violations += 1
    return AuditRow("clipped-statistic-drift", pairs, violations, worst)


def _audit_calibration(tol: float) -> AuditRow:
    params = derive_inefficient_params(
        256, 4, 0.5, 0.5, polylog_factor=8.0, cap_c=1.0
    )
    margin = params.drift_bound - params.ext_lipschitz
    return AuditRow(
        "calibration-margin",
        pairs=1,
        violations=int(margin > tol),
        worst_margin=margin,
        note=(
            f"drift_bound={params.drift_bound:.1f} "
            f"ext_lipschitz={params.ext_lipschitz:.1f}"
        ),
    )


def run_sensitivity_audit(
    config: ExperimentConfig,
    pairs_per_lemma: int = 10_000,
    cells: list[tuple[int, int]] | None = None,
    include_stress_cells: bool = True,
    fault_tau_half: bool = False,
    tol: float = 1e-6,
) -> list[AuditRow]:
    """Randomized adjacent-pair audit of the deterministic drift bounds.

    Matrix-level drifts replace a single row of matrices with entries in
    [-1, 1] (several structured generators so the level ramps actually
    activate on the stress cells); the clipped-statistic drift
    swaps up to a budget of rows between typical-set members.  The
    ``fault_tau_half`` flag halves the level width after derivation without
    re-deriving the decay — a deliberately inconsistent parameter set that
    the consistency preamble must flag.
    """
    if cells is None:
        cells = [(n, d) for n in (16, 64, 256) for d in (4, 64)]
        if include_stress_cells:
            cells = cells + [(1024, 64)]
    pairs_per_cell = math.ceil(pairs_per_lemma / len(cells))
    level_row, overflow_row, fold_row = _audit_matrix_drift(
        config, cells, pairs_per_cell, fault_tau_half, tol
    )
    clipped_row = _audit_clipped_drift(config, cells, pairs_per_cell, tol)
    calibration_row = _audit_calibration(tol)
    return [level_row, overflow_row, fold_row, clipped_row, calibration_row]


# ---------------------------------------------------------------------------
# Coupling sweep
# ---------------------------------------------------------------------------

_DEFAULT_DECOMPOSITION_GRID = tuple(
    (n, d) for n in (32, 64, 128) for d in (128, 256, 512)
)


def run_coupling_sweep(
    config: ExperimentConfig,
    grid: tuple[tuple[int, int], ...] = _DEFAULT_DECOMPOSITION_GRID,
    include_shifted: bool = True,
    budget_constant: float = 1.0,
) -> list[dict]:
    """Mean Hamming cost of both couplings, with the fitted scaling constant.

    Each decomposition row reports ``fitted_constant`` — the measured cost
    divided by ``alpha^2 n^1.5 / sqrt(d)`` — and ``epsilon_shadow``, the
    largest epsilon whose ``budget_constant/epsilon`` allowance stays above
    the measured cost.
    """
    root = RngSeed(config.seed)
    alpha = config.alpha
    rows: list[dict] = []
    if include_shifted:
        costs = np.empty(config.trials)
        for t in range(config.trials):
            _, _, res = couple_shifted_normals(
                0.5, 1000, 2, root.substream(_COUPLING_STREAM, 0, t)
            )
            costs[t] = res.hamming
        mean = float(costs.mean())
        se = float(costs.std(ddof=1) / math.sqrt(config.trials)) if config.trials > 1 else 0.0
        rows.append(
            {
                "kind": "shifted",
                "n": 1000,
                "d": 2,
                "alpha": 0.5,
                "trials": config.trials,
                "mean_hamming": mean,
                "se": se,
                "expected": 1000 * tv_normal_shift(0.5),
                "fitted_constant": float("nan"),
                "epsilon_shadow": budget_constant / mean if mean > 0 else math.inf,
            }
        )
    for point_idx, (n, d) in enumerate(grid):
        costs = np.empty(config.trials)
        for t in range(config.trials):
            _, _, res = decomposition_coupling(
                alpha, n, d, root.substream(_COUPLING_STREAM, 1 + point_idx, t)
            )
            costs[t] = res.hamming
        mean = float(costs.mean())
        se = float(costs.std(ddof=1) / math.sqrt(config.trials)) if config.trials > 1 else 0.0
        gamma = decomposition_shift(alpha, n, d)
        scale = alpha**2 * n**1.5 / math.sqrt(d)
        rows.append(
            {
                "kind": "decomposition",
                "n": n,
                "d": d,
                "alpha": alpha,
                "trials": config.trials,
                "mean_hamming": mean,
                "se": se,
                "expected": n * tv_normal_shift(gamma),
                "fitted_constant": mean / scale,
                "epsilon_shadow": budget_constant / mean if mean > 0 else math.inf,
            }
        )
    return rows


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def _format_cell(value) -> str:
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def write_csv(path: str | Path, rows: list[dict], header: list[str] | None = None) -> None:
    """RFC-4180 CSV (CRLF, quoted as needed), floats at six decimals so
    reruns with the same seed are byte-identical."""
    if not rows:
        raise ValueError("refusing to write an empty table")
    fields = header if header is not None else list(rows[0].keys())
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(fields)
        for row in rows:
            writer.writerow([_format_cell(row[f]) for f in fields])


def write_manifest(
    path: str | Path,
    config: ExperimentConfig,
    timings: dict[str, float],
    extra: dict | None = None,
) -> None:
    payload = {
        "config": dataclasses.asdict(config),
        "config_hash": config.config_hash(),
        "code_version": _package_version(),
        "timings_seconds": timings,
    }
    if extra:
        payload["extra"] = extra
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def parse_config_file(path: str | Path) -> dict[str, str]:
    """Flat key=value config format; '#' starts a comment; blank lines skipped."""
    out: dict[str, str] = {}
    for raw_line in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"malformed config line: {raw_line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def config_from_mapping(mapping: dict[str, str]) -> ExperimentConfig:
    """Build a config from string key/values (file format or CLI remainder)."""
    kwargs: dict = {}
    converters = {
        "mode": str,
        "family": str,
        "d": int,
        "alpha": float,
        "epsilon": float,
        "tolerant": lambda s: s.lower() in ("1", "true", "yes"),
        "n": int,
        "n_grid": lambda s: tuple(int(v) for v in s.split(",") if v.strip()),
        "trials": int,
        "seed": int,
        "tester": str,
        "hypothesis": str,
        "out": str,
        "polylog_factor": float,
        "cap_c": float,
        "workers": int,
    }
    for key, value in mapping.items():
        if key not in converters:
            raise ValueError(f"unknown config key {key!r}")
        kwargs[key] = converters[key](value)
    return ExperimentConfig(**kwargs)
