"""Command-line front end: ``dpident <mode> [flags] [--config FILE]``.

Flags override config-file values; the config file is the flat key=value
format understood by :func:`dpident.harness.parse_config_file`.
"""

from __future__ import annotations

import argparse
import time
from pathlib import Path

from .core import Verdict
from .harness import (
    ExperimentConfig,
    config_from_mapping,
    parse_config_file,
    run_coupling_sweep,
    run_oracle_suite,
    run_power_sweep,
    run_sensitivity_audit,
    run_single_test,
    write_csv,
    write_manifest,
)

_FAMILIES = ("gaussian", "gaussian-unknown", "product")


def _add_common_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="flat key=value config file")
    sub.add_argument("--family", choices=_FAMILIES)
    sub.add_argument("--d", type=int, help="dimension")
    sub.add_argument("--alpha", type=float, help="separation radius")
    sub.add_argument("--eps", type=float, dest="epsilon", help="privacy budget")
    sub.add_argument("--n", type=int, help="sample size")
    sub.add_argument("--n-grid", dest="n_grid", help="comma-separated sample sizes")
    sub.add_argument("--trials", type=int)
    sub.add_argument("--seed", type=int)
    sub.add_argument(
        "--tolerant", action="store_true", default=None, help="tolerant variant"
    )
    sub.add_argument("--tester", choices=("efficient", "inefficient", "nonprivate"))
    sub.add_argument("--hypothesis", choices=("null", "alt"))
    sub.add_argument("--out", help="CSV output path (manifest written alongside)")
    sub.add_argument("--polylog-factor", dest="polylog_factor", type=float)
    sub.add_argument("--cap-c", dest="cap_c", type=float)
    sub.add_argument("--workers", type=int)
    sub.add_argument(
        "--pairs",
        type=int,
        help="adjacent pairs per lemma (verify-sensitivity only)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpident",
        description="Differentially private identity testing experiments.",
    )
    subs = parser.add_subparsers(dest="mode", required=True)
    for mode, blurb in (
        ("test", "run one seeded accept/reject trial"),
        ("sweep", "estimate type-I/type-II rates over a sample-size grid"),
        ("verify-sensitivity", "audit the deterministic drift bounds"),
        ("coupling", "measure coupling Hamming costs"),
        ("oracles", "check concentration oracles on sampled datasets"),
    ):
        _add_common_flags(subs.add_parser(mode, help=blurb))
    return parser


def _merge_config(args: argparse.Namespace) -> ExperimentConfig:
    mapping: dict[str, str] = {}
    if args.config:
        mapping.update(parse_config_file(args.config))
    mapping["mode"] = args.mode
    for key in (
        "family",
        "d",
        "alpha",
        "epsilon",
        "n",
        "n_grid",
        "trials",
        "seed",
        "tester",
        "hypothesis",
        "out",
        "polylog_factor",
        "cap_c",
        "workers",
    ):
        value = getattr(args, key)
        if value is not None:
            mapping[key] = str(value)
    if args.tolerant is not None:
        mapping["tolerant"] = "true"
    return config_from_mapping(mapping)


def _manifest_path(out: str) -> Path:
    return Path(out).with_suffix(".manifest.json")


def _emit(config: ExperimentConfig, rows: list[dict], elapsed: float, extra=None):
    if config.out:
        write_csv(config.out, rows)
        write_manifest(
            _manifest_path(config.out), config, {"run_seconds": elapsed}, extra=extra
        )
        print(f"wrote {len(rows)} rows to {config.out}")
    else:
        header = list(rows[0].keys())
        print("  ".join(header))
        for row in rows:
            print("  ".join(str(row[key]) for key in header))


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    config = _merge_config(args)
    start = time.perf_counter()

    if config.mode == "test":
        record = run_single_test(config)
        verdict = Verdict(record.verdict)
        print(
            f"{verdict.name.lower()} (statistic={record.statistic:.4f}, "
            f"hypothesis={config.hypothesis}, n={config.grid()[0]})"
        )
        if config.out:
            elapsed = time.perf_counter() - start
            row = {
                "n": config.grid()[0],
                "hypothesis": config.hypothesis,
                "verdict": int(record.verdict),
                "statistic": record.statistic,
            }
            write_csv(config.out, [row])
            write_manifest(
                _manifest_path(config.out), config, {"run_seconds": elapsed}
            )
        return 0

    if config.mode == "sweep":
        rows, _ = run_power_sweep(config)
        _emit(config, rows, time.perf_counter() - start)
        return 0

    if config.mode == "verify-sensitivity":
        audit_kwargs = {"pairs_per_lemma": args.pairs} if args.pairs else {}
        audit_rows = run_sensitivity_audit(config, **audit_kwargs)
        rows = [
            {
                "lemma": row.lemma,
                "pairs": row.pairs,
                "violations": row.violations,
                "worst_margin": row.worst_margin,
                "status": "pass" if row.passed else "FAIL",
            }
            for row in audit_rows
        ]
        _emit(config, rows, time.perf_counter() - start)
        for row in audit_rows:
            if row.note:
                print(f"note [{row.lemma}]: {row.note}")
        return 0 if all(row.passed for row in audit_rows) else 1

    if config.mode == "coupling":
        rows = run_coupling_sweep(config)
        _emit(config, rows, time.perf_counter() - start)
        return 0

    report = run_oracle_suite(config)
    rows = [
        {
            "check": f"family:{fam.name}",
            "passes": fam.simultaneous_passes,
            "total": fam.datasets,
            "status": "pass" if fam.passed else "FAIL",
        }
        for fam in report.families
    ] + [
        {
            "check": f"tail:{tail.weights}:t={tail.t:g}",
            "passes": f"{tail.frequency:.6f}",
            "total": f"{tail.bound:.6f}",
            "status": "pass" if tail.passed else "FAIL",
        }
        for tail in report.tails
    ]
    _emit(config, rows, time.perf_counter() - start)
    return 0 if report.passed else 1


if __name__ == "__main__":
    raise SystemExit(main())
