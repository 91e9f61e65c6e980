"""Experiment harness: configs, sweeps, audits, oracle suite, CSV/manifest, CLI."""

import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dpident.cli import main
from dpident.core import Verdict, derive_efficient_params
from dpident.harness import (
    ExperimentConfig,
    config_from_mapping,
    nonprivate_test,
    parameter_consistency,
    parse_config_file,
    run_coupling_sweep,
    run_oracle_suite,
    run_power_sweep,
    run_sensitivity_audit,
    run_single_test,
    wilson_interval,
    write_csv,
    write_manifest,
)
from dpident.samplers import RngSeed, sample_gaussian
import dataclasses


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(mode="bogus")
    with pytest.raises(ValueError):
        ExperimentConfig(tester="quantum")
    with pytest.raises(ValueError):
        ExperimentConfig(hypothesis="maybe")
    with pytest.raises(ValueError):
        ExperimentConfig(trials=0)
    with pytest.raises(ValueError):
        ExperimentConfig(workers=0)
    with pytest.raises(ValueError):
        ExperimentConfig().grid()  # neither n nor n_grid
    assert ExperimentConfig(n=32).grid() == (32,)
    assert ExperimentConfig(n=32, n_grid=(8, 16)).grid() == (8, 16)


def test_config_hash_tracks_content():
    a = ExperimentConfig(n=32, seed=1)
    b = ExperimentConfig(n=32, seed=1)
    c = ExperimentConfig(n=32, seed=2)
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != c.config_hash()
    assert len(a.config_hash()) == 16


def test_config_from_mapping_conversions():
    cfg = config_from_mapping(
        {
            "mode": "sweep",
            "family": "product",
            "d": "8",
            "alpha": "0.25",
            "epsilon": "0.1",
            "tolerant": "yes",
            "n_grid": "16, 32,64",
            "trials": "7",
            "workers": "2",
        }
    )
    assert cfg.family.value == "product"
    assert cfg.d == 8 and cfg.trials == 7 and cfg.workers == 2
    assert cfg.tolerant is True
    assert cfg.n_grid == (16, 32, 64)
    assert config_from_mapping({"tolerant": "0", "n": "4"}).tolerant is False
    with pytest.raises(ValueError):
        config_from_mapping({"frobnicate": "1"})


def test_parse_config_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(
        "# comment line\n"
        "d = 32\n"
        "\n"
        "alpha=0.5  # trailing comment\n"
        "n_grid = 64,128\n"
    )
    mapping = parse_config_file(path)
    assert mapping == {"d": "32", "alpha": "0.5", "n_grid": "64,128"}
    bad = tmp_path / "bad.cfg"
    bad.write_text("no equals sign here\n")
    with pytest.raises(ValueError):
        parse_config_file(bad)


@given(st.data())
def test_wilson_interval_contains_point_estimate(data):
    trials = data.draw(st.integers(min_value=1, max_value=1000))
    successes = data.draw(st.integers(min_value=0, max_value=trials))
    lo, hi = wilson_interval(successes, trials)
    p = successes / trials
    assert 0.0 <= lo <= p <= hi <= 1.0
    assert (hi - lo) < 1.0 or trials < 4


def test_wilson_interval_edges():
    lo, hi = wilson_interval(0, 50)
    assert lo == 0.0 and hi < 0.1
    lo, hi = wilson_interval(50, 50)
    assert hi == 1.0 and lo > 0.9
    with pytest.raises(ValueError):
        wilson_interval(5, 4)
    with pytest.raises(ValueError):
        wilson_interval(0, 0)


def test_nonprivate_is_the_null_quantile_threshold():
    from scipy import stats as scipy_stats

    for seed in (1, 2, 3):
        x = sample_gaussian(np.zeros(4), None, 100, RngSeed(seed))
        total = x.sum(axis=0)
        expect = (
            Verdict.REJECT_NULL
            if float(total @ total) > 100 * scipy_stats.chi2.ppf(0.75, 4)
            else Verdict.ACCEPT_NULL
        )
        assert nonprivate_test(x) is expect
    # a gross mean shift is always caught
    shifted = sample_gaussian(np.full(4, 2.0), None, 100, RngSeed(0))
    assert nonprivate_test(shifted) is Verdict.REJECT_NULL


def test_nonprivate_baseline_power():
    # n far above the sqrt(d)/alpha^2 boundary at d=100: type II vanishes
    # while type I sits at the designed 1/4 level.
    cfg = ExperimentConfig(
        mode="sweep", family="gaussian", d=100, alpha=0.5, epsilon=0.5,
        n=400, trials=60, seed=99, tester="nonprivate",
    )
    rows, _ = run_power_sweep(cfg)
    assert 0.10 <= rows[0]["type1"] <= 0.40
    assert rows[0]["type2"] <= 0.05


def test_type2_monotone_while_type1_holds_level():
    cfg = ExperimentConfig(
        mode="sweep", family="gaussian", d=16, alpha=0.5, epsilon=0.5,
        n_grid=(16, 32, 64, 128), trials=200, seed=4, tester="nonprivate",
    )
    rows, _ = run_power_sweep(cfg)
    for a, b in zip(rows, rows[1:]):
        assert b["type2"] <= a["type2"] + 0.02
    assert rows[-1]["type2"] < 0.05
    for row in rows:
        assert 0.12 <= row["type1"] <= 0.38  # binomial noise around 1/4


def test_power_sweep_row_schema_and_wilson_consistency():
    cfg = ExperimentConfig(
        mode="sweep", d=8, alpha=0.5, epsilon=0.5, n=64, trials=20,
        seed=11, tester="nonprivate",
    )
    rows, records = run_power_sweep(cfg, keep_records=True)
    (row,) = rows
    assert set(row) == {
        "n", "trials", "type1", "type1_lo", "type1_hi",
        "type2", "type2_lo", "type2_hi",
    }
    assert row["type1_lo"] <= row["type1"] <= row["type1_hi"]
    assert len(records) == 40  # both hypotheses per trial
    assert {r.hypothesis for r in records} == {0, 1}


def test_run_single_test_is_deterministic():
    cfg = ExperimentConfig(
        mode="test", d=16, alpha=0.5, epsilon=0.5, n=512, trials=1,
        seed=7, tester="nonprivate", hypothesis="alt",
    )
    r1 = run_single_test(cfg)
    r2 = run_single_test(cfg)
    assert r1.verdict == r2.verdict
    assert r1.statistic == r2.statistic
    assert r1.config_hash == cfg.config_hash()


def test_results_do_not_depend_on_worker_count():
    base = dict(
        mode="sweep", d=8, alpha=0.5, epsilon=0.5, n=64, trials=10,
        seed=13, tester="nonprivate",
    )
    rows1, _ = run_power_sweep(ExperimentConfig(**base, workers=1))
    rows3, _ = run_power_sweep(ExperimentConfig(**base, workers=3))
    assert rows1 == rows3


def test_parameter_consistency_catches_tampering():
    params = derive_efficient_params(256, 16, 0.25, 0.25)
    assert parameter_consistency(params) == ()
    halved = dataclasses.replace(params, level_width=params.level_width / 2.0)
    failures = parameter_consistency(halved)
    assert "decay-width product mismatch" in failures
    assert "level width below its floor" in failures


def test_sensitivity_audit_small_cell_clean():
    cfg = ExperimentConfig(mode="verify-sensitivity", d=4, alpha=0.25, epsilon=0.25, n=16)
    rows = run_sensitivity_audit(
        cfg, pairs_per_lemma=200, cells=[(16, 4)], include_stress_cells=False
    )
    assert [r.lemma for r in rows] == [
        "level-score-drift",
        "overflow-drift",
        "fold-drift",
        "clipped-statistic-drift",
        "calibration-margin",
    ]
    assert all(r.passed for r in rows)
    assert all(r.worst_margin <= 0 for r in rows[:4])


def test_sensitivity_audit_flags_injected_fault():
    cfg = ExperimentConfig(mode="verify-sensitivity", d=4, alpha=0.25, epsilon=0.25, n=16)
    rows = run_sensitivity_audit(
        cfg,
        pairs_per_lemma=60,
        cells=[(16, 4), (64, 4)],
        include_stress_cells=False,
        fault_tau_half=True,
    )
    overflow = next(r for r in rows if r.lemma == "overflow-drift")
    assert not overflow.passed
    assert "decay-width product mismatch" in overflow.note


def test_oracle_suite_structure():
    cfg = ExperimentConfig(mode="oracles", d=16, alpha=0.25, epsilon=0.25, n=64, seed=1)
    report = run_oracle_suite(cfg, datasets_per_family=40)
    names = [f.name for f in report.families]
    assert names == ["gaussian", "product", "gaussian-half-cov"]
    for fam in report.families:
        assert fam.datasets == 40
        assert fam.simultaneous_passes >= 38  # the 95% bar
    assert len(report.tails) == 8
    assert report.passed


def test_coupling_sweep_rows():
    cfg = ExperimentConfig(mode="coupling", d=16, alpha=0.25, epsilon=0.25, n=64, trials=5, seed=2)
    rows = run_coupling_sweep(cfg, grid=((32, 128), (64, 256)))
    assert [r["kind"] for r in rows] == ["shifted", "decomposition", "decomposition"]
    for row in rows:
        assert set(row) >= {"n", "d", "alpha", "trials", "mean_hamming", "se", "expected"}
    assert rows[0]["expected"] == pytest.approx(197.41265, abs=1e-4)
    assert math.isnan(rows[0]["fitted_constant"])
    assert rows[1]["fitted_constant"] > 0


def test_write_csv_is_byte_deterministic(tmp_path):
    cfg = ExperimentConfig(
        mode="sweep", d=8, alpha=0.5, epsilon=0.5, n=64, trials=15,
        seed=21, tester="nonprivate",
    )
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    rows1, _ = run_power_sweep(cfg)
    write_csv(p1, rows1)
    rows2, _ = run_power_sweep(cfg)
    write_csv(p2, rows2)
    assert p1.read_bytes() == p2.read_bytes()
    with open(p1, newline="") as fh:
        parsed = list(csv.reader(fh))
    assert parsed[0][0] == "n"
    assert len(parsed) == 2
    with pytest.raises(ValueError):
        write_csv(tmp_path / "empty.csv", [])


def test_write_manifest_payload(tmp_path):
    cfg = ExperimentConfig(mode="sweep", n=64, seed=3)
    path = tmp_path / "run.manifest.json"
    write_manifest(path, cfg, {"run_seconds": 1.25}, extra={"note": "x"})
    payload = json.loads(path.read_text())
    assert payload["config"]["seed"] == 3
    assert payload["config_hash"] == cfg.config_hash()
    assert payload["timings_seconds"] == {"run_seconds": 1.25}
    assert payload["extra"] == {"note": "x"}
    assert "code_version" in payload


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------


def test_cli_test_mode(capsys):
    rc = main(
        [
            "test", "--d", "16", "--alpha", "0.5", "--eps", "0.5", "--n", "512",
            "--tester", "nonprivate", "--hypothesis", "alt", "--seed", "7",
        ]
    )
    assert rc == 0
    out = capsys.readouterr().out
    assert "reject_null" in out
    assert "n=512" in out


def test_cli_sweep_writes_csv_and_manifest(tmp_path, capsys):
    out = tmp_path / "sweep.csv"
    rc = main(
        [
            "sweep", "--d", "8", "--alpha", "0.5", "--eps", "0.5",
            "--n-grid", "32,64", "--trials", "5", "--seed", "1",
            "--tester", "nonprivate", "--out", str(out),
        ]
    )
    assert rc == 0
    assert out.exists()
    manifest = json.loads((tmp_path / "sweep.manifest.json").read_text())
    assert manifest["config"]["d"] == 8
    with open(out, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["n"] for r in rows] == ["32", "64"]


def test_cli_config_file_with_flag_override(tmp_path):
    cfg_file = tmp_path / "base.cfg"
    cfg_file.write_text("d = 4\nalpha = 0.5\nepsilon = 0.5\ntrials = 5\ntester = nonprivate\nn = 64\n")
    out = tmp_path / "o.csv"
    rc = main(["sweep", "--config", str(cfg_file), "--d", "16", "--out", str(out)])
    assert rc == 0
    manifest = json.loads((tmp_path / "o.manifest.json").read_text())
    assert manifest["config"]["d"] == 16  # flag beats file
    assert manifest["config"]["trials"] == 5


@pytest.mark.slow
def test_cli_verify_sensitivity_smoke(tmp_path):
    out = tmp_path / "audit.csv"
    rc = main(
        [
            "verify-sensitivity", "--alpha", "0.25", "--eps", "0.25",
            "--pairs", "50", "--seed", "0", "--out", str(out),
        ]
    )
    assert rc == 0
    with open(out, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert {r["lemma"] for r in rows} == {
        "level-score-drift", "overflow-drift", "fold-drift",
        "clipped-statistic-drift", "calibration-margin",
    }
    assert all(r["status"] == "pass" for r in rows)


def test_cli_coupling_smoke(tmp_path):
    out = tmp_path / "coupling.csv"
    rc = main(
        ["coupling", "--alpha", "0.25", "--trials", "5", "--seed", "2", "--out", str(out)]
    )
    assert rc == 0
    with open(out, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert rows[0]["kind"] == "shifted"
    assert len(rows) == 10  # shifted + 9 grid points


def test_cli_oracles_smoke(tmp_path):
    out = tmp_path / "oracles.csv"
    rc = main(
        [
            "oracles", "--d", "16", "--alpha", "0.25", "--eps", "0.25",
            "--n", "64", "--seed", "1", "--out", str(out),
        ]
    )
    assert rc == 0
    with open(out, newline="") as fh:
        rows = list(csv.DictReader(fh))
    kinds = {r["check"].split(":")[0] for r in rows}
    assert kinds == {"family", "tail"}
    assert all(r["status"] == "pass" for r in rows)
