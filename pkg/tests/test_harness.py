import csv
import json
import math

import numpy as np
import pytest

from flipsim import NoiseChannel, ProtocolConstants, SimConfig, derive_rng, run_baseline_forward
from flipsim.harness import (
    ExperimentReport,
    ExperimentSpec,
    ReportError,
    SchemaVersionError,
    SpecParseError,
    SpecValidationError,
    load_spec,
    report_to_csv,
    report_to_dict,
    run_experiment,
    save_report,
    save_spec,
    wilson_interval,
)


def small_spec(**overrides):
    base = dict(
        protocol="broadcast",
        n_grid=(128,),
        epsilon_grid=(0.5,),
        runs_per_cell=3,
        master_seed=7,
    )
    base.update(overrides)
    return ExperimentSpec(**base)


def test_wilson_interval_brackets():
    for k, n in ((0, 10), (5, 10), (10, 10), (198, 200)):
        lo, hi = wilson_interval(k, n)
        assert 0.0 <= lo <= k / n <= hi <= 1.0
    lo, hi = wilson_interval(200, 200)
    assert lo > 0.98


def test_wilson_coverage_meta():
    # pooled depth-1 agents of the forward baseline are each correct with
    # probability exactly 1/2 + eps; the 95% interval must cover that in
    # at least 90 of 100 batches
    p = 0.75
    covered = 0
    for batch in range(100):
        agents = correct = 0
        for run in range(6):
            config = SimConfig(n=64, channel=NoiseChannel.from_epsilon(0.25),
                               master_seed=batch)
            out = run_baseline_forward(config, max_rounds=120,
                                       rng=derive_rng(batch, "meta", run))
            d1 = out.depth_table[0]
            agents += d1.agents
            correct += d1.correct
        lo, hi = wilson_interval(correct, agents)
        covered += lo <= p <= hi
    assert covered >= 90


def test_spec_validation_lists_every_problem():
    spec = small_spec(protocol="consensus", n_grid=(), epsilon_grid=(0.7,),
                      runs_per_cell=0)
    with pytest.raises(SpecValidationError) as exc:
        spec.validate()
    problems = exc.value.problems
    assert any("nGrid" in p for p in problems)
    assert any("epsilonGrid" in p for p in problems)
    assert any("runsPerCell" in p for p in problems)
    assert any("initialSetSize" in p for p in problems)
    assert any("initialBias" in p for p in problems)


def test_spec_validation_consensus_minimum_set():
    spec = small_spec(protocol="consensus", n_grid=(2 ** 14,), epsilon_grid=(0.25,),
                      initial_bias=0.1, initial_set_size=8)
    with pytest.raises(SpecValidationError, match="admissible minimum"):
        spec.validate()


def test_spec_round_trip(tmp_path):
    spec = small_spec()
    path = tmp_path / "spec.json"
    save_spec(spec, path)
    assert load_spec(path) == spec


def test_spec_fixture_every_field(tmp_path):
    raw = {
        "schemaVersion": 1,
        "protocol": "consensus",
        "nGrid": [1024, 2048],
        "epsilonGrid": [0.25, 0.2],
        "runsPerCell": 4,
        "masterSeed": 99,
        "constants": {"cS": 1.0, "cBeta": 3.0, "cF": 9.0, "cFinalStage2": 2.0,
                      "cDirect": 2.0, "cEntry": 1.0, "eta": 0.1, "rScale": 8.0},
        "initialBias": 0.1,
        "initialSetSize": 512,
        "threshold": 2,
        "maxRounds": 500,
        "outputPath": "out.json",
    }
    path = tmp_path / "full.json"
    path.write_text(json.dumps(raw))
    spec = load_spec(path)
    assert spec.protocol == "consensus"
    assert spec.n_grid == (1024, 2048)
    assert spec.constants == ProtocolConstants()
    assert spec.initial_bias == 0.1
    assert spec.output_path == "out.json"


def test_spec_parse_errors(tmp_path):
    bad_json = tmp_path / "bad.json"
    bad_json.write_text("{not json")
    with pytest.raises(SpecParseError, match="line"):
        load_spec(bad_json)

    unknown = tmp_path / "unknown.json"
    unknown.write_text(json.dumps({"schemaVersion": 1, "protocol": "broadcast",
                                   "nGrid": [4], "epsilonGrid": [0.5],
                                   "runsPerCell": 1, "masterSeed": 0,
                                   "bogusField": 3}))
    with pytest.raises(SpecParseError, match="bogusField"):
        load_spec(unknown)

    stale = tmp_path / "stale.json"
    stale.write_text(json.dumps({"schemaVersion": 2, "protocol": "broadcast",
                                 "nGrid": [4], "epsilonGrid": [0.5],
                                 "runsPerCell": 1, "masterSeed": 0}))
    with pytest.raises(SchemaVersionError):
        load_spec(stale)


def test_run_experiment_deterministic():
    spec = small_spec(runs_per_cell=2)
    a = report_to_dict(run_experiment(spec))
    b = report_to_dict(run_experiment(spec))
    assert a == b


def test_run_experiment_worker_count_invariant(monkeypatch):
    spec = small_spec(runs_per_cell=4)
    monkeypatch.setenv("FLIPSIM_THREADS", "1")
    serial = report_to_dict(run_experiment(spec))
    monkeypatch.setenv("FLIPSIM_THREADS", "2")
    parallel = report_to_dict(run_experiment(spec))
    assert serial == parallel


def test_noiseless_cell_statistics():
    # 40/40 noiseless successes pull the Wilson lower bound above 0.9
    # (30/30 alone only reaches 0.886)
    spec = small_spec(n_grid=(256,), runs_per_cell=40, master_seed=5)
    report = run_experiment(spec)
    cell = report.per_cell[0]
    assert cell.success_rate == 1.0
    assert cell.wilson_lo > 0.9
    assert cell.all_activated_rate == 1.0


def test_empty_report_rejected(tmp_path):
    spec = small_spec()
    report = ExperimentReport(
        schema_version=1, tool_version="x", spec_echo=spec,
        constants_used=spec.constants, per_cell=(), scaling_fit=None)
    with pytest.raises(ReportError, match="zero cells"):
        save_report(report, tmp_path / "r.json")
    with pytest.raises(ReportError):
        report_to_csv(report, tmp_path / "r.csv")


def test_csv_and_json_agree(tmp_path):
    spec = small_spec(n_grid=(128, 256), runs_per_cell=3)
    report = run_experiment(spec)
    jpath = tmp_path / "r.json"
    cpath = tmp_path / "r.csv"
    save_report(report, jpath)
    report_to_csv(report, cpath)
    jdoc = json.loads(jpath.read_text())
    with open(cpath, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == len(jdoc["perCell"])
    for row, jcell in zip(rows, jdoc["perCell"]):
        for csv_key, json_key in (("successRate", "successRate"),
                                  ("meanRounds", "meanRounds"),
                                  ("meanMessages", "meanMessages"),
                                  ("wilsonLo", "wilsonLo")):
            jv = jcell[json_key]
            cv = row[csv_key]
            if jv is None:
                assert cv == ""
            else:
                assert float(f"{float(cv):.12g}") == float(f"{jv:.12g}")


def test_scaling_fit_mechanics():
    spec = small_spec(protocol="broadcast", n_grid=(128, 512), epsilon_grid=(0.5,),
                      runs_per_cell=2)
    report = run_experiment(spec)
    fit = report.scaling_fit
    assert fit is not None
    assert fit.slope > 0
    # round counts are schedule-determined, so a 2-point fit is exact
    assert fit.max_residual_rel < 1e-9


def test_symmetric_outcome_rate_for_unbiased_consensus():
    spec = small_spec(
        protocol="consensus", n_grid=(256,), epsilon_grid=(0.25,),
        runs_per_cell=30, master_seed=11,
        initial_bias=0.0, initial_set_size=256)
    report = run_experiment(spec)
    cell = report.per_cell[0]
    assert cell.success_rate is None and cell.wilson_lo is None
    assert cell.symmetric_outcome_rate is not None
    # either opinion wins by symmetry; 30 runs stay within ~3.7 sigma of 1/2
    assert 0.2 <= cell.symmetric_outcome_rate <= 0.8


def test_baseline_cells_report_extras():
    fwd = run_experiment(small_spec(protocol="baseline-forward", n_grid=(256,),
                                    epsilon_grid=(0.25,), runs_per_cell=3))
    assert fwd.per_cell[0].depth_table
    silent = run_experiment(small_spec(protocol="baseline-silent", n_grid=(100,),
                                       epsilon_grid=(0.25,), runs_per_cell=5))
    assert silent.per_cell[0].median_first_threshold is not None
