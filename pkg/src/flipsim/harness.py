"""Experiment orchestration: Monte Carlo batches over (n, epsilon) grids,
Wilson intervals, scaling fits, JSON/CSV persistence, and deterministic
parallel execution.

Reproducibility contract: run r of cell c uses the protocol stream
``(master_seed, "run", c, r)`` and the instrumentation stream
``(master_seed, "init", c, r)`` (initial sets, clock offsets), so reports
are identical regardless of worker count or completion order.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .model import NoiseChannel, derive_rng
from .params import ProtocolConstants, SimConfig, _ceil_log2
from .protocols import (
    ClockConfiguration,
    run_baseline_forward,
    run_baseline_silent_wait,
    run_broadcast,
    run_desynchronized,
    run_majority_consensus,
)

SCHEMA_VERSION = 1
PROTOCOLS = ("broadcast", "consensus", "desync", "baseline-forward", "baseline-silent")
RELAXED_SUCCESS = 0.99


class SpecValidationError(ValueError):
    """Invalid experiment spec; ``problems`` lists every violated field."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid experiment spec: " + "; ".join(self.problems))


class SpecParseError(ValueError):
    pass


class SchemaVersionError(ValueError):
    pass


class ReportError(ValueError):
    pass


_CONSTANTS_KEYS = {
    "cS": "c_s",
    "cBeta": "c_beta",
    "cF": "c_f",
    "cFinalStage2": "c_final_stage2",
    "cDirect": "c_direct",
    "cEntry": "c_entry",
    "eta": "eta",
    "rScale": "r_scale",
}


@dataclass(frozen=True)
class ExperimentSpec:
    protocol: str
    n_grid: tuple
    epsilon_grid: tuple
    runs_per_cell: int
    master_seed: int
    constants: ProtocolConstants = field(default_factory=ProtocolConstants)
    initial_bias: float | None = None
    initial_set_size: int | None = None
    threshold: int = 2
    max_rounds: int | None = None
    output_path: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "n_grid", tuple(self.n_grid))
        object.__setattr__(self, "epsilon_grid", tuple(self.epsilon_grid))

    def problems(self):
        out = []
        if self.protocol not in PROTOCOLS:
            out.append(f"protocol: {self.protocol!r} not one of {PROTOCOLS}")
        if not self.n_grid:
            out.append("nGrid: must be nonempty")
        elif any((not isinstance(n, int)) or n < 2 for n in self.n_grid):
            out.append("nGrid: entries must be integers >= 2")
        if not self.epsilon_grid:
            out.append("epsilonGrid: must be nonempty")
        elif any(not (0.0 < e <= 0.5) for e in self.epsilon_grid):
            out.append("epsilonGrid: entries must lie in (0, 1/2]")
        if self.runs_per_cell < 1:
            out.append("runsPerCell: must be >= 1")
        if self.master_seed < 0 or self.master_seed >= 2 ** 64:
            out.append("masterSeed: must be a 64-bit unsigned integer")
        if self.protocol == "consensus":
            if self.initial_set_size is None:
                out.append("initialSetSize: required for consensus")
            elif self.n_grid and any(self.initial_set_size > n for n in self.n_grid):
                out.append("initialSetSize: exceeds some grid n")
            else:
                for n in self.n_grid:
                    if not isinstance(n, int) or n < 2:
                        continue    # already reported above
                    for eps in self.epsilon_grid:
                        if not (0.0 < eps <= 0.5):
                            continue
                        minimum = math.ceil(self.constants.c_entry * math.log2(n) / (eps * eps))
                        if self.initial_set_size < minimum:
                            out.append(
                                f"initialSetSize: {self.initial_set_size} below the "
                                f"admissible minimum {minimum} at (n={n}, eps={eps})"
                            )
            if self.initial_bias is None:
                out.append("initialBias: required for consensus")
            elif not (0.0 <= self.initial_bias <= 0.5):
                out.append("initialBias: must lie in [0, 1/2]")
        if self.protocol == "baseline-silent" and self.threshold < 1:
            out.append("threshold: must be >= 1")
        if self.max_rounds is not None and self.max_rounds < 1:
            out.append("maxRounds: must be >= 1")
        return out

    def validate(self):
        problems = self.problems()
        if problems:
            raise SpecValidationError(problems)

    def to_dict(self) -> dict:
        d = {
            "schemaVersion": SCHEMA_VERSION,
            "protocol": self.protocol,
            "nGrid": list(self.n_grid),
            "epsilonGrid": list(self.epsilon_grid),
            "runsPerCell": self.runs_per_cell,
            "masterSeed": self.master_seed,
            "constants": {k: getattr(self.constants, v) for k, v in _CONSTANTS_KEYS.items()},
        }
        if self.initial_bias is not None:
            d["initialBias"] = self.initial_bias
        if self.initial_set_size is not None:
            d["initialSetSize"] = self.initial_set_size
        if self.threshold != 2:
            d["threshold"] = self.threshold
        if self.max_rounds is not None:
            d["maxRounds"] = self.max_rounds
        if self.output_path is not None:
            d["outputPath"] = self.output_path
        return d

    @classmethod
    def from_dict(cls, d: dict, source: str = "<spec>") -> "ExperimentSpec":
        d = dict(d)
        version = d.pop("schemaVersion", None)
        if version is None:
            raise SpecParseError(f"{source}: missing schemaVersion")
        if version != SCHEMA_VERSION:
            raise SchemaVersionError(
                f"{source}: schemaVersion {version} not supported (current: {SCHEMA_VERSION})"
            )
        known = {
            "protocol", "nGrid", "epsilonGrid", "runsPerCell", "masterSeed",
            "constants", "initialBias", "initialSetSize", "threshold",
            "maxRounds", "outputPath",
        }
        unknown = set(d) - known
        if unknown:
            raise SpecParseError(f"{source}: unknown fields {sorted(unknown)}")
        const_in = d.get("constants", {})
        bad = set(const_in) - set(_CONSTANTS_KEYS)
        if bad:
            raise SpecParseError(f"{source}: unknown constants fields {sorted(bad)}")
        constants = ProtocolConstants(**{_CONSTANTS_KEYS[k]: v for k, v in const_in.items()})
        try:
            return cls(
                protocol=d["protocol"],
                n_grid=tuple(d["nGrid"]),
                epsilon_grid=tuple(d["epsilonGrid"]),
                runs_per_cell=d["runsPerCell"],
                master_seed=d["masterSeed"],
                constants=constants,
                initial_bias=d.get("initialBias"),
                initial_set_size=d.get("initialSetSize"),
                threshold=d.get("threshold", 2),
                max_rounds=d.get("maxRounds"),
                output_path=d.get("outputPath"),
            )
        except KeyError as e:
            raise SpecParseError(f"{source}: missing required field {e.args[0]!r}") from None


@dataclass(frozen=True)
class RunStats:
    success: bool
    relaxed: bool
    correct_fraction: float
    rounds: int
    messages: int
    all_activated: bool | None
    depth_table: tuple | None
    first_threshold_round: int | None


@dataclass(frozen=True)
class CellReport:
    n: int
    epsilon: float
    runs: int
    success_rate: float | None
    wilson_lo: float | None
    wilson_hi: float | None
    relaxed_success_rate: float
    mean_rounds: float
    mean_messages: float
    mean_final_correct: float
    all_activated_rate: float | None
    symmetric_outcome_rate: float | None
    depth_table: tuple | None
    median_first_threshold: float | None


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    log2sq_coeff: float | None
    max_residual_rel: float


@dataclass(frozen=True)
class ExperimentReport:
    schema_version: int
    tool_version: str
    spec_echo: ExperimentSpec
    constants_used: ProtocolConstants
    per_cell: tuple
    scaling_fit: ScalingFit | None


def wilson_interval(successes: int, trials: int, z: float = 1.959963984540054):
    """95% Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    phat = successes / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    center = (phat + z2 / (2.0 * trials)) / denom
    margin = z * math.sqrt(phat * (1.0 - phat) / trials + z2 / (4.0 * trials * trials)) / denom
    lo = 0.0 if successes == 0 else max(0.0, center - margin)
    hi = 1.0 if successes == trials else min(1.0, center + margin)
    return lo, hi


def _consensus_initial(n, size, bias, correct, gen) -> np.ndarray:
    members = gen.choice(n, size=size, replace=False)
    n_correct = round(size * (0.5 + bias))
    initial = np.full(n, -1, np.int8)
    initial[members[:n_correct]] = correct
    initial[members[n_correct:]] = correct ^ 1
    return initial


def _execute_run(task) -> RunStats:
    spec, cell_index, run_index, n, eps = task
    channel = NoiseChannel.from_epsilon(eps)
    config = SimConfig(n=n, channel=channel, master_seed=spec.master_seed, constants=spec.constants)
    gen = derive_rng(spec.master_seed, "run", cell_index, run_index)
    init_gen = derive_rng(spec.master_seed, "init", cell_index, run_index)
    log2n = _ceil_log2(n)
    if spec.protocol == "broadcast":
        out = run_broadcast(config, rng=gen)
    elif spec.protocol == "consensus":
        initial = _consensus_initial(n, spec.initial_set_size, spec.initial_bias,
                                     config.correct_opinion, init_gen)
        out = run_majority_consensus(config, initial, rng=gen)
    elif spec.protocol == "desync":
        d = 2 * log2n
        clocks = ClockConfiguration(init_gen.integers(0, d, size=n), d)
        out = run_desynchronized(config, clocks=clocks, rng=gen)
    elif spec.protocol == "baseline-forward":
        max_rounds = spec.max_rounds if spec.max_rounds is not None else 8 * log2n + 64
        out = run_baseline_forward(config, max_rounds=max_rounds, rng=gen)
    elif spec.protocol == "baseline-silent":
        max_rounds = spec.max_rounds if spec.max_rounds is not None else int(10 * math.sqrt(n)) + 10
        out = run_baseline_silent_wait(config, threshold=spec.threshold, max_rounds=max_rounds, rng=gen)
    else:
        raise SpecValidationError([f"protocol: {spec.protocol!r} unknown"])
    return RunStats(
        success=out.correct_fraction == 1.0,
        relaxed=out.correct_fraction >= RELAXED_SUCCESS,
        correct_fraction=out.correct_fraction,
        rounds=out.rounds_used,
        messages=out.messages_sent,
        all_activated=None if out.stage1 is None else out.stage1.all_activated,
        depth_table=out.depth_table,
        first_threshold_round=out.first_threshold_round,
    )


def _aggregate_cell(spec, n, eps, stats) -> CellReport:
    runs = len(stats)
    successes = sum(s.success for s in stats)
    bias_zero_consensus = spec.protocol == "consensus" and spec.initial_bias == 0.0
    if bias_zero_consensus:
        success_rate = wilson_lo = wilson_hi = None
        symmetric = successes / runs
    else:
        success_rate = successes / runs
        wilson_lo, wilson_hi = wilson_interval(successes, runs)
        symmetric = None
    activated = [s.all_activated for s in stats if s.all_activated is not None]
    depth_table = None
    if spec.protocol == "baseline-forward":
        pooled: dict = {}
        for s in stats:
            for d in s.depth_table or ():
                agents, correct = pooled.get(d.depth, (0, 0))
                pooled[d.depth] = (agents + d.agents, correct + d.correct)
        depth_table = tuple((d, a, c) for d, (a, c) in sorted(pooled.items()))
    median_first = None
    if spec.protocol == "baseline-silent":
        rounds = [s.first_threshold_round for s in stats if s.first_threshold_round is not None]
        if rounds:
            median_first = float(np.median(rounds))
    return CellReport(
        n=n,
        epsilon=eps,
        runs=runs,
        success_rate=success_rate,
        wilson_lo=wilson_lo,
        wilson_hi=wilson_hi,
        relaxed_success_rate=sum(s.relaxed for s in stats) / runs,
        mean_rounds=float(np.mean([s.rounds for s in stats])),
        mean_messages=float(np.mean([s.messages for s in stats])),
        mean_final_correct=float(np.mean([s.correct_fraction for s in stats])),
        all_activated_rate=(sum(activated) / len(activated)) if activated else None,
        symmetric_outcome_rate=symmetric,
        depth_table=depth_table,
        median_first_threshold=median_first,
    )


def _fit_scaling(spec, per_cell) -> ScalingFit | None:
    xs, ys, ns = [], [], []
    for c in per_cell:
        xs.append(math.log2(c.n) / (c.epsilon ** 2))
        ys.append(c.mean_rounds)
        ns.append(c.n)
    if len(set(xs)) < 2:
        return None
    x = np.asarray(xs)
    y = np.asarray(ys)
    cols = [x, np.ones_like(x)]
    if spec.protocol == "desync":
        cols.insert(1, np.log2(np.asarray(ns, dtype=float)) ** 2)
    a = np.column_stack(cols)
    coef, *_ = np.linalg.lstsq(a, y, rcond=None)
    fitted = a @ coef
    resid = float(np.max(np.abs(fitted - y) / np.maximum(y, 1e-12)))
    if spec.protocol == "desync":
        return ScalingFit(float(coef[0]), float(coef[2]), float(coef[1]), resid)
    return ScalingFit(float(coef[0]), float(coef[1]), None, resid)


def _worker_count(n_tasks: int) -> int:
    env = os.environ.get("FLIPSIM_THREADS")
    workers = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(workers, n_tasks))


def run_experiment(spec: ExperimentSpec) -> ExperimentReport:
    """Execute every (n, epsilon) cell of the spec.

    Results are merged in (cell, run) index order, so the report does not
    depend on worker scheduling.
    """
    spec.validate()
    cells = [(n, e) for n in spec.n_grid for e in spec.epsilon_grid]
    tasks = [
        (spec, ci, ri, n, e)
        for ci, (n, e) in enumerate(cells)
        for ri in range(spec.runs_per_cell)
    ]
    workers = _worker_count(len(tasks))
    if workers > 1:
        import multiprocessing as mp

        method = "fork" if "fork" in mp.get_all_start_methods() else "spawn"
        with mp.get_context(method).Pool(workers) as pool:
            flat = pool.map(_execute_run, tasks, chunksize=max(1, len(tasks) // (4 * workers)))
    else:
        flat = [_execute_run(t) for t in tasks]
    per_cell = []
    for ci, (n, e) in enumerate(cells):
        stats = flat[ci * spec.runs_per_cell:(ci + 1) * spec.runs_per_cell]
        per_cell.append(_aggregate_cell(spec, n, e, stats))
    return ExperimentReport(
        schema_version=SCHEMA_VERSION,
        tool_version=__version__,
        spec_echo=spec,
        constants_used=spec.constants,
        per_cell=tuple(per_cell),
        scaling_fit=_fit_scaling(spec, per_cell),
    )


# ---------------------------------------------------------------------------
# persistence


def report_to_dict(report: ExperimentReport) -> dict:
    cells = []
    for c in report.per_cell:
        d = {
            "n": c.n,
            "epsilon": c.epsilon,
            "runs": c.runs,
            "successRate": c.success_rate,
            "wilsonLo": c.wilson_lo,
            "wilsonHi": c.wilson_hi,
            "relaxedSuccessRate": c.relaxed_success_rate,
            "meanRounds": c.mean_rounds,
            "meanMessages": c.mean_messages,
            "meanFinalCorrect": c.mean_final_correct,
            "allActivatedRate": c.all_activated_rate,
            "symmetricOutcomeRate": c.symmetric_outcome_rate,
        }
        if c.depth_table is not None:
            d["depthTable"] = [list(row) for row in c.depth_table]
        if c.median_first_threshold is not None:
            d["medianFirstThreshold"] = c.median_first_threshold
        cells.append(d)
    fit = None
    if report.scaling_fit is not None:
        fit = {
            "slope": report.scaling_fit.slope,
            "intercept": report.scaling_fit.intercept,
            "log2sqCoeff": report.scaling_fit.log2sq_coeff,
            "maxResidualRel": report.scaling_fit.max_residual_rel,
        }
    return {
        "schemaVersion": report.schema_version,
        "toolVersion": report.tool_version,
        "spec": report.spec_echo.to_dict(),
        "constantsUsed": {k: getattr(report.constants_used, v) for k, v in _CONSTANTS_KEYS.items()},
        "perCell": cells,
        "scalingFit": fit,
    }


def save_report(report: ExperimentReport, path) -> None:
    if not report.per_cell:
        raise ReportError("refusing to save a report with zero cells")
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(report_to_dict(report), fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as e:
        raise ReportError(f"cannot write report to {path}: {e}") from e


CSV_COLUMNS = (
    "n", "epsilon", "runs", "successRate", "wilsonLo", "wilsonHi",
    "meanRounds", "meanMessages", "symmetricOutcomeRate",
)


def report_to_csv(report: ExperimentReport, path) -> None:
    """Per-cell CSV; numbers are rendered with repr so the CSV and JSON
    encodings agree digit-for-digit."""
    if not report.per_cell:
        raise ReportError("refusing to save a report with zero cells")

    def render(v):
        return "" if v is None else repr(v) if isinstance(v, float) else str(v)

    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for c in report.per_cell:
                writer.writerow([
                    render(c.n), render(c.epsilon), render(c.runs),
                    render(c.success_rate), render(c.wilson_lo), render(c.wilson_hi),
                    render(c.mean_rounds), render(c.mean_messages),
                    render(c.symmetric_outcome_rate),
                ])
    except OSError as e:
        raise ReportError(f"cannot write CSV to {path}: {e}") from e


def save_spec(spec: ExperimentSpec, path) -> None:
    spec.validate()
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(spec.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_spec(path) -> ExperimentSpec:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as e:
        raise SpecParseError(f"cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise SpecParseError(f"{path}: line {e.lineno} column {e.colno}: {e.msg}") from e
    spec = ExperimentSpec.from_dict(raw, source=str(path))
    spec.validate()
    return spec
