"""Generational coordinate-descent tuning of the metric parameters.

Each generation sweeps every tunable once over a grid of trial values,
committing the best value before moving to the next parameter.  A model's
evolution stops when a generation fails to improve on the previous one (or
a hard cap is reached); the process repeats for all four decay shapes and
the best-scoring shape wins.  A seeded split supports cross-validated
optimisation with a held-out test half.
"""

from __future__ import annotations

import json
import math
import random
import warnings
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .evaluation import (
    AverageRow,
    CriticalValueTable,
    EvalReport,
    GroundTruth,
    evaluate,
)
from .metric import DECAY_KINDS, DEFAULT_COMMUTATIVE, DEFAULT_PARAMS, MetricParams, validate_field
from .search import DocumentRecord, Query, batch_search

ObjectiveFn = Callable[[MetricParams], tuple[float, AverageRow]]

DEFAULT_GENERATION_CAP = 25
DEFAULT_TOLERANCE = 1e-9


@dataclass(frozen=True)
class GridRange:
    """Equal-increment trial values from min to max inclusive."""

    min: float
    max: float
    step: float

    def __post_init__(self) -> None:
        if self.step <= 0:
            raise ValueError(f"step must be > 0, got {self.step}")
        if self.min > self.max:
            raise ValueError(f"empty range: min {self.min} > max {self.max}")

    def values(self) -> tuple[float, ...]:
        count = int(math.floor((self.max - self.min) / self.step + 1e-9)) + 1
        return tuple(round(self.min + i * self.step, 10) for i in range(count))


@dataclass(frozen=True)
class ParamSpace:
    """Sweepable parameters in sweep order, each with its trial grid."""

    order: tuple[str, ...]
    ranges: Mapping[str, GridRange]

    def __post_init__(self) -> None:
        if len(set(self.order)) != len(self.order):
            raise ValueError("parameter space repeats a parameter name")
        for name in self.order:
            if name not in self.ranges:
                raise ValueError(f"no range given for swept parameter {name!r}")
            for value in self.ranges[name].values():
                validate_field(name, value)
        extra = set(self.ranges) - set(self.order)
        if extra:
            raise ValueError(f"ranges given for unswept parameters: {sorted(extra)}")

    def trial_values(self, name: str) -> tuple[float, ...]:
        return self.ranges[name].values()

    def to_dict(self) -> dict:
        return {
            "order": list(self.order),
            "ranges": {
                name: {"min": r.min, "max": r.max, "step": r.step}
                for name, r in self.ranges.items()
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ParamSpace":
        ranges = {
            name: GridRange(spec["min"], spec["max"], spec["step"])
            for name, spec in data["ranges"].items()
        }
        return cls(tuple(data["order"]), ranges)


def load_param_space(path: str | Path) -> ParamSpace:
    return ParamSpace.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def default_param_space() -> ParamSpace:
    """Grid used when no space file is supplied; function parameters first."""
    return ParamSpace(
        order=(
            "omega",
            "mu",
            "zeta",
            "delta",
            "theta",
            "dp_rate",
            "cp_rate",
            "epsilon",
            "w_eq",
            "w_ineq",
            "w_expr",
        ),
        ranges={
            "omega": GridRange(1.5, 5.0, 0.5),
            "mu": GridRange(0.1, 0.9, 0.1),
            "zeta": GridRange(0.0, 0.9, 0.1),
            "delta": GridRange(0.0, 0.9, 0.1),
            "theta": GridRange(0.0, 0.9, 0.1),
            "dp_rate": GridRange(0.1, 0.9, 0.1),
            "cp_rate": GridRange(0.1, 0.9, 0.1),
            "epsilon": GridRange(0.05, 0.05, 1.0),
            "w_eq": GridRange(1.0, 2.0, 0.25),
            "w_ineq": GridRange(1.0, 1.5, 0.25),
            "w_expr": GridRange(1.0, 1.0, 1.0),
        },
    )


def default_seed_params(space: ParamSpace, decay_model: str = "exponential") -> MetricParams:
    """Every swept parameter at its first trial value; a deliberately plain start."""
    values = DEFAULT_PARAMS.to_dict()
    values["decay_model"] = decay_model
    for name in space.order:
        values[name] = space.trial_values(name)[0]
    return MetricParams.from_dict(values)


@dataclass(frozen=True)
class ObjectiveWeights:
    """Relative weights of the four averaged performance metrics."""

    overall_recall: float = 1.0
    top10_recall: float = 1.0
    rho: float = 1.0
    tau: float = 1.0

    def __post_init__(self) -> None:
        parts = (self.overall_recall, self.top10_recall, self.rho, self.tau)
        if any(w < 0 or not math.isfinite(w) for w in parts):
            raise ValueError("objective weights must be finite and >= 0")
        if sum(parts) <= 0:
            raise ValueError("objective weights must not all be zero")

    @classmethod
    def from_dict(cls, data: Mapping[str, float]) -> "ObjectiveWeights":
        return cls(**dict(data))

    def to_dict(self) -> dict:
        return {
            "overall_recall": self.overall_recall,
            "top10_recall": self.top10_recall,
            "rho": self.rho,
            "tau": self.tau,
        }


def objective(report: EvalReport, weights: ObjectiveWeights) -> float:
    """Scalar score in [0, 1]: weighted mean of recalls and rescaled correlations."""
    avg = report.averages
    parts = (
        avg.overall_recall,
        avg.top10_recall,
        (avg.rho + 1.0) / 2.0,
        (avg.tau + 1.0) / 2.0,
    )
    ws = (weights.overall_recall, weights.top10_recall, weights.rho, weights.tau)
    return sum(w * x for w, x in zip(ws, parts)) / sum(ws)


@dataclass(frozen=True)
class SearchObjective:
    """Objective of one parameter set: run all queries, evaluate, scalarise.

    ``observer``, when set, receives the tuple of query ids on every
    evaluation; the cross-validation harness uses it to prove that held-out
    queries never feed a training decision.
    """

    corpus: Sequence[DocumentRecord]
    queries: Sequence[Query]
    truths: Sequence[GroundTruth]
    weights: ObjectiveWeights
    commutative: frozenset[tuple[str, str]] = DEFAULT_COMMUTATIVE
    table: CriticalValueTable | None = None
    observer: Callable[[tuple[str, ...]], None] | None = None

    def __post_init__(self) -> None:
        truth_ids = {t.query_id for t in self.truths}
        missing = sorted(q.query_id for q in self.queries if q.query_id not in truth_ids)
        if missing:
            raise ValueError(f"queries without ground truth: {', '.join(missing)}")

    def __call__(self, params: MetricParams) -> tuple[float, AverageRow]:
        if self.observer is not None:
            self.observer(tuple(q.query_id for q in self.queries))
        sizes = {t.query_id: len(t.ranked_ids) for t in self.truths}
        hitlists = batch_search(self.queries, self.corpus, params, sizes, self.commutative)
        report = evaluate(hitlists, self.truths, self.table)
        return objective(report, self.weights), report.averages


@dataclass(frozen=True)
class SweepStep:
    param: str
    value: float
    objective: float


@dataclass(frozen=True)
class GenerationRecord:
    generation: int
    params: MetricParams
    objective: float
    averages: AverageRow
    sweeps: tuple[SweepStep, ...]


@dataclass(frozen=True)
class OptimizationRun:
    model: str
    generations: tuple[GenerationRecord, ...]
    converged: bool

    @property
    def final(self) -> GenerationRecord:
        return self.generations[-1]

    @property
    def final_params(self) -> MetricParams:
        return self.final.params

    @property
    def final_objective(self) -> float:
        return self.final.objective

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "converged": self.converged,
            "generations": [
                {
                    "generation": g.generation,
                    "objective": g.objective,
                    "params": g.params.to_dict(),
                    "metrics": {
                        "overall_recall": g.averages.overall_recall,
                        "top10_recall": g.averages.top10_recall,
                        "rho": g.averages.rho,
                        "tau": g.averages.tau,
                    },
                    "sweeps": [
                        {"param": s.param, "value": s.value, "objective": s.objective}
                        for s in g.sweeps
                    ],
                }
                for g in self.generations
            ],
        }


def write_run_json(run: OptimizationRun, path: str | Path) -> None:
    Path(path).write_text(json.dumps(run.to_dict(), indent=2) + "\n", encoding="utf-8")


def sweep_parameter(
    param_name: str,
    space: ParamSpace,
    current: MetricParams,
    objective_fn: ObjectiveFn,
    incumbent: tuple[float, AverageRow] | None = None,
    pool=None,
) -> tuple[float, float, AverageRow]:
    """Try every trial value of one parameter, all others held fixed.

    Returns ``(best_value, best_objective, best_averages)``.  The incumbent
    value always competes (so a committed sweep can never regress) and ties
    go to the smallest value.  Trial values that violate a cross-parameter
    constraint under the current settings are skipped.
    """
    incumbent_value = getattr(current, param_name)
    candidates = sorted(set(space.trial_values(param_name)) | {incumbent_value})
    evaluations: dict[float, tuple[float, AverageRow]] = {}
    pending: list[tuple[float, MetricParams]] = []
    for value in candidates:
        if value == incumbent_value and incumbent is not None:
            evaluations[value] = incumbent
            continue
        try:
            trial_params = current.with_value(param_name, value)
        except ValueError:
            continue
        pending.append((value, trial_params))
    runner = pool.map if pool is not None else map
    for (value, _), outcome in zip(pending, runner(objective_fn, [p for _, p in pending])):
        evaluations[value] = outcome
    best_value = None
    best_obj = -math.inf
    best_avgs = None
    for value in candidates:
        if value not in evaluations:
            continue
        obj, avgs = evaluations[value]
        if obj > best_obj:
            best_value, best_obj, best_avgs = value, obj, avgs
    return best_value, best_obj, best_avgs


def run_generation(
    current: MetricParams,
    space: ParamSpace,
    objective_fn: ObjectiveFn,
    entering: tuple[float, AverageRow],
    pool=None,
) -> tuple[MetricParams, float, AverageRow, tuple[SweepStep, ...]]:
    """One coordinate-descent pass: sweep every parameter once, in order."""
    obj, avgs = entering
    sweeps = []
    for name in space.order:
        value, obj, avgs = sweep_parameter(name, space, current, objective_fn, (obj, avgs), pool)
        current = current.with_value(name, value)
        sweeps.append(SweepStep(name, value, obj))
    return current, obj, avgs, tuple(sweeps)


def optimize_model(
    model: str,
    space: ParamSpace,
    seed_params: MetricParams,
    objective_fn: ObjectiveFn,
    max_generations: int = DEFAULT_GENERATION_CAP,
    tol: float = DEFAULT_TOLERANCE,
    pool=None,
) -> OptimizationRun:
    """Evolve one decay model until a generation stops improving.

    Generation 0 records the seed evaluation.  From the second real
    generation on, an improvement of at most ``tol`` over the previous
    generation stops the evolution with ``converged=True``; hitting the cap
    instead leaves ``converged=False`` and emits a warning.
    """
    params = seed_params.with_value("decay_model", model)
    obj, avgs = objective_fn(params)
    generations = [GenerationRecord(0, params, obj, avgs, ())]
    converged = False
    for gen in range(1, max_generations + 1):
        params, obj, avgs, sweeps = run_generation(params, space, objective_fn, (obj, avgs), pool)
        generations.append(GenerationRecord(gen, params, obj, avgs, sweeps))
        if gen >= 2 and obj - generations[-2].objective <= tol:
            converged = True
            break
    if not converged:
        warnings.warn(
            f"decay model {model!r} did not converge within {max_generations} generations"
        )
    return OptimizationRun(model, tuple(generations), converged)


@dataclass(frozen=True)
class OptimizeAllResult:
    best_model: str
    best_params: MetricParams
    runs: dict[str, OptimizationRun]


def optimize_all(
    space: ParamSpace,
    seed_params: MetricParams,
    objective_fn: ObjectiveFn,
    max_generations: int = DEFAULT_GENERATION_CAP,
    tol: float = DEFAULT_TOLERANCE,
    pool=None,
) -> OptimizeAllResult:
    """Optimize every decay model and pick the winner (ties: earliest in order)."""
    runs = {}
    best_model = None
    best_obj = -math.inf
    for kind in DECAY_KINDS:
        run = optimize_model(kind, space, seed_params, objective_fn, max_generations, tol, pool)
        runs[kind] = run
        if run.final_objective > best_obj:
            best_model = kind
            best_obj = run.final_objective
    return OptimizeAllResult(best_model, runs[best_model].final_params, runs)


@dataclass(frozen=True)
class XValRow:
    model: str
    protocol: str
    overall_recall: float
    top10_recall: float
    rho: float
    tau: float


@dataclass(frozen=True)
class XValReport:
    rows: tuple[XValRow, ...]
    train_ids: tuple[str, ...]
    test_ids: tuple[str, ...]
    runs: dict = field(default_factory=dict, compare=False, repr=False)


def _notify(observer, phase: str, model: str, query_ids: tuple[str, ...]) -> None:
    if observer is not None:
        observer(phase, model, query_ids)


def cross_validate(
    corpus: Sequence[DocumentRecord],
    queries: Sequence[Query],
    truths: Sequence[GroundTruth],
    space: ParamSpace,
    weights: ObjectiveWeights,
    split_seed: int,
    seed_params: MetricParams | None = None,
    commutative: frozenset[tuple[str, str]] = DEFAULT_COMMUTATIVE,
    table: CriticalValueTable | None = None,
    max_generations: int = DEFAULT_GENERATION_CAP,
    tol: float = DEFAULT_TOLERANCE,
    observer: Callable[[str, str, tuple[str, ...]], None] | None = None,
) -> XValReport:
    """Optimize per model both on all queries and on a seeded half-split.

    The ``without_cv`` rows are trained and evaluated on the full query set;
    the ``with_cv`` rows are trained on the training half and evaluated on
    the held-out half (an odd query gives the training side the extra one).
    """
    if len(queries) < 2:
        raise ValueError("cross-validation needs at least 2 queries")
    if seed_params is None:
        seed_params = default_seed_params(space)
    ids = sorted(q.query_id for q in queries)
    rng = random.Random(split_seed)
    shuffled = list(ids)
    rng.shuffle(shuffled)
    n_train = (len(shuffled) + 1) // 2
    train_set = set(shuffled[:n_train])
    train_queries = [q for q in queries if q.query_id in train_set]
    test_queries = [q for q in queries if q.query_id not in train_set]
    truth_by_id = {t.query_id: t for t in truths}
    rows = []
    runs = {}
    for kind in DECAY_KINDS:
        full_obj = SearchObjective(
            corpus, queries, truths, weights, commutative, table,
            observer=partial(_notify, observer, "full", kind),
        )
        run_full = optimize_model(kind, space, seed_params, full_obj, max_generations, tol)
        avg_full = run_full.final.averages
        rows.append(
            XValRow(kind, "without_cv", avg_full.overall_recall, avg_full.top10_recall,
                    avg_full.rho, avg_full.tau)
        )
        train_obj = SearchObjective(
            corpus, train_queries, [truth_by_id[q.query_id] for q in train_queries],
            weights, commutative, table,
            observer=partial(_notify, observer, "train", kind),
        )
        run_train = optimize_model(kind, space, seed_params, train_obj, max_generations, tol)
        test_obj = SearchObjective(
            corpus, test_queries, [truth_by_id[q.query_id] for q in test_queries],
            weights, commutative, table,
            observer=partial(_notify, observer, "test", kind),
        )
        _, avg_test = test_obj(run_train.final_params)
        rows.append(
            XValRow(kind, "with_cv", avg_test.overall_recall, avg_test.top10_recall,
                    avg_test.rho, avg_test.tau)
        )
        runs[kind] = {"without_cv": run_full, "with_cv": run_train}
    return XValReport(
        tuple(rows),
        tuple(sorted(train_set)),
        tuple(sorted(set(ids) - train_set)),
        runs,
    )


_XVAL_COLUMNS = (
    "model",
    "protocol",
    "ave_overall_recall",
    "ave_top10_recall",
    "ave_rho_correlation",
    "ave_tau_correlation",
)


def xval_to_csv_text(report: XValReport) -> str:
    lines = [",".join(_XVAL_COLUMNS)]
    for row in report.rows:
        lines.append(
            ",".join(
                [row.model, row.protocol]
                + [repr(v) for v in (row.overall_recall, row.top10_recall, row.rho, row.tau)]
            )
        )
    return "\n".join(lines) + "\n"


def write_xval_csv(report: XValReport, path: str | Path) -> None:
    Path(path).write_text(xval_to_csv_text(report), encoding="utf-8")


def write_xval_json(report: XValReport, path: str | Path) -> None:
    payload = {
        "train_queries": list(report.train_ids),
        "test_queries": list(report.test_ids),
        "rows": [
            {
                "model": r.model,
                "protocol": r.protocol,
                "ave_overall_recall": r.overall_recall,
                "ave_top10_recall": r.top10_recall,
                "ave_rho_correlation": r.rho,
                "ave_tau_correlation": r.tau,
            }
            for r in report.rows
        ],
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
