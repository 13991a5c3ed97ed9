"""Multi-seed benchmark protocol.

A suite runs every algorithm on every (dataset, initialization) pair, all
algorithms starting from the same initial factors. Results are summarized
with the shifted relative error

    E(k) = ||X - W(k) H(k)||_F / ||X||_F - e_min

where ``e_min`` is 0 for exact low-rank data and otherwise the lowest final
relative error reached by any run on that dataset, and with ranking vectors
counting how often each algorithm produced the i-th best final error.
"""

from __future__ import annotations

import json
import logging
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import data, engine
from .data import DatasetSpec
from .engine import RunRecord, SolverConfig

__all__ = [
    "ALGORITHMS",
    "CurvePoint",
    "MissingRun",
    "MixedDatasets",
    "RankingTable",
    "RunResult",
    "SuiteResult",
    "SuiteSpec",
    "algorithm",
    "average_curves",
    "compute_curves",
    "emit",
    "synthetic_suite",
    "rank_final_errors",
    "run_suite",
]

logger = logging.getLogger(__name__)

ALGORITHMS = {
    "anls": lambda **kw: SolverConfig.anls(**kw),
    "e-anls-hp1": lambda **kw: SolverConfig.e_anls(**{"hp": 1, **kw}),
    "e-anls-hp3": lambda **kw: SolverConfig.e_anls(**{"hp": 3, **kw}),
    "ahals": lambda **kw: SolverConfig.ahals(**kw),
    "e-ahals-hp1": lambda **kw: SolverConfig.e_ahals(**{"hp": 1, **kw}),
    "e-ahals-hp3": lambda **kw: SolverConfig.e_ahals(**{"hp": 3, **kw}),
}


def algorithm(name: str, **overrides) -> SolverConfig:
    """Named variant with its default parameters, optionally overridden."""
    try:
        factory = ALGORITHMS[name]
    except KeyError:
        raise ValueError(f"unknown algorithm {name!r}; choose from {sorted(ALGORITHMS)}") from None
    return factory(**overrides)


class MixedDatasets(ValueError):
    pass


class MissingRun(ValueError):
    pass


@dataclass
class SuiteSpec:
    datasets: list[DatasetSpec]
    algorithms: list[tuple[str, SolverConfig]]
    inits_per_dataset: int = 10
    max_iterations: int | None = None
    max_seconds: float | None = None
    base_seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if not self.datasets or not self.algorithms:
            raise ValueError("a suite needs at least one dataset and one algorithm")
        if self.inits_per_dataset < 1:
            raise ValueError("inits_per_dataset must be >= 1")
        names = [a for a, _ in self.algorithms]
        if len(set(names)) != len(names):
            raise ValueError("algorithm names must be unique")

    @property
    def timed(self) -> bool:
        return self.max_seconds is not None and math.isfinite(self.max_seconds)

    def run_seed(self, dataset_index: int, init_index: int) -> tuple[int, int, int]:
        return (self.base_seed, dataset_index, init_index)

    def describe(self) -> dict:
        return {
            "datasets": [asdict(d) for d in self.datasets],
            "algorithms": {name: asdict(cfg) for name, cfg in self.algorithms},
            "inits_per_dataset": self.inits_per_dataset,
            "max_iterations": self.max_iterations,
            "max_seconds": self.max_seconds,
            "base_seed": self.base_seed,
        }


def synthetic_suite(
    kind: str = "lowrank",
    n_datasets: int = 10,
    inits: int = 10,
    algorithms: Sequence[str] = tuple(ALGORITHMS),
    m: int = 200,
    n: int = 200,
    r: int = 20,
    max_iterations: int | None = 500,
    max_seconds: float | None = None,
    base_seed: int = 0,
) -> SuiteSpec:
    """Synthetic-data protocol: ``n_datasets`` matrices x ``inits`` initializations."""
    datasets = [DatasetSpec(kind, m, n, r, seed=base_seed * 1000 + d) for d in range(n_datasets)]
    return SuiteSpec(
        datasets,
        [(a, algorithm(a)) for a in algorithms],
        inits_per_dataset=inits,
        max_iterations=max_iterations,
        max_seconds=max_seconds,
        base_seed=base_seed,
    )


@dataclass
class RunResult:
    dataset_index: int
    dataset: str
    init_index: int
    algorithm: str
    record: RunRecord | None
    lowrank: bool = False
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.record is None

    @property
    def final_rel_error(self) -> float:
        return self.record.final_rel_error


@dataclass(frozen=True)
class CurvePoint:
    iteration: int
    elapsed: float
    E: float


@dataclass
class RankingTable:
    algorithms: list[str]
    mean: dict[str, float]
    std: dict[str, float]
    ranking: dict[str, list[int]]
    ties: list[tuple[int, int]] = field(default_factory=list)

    @property
    def runs(self) -> int:
        return sum(self.ranking[self.algorithms[0]]) if self.algorithms else 0


@dataclass
class SuiteResult:
    spec: SuiteSpec
    runs: list[RunResult]
    e_min: dict[int, float]
    ranking: RankingTable | None
    curves: dict[str, list[CurvePoint]]

    @property
    def failures(self) -> list[RunResult]:
        return [r for r in self.runs if r.failed]


# -- protocol -----------------------------------------------------------------------


def _execute(task):
    X, W0, H0, cfg, (d, label, i, name, lowrank) = task
    try:
        rec = engine.run(X, W0, H0, cfg)
        return RunResult(d, label, i, name, rec, lowrank)
    except Exception as exc:  # a failed run must not abort the suite
        logger.warning("run %s/%s/%s failed: %s", label, i, name, exc)
        return RunResult(d, label, i, name, None, lowrank, f"{type(exc).__name__}: {exc}")


def _budgeted(cfg: SolverConfig, spec: SuiteSpec, reinit_seed: int) -> SolverConfig:
    kw = {"reinit_seed": reinit_seed}
    if spec.max_iterations is not None:
        kw["max_outer_iterations"] = spec.max_iterations
    elif spec.timed:
        kw["max_outer_iterations"] = 2**62
    if spec.max_seconds is not None:
        kw["max_seconds"] = spec.max_seconds
    return replace(cfg, **kw)


def run_suite(spec: SuiteSpec) -> SuiteResult:
    """Run every (dataset, init, algorithm) triple and derive curves and rankings."""
    tasks = []
    for d, ds in enumerate(spec.datasets):
        X = data.load_dataset(ds)
        rank = ds.r
        for i in range(spec.inits_per_dataset):
            seed = spec.run_seed(d, i)
            W0, H0 = data.random_init(X.shape[0], X.shape[1], rank, seed)
            reinit = int(np.random.SeedSequence(list(seed)).generate_state(1)[0])
            for name, cfg in spec.algorithms:
                meta = (d, ds.label, i, name)
                tasks.append(
                    (X, W0, H0, _budgeted(cfg, spec, reinit), meta + (ds.kind == "lowrank",))
                )

    if spec.workers > 1:
        with ThreadPoolExecutor(spec.workers) as pool:
            runs = list(pool.map(_execute, tasks))
    else:
        runs = [_execute(t) for t in tasks]
    order = {name: k for k, (name, _) in enumerate(spec.algorithms)}
    runs.sort(key=lambda r: (r.dataset_index, r.init_index, order[r.algorithm]))

    e_min = {}
    for d in range(len(spec.datasets)):
        ok = [r for r in runs if r.dataset_index == d and not r.failed]
        if ok:
            e_min[d] = _e_min(ok, "zero" if ok[0].lowrank else "shared")

    names = [name for name, _ in spec.algorithms]
    groups = {}
    for r in runs:
        groups.setdefault((r.dataset_index, r.init_index), {})[r.algorithm] = r
    complete = {
        key: {a: g[a].final_rel_error for a in names}
        for key, g in groups.items()
        if all(a in g and not g[a].failed for a in names)
    }
    ranking = rank_final_errors(complete, names) if complete else None

    ok_runs = [r for r in runs if not r.failed]
    curves = average_curves(ok_runs, e_min, names)
    return SuiteResult(spec, runs, e_min, ranking, curves)


# -- curves -----------------------------------------------------------------------------


def _e_min(runs: Sequence[RunResult], policy) -> float:
    if isinstance(policy, (int, float)) and not isinstance(policy, bool):
        return float(policy)
    if policy == "zero":
        return 0.0
    if policy == "shared":
        return min(r.final_rel_error for r in runs)
    raise ValueError(f"unknown e_min policy {policy!r}")


def compute_curves(runs: Sequence[RunResult], e_min_policy="shared"):
    """E(k) series for runs on one dataset.

    Parameters
    ----------
    runs : sequence of RunResult
        Successful runs, all on the same dataset unless ``e_min_policy`` is
        ``"zero"`` or a number.
    e_min_policy : {"zero", "shared"} or float
        ``"zero"`` for exact low-rank data, ``"shared"`` for the lowest final
        relative error among ``runs``.

    Returns
    -------
    per_run : list of list of CurvePoint
    averaged : dict mapping algorithm name to its pointwise mean curve
    e_min : float
    """
    runs = list(runs)
    if not runs:
        raise ValueError("no runs")
    if e_min_policy == "shared" and len({r.dataset_index for r in runs}) > 1:
        raise MixedDatasets("a shared e_min needs all runs on the same dataset")
    e_min = _e_min(runs, e_min_policy)
    per_run = [
        [CurvePoint(h.iteration, h.elapsed, h.rel_error - e_min) for h in r.record.history]
        for r in runs
    ]
    averaged = average_curves(runs, {r.dataset_index: e_min for r in runs})
    return per_run, averaged, e_min


def average_curves(
    runs: Iterable[RunResult], e_min: dict[int, float], names: Sequence[str] | None = None
) -> dict[str, list[CurvePoint]]:
    """Pointwise mean of E(k) per algorithm; shorter runs are padded with their last value.

    The elapsed column of an averaged point is the mean elapsed time of the
    runs that actually reached that iteration.
    """
    by_algo: dict[str, list[RunResult]] = {}
    for r in runs:
        by_algo.setdefault(r.algorithm, []).append(r)
    names = list(names) if names is not None else sorted(by_algo)
    out = {}
    for name in names:
        rs = by_algo.get(name, [])
        if not rs:
            continue
        length = max(len(r.record.history) for r in rs)
        E = np.empty((len(rs), length))
        T = np.full((len(rs), length), np.nan)
        for j, r in enumerate(rs):
            vals = r.record.rel_errors - e_min[r.dataset_index]
            E[j, : vals.size] = vals
            E[j, vals.size :] = vals[-1]
            T[j, : vals.size] = [h.elapsed for h in r.record.history]
        meanE = E.mean(axis=0)
        meanT = np.nanmean(T, axis=0)
        out[name] = [CurvePoint(k, float(meanT[k]), float(meanE[k])) for k in range(length)]
    return out


# -- ranking ------------------------------------------------------------------------------


def rank_final_errors(groups: dict, algorithms: Sequence[str]) -> RankingTable:
    """Tally final-error ranks within each (dataset, init) group.

    ``groups`` maps a group key to ``{algorithm: final relative error}``.
    Ties go to the algorithm listed first in ``algorithms``; tied groups are
    listed in ``RankingTable.ties``.
    """
    algorithms = list(algorithms)
    p = len(algorithms)
    ranking = {a: [0] * p for a in algorithms}
    finals = {a: [] for a in algorithms}
    ties = []
    for key in sorted(groups):
        g = groups[key]
        missing = [a for a in algorithms if a not in g]
        if missing:
            raise MissingRun(f"group {key} lacks runs for {missing}")
        errs = [float(g[a]) for a in algorithms]
        order = sorted(range(p), key=lambda k: (errs[k], k))
        if len(set(errs)) < p:
            ties.append(key)
        for rank, k in enumerate(order):
            ranking[algorithms[k]][rank] += 1
        for a, e in zip(algorithms, errs):
            finals[a].append(e)
    mean = {a: float(np.mean(finals[a])) for a in algorithms}
    std = {
        a: float(np.std(finals[a], ddof=1)) if len(finals[a]) > 1 else 0.0 for a in algorithms
    }
    return RankingTable(algorithms, mean, std, ranking, ties)


# -- output -----------------------------------------------------------------------------------


def _safe(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "-", str(name))


def summary_dict(result: SuiteResult) -> dict:
    table = result.ranking
    algos = {}
    if table is not None:
        for a in table.algorithms:
            algos[a] = {"mean": table.mean[a], "std": table.std[a], "ranking": table.ranking[a]}
    return {
        "config": result.spec.describe(),
        "e_min": {result.spec.datasets[d].label: v for d, v in sorted(result.e_min.items())},
        "algorithms": algos,
        "ranked_runs": table.runs if table is not None else 0,
        "ties": [list(t) for t in table.ties] if table is not None else [],
        "failures": [
            {"dataset": r.dataset, "init": r.init_index, "algorithm": r.algorithm, "error": r.error}
            for r in result.failures
        ],
    }


def emit(result: SuiteResult, out_dir, format: str = "both", timings: bool | None = None):
    """Write suite outputs to ``out_dir`` and return the written paths.

    ``csv`` writes ``run_<dataset>_<algo>_<init>.csv`` per run and
    ``curve_<algo>.csv`` with the averaged E(k); ``json`` writes
    ``summary.json``. Wall-clock columns are only filled for time-budgeted
    suites (or when ``timings=True``), keeping iteration-budgeted output
    byte-reproducible.
    """
    if format not in ("csv", "json", "both"):
        raise ValueError(f"unknown format {format!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    timings = result.spec.timed if timings is None else timings
    written = []
    if format in ("csv", "both"):
        for r in result.runs:
            if r.failed:
                continue
            path = out / f"run_{_safe(r.dataset)}_{_safe(r.algorithm)}_{r.init_index}.csv"
            data.write_run_csv(path, r.record.history, result.e_min[r.dataset_index], timings)
            written.append(path)
        for name, pts in result.curves.items():
            path = out / f"curve_{_safe(name)}.csv"
            with open(path, "w", encoding="ascii", newline="\n") as fh:
                fh.write("iter,elapsed_s,E\n")
                for p in pts:
                    t = repr(p.elapsed) if timings else ""
                    fh.write(f"{p.iteration},{t},{p.E!r}\n")
            written.append(path)
    if format in ("json", "both"):
        path = out / "summary.json"
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            json.dump(summary_dict(result), fh, indent=2, sort_keys=True, default=_json_default)
            fh.write("\n")
        written.append(path)
    return written


def _json_default(o):
    if isinstance(o, float) and math.isinf(o):
        return None
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")
