"""Command line entry point: ``extranmf {gen,run,suite,convert}``.

The default output directory is taken from ``$EXTRANMF_OUT`` (falling back
to ``./extranmf-out``). The exit status is nonzero when any run failed.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import scipy.sparse as sp

from . import bench, data, engine

OUT_ENV = "EXTRANMF_OUT"


def default_out() -> str:
    return os.environ.get(OUT_ENV, "extranmf-out")


def _write_matrix(path, X):
    if str(path).endswith(".mtx"):
        data.write_matrix_market(path, X)
    else:
        data.write_dense(path, X.toarray() if sp.issparse(X) else X)


def _solver_overrides(args) -> dict:
    kw = {}
    for name in ("hp", "beta0", "gamma", "gamma_bar", "eta", "hals_alpha"):
        val = getattr(args, name, None)
        if val is not None:
            kw[name] = val
    if getattr(args, "literal_hp1", False):
        kw["literal_hp1"] = True
    return kw


def _add_solver_flags(p):
    g = p.add_argument_group("solver overrides")
    g.add_argument("--hp", type=int, choices=(1, 2, 3))
    g.add_argument("--beta0", type=float)
    g.add_argument("--gamma", type=float)
    g.add_argument("--gamma-bar", dest="gamma_bar", type=float)
    g.add_argument("--eta", type=float)
    g.add_argument("--hals-alpha", dest="hals_alpha", type=float)
    g.add_argument("--literal-hp1", action="store_true")


def _add_budget_flags(p):
    p.add_argument("--iters", type=int, help="outer iteration budget (default 500 unless --seconds)")
    p.add_argument("--seconds", type=float, help="wall-clock budget per run")


def _iterations(args):
    if args.iters is not None:
        return args.iters
    return None if args.seconds is not None else 500


def cmd_gen(args) -> int:
    if args.kind == "lowrank":
        X = data.gen_lowrank(args.m, args.n, args.rank, args.seed)
    else:
        X = data.gen_fullrank(args.m, args.n, args.seed)
    _write_matrix(args.output, X)
    print(f"wrote {args.kind} {X.shape[0]}x{X.shape[1]} to {args.output}")
    return 0


def cmd_convert(args) -> int:
    X = data.read_matrix(args.input)
    _write_matrix(args.output, X)
    print(f"converted {args.input} -> {args.output}")
    return 0


def cmd_run(args) -> int:
    X = data.read_matrix(args.data)
    m, n = X.shape
    W0, H0 = data.random_init(m, n, args.rank, args.seed)
    cfg = bench.algorithm(args.algo, **_solver_overrides(args))
    iters = _iterations(args)
    budget = {"max_outer_iterations": iters if iters is not None else 2**62}
    if args.seconds is not None:
        budget["max_seconds"] = args.seconds
    cfg = replace(cfg, **budget)
    rec = engine.run(X, W0, H0, cfg)
    out = Path(args.out or default_out())
    out.mkdir(parents=True, exist_ok=True)
    label = bench._safe(Path(args.data).stem)
    data.write_run_csv(out / f"run_{label}_{args.algo}_0.csv", rec.history, 0.0,
                       timings=args.seconds is not None or args.timings)
    data.write_dense(out / "W.csv", rec.factors.W)
    data.write_dense(out / "H.csv", rec.factors.H)
    print(f"{args.algo}: {len(rec.history) - 1} iterations, "
          f"final relative error {rec.final_rel_error:.6e}")
    return 0


def cmd_suite(args) -> int:
    algos = [a.strip() for a in args.algos.split(",") if a.strip()]
    overrides = _solver_overrides(args)
    if args.data:
        datasets = [
            data.DatasetSpec("file", path=p, r=args.rank) for p in args.data
        ]
    else:
        datasets = [
            data.DatasetSpec(args.kind, args.m, args.n, args.rank, seed=args.base_seed * 1000 + d)
            for d in range(args.datasets)
        ]
    spec = bench.SuiteSpec(
        datasets,
        [(a, bench.algorithm(a, **overrides)) for a in algos],
        inits_per_dataset=args.inits,
        max_iterations=_iterations(args),
        max_seconds=args.seconds,
        base_seed=args.base_seed,
        workers=args.workers,
    )
    result = bench.run_suite(spec)
    out = args.out or default_out()
    bench.emit(result, out, args.format, timings=True if args.timings else None)
    table = result.ranking
    if table is not None:
        width = max(len(a) for a in table.algorithms)
        for a in table.algorithms:
            print(f"{a:<{width}}  {table.mean[a]:.6e} +- {table.std[a]:.3e}  {tuple(table.ranking[a])}")
    for f in result.failures:
        print(f"FAILED {f.dataset} init {f.init_index} {f.algorithm}: {f.error}", file=sys.stderr)
    return 1 if result.failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="extranmf", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a synthetic matrix (.csv dense or .mtx sparse)")
    p.add_argument("kind", choices=("lowrank", "fullrank"))
    p.add_argument("output")
    p.add_argument("-m", type=int, default=200)
    p.add_argument("-n", type=int, default=200)
    p.add_argument("-r", "--rank", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("run", help="run one algorithm on a matrix file")
    p.add_argument("data")
    p.add_argument("--algo", default="e-anls-hp1", choices=sorted(bench.ALGORITHMS))
    p.add_argument("-r", "--rank", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--timings", action="store_true", help="fill elapsed_s")
    _add_budget_flags(p)
    _add_solver_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("suite", help="multi-dataset, multi-init comparison")
    p.add_argument("--kind", choices=("lowrank", "fullrank"), default="lowrank")
    p.add_argument("--data", nargs="+", help="matrix files instead of synthetic data")
    p.add_argument("--datasets", type=int, default=10)
    p.add_argument("--inits", type=int, default=10)
    p.add_argument("--algos", default=",".join(bench.ALGORITHMS))
    p.add_argument("-m", type=int, default=200)
    p.add_argument("-n", type=int, default=200)
    p.add_argument("-r", "--rank", type=int, default=20)
    p.add_argument("--base-seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--format", choices=("csv", "json", "both"), default="both")
    p.add_argument("--out")
    p.add_argument("--timings", action="store_true", help="fill elapsed_s columns")
    _add_budget_flags(p)
    _add_solver_flags(p)
    p.set_defaults(func=cmd_suite)

    p = sub.add_parser("convert", help="convert between .csv and .mtx")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_convert)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (data.ParseError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
