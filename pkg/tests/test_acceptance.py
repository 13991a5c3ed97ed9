"""Acceptance criteria, one test each.

Every test prints a single ``ACCEPTANCE <n> PASS|FAIL ...`` line (shown even
under output capture) and then asserts at the stated tolerance.
"""

import itertools
import math
import time

import numpy as np
import pytest
import scipy.sparse as sp

from extranmf import bench, data, linalg
from extranmf.engine import BetaSchedule, SolverConfig, fast_error, run, update_beta
from extranmf.nnls import InnerLoopPolicy, NnlsProblem, active_set_solve, hals_solve, kkt_report

HP3_RECORDS = {}


@pytest.fixture
def report(capsys):
    def _report(n, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {n} {'PASS' if ok else 'FAIL'} {detail}")
        assert ok, detail

    return _report


def _collect_hp3(tag, result):
    for r in result.runs:
        if r.record is not None and r.record.config.hp == 3:
            HP3_RECORDS[(tag, r.dataset, r.init_index, r.algorithm)] = r.record.errors


# -- 1 ---------------------------------------------------------------------------------


def test_1_cheap_error_matches_residual(report):
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst, checked = 0.0, 0
    for _ in range(200):
        m, n, r = rng.integers(1, 61), rng.integers(1, 61), rng.integers(1, 9)
        X = rng.random((m, n))
        W, H = rng.random((m, r)), rng.random((r, n))
        cache = linalg.gram_cache_for_h(H, X)
        fast = fast_error(linalg.frob_norm_sq(X), W, cache, H)
        direct = np.linalg.norm(X - W @ H)
        if direct > 1e-6 * np.linalg.norm(X):
            worst = max(worst, abs(fast - direct) / direct)
            checked += 1
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-10 and elapsed < 5 and checked > 0
    report(1, ok, f"max rel diff {worst:.2e} over {checked} instances, {elapsed:.2f}s")


# -- 2 ---------------------------------------------------------------------------------


def _enumerate(problem):
    G, C = problem.gram, problem.cross
    r, n = C.shape
    H = np.zeros((r, n))
    for j in range(n):
        best, best_x = 0.0, np.zeros(r)
        for size in range(1, r + 1):
            for S in map(list, itertools.combinations(range(r), size)):
                try:
                    x_s = np.linalg.solve(G[np.ix_(S, S)], C[S, j])
                except np.linalg.LinAlgError:
                    continue
                if np.any(x_s < 0):
                    continue
                x = np.zeros(r)
                x[S] = x_s
                f = x @ G @ x - 2 * C[:, j] @ x
                if f < best:
                    best, best_x = f, x
        H[:, j] = best_x
    return H


def test_2_exact_nnls(report):
    rng = np.random.default_rng(202)
    t0 = time.perf_counter()
    worst_obj = 0.0
    for _ in range(100):
        m, r, n = rng.integers(4, 12), rng.integers(1, 4), rng.integers(1, 6)
        p = NnlsProblem.from_factor(rng.standard_normal((m, r)), rng.standard_normal((m, n)))
        f, f_ref = p.objective(active_set_solve(p)), p.objective(_enumerate(p))
        worst_obj = max(worst_obj, abs(f - f_ref) / max(abs(f_ref), 1e-300))
    worst_kkt = 0.0
    for _ in range(100):
        r = rng.integers(1, 11)
        m, n = rng.integers(r, 40), rng.integers(1, 30)
        p = NnlsProblem.from_factor(rng.standard_normal((m, r)), rng.standard_normal((m, n)))
        rep = kkt_report(p, active_set_solve(p))
        scale = 1.0 + np.abs(p.cross).max()
        worst_kkt = max(worst_kkt, -rep.primal_feasibility, rep.stationarity / scale,
                        rep.complementarity / scale)
    elapsed = time.perf_counter() - t0
    ok = worst_obj <= 1e-9 and worst_kkt <= 1e-8 and elapsed < 10
    report(2, ok, f"objective rel diff {worst_obj:.2e}, scaled KKT {worst_kkt:.2e}, {elapsed:.2f}s")


# -- 3, 4: low-rank synthetic ----------------------------------------------------------


def _lowrank_pair(algorithms):
    spec = bench.synthetic_suite("lowrank", n_datasets=10, inits=1, algorithms=algorithms,
                                 max_iterations=500)
    t0 = time.perf_counter()
    res = bench.run_suite(spec)
    return res, time.perf_counter() - t0


def test_3_e_anls_lowrank(report):
    res, elapsed = _lowrank_pair(["anls", "e-anls-hp1"])
    final = {a: [r.final_rel_error for r in res.runs if r.algorithm == a] for a in ("anls", "e-anls-hp1")}
    med = float(np.median(final["e-anls-hp1"]))
    wins = sum(e < a for e, a in zip(final["e-anls-hp1"], final["anls"]))
    ok = not res.failures and med <= 1e-6 and wins >= 8 and elapsed < 300
    report(3, ok, f"E-ANLS median {med:.2e}, ANLS median {np.median(final['anls']):.2e}, "
                  f"wins {wins}/10, {elapsed:.0f}s")


def test_4_e_ahals_lowrank(report):
    res, elapsed = _lowrank_pair(["ahals", "e-ahals-hp3"])
    _collect_hp3(4, res)
    final = {a: [r.final_rel_error for r in res.runs if r.algorithm == a] for a in ("ahals", "e-ahals-hp3")}
    med_a, med_e = np.median(final["ahals"]), np.median(final["e-ahals-hp3"])
    ratio = med_a / med_e
    ok = not res.failures and ratio >= 10 and elapsed < 300
    report(4, ok, f"A-HALS median {med_a:.2e}, E-A-HALS median {med_e:.2e}, "
                  f"ratio {ratio:.1f}, {elapsed:.0f}s")


# -- 5 ---------------------------------------------------------------------------------


def test_5_fullrank_parity(report):
    spec = bench.synthetic_suite("fullrank", n_datasets=5, inits=4, max_iterations=300)
    t0 = time.perf_counter()
    res = bench.run_suite(spec)
    elapsed = time.perf_counter() - t0
    _collect_hp3(5, res)
    means = res.ranking.mean
    spread = max(means.values()) - min(means.values())
    ok = not res.failures and len(means) == 6 and spread <= 1e-3 and elapsed < 600
    report(5, ok, f"mean final errors {min(means.values()):.6f}..{max(means.values()):.6f}, "
                  f"spread {spread:.2e}, {elapsed:.0f}s")


# -- 6 ---------------------------------------------------------------------------------


def _baseline(X, W0, H0, inner, iters, cfg):
    """Plain alternating loop with direct residuals."""
    W, H = W0.copy(), H0.copy()
    errs = [np.linalg.norm(X - W @ H)]
    m, n = X.shape
    r = W.shape[1]
    for _ in range(iters):
        p = NnlsProblem(W.T @ W, W.T @ X)
        if inner == "exact":
            H = active_set_solve(p, H)
        else:
            H = hals_solve(p, H, InnerLoopPolicy.for_problem(
                m * n, r, n, cfg.hals_alpha, cfg.hals_stall_fraction))
        q = NnlsProblem(H @ H.T, H @ X.T)
        if inner == "exact":
            W = active_set_solve(q, W.T).T
        else:
            W = hals_solve(q, W.T, InnerLoopPolicy.for_problem(
                m * n, r, m, cfg.hals_alpha, cfg.hals_stall_fraction)).T
        errs.append(np.linalg.norm(X - W @ H))
    return np.array(errs)


def test_6_beta_zero_equivalence(report):
    t0 = time.perf_counter()
    worst = 0.0
    for inner, factory in (("exact", SolverConfig.e_anls), ("hals", SolverConfig.e_ahals)):
        for seed in range(5):
            rng = np.random.default_rng(600 + seed)
            m, n, r = rng.integers(15, 40), rng.integers(15, 40), rng.integers(2, 7)
            X = rng.random((m, n))
            W0, H0 = rng.random((m, r)), rng.random((r, n))
            for hp in (1, 2, 3):
                cfg = factory(hp=hp, beta0=0.0, max_outer_iterations=30)
                rec = run(X, W0, H0, cfg)
                if hp == 3:
                    HP3_RECORDS[(6, inner, seed)] = rec.errors
                ref = _baseline(X, W0, H0, inner, 30, cfg)
                worst = max(worst, float(np.max(np.abs(rec.errors - ref) / ref)))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and elapsed < 60
    report(6, ok, f"max rel diff {worst:.2e} over 2 solvers x 5 instances x 3 hp, {elapsed:.1f}s")


# -- 7 ---------------------------------------------------------------------------------


def test_7_hp3_no_consecutive_increases(report):
    missing = {4, 5, 6} - {k[0] for k in HP3_RECORDS}
    if missing:
        pytest.skip(f"hp=3 runs from criteria {sorted(missing)} not collected (run the full module)")
    bad = []
    for key, e in HP3_RECORDS.items():
        up = e[1:] > e[:-1]
        if np.any(up[1:] & up[:-1]):
            bad.append(key)
    report(7, not bad, f"{len(HP3_RECORDS)} hp=3 runs checked, {len(bad)} with two consecutive increases")


# -- 8 ---------------------------------------------------------------------------------


def test_8_beta_table(report):
    a = update_beta(BetaSchedule(0.5, 1.0, 0.5, 1.1, 1.05, 1.5), True)
    b = update_beta(BetaSchedule(0.6, 0.6, 0.6, 1.1, 1.05, 1.5), True)
    c = update_beta(BetaSchedule(0.6, 1.0, 0.5, 1.1, 1.05, 1.5), False)
    z = BetaSchedule(0.0, 1.0, 0.0, 1.1, 1.05, 1.5)
    zs = [update_beta(z, flag).beta for flag in (True, False)]
    for _ in range(10):
        z = update_beta(z, bool(_ % 2))
        zs.append(z.beta)
    checks = {
        "increase": (a.beta, a.beta_bar) == (0.55, 1.0),
        "capped": (b.beta, b.beta_bar) == (0.6, 0.63),
        # 0.6 / 1.5 is 0.39999999999999997 in binary; compare with the IEEE quotient
        "decrease": (c.beta, c.beta_bar) == (0.6 / 1.5, 0.5) and math.isclose(c.beta, 0.4, rel_tol=1e-15),
        "zero": all(v == 0.0 for v in zs),
    }
    report(8, all(checks.values()), " ".join(f"{k}={'ok' if v else 'bad'}" for k, v in checks.items()))


# -- 9 ---------------------------------------------------------------------------------


def test_9_determinism_and_io(report, tmp_path):
    spec = bench.synthetic_suite("lowrank", n_datasets=2, inits=2, m=30, n=25, r=4, max_iterations=25)
    a, b = tmp_path / "a", tmp_path / "b"
    bench.emit(bench.run_suite(spec), a)
    bench.emit(bench.run_suite(spec), b)
    names = sorted(p.name for p in a.iterdir())
    identical = names == sorted(p.name for p in b.iterdir()) and all(
        (a / f).read_bytes() == (b / f).read_bytes() for f in names)

    rng = np.random.default_rng(909)
    lossless = 0
    for k in range(20):
        m, n = rng.integers(1, 40), rng.integers(1, 40)
        S = sp.random(m, n, density=rng.uniform(0.05, 0.5), random_state=k, format="csr")
        S.data = rng.standard_normal(S.nnz) * 10.0 ** rng.integers(-12, 12, S.nnz)
        D = rng.standard_normal((m, n)) * 10.0 ** rng.integers(-12, 12, (m, n))
        data.write_matrix_market(tmp_path / "s.mtx", S)
        data.write_dense(tmp_path / "d.csv", D)
        S2, D2 = data.read_matrix_market(tmp_path / "s.mtx"), data.read_dense(tmp_path / "d.csv")
        if (S2.shape == S.shape and (S2 != S).nnz == 0 and np.array_equal(S2.toarray(), S.toarray())
                and np.array_equal(D2, D)):
            lossless += 1
    ok = identical and lossless == 20
    report(9, ok, f"{len(names)} files byte-identical={identical}, round-trips lossless {lossless}/20")
