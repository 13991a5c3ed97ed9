"""Nonnegative least squares subproblem solvers.

Both solvers work on the normal-equation form of

    min_{H >= 0} ||X - W H||_F^2

i.e. they only see ``gram = W^T W`` (r x r) and ``cross = W^T X`` (r x n).
The W-subproblem is solved through the same code by transposition
(``gram = H H^T``, ``cross = (X H^T)^T``).

- :func:`active_set_solve` is an exact block principal pivoting solver
  (Kim & Park, 2011) that groups columns sharing a passive set.
- :func:`hals_solve` runs several cyclic HALS sweeps over the rows of H,
  reusing the same ``gram``/``cross`` (accelerated HALS).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from . import linalg

__all__ = [
    "DegenerateColumn",
    "InnerLoopPolicy",
    "KktReport",
    "NoConvergence",
    "NnlsProblem",
    "SingularSubsystem",
    "active_set_solve",
    "hals_row_update",
    "hals_solve",
    "kkt_report",
]

logger = logging.getLogger(__name__)

ZERO_COLUMN_RTOL = 1e-16
SINGULAR_PIVOT_RTOL = 1e-12


class DegenerateColumn(ArithmeticError):
    """A column of the fixed factor is (numerically) zero, so ``gram[k, k]`` vanishes."""

    def __init__(self, index: int):
        super().__init__(f"degenerate column {index}: zero diagonal entry in gram")
        self.index = index


class SingularSubsystem(ArithmeticError):
    """Passive-set normal equations are numerically singular at ``index``."""

    def __init__(self, index: int):
        super().__init__(f"singular passive-set subsystem at variable {index}")
        self.index = index


class NoConvergence(RuntimeError):
    """Principal pivoting exceeded its exchange budget."""


@dataclass
class NnlsProblem:
    """Normal-equation data of ``min_{H>=0} ||X - W H||_F^2``.

    Parameters
    ----------
    gram : ndarray, shape (r, r)
        ``W^T W``.
    cross : ndarray, shape (r, n)
        ``W^T X``.
    scale : float, optional
        ``||X||_F^2``. Only used to report the absolute objective.
    """

    gram: np.ndarray
    cross: np.ndarray
    scale: float | None = None

    def __post_init__(self):
        self.gram = np.asarray(self.gram, dtype=np.float64)
        self.cross = np.atleast_2d(np.asarray(self.cross, dtype=np.float64))
        r = self.gram.shape[0]
        if self.gram.shape != (r, r) or self.cross.shape[0] != r:
            raise ValueError(
                f"inconsistent shapes gram {self.gram.shape}, cross {self.cross.shape}"
            )
        if not (np.all(np.isfinite(self.gram)) and np.all(np.isfinite(self.cross))):
            raise ValueError("gram and cross must be finite")

    @classmethod
    def from_factor(cls, W, X) -> "NnlsProblem":
        """Problem in H for fixed ``W`` (dense or sparse ``X``)."""
        return cls(linalg.gram(W), linalg.cross_wx(W, X), linalg.frob_norm_sq(X))

    @classmethod
    def from_cache(cls, cache: linalg.GramCache, scale: float | None = None) -> "NnlsProblem":
        return cls(cache.gram, cache.cross, scale)

    @property
    def rank(self) -> int:
        return self.gram.shape[0]

    @property
    def rhs_count(self) -> int:
        return self.cross.shape[1]

    def objective(self, H: np.ndarray) -> float:
        """``||X - W H||_F^2`` (without ``||X||^2`` when ``scale`` is unset)."""
        val = linalg.frob_inner(self.gram, linalg.gram(H.T)) - 2.0 * linalg.frob_inner(
            self.cross, H
        )
        return val + (self.scale or 0.0)

    def gradient(self, H: np.ndarray) -> np.ndarray:
        """Half the gradient, ``gram @ H - cross``."""
        return self.gram @ H - self.cross

    def kkt_tolerance(self) -> float:
        return 1e-10 * (1.0 + float(np.max(np.abs(self.cross), initial=0.0)))


@dataclass
class InnerLoopPolicy:
    """Inner sweep budget for :func:`hals_solve`.

    ``max_sweeps`` caps the number of cyclic sweeps; a sweep whose objective
    improvement is at most ``stall_fraction`` times the first one stops the
    loop early. ``sweep_budget_ratio`` is the ``alpha`` used by
    :meth:`for_problem` to derive ``max_sweeps``.
    """

    max_sweeps: int = 1
    sweep_budget_ratio: float = 0.5
    stall_fraction: float = 0.01

    def __post_init__(self):
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be >= 1")
        if self.sweep_budget_ratio <= 0:
            raise ValueError("sweep_budget_ratio must be positive")
        if not 0.0 < self.stall_fraction < 1.0:
            raise ValueError("stall_fraction must lie in (0, 1)")

    @classmethod
    def for_problem(
        cls, nnz: int, rank: int, ncols: int, alpha: float = 0.5, stall_fraction: float = 0.01
    ) -> "InnerLoopPolicy":
        """Budget ``1 + floor(alpha * rho)`` with ``rho`` = cost(cross) / cost(sweep).

        Computing the cross product costs ``nnz * rank`` flops and a sweep
        ``rank**2 * ncols``; for dense ``X`` with H the unknown this gives
        ``rho = m / rank``.
        """
        rho = nnz / (rank * ncols)
        return cls(1 + int(math.floor(alpha * rho)), alpha, stall_fraction)


@dataclass
class KktReport:
    primal_feasibility: float
    stationarity: float
    complementarity: float
    tolerance: float

    @property
    def satisfied(self) -> bool:
        return (
            self.primal_feasibility >= 0.0
            and self.stationarity <= self.tolerance
            and self.complementarity <= self.tolerance
        )


def kkt_report(problem: NnlsProblem, H: np.ndarray, tol: float | None = None) -> KktReport:
    """Residuals of the KKT conditions of the NNLS problem at ``H``.

    ``primal_feasibility`` is the smallest entry of H (negative means
    infeasible), ``stationarity`` the largest ``|grad|`` over positive
    entries and ``complementarity`` the largest ``max(0, -grad)`` over zero
    entries. The gradient is taken as ``gram @ H - cross``.
    """
    H = np.asarray(H, dtype=np.float64)
    g = problem.gradient(H)
    pos = H > 0
    zero = H == 0
    return KktReport(
        primal_feasibility=float(H.min()),
        stationarity=float(np.max(np.abs(g[pos]), initial=0.0)),
        complementarity=float(np.max(np.maximum(0.0, -g[zero]), initial=0.0)),
        tolerance=problem.kkt_tolerance() if tol is None else tol,
    )


# -- HALS ---------------------------------------------------------------------


def _zero_column_threshold(gram: np.ndarray) -> float:
    return ZERO_COLUMN_RTOL * float(np.max(np.diag(gram), initial=0.0))


def _row_step(G, C, H, k, threshold) -> float:
    """Update row ``k`` in place and return the exact objective decrease."""
    gkk = G[k, k]
    if not gkk > threshold:
        raise DegenerateColumn(k)
    old = H[k].copy()
    # zeroing row k first excludes it from the product exactly
    H[k] = 0.0
    target = (C[k] - G[k] @ H) / gkk
    new = np.maximum(target, 0.0, out=H[k])
    # f(old) - f(new) = gkk * (|d|^2 + 2 d.(new - target)), d = old - new
    d = old - new
    return float(gkk * (d @ d + 2.0 * (d @ (new - target))))


def hals_row_update(problem: NnlsProblem, H: np.ndarray, k: int) -> np.ndarray:
    """Optimal nonnegative update of row ``k`` of ``H`` in place.

    ``H[k] = max(0, (cross[k] - sum_{j != k} gram[k, j] H[j]) / gram[k, k])``
    using the current contents of the other rows.
    """
    _row_step(problem.gram, problem.cross, H, k, _zero_column_threshold(problem.gram))
    return H[k]


def hals_solve(
    problem: NnlsProblem, H0: np.ndarray, policy: InnerLoopPolicy | None = None
) -> np.ndarray:
    """Repeated cyclic HALS sweeps warm-started at ``H0``.

    ``H0`` may contain negative entries (an extrapolated point); each row
    becomes feasible as soon as it is updated. Sweeps stop after
    ``policy.max_sweeps`` or once a sweep improves the objective by at most
    ``policy.stall_fraction`` times the first sweep's improvement, measured
    from the projected warm start ``max(0, H0)``.

    If the first sweep ends above the projected warm start (possible only
    for infeasible ``H0``) the stall reference is taken from the next sweep.

    Raises
    ------
    DegenerateColumn
        When ``gram[k, k]`` is numerically zero.
    """
    policy = policy or InnerLoopPolicy()
    G, C = problem.gram, problem.cross
    H = np.array(H0, dtype=np.float64, order="C", copy=True)
    if H.shape != C.shape:
        raise ValueError(f"H0 shape {H.shape} does not match cross {C.shape}")
    if not np.all(np.isfinite(H)):
        raise ValueError("H0 must be finite")
    r = problem.rank
    threshold = _zero_column_threshold(G)

    # the first sweep's gain is counted from max(0, H0), not from H0
    offset = 0.0
    if np.any(H < 0):
        offset = problem.objective(H) - problem.objective(np.maximum(H, 0.0))
    reference = None
    for sweep in range(policy.max_sweeps):
        improvement = offset
        offset = 0.0
        for k in range(r):
            improvement += _row_step(G, C, H, k, threshold)
        if reference is None:
            if improvement > 0:
                reference = improvement
                continue
            if improvement == 0 or sweep > 0:
                break
            # first sweep ended above the projected warm start: keep going
            continue
        if improvement <= policy.stall_fraction * reference:
            break
    return H


# -- block principal pivoting ---------------------------------------------------


def _pivot_factor(Gff: np.ndarray, threshold: float):
    """Cholesky factor of ``Gff`` or raise SingularSubsystem with the local index."""
    try:
        c, lower = sla.cho_factor(Gff, lower=False, check_finite=False)
    except np.linalg.LinAlgError:
        c = None
    if c is not None:
        piv = np.diag(c) ** 2
        bad = np.flatnonzero(piv < threshold)
        if bad.size == 0:
            return c, lower
        raise SingularSubsystem(int(bad[0]))
    # locate the first failing pivot with an unpivoted elimination
    A = np.array(Gff, dtype=np.float64)
    for k in range(A.shape[0]):
        if A[k, k] < threshold:
            raise SingularSubsystem(k)
        A[k + 1 :, k + 1 :] -= np.outer(A[k + 1 :, k], A[k, k + 1 :]) / A[k, k]
    raise SingularSubsystem(A.shape[0] - 1)


def _solve_columns(G, C, passive, cols, X, Y, threshold):
    """Solve the passive-set normal equations for ``cols``, grouped by passive set.

    ``passive`` may be modified: variables whose subsystem is singular are
    moved to the active set.
    """
    if cols.size == 0:
        return
    r = G.shape[0]
    pending = [cols]
    while pending:
        cols = pending.pop()
        keys = np.packbits(passive[:, cols], axis=0)
        _, inverse = np.unique(keys, axis=1, return_inverse=True)
        inverse = np.ravel(inverse)
        for g in range(int(inverse.max()) + 1):
            gcols = cols[inverse == g]
            F = np.flatnonzero(passive[:, gcols[0]])
            Xg = np.zeros((r, gcols.size))
            if F.size:
                try:
                    fac = _pivot_factor(G[np.ix_(F, F)], threshold)
                except SingularSubsystem as exc:
                    bad = F[exc.index]
                    logger.debug("dropping variable %d from passive set: %s", bad, exc)
                    passive[bad, gcols] = False
                    pending.append(gcols)
                    continue
                Xg[F] = sla.cho_solve(fac, C[np.ix_(F, gcols)], check_finite=False)
            X[:, gcols] = Xg
            Y[:, gcols] = G @ Xg - C[:, gcols]
            Y[F[:, None], gcols] = 0.0


def active_set_solve(
    problem: NnlsProblem, H0: np.ndarray | None = None, max_exchanges: int | None = None
) -> np.ndarray:
    """Exact NNLS by block principal pivoting with column grouping.

    Parameters
    ----------
    problem : NnlsProblem
    H0 : ndarray, optional
        Warm start. Only its sign pattern matters: the initial passive set is
        ``max(0, H0) > 0``.
    max_exchanges : int, optional
        Budget of per-column pivoting steps, default ``3 * r * n``.

    Returns
    -------
    H : ndarray, shape (r, n)
        Nonnegative solution satisfying the KKT conditions to
        ``problem.kkt_tolerance()``.

    Notes
    -----
    Full exchange is used while the number of infeasible variables of a
    column keeps decreasing; after three consecutive non-decreasing counts
    the column falls back to exchanging only its largest infeasible index,
    which guarantees finite termination.
    """
    G, C = problem.gram, problem.cross
    r, n = C.shape
    if H0 is None:
        passive = np.zeros((r, n), dtype=bool)
    else:
        H0 = np.asarray(H0, dtype=np.float64)
        if H0.shape != (r, n):
            raise ValueError(f"H0 shape {H0.shape} does not match cross {(r, n)}")
        passive = H0 > 0
    budget = 3 * r * n if max_exchanges is None else max_exchanges
    threshold = SINGULAR_PIVOT_RTOL * float(np.max(np.diag(G), initial=0.0))
    ytol = 1e-13 * (1.0 + float(np.max(np.abs(C), initial=0.0)))

    X = np.zeros((r, n))
    Y = np.zeros((r, n))
    _solve_columns(G, C, passive, np.arange(n), X, Y, threshold)

    backup_patience = 3
    ninf = np.full(n, r + 1)
    patience = np.full(n, backup_patience)
    exchanges = 0
    while True:
        infeasible = (passive & (X < 0)) | (~passive & (Y < -ytol))
        count = infeasible.sum(axis=0)
        bad = np.flatnonzero(count > 0)
        if bad.size == 0:
            break
        exchanges += bad.size
        if exchanges > budget:
            raise NoConvergence(
                f"block principal pivoting exceeded {budget} exchanges "
                f"({bad.size} columns still infeasible)"
            )
        improved = count[bad] < ninf[bad]
        full = bad[improved]
        ninf[full] = count[full]
        patience[full] = backup_patience
        stalled = bad[~improved]
        keep_full = stalled[patience[stalled] >= 1]
        patience[keep_full] -= 1
        single = stalled[patience[stalled] < 1]

        flip_cols = np.concatenate([full, keep_full])
        passive[:, flip_cols] ^= infeasible[:, flip_cols]
        for j in single:
            i = np.flatnonzero(infeasible[:, j])[-1]
            passive[i, j] = not passive[i, j]
        _solve_columns(G, C, passive, bad, X, Y, threshold)

    np.maximum(X, 0.0, out=X)
    return X
