"""Extrapolated two-block coordinate descent for NMF.

One outer iteration updates H with an NNLS solver warm-started at the
extrapolated ``H_y``, then W warm-started at ``W_y``, extrapolates both
blocks with a shared ``beta``, and restarts the extrapolated sequence from
the last accepted factors whenever the error goes up. ``beta`` itself is
adapted by :func:`update_beta`.

Three variants differ in where H is extrapolated (``hp``):

1. after the W update; ``H_y`` only warm-starts the next H solve,
2. right after its own update, and W is fitted against the extrapolated H,
3. as 2, followed by projection onto the nonnegative orthant.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import linalg
from .nnls import (
    DegenerateColumn,
    InnerLoopPolicy,
    NnlsProblem,
    active_set_solve,
    hals_solve,
)

__all__ = [
    "BetaSchedule",
    "CacheStale",
    "ExtrapolationState",
    "FactorPair",
    "InvalidInit",
    "IterationRecord",
    "NonFiniteIterate",
    "RunRecord",
    "SolverConfig",
    "ZeroDirection",
    "extrapolate",
    "fast_error",
    "initial_state",
    "optimal_beta_linesearch",
    "run",
    "step",
    "update_beta",
]


class CacheStale(ValueError):
    """The cached products were computed from a different H."""


class InvalidInit(ValueError):
    pass


class NonFiniteIterate(FloatingPointError):
    """An NNLS solve produced NaN/Inf."""


class ZeroDirection(ZeroDivisionError):
    pass


# -- beta scheduling ------------------------------------------------------------


@dataclass(frozen=True)
class BetaSchedule:
    beta: float = 0.5
    beta_bar: float = 1.0
    beta_prev: float = 0.5
    gamma: float = 1.1
    gamma_bar: float = 1.05
    eta: float = 1.5

    def __post_init__(self):
        if not 1.0 < self.gamma_bar < self.gamma < self.eta:
            raise ValueError(
                "need 1 < gamma_bar < gamma < eta, got "
                f"{self.gamma_bar}, {self.gamma}, {self.eta}"
            )
        if not 0.0 <= self.beta <= 1.0 or not 0.0 <= self.beta_bar <= 1.0:
            raise ValueError(f"beta={self.beta}, beta_bar={self.beta_bar} outside [0, 1]")

    @classmethod
    def start(cls, beta0: float, gamma: float, gamma_bar: float, eta: float) -> "BetaSchedule":
        return cls(beta0, 1.0, beta0, gamma, gamma_bar, eta)


def update_beta(schedule: BetaSchedule, error_decreased: bool) -> BetaSchedule:
    """Grow ``beta`` (capped by ``beta_bar``) on success, shrink it on failure.

    On success ``beta <- min(beta_bar, gamma * beta)`` and then
    ``beta_bar <- min(1, gamma_bar * beta_bar)``. On failure
    ``beta <- beta / eta`` and ``beta_bar`` falls back to the previous beta.
    """
    s = schedule
    if error_decreased:
        beta = min(s.beta_bar, s.gamma * s.beta)
        beta_bar = min(1.0, s.gamma_bar * s.beta_bar)
    else:
        beta = s.beta / s.eta
        beta_bar = s.beta_prev
    return replace(s, beta=beta, beta_bar=beta_bar, beta_prev=s.beta)


# -- primitives -----------------------------------------------------------------


def extrapolate(new: np.ndarray, old: np.ndarray, beta: float) -> np.ndarray:
    """``new + beta * (new - old)``; no projection."""
    if new.shape != old.shape:
        raise ValueError(f"shape mismatch {new.shape} vs {old.shape}")
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    if beta == 0:
        return new.copy()
    return new + beta * (new - old)


def fast_error(
    norm_x_sq: float,
    W: np.ndarray,
    cache: linalg.GramCache,
    H: np.ndarray | None = None,
) -> float:
    """``||X - W H||_F`` from cached ``X H^T`` and ``H H^T``.

    Uses ``||X||^2 - 2 <W, X H^T> + <W^T W, H H^T>`` which costs O(m r^2)
    and never forms ``W H``. Passing ``H`` checks the cache stamp.
    """
    if H is not None and cache.stamp != linalg.fingerprint(H):
        raise CacheStale("cache was built from a different H")
    sq = (
        norm_x_sq
        - 2.0 * linalg.frob_inner(W, cache.cross)
        + linalg.frob_inner(linalg.gram(W), cache.gram)
    )
    return math.sqrt(max(0.0, sq))


def optimal_beta_linesearch(X, W_n: np.ndarray, W: np.ndarray, H_y: np.ndarray) -> float:
    """Exact minimizer over beta of ``||X - (W_n + beta (W_n - W)) H_y||_F^2``.

    Diagnostic only; the solver never uses it.
    """
    D = (W_n - W) @ H_y
    denom = linalg.frob_norm_sq(D)
    if denom < 1e-30 * linalg.frob_norm_sq(X) or denom == 0.0:
        raise ZeroDirection("(W_n - W) H_y vanishes")
    R = X - W_n @ H_y
    R = np.asarray(R)
    return linalg.frob_inner(R, D) / denom


# -- configuration and records ----------------------------------------------------


@dataclass(frozen=True)
class SolverConfig:
    """Parameters of one algorithm variant.

    ``inner`` selects the NNLS solver for both blocks (``"exact"`` or
    ``"hals"``). ``literal_hp1`` fits W against the stale extrapolated
    ``H_y`` for ``hp=1`` (literal step order) instead of ``H_n``.
    """

    inner: str = "exact"
    hp: int = 1
    beta0: float = 0.5
    gamma: float = 1.1
    gamma_bar: float = 1.05
    eta: float = 1.5
    max_outer_iterations: int = 100
    max_seconds: float = math.inf
    extrapolation_enabled: bool = True
    literal_hp1: bool = False
    hals_alpha: float = 1.0
    hals_stall_fraction: float = 0.01
    reinit_seed: int = 0

    def __post_init__(self):
        if self.inner not in ("exact", "hals"):
            raise ValueError(f"inner must be 'exact' or 'hals', got {self.inner!r}")
        if self.hp not in (1, 2, 3):
            raise ValueError(f"hp must be 1, 2 or 3, got {self.hp}")
        if not 0.0 <= self.beta0 < 1.0:
            raise ValueError("beta0 must lie in [0, 1)")
        if self.max_outer_iterations < 0 or not self.max_seconds > 0:
            raise ValueError("budgets must be positive")

    @classmethod
    def e_anls(cls, hp: int = 1, **kw) -> "SolverConfig":
        return cls(**{"inner": "exact", "hp": hp, "gamma": 1.1, "gamma_bar": 1.05, **kw})

    @classmethod
    def e_ahals(cls, hp: int = 3, **kw) -> "SolverConfig":
        return cls(**{"inner": "hals", "hp": hp, "gamma": 1.01, "gamma_bar": 1.005, **kw})

    @classmethod
    def anls(cls, **kw) -> "SolverConfig":
        return cls.e_anls(**{"extrapolation_enabled": False, "beta0": 0.0, **kw})

    @classmethod
    def ahals(cls, **kw) -> "SolverConfig":
        return cls.e_ahals(**{"extrapolation_enabled": False, "beta0": 0.0, **kw})

    def schedule(self) -> BetaSchedule:
        beta0 = self.beta0 if self.extrapolation_enabled else 0.0
        return BetaSchedule.start(beta0, self.gamma, self.gamma_bar, self.eta)


@dataclass
class FactorPair:
    W: np.ndarray
    H: np.ndarray


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    elapsed: float
    error: float
    rel_error: float
    beta: float
    restarted: bool


@dataclass
class RunRecord:
    """Telemetry of one run. ``history[0]`` is the initial error e(0)."""

    history: list[IterationRecord]
    factors: FactorPair
    norm_x: float
    config: SolverConfig | None = None

    @property
    def iterations(self) -> list[IterationRecord]:
        return self.history[1:]

    @property
    def errors(self) -> np.ndarray:
        return np.array([h.error for h in self.history])

    @property
    def rel_errors(self) -> np.ndarray:
        return np.array([h.rel_error for h in self.history])

    @property
    def final_rel_error(self) -> float:
        return self.history[-1].rel_error


@dataclass
class ExtrapolationState:
    W: np.ndarray
    H: np.ndarray
    W_y: np.ndarray
    H_y: np.ndarray
    W_n: np.ndarray
    H_n: np.ndarray
    err_prev: float
    schedule: BetaSchedule
    norm_x_sq: float
    restarted: bool = False
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))


# -- the iteration -------------------------------------------------------------------


def _check_finite(A: np.ndarray, what: str):
    if not np.all(np.isfinite(A)):
        raise NonFiniteIterate(f"{what} contains non-finite values")


def _solve_block(X, fixed, warm, config, rng, transposed, also_reseed=()):
    """Solve for the free factor given ``fixed`` and return ``(free, cache)``.

    Not transposed: ``fixed`` is W (m x r), the unknown is H (r x n).
    Transposed: ``fixed`` is H (r x n), the unknown is W (m x r); the cache
    holds ``X H^T`` and ``H H^T`` for the error evaluation. A numerically
    zero component of ``fixed`` is refilled with uniform [0, 1) entries
    (in ``fixed`` and in every array of ``also_reseed``) and the solve retried.
    """
    while True:
        if transposed:
            cache = linalg.gram_cache_for_h(fixed, X, stamp=False)
            problem = NnlsProblem(cache.gram, cache.cross.T)
            warm_t = warm.T
        else:
            problem = NnlsProblem(linalg.gram(fixed), linalg.cross_wx(fixed, X))
            cache = None
            warm_t = warm
        try:
            if config.inner == "exact":
                sol = active_set_solve(problem, warm_t)
            else:
                ncols = problem.rhs_count
                nnz = X.nnz if linalg.is_sparse(X) else X.shape[0] * X.shape[1]
                policy = InnerLoopPolicy.for_problem(
                    nnz, problem.rank, ncols, config.hals_alpha, config.hals_stall_fraction
                )
                sol = hals_solve(problem, warm_t, policy)
        except DegenerateColumn as exc:
            k = exc.index
            if transposed:
                fresh = rng.random(fixed.shape[1])
                fixed[k] = fresh
                for A in also_reseed:
                    A[k] = fresh
            else:
                fresh = rng.random(fixed.shape[0])
                fixed[:, k] = fresh
                for A in also_reseed:
                    A[:, k] = fresh
            continue
        free = sol.T.copy() if transposed else sol
        return free, cache


def initial_state(X, W0, H0, config: SolverConfig) -> ExtrapolationState:
    """Validate the initialization and compute e(0) from a fresh cache."""
    W0 = np.array(W0, dtype=np.float64)
    H0 = np.array(H0, dtype=np.float64)
    for name, A in (("W0", W0), ("H0", H0)):
        if A.ndim != 2 or not np.all(np.isfinite(A)) or np.any(A < 0):
            raise InvalidInit(f"{name} must be a finite nonnegative matrix")
    m, n = X.shape
    if W0.shape[0] != m or H0.shape[1] != n or W0.shape[1] != H0.shape[0]:
        raise InvalidInit(f"shapes W0 {W0.shape}, H0 {H0.shape} do not fit X {X.shape}")
    if W0.shape[1] < 1:
        raise InvalidInit("rank must be >= 1")
    norm_x_sq = linalg.frob_norm_sq(X)
    cache = linalg.gram_cache_for_h(H0, X, stamp=False)
    e0 = fast_error(norm_x_sq, W0, cache)
    return ExtrapolationState(
        W=W0,
        H=H0,
        W_y=W0.copy(),
        H_y=H0.copy(),
        W_n=W0.copy(),
        H_n=H0.copy(),
        err_prev=e0,
        schedule=config.schedule(),
        norm_x_sq=norm_x_sq,
        rng=np.random.default_rng(config.reinit_seed),
    )


def step(X, state: ExtrapolationState, config: SolverConfig) -> tuple[ExtrapolationState, float, bool]:
    """One outer iteration; mutates and returns ``state`` with ``(e(k), restarted)``."""
    beta = state.schedule.beta
    hp = config.hp

    # H update from the extrapolated W
    W_fixed = state.W_y.copy()
    H_n, _ = _solve_block(X, W_fixed, state.H_y, config, state.rng, transposed=False)
    _check_finite(H_n, "H update")

    if hp >= 2:
        H_y = extrapolate(H_n, state.H, beta)
        if hp == 3:
            np.maximum(H_y, 0.0, out=H_y)
        target = H_y
    elif config.literal_hp1:
        target = state.H_y.copy()
    else:
        target = H_n

    # W update; its cache also serves the error evaluation
    reseed = (H_n,) if target is not H_n else ()
    W_n, cache = _solve_block(
        X, target, state.W_y, config, state.rng, transposed=True, also_reseed=reseed
    )
    _check_finite(W_n, "W update")
    W_y = extrapolate(W_n, state.W, beta)
    if hp == 1:
        H_y = extrapolate(H_n, state.H, beta)

    err = fast_error(state.norm_x_sq, W_n, cache)
    restarted = err > state.err_prev
    state.W_n, state.H_n = W_n, H_n
    if restarted:
        state.W_y = state.W.copy()
        state.H_y = state.H.copy()
    else:
        state.W, state.H = W_n, H_n
        state.W_y, state.H_y = W_y, H_y
    state.schedule = update_beta(state.schedule, not restarted)
    state.err_prev = err
    state.restarted = restarted
    return state, err, restarted


def run(X, W0, H0, config: SolverConfig) -> RunRecord:
    """Run extrapolated ANLS / A-HALS from ``(W0, H0)``.

    Stops after ``config.max_outer_iterations`` iterations or once
    ``config.max_seconds`` have elapsed (checked between iterations).
    The returned factors are the last accepted pair and are always
    nonnegative.
    """
    t0 = time.perf_counter()
    state = initial_state(X, W0, H0, config)
    norm_x = math.sqrt(state.norm_x_sq)
    denom = norm_x if norm_x > 0 else 1.0

    def now():
        return time.perf_counter() - t0

    history = [
        IterationRecord(0, now(), state.err_prev, state.err_prev / denom, state.schedule.beta, False)
    ]
    for k in range(1, config.max_outer_iterations + 1):
        if history[-1].elapsed >= config.max_seconds:
            break
        beta_used = state.schedule.beta
        state, err, restarted = step(X, state, config)
        t = now()
        if t <= history[-1].elapsed:
            t = math.nextafter(history[-1].elapsed, math.inf)
        history.append(IterationRecord(k, t, err, err / denom, beta_used, restarted))
    return RunRecord(history, FactorPair(state.W, state.H), norm_x, config)
