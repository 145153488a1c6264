"""Parameter optimization.

LBFGS with a strong Wolfe line search is the primary driver; a plain
gradient-descent loop is kept as a fallback.  A load-stepping curriculum
wraps either one, warm-starting each stage from the previous optimum.

The objective protocol: a callable ``phi -> (loss, gradient)`` for line
search probes, optionally with ``begin_iteration(phi)`` (called once per
accepted outer iteration; adaptive loss weighting hooks in there) and
``stats()`` returning the latest term values/weights for the history.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    LineSearchFailure,
    MaxProbesExceeded,
    NonFiniteObjective,
    NotDescentDirection,
)
from .losses import N_TERMS


class _PlainObjective:
    """Adapter giving bare (loss, grad) callables the full protocol."""

    def __init__(self, fn):
        self.fn = fn

    def __call__(self, phi):
        return self.fn(phi)

    def begin_iteration(self, phi):
        return self.fn(phi)

    def stats(self):
        return None


def as_objective(obj):
    if hasattr(obj, "begin_iteration"):
        return obj
    return _PlainObjective(obj)


@dataclass(frozen=True)
class LBFGSConfig:
    history: int = 20
    max_iters: int = 500
    grad_tol: float = 1e-8
    c1: float = 1e-4
    c2: float = 0.9
    max_probes: int = 30
    init_step: float = 1.0

    def __post_init__(self):
        if self.history < 1:
            raise ValueError(f"history size must be >= 1, got {self.history}")
        if not (0.0 < self.c1 < self.c2 < 1.0):
            raise ValueError(f"need 0 < c1 < c2 < 1, got c1={self.c1}, c2={self.c2}")
        if self.max_probes < 3:
            raise ValueError("line search needs at least 3 probes")


@dataclass(frozen=True)
class GDConfig:
    rate: float = 1e-3
    max_iters: int = 1000
    grad_tol: float = 1e-8

    def __post_init__(self):
        if self.rate <= 0.0:
            raise ValueError(f"learning rate must be positive, got {self.rate}")


@dataclass(frozen=True)
class CurriculumSchedule:
    """Strictly increasing load fractions ending at 1.0, with optional
    per-stage iteration budgets."""

    fractions: tuple = (1.0,)
    stage_iters: tuple = None

    def __post_init__(self):
        f = tuple(float(x) for x in self.fractions)
        object.__setattr__(self, "fractions", f)
        if not f or any(x <= 0.0 or x > 1.0 for x in f):
            raise ValueError(f"fractions must lie in (0, 1], got {f}")
        if any(b <= a for a, b in zip(f, f[1:])):
            raise ValueError(f"fractions must be strictly increasing, got {f}")
        if f[-1] != 1.0:
            raise ValueError(f"final fraction must be 1.0, got {f[-1]}")
        if self.stage_iters is not None:
            si = tuple(int(x) for x in self.stage_iters)
            object.__setattr__(self, "stage_iters", si)
            if len(si) != len(f):
                raise ValueError("one iteration budget per stage required")


@dataclass
class HistoryRow:
    stage: int
    iter: int
    total: float
    terms: np.ndarray
    weights: np.ndarray
    grad_norm: float
    step: float
    seconds: float
    n_evals: int


@dataclass
class TrainingHistory:
    """One row per accepted iteration, plus the termination status."""

    rows: list = field(default_factory=list)
    status: str = "running"
    wolfe: list = field(default_factory=list)  # (f0, dg0, alpha, f_new, dg_new)

    def append(self, row):
        self.rows.append(row)

    def extend(self, other):
        self.rows.extend(other.rows)
        self.wolfe.extend(other.wolfe)
        self.status = other.status

    def __len__(self):
        return len(self.rows)

    def totals(self):
        return np.array([r.total for r in self.rows])

    def final_total(self):
        return self.rows[-1].total if self.rows else np.nan


def _zeros_stats():
    return {"terms": np.zeros(N_TERMS), "weights": np.zeros(N_TERMS)}


def _make_row(stage, it, f, obj, grad_norm, step, seconds, n_evals):
    stats = obj.stats() or _zeros_stats()
    return HistoryRow(
        stage=stage,
        iter=it,
        total=float(f),
        terms=np.asarray(stats["terms"], dtype=np.float64).copy(),
        weights=np.asarray(stats["weights"], dtype=np.float64).copy(),
        grad_norm=float(grad_norm),
        step=float(step),
        seconds=float(seconds),
        n_evals=int(n_evals),
    )


def _cubic_step(lo, f_lo, dg_lo, hi, f_hi, dg_hi):
    """Minimizer of the cubic through both endpoint values and slopes."""
    d1 = dg_lo + dg_hi - 3.0 * (f_lo - f_hi) / (lo - hi)
    disc = d1 * d1 - dg_lo * dg_hi
    if disc < 0.0:
        return None
    d2 = np.sign(hi - lo) * np.sqrt(disc)
    denom = dg_hi - dg_lo + 2.0 * d2
    if denom == 0.0:
        return None
    alpha = hi - (hi - lo) * (dg_hi + d2 - d1) / denom
    return alpha if np.isfinite(alpha) else None


def strong_wolfe_search(evaluate, phi, direction, f0, g0, *, c1=1e-4, c2=0.9,
                        alpha0=1.0, max_probes=30):
    """Bracket-and-zoom line search enforcing both strong Wolfe conditions.

    ``evaluate(phi_trial) -> (f, g)``.  Non-finite probe values are treated
    as overly long steps and pulled back toward the last good point, so an
    objective that is NaN everywhere off the origin still fails cleanly
    once the probe budget is spent.

    Returns (alpha, f_alpha, g_alpha, n_evals).
    """
    d = np.asarray(direction, dtype=np.float64)
    dg0 = float(np.dot(g0, d))
    if dg0 >= 0.0:
        raise NotDescentDirection(f"directional derivative {dg0:.3e} >= 0")
    evals = 0
    # slack at floating-point resolution keeps steps acceptable once the
    # true decrease falls below what f can represent
    f_eps = 1e-15 * (1.0 + abs(f0))
    g_eps = 1e-14 * (1.0 + abs(dg0))

    def probe(alpha):
        nonlocal evals
        evals += 1
        f_a, g_a = evaluate(phi + alpha * d)
        dg_a = float(np.dot(g_a, d)) if np.isfinite(f_a) else np.nan
        return float(f_a), g_a, dg_a

    def zoom(lo, f_lo, dg_lo, hi, f_hi, dg_hi):
        while evals < max_probes:
            width = hi - lo
            alpha = _cubic_step(lo, f_lo, dg_lo, hi, f_hi, dg_hi)
            span = sorted((lo, hi))
            margin = 0.1 * abs(width)
            if alpha is None or not (span[0] + margin <= alpha <= span[1] - margin):
                alpha = 0.5 * (lo + hi)
            if abs(width) < 1e-14 * max(1.0, abs(lo)):
                raise MaxProbesExceeded("bracket collapsed without satisfying Wolfe")
            f_a, g_a, dg_a = probe(alpha)
            if not np.isfinite(f_a):
                hi, f_hi, dg_hi = alpha, np.inf, 0.0
                continue
            if f_a > f0 + c1 * alpha * dg0 + f_eps or f_a >= f_lo:
                hi, f_hi, dg_hi = alpha, f_a, dg_a
            else:
                if abs(dg_a) <= -c2 * dg0 + g_eps:
                    return alpha, f_a, g_a, evals
                if dg_a * (hi - lo) >= 0.0:
                    hi, f_hi, dg_hi = lo, f_lo, dg_lo
                lo, f_lo, dg_lo = alpha, f_a, dg_a
        raise MaxProbesExceeded(f"no Wolfe point within {max_probes} probes")

    alpha_prev, f_prev, dg_prev = 0.0, f0, dg0
    alpha = float(alpha0)
    first = True
    while evals < max_probes:
        f_a, g_a, dg_a = probe(alpha)
        if not np.isfinite(f_a):
            alpha = 0.5 * (alpha_prev + alpha)
            continue
        if f_a > f0 + c1 * alpha * dg0 + f_eps or (not first and f_a >= f_prev):
            return zoom(alpha_prev, f_prev, dg_prev, alpha, f_a, dg_a)
        if abs(dg_a) <= -c2 * dg0 + g_eps:
            return alpha, f_a, g_a, evals
        if dg_a >= 0.0:
            return zoom(alpha, f_a, dg_a, alpha_prev, f_prev, dg_prev)
        alpha_prev, f_prev, dg_prev = alpha, f_a, dg_a
        alpha *= 2.0
        first = False
    raise MaxProbesExceeded(f"no Wolfe point within {max_probes} probes")


def _two_loop(g, s_list, y_list, rho_list):
    d = -g
    if not s_list:
        return d
    alphas = []
    for s, y, rho in zip(reversed(s_list), reversed(y_list), reversed(rho_list)):
        a = rho * np.dot(s, d)
        alphas.append(a)
        d -= a * y
    gamma = np.dot(s_list[-1], y_list[-1]) / np.dot(y_list[-1], y_list[-1])
    d *= gamma
    for (s, y, rho), a in zip(zip(s_list, y_list, rho_list), reversed(alphas)):
        b = rho * np.dot(y, d)
        d += (a - b) * s
    return d


def lbfgs_minimize(objective, phi0, config=None, *, stage=0, iter_offset=0,
                   timing=False):
    """Limited-memory quasi-Newton minimization with strong Wolfe steps.

    Curvature pairs with s.y <= 1e-10 |s||y| are skipped.  A failed line
    search first retries once along steepest descent with cleared memory;
    a second failure terminates with the last accepted iterate retained.
    """
    config = config or LBFGSConfig()
    obj = as_objective(objective)
    phi = np.array(phi0, dtype=np.float64, copy=True)
    history = TrainingHistory()
    s_list, y_list, rho_list = [], [], []
    history.status = "max_iters"
    for it in range(1, config.max_iters + 1):
        tic = time.perf_counter() if timing else 0.0
        f, g = obj.begin_iteration(phi)
        n_evals = 1
        if not np.isfinite(f):
            raise NonFiniteObjective(f"objective is {f} at the current iterate")
        gnorm = float(np.linalg.norm(g))
        if gnorm <= config.grad_tol:
            history.status = "converged"
            break
        d = _two_loop(g, s_list, y_list, rho_list)
        dg = float(np.dot(d, g))
        if dg >= 0.0 or not np.isfinite(dg):
            s_list, y_list, rho_list = [], [], []
            d = -g
            dg = -gnorm * gnorm
        alpha0 = config.init_step / gnorm if it == 1 else config.init_step
        try:
            alpha, f_new, g_new, evals = strong_wolfe_search(
                obj, phi, d, f, g,
                c1=config.c1, c2=config.c2, alpha0=alpha0,
                max_probes=config.max_probes,
            )
        except LineSearchFailure:
            if s_list:
                # stale curvature is the usual culprit; restart once
                s_list, y_list, rho_list = [], [], []
                try:
                    alpha, f_new, g_new, evals = strong_wolfe_search(
                        obj, phi, -g, f, g,
                        c1=config.c1, c2=config.c2,
                        alpha0=config.init_step / gnorm,
                        max_probes=config.max_probes,
                    )
                    d = -g
                except LineSearchFailure:
                    history.status = "line_search_failure"
                    break
            else:
                history.status = "line_search_failure"
                break
        n_evals += evals
        s = alpha * d
        y = g_new - g
        sy = float(np.dot(s, y))
        if sy > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            s_list.append(s)
            y_list.append(y)
            rho_list.append(1.0 / sy)
            if len(s_list) > config.history:
                s_list.pop(0)
                y_list.pop(0)
                rho_list.pop(0)
        phi = phi + s
        seconds = (time.perf_counter() - tic) if timing else 0.0
        history.append(
            _make_row(stage, iter_offset + it, f_new, obj,
                      np.linalg.norm(g_new), alpha, seconds, n_evals)
        )
        history.wolfe.append((f, dg, alpha, f_new, float(np.dot(g_new, d))))
    return phi, history


def gd_step(phi, gradient, beta):
    """One explicit descent update phi - beta * gradient."""
    if beta <= 0.0:
        raise ValueError(f"step size must be positive, got {beta}")
    return np.asarray(phi, dtype=np.float64) - beta * np.asarray(gradient, dtype=np.float64)


def gd_minimize(objective, phi0, config=None, *, stage=0, iter_offset=0,
                timing=False):
    """Fixed-rate gradient descent fallback with the same history format."""
    config = config or GDConfig()
    obj = as_objective(objective)
    phi = np.array(phi0, dtype=np.float64, copy=True)
    history = TrainingHistory()
    history.status = "max_iters"
    for it in range(1, config.max_iters + 1):
        tic = time.perf_counter() if timing else 0.0
        f, g = obj.begin_iteration(phi)
        if not np.isfinite(f):
            raise NonFiniteObjective(f"objective is {f} at the current iterate")
        gnorm = float(np.linalg.norm(g))
        if gnorm <= config.grad_tol:
            history.status = "converged"
            break
        phi = gd_step(phi, g, config.rate)
        seconds = (time.perf_counter() - tic) if timing else 0.0
        history.append(
            _make_row(stage, iter_offset + it, f, obj, gnorm, config.rate,
                      seconds, 1)
        )
    return phi, history


def curriculum_train(problem, schedule, objective_factory, phi0, config,
                     *, minimize=lbfgs_minimize, timing=False):
    """Load-stepped training: scale all loads by each fraction in turn,
    warm-starting parameters between stages.

    ``objective_factory(problem_stage)`` builds a fresh objective (and
    fresh weighting statistics) for each scaled problem.
    """
    phi = np.array(phi0, dtype=np.float64, copy=True)
    history = TrainingHistory()
    offset = 0
    for k, fraction in enumerate(schedule.fractions):
        stage_problem = problem if fraction == 1.0 else problem.scaled(fraction)
        objective = objective_factory(stage_problem)
        stage_config = config
        if schedule.stage_iters is not None:
            stage_config = _with_max_iters(config, schedule.stage_iters[k])
        try:
            phi, stage_hist = minimize(
                objective, phi, stage_config,
                stage=k, iter_offset=offset, timing=timing,
            )
        except NonFiniteObjective as err:
            raise NonFiniteObjective(f"stage {k} (fraction {fraction}): {err}") from err
        history.extend(stage_hist)
        offset += len(stage_hist)
    return phi, history


def _with_max_iters(config, max_iters):
    if isinstance(config, GDConfig):
        return GDConfig(rate=config.rate, max_iters=max_iters, grad_tol=config.grad_tol)
    return LBFGSConfig(
        history=config.history,
        max_iters=max_iters,
        grad_tol=config.grad_tol,
        c1=config.c1,
        c2=config.c2,
        max_probes=config.max_probes,
        init_step=config.init_step,
    )
