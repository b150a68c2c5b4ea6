"""Reuse of velocity-block factorizations across a sequence of Oseen solves.

Factors computed at step ``k`` serve the following steps as long as the
FGMRES iteration count stays within ``kappa`` times the count obtained with
the fresh factors. When a solve exceeds the bound the current matrix is
factorized and, by default, the step is solved again with the new factors.
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .krylov import fgmres
from .linalg import spmv
from .precond import AlPreconditioner, SchurPrecond, factor_velocity

__all__ = [
    "Decision",
    "KrylovSettings",
    "PreconditionerCache",
    "RecyclePolicy",
    "RecycleState",
    "SolverFailure",
    "StepStats",
    "SummaryRow",
    "decide",
    "solve_step",
    "summarize",
]


class SolverFailure(RuntimeError):
    def __init__(self, message, step=None, report=None):
        super().__init__(message)
        self.step = step
        self.report = report


class Decision(enum.Enum):
    KEEP = "keep"
    REFACTOR = "refactor"


@dataclass(frozen=True)
class RecyclePolicy:
    kappa: float = 5.0
    refactor_and_resolve: bool = True

    def __post_init__(self):
        if not self.kappa >= 1:
            raise ValueError(f"kappa must be >= 1, got {self.kappa}")


@dataclass
class RecycleState:
    baseline_iters: int | None = None
    age: int = 0
    total_factorizations: int = 0
    # factors rebuilt without a re-solve; the next solve sets the baseline
    baseline_pending: bool = False


@dataclass
class StepStats:
    step: int
    iterations: int
    was_factor_step: bool
    t_factor: float = 0.0
    t_linsol: float = 0.0
    t_assemble: float = 0.0
    residual: float = math.nan
    time: float = math.nan
    converged: bool = True
    stale_iterations: int | None = None
    paired_fresh_iterations: int | None = None


@dataclass(frozen=True)
class KrylovSettings:
    rel_tol: float = 1e-8
    max_iter: int = 200
    reference: str = "initial"
    inner_tol: float = 1e-2
    inner_max_iter: int = 50


def decide(policy: RecyclePolicy, state: RecycleState, iters_this_solve: int) -> Decision:
    if state.baseline_iters is None:
        raise ValueError("recycling state has no baseline; factorize first")
    if iters_this_solve <= policy.kappa * state.baseline_iters:
        return Decision.KEEP
    return Decision.REFACTOR


@dataclass
class PreconditionerCache:
    """Velocity factors plus what is needed to rebuild the Schur part."""

    Mp: object
    Lp: object
    variant: str = "full"
    pivot_tol: float = 0.1
    velocity: object = None
    orderings: dict = field(default_factory=dict)
    _schur: SchurPrecond | None = None
    _mp1: np.ndarray | None = None

    def factorize(self, system):
        t0 = time.perf_counter()
        self.velocity = factor_velocity(system.A, self.variant, system.index,
                                        orderings=self.orderings, pivot_tol=self.pivot_tol)
        return time.perf_counter() - t0

    def schur_for(self, system, settings: KrylovSettings) -> SchurPrecond:
        c = system.coefficients
        s = self._schur
        key = (c.nu, c.gamma, c.alpha, settings.inner_tol, settings.inner_max_iter)
        if s is None or (s.nu, s.gamma, s.alpha, s.inner_tol, s.inner_max_iter) != key:
            s = SchurPrecond(self.Mp, self.Lp, c.nu, c.gamma, c.alpha, C=system.C,
                             inner_tol=settings.inner_tol,
                             inner_max_iter=settings.inner_max_iter,
                             use_alpha_term=c.alpha > 0)
            self._schur = s
        return s

    def project_pressure(self, x, index):
        """Shift the pressure part of ``x`` to zero ``M_p``-weighted mean."""
        if self._mp1 is None:
            self._mp1 = spmv(self.Mp, np.ones(self.Mp.nrows))
        x = x.copy()
        p = x[index.p]
        x[index.p] = p - (self._mp1 @ p) / self._mp1.sum()
        return x

    def preconditioner(self, system, settings, velocity=None) -> AlPreconditioner:
        return AlPreconditioner(velocity or self.velocity, self.schur_for(system, settings),
                                system.B, system.index, BT=system.BT)


def _solve(system, precond, x0, settings):
    t0 = time.perf_counter()
    x, rep = fgmres(system.operator(), precond.operator(), system.rhs, x0=x0,
                    rel_tol=settings.rel_tol, max_iter=settings.max_iter,
                    reference=settings.reference)
    return x, rep, time.perf_counter() - t0


def solve_step(system, cache: PreconditionerCache, policy: RecyclePolicy,
               state: RecycleState, settings: KrylovSettings = KrylovSettings(),
               x0=None, step=0, paired=False):
    """Solve one system of the sequence, refactorizing when the rule demands.

    ``cache`` and ``state`` are updated in place. Returns ``(x, StepStats)``.
    With ``paired=True`` a step solved with stale factors is also solved with
    fresh factors of the current matrix (recorded as
    ``paired_fresh_iterations``, cache untouched).
    """
    stats = StepStats(step=step, iterations=0, was_factor_step=False)
    t_lin = 0.0
    t_fac = 0.0

    if cache.velocity is None:
        t_fac += cache.factorize(system)
        state.total_factorizations += 1
        state.baseline_pending = True
        stats.was_factor_step = True
        x, rep, dt = _solve(system, cache.preconditioner(system, settings), x0, settings)
        t_lin += dt
    else:
        x, rep, dt = _solve(system, cache.preconditioner(system, settings), x0, settings)
        t_lin += dt
        if not state.baseline_pending:
            state.age += 1
            if decide(policy, state, rep.iterations) is Decision.REFACTOR or not rep.converged:
                stats.stale_iterations = rep.iterations
                t_fac += cache.factorize(system)
                state.total_factorizations += 1
                stats.was_factor_step = True
                if policy.refactor_and_resolve or not rep.converged:
                    x, rep, dt = _solve(system, cache.preconditioner(system, settings), x0,
                                        settings)
                    t_lin += dt
                    state.baseline_pending = True
                else:
                    state.baseline_pending = True
                    state.age = 0
                    stats.iterations = rep.iterations
                    stats.converged = rep.converged
                    stats.residual = rep.final_relative_residual
                    stats.t_factor, stats.t_linsol = t_fac, t_lin
                    # the next solve uses these factors first and sets the baseline
                    if system.C is None:
                        x = cache.project_pressure(x, system.index)
                    return x, stats
            elif paired:
                fresh = factor_velocity(system.A, cache.variant, system.index,
                                        orderings=cache.orderings, pivot_tol=cache.pivot_tol)
                _, prep, _ = _solve(system, cache.preconditioner(system, settings, fresh), x0,
                                    settings)
                stats.paired_fresh_iterations = prep.iterations

    if state.baseline_pending:
        state.baseline_iters = max(1, rep.iterations)
        state.age = 0
        state.baseline_pending = False

    if not rep.converged:
        raise SolverFailure(
            f"FGMRES did not converge in {rep.iterations} iterations with fresh factors "
            f"(relative residual {rep.final_relative_residual:.3e})", step=step, report=rep)
    if system.C is None:
        x = cache.project_pressure(x, system.index)
    stats.iterations = rep.iterations
    stats.converged = rep.converged
    stats.residual = rep.final_relative_residual
    stats.t_factor = t_fac
    stats.t_linsol = t_lin
    return x, stats


@dataclass(frozen=True)
class SummaryRow:
    """Averages in the two column groups: fresh-LU steps and all steps."""

    n_steps: int
    n_factor_steps: int
    percent_factor_steps: float
    fresh_iters: float
    fresh_t_factor: float
    fresh_t_linsol: float
    all_iters: float
    all_t_factor: float
    all_t_linsol: float
    t_assemble: float

    FIELDS = ("n_steps", "n_factor_steps", "percent_factor_steps", "fresh_iters",
              "fresh_t_factor", "fresh_t_linsol", "all_iters", "all_t_factor",
              "all_t_linsol", "t_assemble")

    def as_dict(self):
        return {k: getattr(self, k) for k in self.FIELDS}


def summarize(stats) -> SummaryRow:
    stats = list(stats)
    if not stats:
        raise ValueError("cannot summarize an empty run")
    fresh = [s for s in stats if s.was_factor_step]

    def mean(xs):
        xs = list(xs)
        return float(np.mean(xs)) if xs else math.nan

    return SummaryRow(
        n_steps=len(stats),
        n_factor_steps=len(fresh),
        percent_factor_steps=100.0 * len(fresh) / len(stats),
        fresh_iters=mean(s.iterations for s in fresh),
        fresh_t_factor=mean(s.t_factor for s in fresh),
        fresh_t_linsol=mean(s.t_linsol for s in fresh),
        all_iters=mean(s.iterations for s in stats),
        all_t_factor=mean(s.t_factor for s in stats),
        all_t_linsol=mean(s.t_linsol for s in stats),
        t_assemble=mean(s.t_assemble for s in stats),
    )
