import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from alrecycle.fem import OseenCoefficients, assemble_oseen
from alrecycle.fem import assembly as asm
from alrecycle.krylov import fgmres
from alrecycle.precond import AlPreconditioner, factor_velocity, schur_preconditioner_for
from alrecycle.recycler import (
    Decision,
    KrylovSettings,
    PreconditionerCache,
    RecyclePolicy,
    RecycleState,
    SolverFailure,
    StepStats,
    decide,
    solve_step,
    summarize,
)


def test_decide_boundary():
    st_ = RecycleState(baseline_iters=8)
    assert decide(RecyclePolicy(5), st_, 40) is Decision.KEEP
    assert decide(RecyclePolicy(5), st_, 41) is Decision.REFACTOR
    for kappa in (1, 2.5, 7):
        assert decide(RecyclePolicy(kappa), st_, 8) is Decision.KEEP


def test_decide_needs_baseline():
    with pytest.raises(ValueError):
        decide(RecyclePolicy(), RecycleState(), 3)


def test_policy_validation():
    with pytest.raises(ValueError):
        RecyclePolicy(kappa=0.5)


def drifting_systems(space, n, strength, seed=0):
    """``A_k = A_0 + (k/100) N(w1)``: the convection form is linear in the wind."""
    rng = np.random.default_rng(seed)
    w0 = space.interpolate(lambda x, y: (np.tanh(10 * y), 0.1 * np.sin(2 * np.pi * x) * np.cos(np.pi * y)))
    w1 = strength * space.interpolate(lambda x, y: (np.cos(2 * np.pi * x) * (0.25 - y**2), np.sin(2 * np.pi * x) * (0.25 - y**2)))
    out = []
    for k in range(n):
        c = OseenCoefficients(alpha=30.0, nu=1e-3, gamma=1.0, wind=w0 + (k / 100) * w1)
        out.append(assemble_oseen(space, c, rhs_u=rng.standard_normal(space.n_u)))
    return out


def new_cache(space, variant="full"):
    return PreconditionerCache(asm.assemble_pressure_mass(space),
                               asm.assemble_pressure_laplacian(space), variant=variant)


def run(space, systems, policy, settings=KrylovSettings(), paired=False):
    cache, state = new_cache(space), RecycleState()
    stats = []
    for k, s in enumerate(systems):
        _, stt = solve_step(s, cache, policy, state, settings, step=k, paired=paired)
        stats.append(stt)
    return stats, state


def test_cold_start(space8):
    s = drifting_systems(space8, 1, 0.0)[0]
    cache, state = new_cache(space8), RecycleState()
    x, stt = solve_step(s, cache, RecyclePolicy(), state)
    assert stt.was_factor_step and stt.t_factor > 0 and stt.t_linsol > 0
    assert state.baseline_iters == max(1, stt.iterations) and state.total_factorizations == 1
    assert np.linalg.norm(s.rhs - s.matvec(x)) <= 1e-7 * np.linalg.norm(s.rhs)


def test_frozen_matrix_factorizes_once(space8):
    base = drifting_systems(space8, 1, 0.0)[0]
    rng = np.random.default_rng(3)
    systems = []
    for _ in range(50):
        s = assemble_oseen(space8, base.coefficients, rhs_u=rng.standard_normal(space8.n_u))
        systems.append(s)
    stats, state = run(space8, systems, RecyclePolicy(5))
    assert state.total_factorizations == 1
    assert [s.was_factor_step for s in stats] == [True] + [False] * 49


def replay_oracle(space, systems, kappa, rel_tol=1e-8):
    """Independent step-by-step replay of the reuse rule."""
    mp = asm.assemble_pressure_mass(space)
    lp = asm.assemble_pressure_laplacian(space)
    factors, base, count, flags = None, None, 0, []

    def iters(s, f):
        p = AlPreconditioner(f, schur_preconditioner_for(s, Mp=mp, Lp=lp), s.B, s.index)
        return fgmres(s.operator(), p.operator(), s.rhs, rel_tol=rel_tol)[1].iterations

    for s in systems:
        refactor = factors is None
        if not refactor and iters(s, factors) > kappa * base:
            refactor = True
        if refactor:
            factors = factor_velocity(s.A)
            count += 1
            base = max(1, iters(s, factors))
        flags.append(refactor)
    return count, flags


def test_drift_matches_rule_replay(space8):
    systems = drifting_systems(space8, 25, strength=30.0)
    stats, state = run(space8, systems, RecyclePolicy(kappa=3.0))
    count, flags = replay_oracle(space8, systems, 3.0)
    assert 1 < count < len(systems)
    assert state.total_factorizations == count
    assert [s.was_factor_step for s in stats] == flags


def test_infinite_kappa_single_factorization(space8):
    systems = drifting_systems(space8, 15, strength=30.0)
    _, state = run(space8, systems, RecyclePolicy(kappa=math.inf))
    assert state.total_factorizations == 1


def test_kappa_one_refactors_whenever_stale_is_worse(space8):
    systems = drifting_systems(space8, 12, strength=200.0)
    stats, state = run(space8, systems, RecyclePolicy(kappa=1.0))
    for s in stats[1:]:
        if s.stale_iterations is not None:
            assert s.was_factor_step
    # strong drift: every stale solve was worse than the fresh baseline
    assert all(s.was_factor_step for s in stats)


def test_paired_fresh_never_worse(space8):
    systems = drifting_systems(space8, 15, strength=30.0)
    stats, _ = run(space8, systems, RecyclePolicy(kappa=3.0), paired=True)
    kept = [s for s in stats if not s.was_factor_step]
    assert kept
    for s in kept:
        assert s.paired_fresh_iterations <= s.iterations


def test_average_bounded_by_kappa(space8):
    kappa = 2.0
    systems = drifting_systems(space8, 25, strength=30.0)
    stats, _ = run(space8, systems, RecyclePolicy(kappa=kappa))
    row = summarize(stats)
    assert row.all_iters <= kappa * row.fresh_iters + 1e-12 + max(
        s.iterations for s in stats if s.was_factor_step)


def test_refactor_without_resolve(space8):
    systems = drifting_systems(space8, 20, strength=60.0)
    stats, state = run(space8, systems, RecyclePolicy(kappa=1.2, refactor_and_resolve=False))
    refac = [s for s in stats[1:] if s.was_factor_step]
    assert refac
    for s in refac:
        # the violating (stale) solve is the one recorded
        assert s.iterations == s.stale_iterations


def test_nonconvergence_with_fresh_factors_raises(space8):
    s = drifting_systems(space8, 1, 0.0)[0]
    with pytest.raises(SolverFailure):
        solve_step(s, new_cache(space8), RecyclePolicy(), RecycleState(),
                   KrylovSettings(rel_tol=1e-14, max_iter=1))


def test_solution_pressure_has_zero_weighted_mean(space8):
    s = drifting_systems(space8, 1, 0.0)[0]
    x, _ = solve_step(s, new_cache(space8), RecyclePolicy(), RecycleState())
    m1 = asm.assemble_pressure_mass(space8).to_dense().sum(axis=0)
    assert abs(m1 @ x[s.index.p]) < 1e-12 * np.abs(x[s.index.p]).max()


def test_modified_variant_cache(space8):
    systems = drifting_systems(space8, 4, strength=10.0)
    cache, state = new_cache(space8, "modified"), RecycleState()
    for k, s in enumerate(systems):
        solve_step(s, cache, RecyclePolicy(), state, KrylovSettings(rel_tol=1e-6, reference="rhs"),
                   step=k)
    assert cache.velocity.variant == "modified"
    assert len(cache.orderings) == 2


# summaries

def test_summarize_examples():
    one = summarize([StepStats(1, 7, True, t_factor=0.5, t_linsol=0.1)])
    assert one.percent_factor_steps == 100.0 and one.n_steps == 1
    stats = [StepStats(1, 4, True, t_factor=1.0, t_linsol=0.2, t_assemble=0.1)] + \
        [StepStats(k, 10 + k, False, t_linsol=0.3, t_assemble=0.1) for k in range(2, 11)]
    row = summarize(stats)
    assert row.percent_factor_steps == 10.0
    assert row.fresh_iters == 4.0 and row.fresh_t_factor == 1.0
    assert np.isclose(row.all_iters, (4 + sum(10 + k for k in range(2, 11))) / 10)
    assert np.isclose(row.all_t_factor, 0.1)
    assert np.isclose(row.all_t_linsol, (0.2 + 9 * 0.3) / 10)
    assert np.isclose(row.t_assemble, 0.1)


def test_summarize_empty():
    with pytest.raises(ValueError):
        summarize([])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 200), st.booleans(),
                          st.floats(0, 10), st.floats(0, 10)), min_size=1, max_size=60))
def test_property_summary_arithmetic(rows):
    stats = [StepStats(i, it, f, t_factor=tf if f else 0.0, t_linsol=tl)
             for i, (it, f, tf, tl) in enumerate(rows)]
    row = summarize(stats)
    n_f = sum(f for _, f, _, _ in rows)
    assert row.n_factor_steps == n_f
    assert np.isclose(row.percent_factor_steps, 100 * n_f / len(rows))
    assert np.isclose(row.all_iters, np.mean([r[0] for r in rows]))
    if n_f:
        assert np.isclose(row.fresh_iters, np.mean([r[0] for r in rows if r[1]]))
    else:
        assert math.isnan(row.fresh_iters)
