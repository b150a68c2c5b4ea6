"""Planar Kelvin-Helmholtz runs: initial layer, time loop, vorticity, output files."""

from __future__ import annotations

import csv
import os
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..fem import TaylorHoodSpace, build_mesh, build_oseen_system
from ..fem import assembly as asm
from ..krylov import LinearOperator, pcg
from ..linalg import spmv
from ..mmio import mm_write
from ..recycler import (
    KrylovSettings,
    PreconditionerCache,
    RecyclePolicy,
    RecycleState,
    SolverFailure,
    StepStats,
    SummaryRow,
    solve_step,
    summarize,
)
from .config import KhConfig

__all__ = [
    "FieldSnapshot",
    "KhRunFailure",
    "STATS_COLUMNS",
    "StatsWriter",
    "compute_vorticity",
    "emit_outputs",
    "initial_condition",
    "kinetic_energy",
    "read_stats",
    "run_simulation",
]

STATS_COLUMNS = ("step", "time", "iters", "factor_step", "t_assemble", "t_factor",
                 "t_linsol", "residual")


class KhRunFailure(RuntimeError):
    def __init__(self, message, step, dump_dir=None):
        super().__init__(message)
        self.step = step
        self.dump_dir = dump_dir


@dataclass(frozen=True, eq=False)
class FieldSnapshot:
    step: int
    time: float
    vorticity: np.ndarray   # vertex values
    velocity: np.ndarray    # velocity dof vector
    points: np.ndarray      # (n_vertices, 2) vertex coordinates


def _stream_function_parts(cfg: KhConfig, x, y):
    g = np.exp(-((y / cfg.delta0) ** 2))
    ca = cfg.aa * np.cos(cfg.ma * np.pi * x)
    cb = cfg.ab * np.cos(cfg.mb * np.pi * y)
    dpsi_dx = -g * cfg.aa * cfg.ma * np.pi * np.sin(cfg.ma * np.pi * x)
    dpsi_dy = (-2.0 * y / cfg.delta0**2) * g * (ca + cb) \
        - g * cfg.ab * cfg.mb * np.pi * np.sin(cfg.mb * np.pi * y)
    return dpsi_dx, dpsi_dy


def initial_velocity(cfg: KhConfig, x, y):
    """Shear layer ``tanh(2y/delta0) e_x`` plus ``cn curl psi``."""
    dpx, dpy = _stream_function_parts(cfg, x, y)
    return np.tanh(2.0 * y / cfg.delta0) + cfg.cn * dpy, -cfg.cn * dpx


def initial_condition(cfg: KhConfig, space: TaylorHoodSpace):
    u = space.interpolate(lambda x, y: initial_velocity(cfg, x, y))
    u[space.constrained_dofs] = 0.0
    return u


def compute_vorticity(space: TaylorHoodSpace, u, rel_tol=1e-12):
    """L2 projection of ``d(u_y)/dx - d(u_x)/dy`` onto continuous P1."""
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (space.n_u,):
        raise ValueError(f"velocity must have length {space.n_u}")
    Mp = asm.assemble_pressure_mass(space)
    d = Mp.diagonal()
    w, rep = pcg(LinearOperator.from_matrix(Mp), LinearOperator(space.n_p, lambda r: r / d),
                 asm.curl_load(space, u), rel_tol=rel_tol, max_iter=500)
    if not rep.converged:
        raise ArithmeticError("vorticity projection did not converge")
    return w


def kinetic_energy(space, u):
    return 0.5 * float(u @ spmv(asm.assemble_mass(space), u))


def _dump_system(system, step, dump_dir, x0=None):
    d = Path(dump_dir)
    d.mkdir(parents=True, exist_ok=True)
    tag = f"step{step:06d}"
    mm_write(d / f"{tag}_A.mtx", system.A, comment=f"velocity block, step {step}")
    mm_write(d / f"{tag}_B.mtx", system.B, comment=f"divergence block, step {step}")
    np.savetxt(d / f"{tag}_rhs.txt", system.rhs, fmt="%.17g")
    if x0 is not None:
        np.savetxt(d / f"{tag}_x0.txt", x0, fmt="%.17g")
    return d


def run_simulation(cfg: KhConfig, on_step=None, observer=None, dump_dir=None):
    """Time loop of the benchmark.

    ``on_step(stats)`` is called after every step (used to stream CSV rows)
    and ``observer(step, t, u, p)`` sees every new state. On a solver failure
    the offending system is written in Matrix Market form to ``dump_dir``
    (``KH_BENCH_DUMP_DIR`` when set, else ``<output_dir>/failure``) and
    :class:`KhRunFailure` is raised.
    """
    n_steps = cfg.n_steps
    space = TaylorHoodSpace(build_mesh(cfg.Nx, cfg.Ny))
    cache = PreconditionerCache(asm.assemble_pressure_mass(space),
                                asm.assemble_pressure_laplacian(space),
                                variant=cfg.precond_variant)
    if cfg.ordering == "nd":
        cache.orderings.update(space.velocity_orderings())
    policy = RecyclePolicy(cfg.kappa, cfg.refactor_and_resolve)
    state = RecycleState()
    settings = KrylovSettings(rel_tol=cfg.rel_tol, max_iter=cfg.max_iter,
                              reference=cfg.reference, inner_tol=cfg.inner_tol,
                              inner_max_iter=cfg.inner_max_iter)
    snap_steps = cfg.snapshot_steps()

    u_prev2 = None
    u_prev = initial_condition(cfg, space)
    p_prev = np.zeros(space.n_p)
    snapshots = []
    if 0 in snap_steps:
        snapshots.append(FieldSnapshot(0, 0.0, compute_vorticity(space, u_prev), u_prev.copy(),
                                       space.mesh.vertices))
    if observer is not None:
        observer(0, 0.0, u_prev, p_prev)

    stats_list = []
    for k in range(1, n_steps + 1):
        t = k * cfg.dt
        t0 = time.perf_counter()
        system = build_oseen_system(space, cfg.nu, cfg.gamma, u_prev, u_prev2, cfg.dt)
        t_asm = time.perf_counter() - t0
        x0 = None
        if cfg.initial_guess == "previous-step":
            x0 = np.concatenate([u_prev, p_prev])
        try:
            x, st = solve_step(system, cache, policy, state, settings, x0=x0, step=k)
        except (ArithmeticError, SolverFailure) as exc:
            # covers singular factors, Krylov breakdown, inner CG failure and non-convergence
            target = dump_dir or os.environ.get("KH_BENCH_DUMP_DIR") or \
                os.path.join(cfg.output_dir, "failure")
            where = _dump_system(system, k, target, x0)
            raise KhRunFailure(f"solver failure at step {k}: {exc}", k, where) from exc
        st.t_assemble = t_asm
        st.time = t
        stats_list.append(st)
        if on_step is not None:
            on_step(st)

        u, p = space.index.split(x)
        u_prev2, u_prev, p_prev = u_prev, u.copy(), p.copy()
        if observer is not None:
            observer(k, t, u_prev, p_prev)
        if k in snap_steps:
            snapshots.append(FieldSnapshot(k, t, compute_vorticity(space, u_prev), u_prev.copy(),
                                           space.mesh.vertices))

    return stats_list, snapshots, summarize(stats_list)


def _stats_row(s: StepStats):
    return [s.step, repr(float(s.time)), s.iterations, int(s.was_factor_step),
            repr(float(s.t_assemble)), repr(float(s.t_factor)), repr(float(s.t_linsol)),
            repr(float(s.residual))]


class StatsWriter:
    """Streams one CSV row per step, flushed immediately."""

    def __init__(self, path):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(path, "w", newline="")
        self._w = csv.writer(self._fh)
        self._w.writerow(STATS_COLUMNS)
        self._fh.flush()

    def __call__(self, s: StepStats):
        self._w.writerow(_stats_row(s))
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_stats(path):
    """StepStats list back from a ``stats.csv`` file."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != STATS_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        for row in reader:
            out.append(StepStats(step=int(row["step"]), iterations=int(row["iters"]),
                                 was_factor_step=bool(int(row["factor_step"])),
                                 t_factor=float(row["t_factor"]),
                                 t_linsol=float(row["t_linsol"]),
                                 t_assemble=float(row["t_assemble"]),
                                 residual=float(row["residual"]), time=float(row["time"])))
    return out


def write_summary(path, summary: SummaryRow):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SummaryRow.FIELDS)
        w.writerow([repr(v) if isinstance(v, float) else v for v in summary.as_dict().values()])


def emit_outputs(stats, snapshots, summary, output_dir):
    """Write ``stats.csv``, ``summary.csv`` and one ``vorticity_<step>.csv`` per snapshot."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    with StatsWriter(out / "stats.csv") as w:
        for s in stats:
            w(s)
    write_summary(out / "summary.csv", summary)
    written = []
    for snap in snapshots:
        if snap.points.shape[0] != snap.vorticity.shape[0]:
            raise ValueError("snapshot values do not match its vertices")
        path = out / f"vorticity_{snap.step:06d}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("x", "y", "w"))
            for (x, y), v in zip(snap.points.tolist(), snap.vorticity.tolist()):
                w.writerow((repr(x), repr(y), repr(v)))
        written.append(path)
    return written
