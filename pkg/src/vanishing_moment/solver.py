"""Damped Newton, epsilon continuation and implicit time stepping."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .assembly import AssemblyError, DiscreteSystem, build_system, check_epsilon, dirichlet_from_model
from .grid import Grid
from .linalg import KrylovOptions, SparseMatrix, ZeroPivotError, gmres_solve, ilu0_factor
from .models import MONGE_AMPERE_FAMILY, ModelSpec, forcing_field
from .operators import laplacian_array

log = logging.getLogger(__name__)


class LinearSolveError(RuntimeError):
    pass


@dataclass(frozen=True)
class NewtonOptions:
    abs_tol: float = 1e-8
    rel_tol: float = 1e-10
    max_iters: int = 50
    damping_factor: float = 0.5
    max_halvings: int = 20
    armijo: float = 1e-4
    warmup_fixed_point_iters: int = 0
    # a longer restart than the plain KrylovOptions default: the Jacobians at
    # 65^2 and small eps stagnate with 50 vectors
    krylov: KrylovOptions = field(default_factory=lambda: KrylovOptions(restart=200))

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("Newton tolerances must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.warmup_fixed_point_iters < 0:
            raise ValueError("warmup_fixed_point_iters must be >= 0")


@dataclass
class SolveReport:
    converged: bool = False
    iterations: int = 0
    residual_history: list[float] = field(default_factory=list)
    step_lengths: list[float] = field(default_factory=list)
    damping_events: int = 0
    linear_stats: list[dict] = field(default_factory=list)
    nonsmooth_flags: list[int] = field(default_factory=list)
    message: str = ""

    @property
    def final_residual(self) -> float:
        return self.residual_history[-1] if self.residual_history else float("nan")


@dataclass(frozen=True)
class EpsilonSchedule:
    values: tuple[float, ...]
    strict: bool = True

    def __post_init__(self):
        vals = tuple(check_epsilon(v) for v in self.values)
        if not vals:
            raise ValueError("empty epsilon schedule")
        if len({np.sign(v) for v in vals}) != 1:
            raise ValueError(f"epsilon schedule must have constant sign: {vals}")
        for a, b in zip(vals, vals[1:]):
            if abs(b) > abs(a) or (self.strict and abs(b) == abs(a)):
                raise ValueError(f"epsilon magnitudes must decrease: {vals}")
        object.__setattr__(self, "values", vals)

    def negated(self) -> "EpsilonSchedule":
        return EpsilonSchedule(tuple(-v for v in self.values), self.strict)


@dataclass(frozen=True)
class TimeStepOptions:
    dt: float
    t_end: float
    scheme: str = "backward_euler"
    newton: NewtonOptions = field(default_factory=NewtonOptions)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t_end >= self.dt:
            raise ValueError("t_end must be >= dt")
        if self.scheme not in ("backward_euler", "crank_nicolson"):
            raise ValueError(f"unknown scheme {self.scheme!r}")


def _max_norm(r: np.ndarray) -> float:
    return float(np.max(np.abs(r))) if r.size else 0.0


def solve_linear(J: SparseMatrix, rhs: np.ndarray, opts: KrylovOptions, make_preconditioner=None) -> tuple[np.ndarray, dict]:
    """Preconditioned GMRES.

    ``make_preconditioner(J)`` defaults to plain ILU(0) of ``J``; on a zero
    pivot the next fallback is tried (plain ILU(0), then none).
    """
    builders = [("split-ilu0", make_preconditioner)] if make_preconditioner else []
    builders.append(("ilu0", ilu0_factor))
    M, precond = None, "none"
    for label, build in builders:
        try:
            M, precond = build(J), label
            break
        except ZeroPivotError as exc:
            log.warning("%s preconditioner failed: %s", label, exc)
    x, st = gmres_solve(J, rhs, M, opts)
    return x, {
        "converged": st.converged,
        "iterations": st.iterations,
        "relative_residual": st.relative_residual,
        "preconditioner": precond,
    }


def _preconditioner_for(sys_, u):
    build = getattr(sys_, "preconditioner", None)
    return None if build is None else (lambda J: build(J, u))


def _trial_norm(sys_, u):
    try:
        return _max_norm(sys_.residual(u))
    except AssemblyError:
        return np.inf


def newton_solve(sys_, u0: np.ndarray, opts: NewtonOptions | None = None) -> tuple[np.ndarray, SolveReport]:
    """Damped Newton with max-norm backtracking.

    ``sys_`` needs ``residual(u)`` and ``linearize(u) -> (J, nonsmooth_count)``.
    Never raises on non-convergence: the best iterate comes back with
    ``report.converged = False``.
    """
    opts = opts or NewtonOptions()
    u = np.array(u0, dtype=float)
    report = SolveReport()
    r = sys_.residual(u)
    norm = norm0 = _max_norm(r)
    report.residual_history.append(norm)
    while True:
        if norm <= opts.abs_tol or norm <= opts.rel_tol * norm0:
            report.converged = True
            report.message = "converged"
            break
        if report.iterations >= opts.max_iters:
            report.message = "max_iters reached"
            break
        J, nonsmooth = sys_.linearize(u)
        report.nonsmooth_flags.append(nonsmooth)
        delta, lstats = solve_linear(J, -r, opts.krylov, _preconditioner_for(sys_, u))
        report.linear_stats.append(lstats)
        lam = 1.0
        halvings = 0
        # a failed linear solve gets one halved attempt along its best iterate
        max_halvings = opts.max_halvings if lstats["converged"] else 1
        if not lstats["converged"]:
            lam = opts.damping_factor
        accepted = False
        while True:
            trial = u + lam * delta
            tnorm = _trial_norm(sys_, trial)
            if tnorm <= (1 - opts.armijo * lam) * norm:
                accepted = True
                break
            if halvings >= max_halvings:
                break
            lam *= opts.damping_factor
            halvings += 1
        if not accepted:
            report.message = "linear solve failed" if not lstats["converged"] else "line search failed"
            break
        if lam < 1.0:
            report.damping_events += 1
        u = trial
        r = sys_.residual(u)
        norm = _max_norm(r)
        report.iterations += 1
        report.step_lengths.append(lam)
        report.residual_history.append(norm)
        log.debug("newton %d: |R|=%.3e lambda=%g gmres=%d", report.iterations, norm, lam, lstats["iterations"])
    return u, report


def _poisson_solve(sys_: DiscreteSystem, source: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    st = sys_.stencils
    G = sys_.bcs.dirichlet.copy()
    G[sys_.grid.interior] = 0.0
    rhs = np.asarray(source, dtype=float).ravel() - laplacian_array(G, sys_.grid.h).ravel()
    A = SparseMatrix.from_scipy(st.lap)
    x, lstats = solve_linear(A, rhs, KrylovOptions(tol=tol, restart=50, max_iters=20000))
    if not lstats["converged"]:
        raise LinearSolveError(f"initial Poisson solve did not converge: {lstats}")
    return x


def initial_guess(sys_: DiscreteSystem) -> np.ndarray:
    """Interior start vector from a linear Poisson problem with the same Dirichlet data.

    Monge-Ampere family: lap u = dim * max(f, 0)^(1/dim), the equality case of
    det(A) <= (tr(A)/dim)^dim; the source changes sign for the concave branch
    (eps < 0). Other variants: lap u = f.
    """
    model = sys_.model
    f = forcing_field(model, sys_.grid, sys_.t)
    if model.variant in MONGE_AMPERE_FAMILY:
        dim = sys_.grid.dim
        source = dim * np.maximum(f, 0.0) ** (1.0 / dim)
        if sys_.eps < 0:
            source = -source
    else:
        source = f
    return _poisson_solve(sys_, source)


def fixed_point_warmup(sys_, u: np.ndarray, k: int, krylov: KrylovOptions | None = None) -> np.ndarray:
    """``k`` lagged-linearization iterations (undamped Newton steps)."""
    if k < 0:
        raise ValueError("k must be >= 0")
    krylov = krylov or NewtonOptions().krylov
    u = np.array(u, dtype=float)
    for j in range(k):
        J, _ = sys_.linearize(u)
        delta, lstats = solve_linear(J, -sys_.residual(u), krylov, _preconditioner_for(sys_, u))
        if not lstats["converged"]:
            raise LinearSolveError(f"fixed-point iteration {j}: linear solve failed ({lstats})")
        u = u + delta
    return u


@dataclass
class StageResult:
    value: float
    u: np.ndarray  # interior unknowns
    report: SolveReport
    system: DiscreteSystem = field(repr=False)

    def full_field(self) -> np.ndarray:
        return self.system.full_field(self.u)


@dataclass
class ContinuationResult:
    stages: list[StageResult]
    completed: bool
    failed_stage: int | None = None

    @property
    def final(self) -> StageResult:
        return self.stages[-1]


def _solve_stage(sys_, u_start, opts, cold: bool) -> tuple[np.ndarray, SolveReport]:
    if cold:
        u_start = initial_guess(sys_) if u_start is None else u_start
        u_start = fixed_point_warmup(sys_, u_start, opts.warmup_fixed_point_iters, opts.krylov)
    return newton_solve(sys_, u_start, opts)


def continuation_solve(
    model: ModelSpec,
    grid: Grid,
    schedule: EpsilonSchedule | Sequence[float],
    aux_value: float | None = None,
    opts: NewtonOptions | None = None,
    u0: np.ndarray | None = None,
    aux_kind: str = "laplacian",
) -> ContinuationResult:
    """Solve along a decreasing-|eps| schedule, warm-starting each stage.

    ``aux_value=None`` rescales the auxiliary boundary value to eps**2 at
    every stage. Stops at the first stage that fails to converge.
    """
    if not isinstance(schedule, EpsilonSchedule):
        schedule = EpsilonSchedule(tuple(schedule))
    opts = opts or NewtonOptions()
    stages: list[StageResult] = []
    u = u0
    for i, eps in enumerate(schedule.values):
        sys_ = build_system(model, grid, eps, aux_value, aux_kind)
        u, report = _solve_stage(sys_, u, opts, cold=(i == 0))
        stages.append(StageResult(eps, u, report, sys_))
        log.info("stage eps=%g: converged=%s iters=%d |R|=%.2e", eps, report.converged, report.iterations, report.final_residual)
        if not report.converged:
            return ContinuationResult(stages, False, i)
    return ContinuationResult(stages, True)


def parameter_continuation(
    make_model: Callable[[float], ModelSpec],
    values: Sequence[float],
    grid: Grid,
    eps: float,
    aux_value: float | None = None,
    opts: NewtonOptions | None = None,
    eps_warmup: Sequence[float] = (),
) -> ContinuationResult:
    """Sweep a model parameter (e.g. the Gauss curvature K) with warm starts.

    The first value may be reached through an eps schedule ``eps_warmup + (eps,)``.
    """
    opts = opts or NewtonOptions()
    stages: list[StageResult] = []
    u = None
    for i, value in enumerate(values):
        model = make_model(value)
        if i == 0:
            res = continuation_solve(model, grid, tuple(eps_warmup) + (eps,), aux_value, opts)
            stage = res.final
            stage = StageResult(value, stage.u, stage.report, stage.system)
        else:
            sys_ = build_system(model, grid, eps, aux_value)
            u_new, report = newton_solve(sys_, u, opts)
            stage = StageResult(value, u_new, report, sys_)
        stages.append(stage)
        log.info("parameter %g: converged=%s iters=%d", value, stage.report.converged, stage.report.iterations)
        if not stage.report.converged:
            return ContinuationResult(stages, False, i)
        u = stage.u
    return ContinuationResult(stages, True)


class _TimeStepSystem:
    """theta * S(u, t_new) + (1 - theta) * S(u_prev, t_old) - (u - u_prev)/dt."""

    def __init__(self, new: DiscreteSystem, u_prev: np.ndarray, s_prev: np.ndarray | None, dt: float, theta: float):
        self.new = new
        self.u_prev = u_prev
        self.s_prev = s_prev
        self.dt = dt
        self.theta = theta

    def residual(self, u):
        r = self.theta * self.new.residual(u) - (u - self.u_prev) / self.dt
        if self.s_prev is not None:
            r = r + (1 - self.theta) * self.s_prev
        return r

    def linearize(self, u):
        return self.new.linearize(u, scale=self.theta, shift=-1.0 / self.dt)

    def preconditioner(self, J, u=None):
        return self.new.preconditioner(J, u, scale=self.theta, shift=-1.0 / self.dt)


@dataclass
class Trajectory:
    times: list[float]
    fields: list[np.ndarray]  # full node arrays at the sampled times
    reports: list[SolveReport]
    completed: bool
    message: str = ""


def evolve_parabolic(
    model: ModelSpec,
    grid: Grid,
    u_init: np.ndarray,
    eps: float,
    tsopts: TimeStepOptions,
    sample_times: Sequence[float] | None = None,
    aux_value: float | None = None,
) -> Trajectory:
    """Implicit time stepping for  F(D^2u, ...) - eps*biharmonic(u) - u_t = f.

    Each step solves one elliptic vanishing-moment problem by Newton,
    warm-started from the previous level. Backward Euler is the default;
    Crank-Nicolson averages the spatial operator between levels and is
    experimental.
    """
    eps = check_epsilon(eps)
    U0 = np.asarray(u_init, dtype=float)
    if U0.shape != grid.shape:
        raise ValueError("u_init must be a full node array on the grid")
    g0 = dirichlet_from_model(model, grid, 0.0)
    bmask = ~grid.interior_mask()
    if model.boundary is not None and not np.allclose(U0[bmask], g0[bmask], rtol=0, atol=1e-12):
        raise ValueError("u_init does not match the Dirichlet data at t=0")
    n_steps = int(round(tsopts.t_end / tsopts.dt))
    theta = 1.0 if tsopts.scheme == "backward_euler" else 0.5
    if sample_times is None:
        sample_steps = set(range(n_steps + 1))
    else:
        sample_steps = {int(round(t / tsopts.dt)) for t in sample_times}
    t_of = lambda k: k * tsopts.dt  # noqa: E731
    prev_sys = build_system(model, grid, eps, aux_value, t=t_of(0))
    prev_sys.bcs.dirichlet[bmask] = U0[bmask]
    u = U0[grid.interior].ravel().copy()
    traj = Trajectory([], [], [], True)
    if 0 in sample_steps:
        traj.times.append(0.0)
        traj.fields.append(prev_sys.full_field(u))
    for k in range(1, n_steps + 1):
        new_sys = build_system(model, grid, eps, aux_value, t=t_of(k))
        if model.boundary is None:
            new_sys.bcs.dirichlet[bmask] = U0[bmask]
        s_prev = prev_sys.residual(u) if theta < 1 else None
        step = _TimeStepSystem(new_sys, u, s_prev, tsopts.dt, theta)
        u_new, report = newton_solve(step, u, tsopts.newton)
        traj.reports.append(report)
        if not report.converged:
            traj.completed = False
            traj.message = f"step {k} (t={t_of(k):g}) failed: {report.message}"
            break
        u = u_new
        prev_sys = new_sys
        if k in sample_steps:
            traj.times.append(t_of(k))
            traj.fields.append(new_sys.full_field(u))
    return traj


def with_krylov(opts: NewtonOptions, **kw) -> NewtonOptions:
    return replace(opts, krylov=replace(opts.krylov, **kw))
