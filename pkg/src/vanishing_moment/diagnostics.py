"""Error norms, convexity checks, cross-sections and convergence studies."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .grid import Grid, ScalarField, build_grid, sample_function
from .models import ModelSpec
from .operators import det_hessian, eigvals_components, gradient_fd, hessian_fd, laplacian_fd
from .solver import EpsilonSchedule, NewtonOptions, continuation_solve


@dataclass(frozen=True)
class ErrorReport:
    """Norms of ``u - u_exact`` over interior nodes.

    ``l2`` is weighted by the cell volume; ``h1`` and ``h2`` are the discrete
    gradient and Hessian (Frobenius) seminorms, weighted the same way.
    """

    linf: float
    l2: float
    h1: float
    h2: float


@dataclass(frozen=True)
class ConvexityReport:
    min_eig: float  # smallest eigenvalue of D^2_h u over the node set
    max_eig: float  # largest eigenvalue
    min_det: float
    min_laplacian: float
    margin: int
    n_nodes: int
    # first ring offset (from the boundary) whose min eigenvalue is >= 0; None if none is
    boundary_layer_width: int | None


def _as_field(u, grid: Grid | None) -> ScalarField:
    if isinstance(u, ScalarField):
        return u
    if grid is None:
        raise ValueError("a grid is required when u is a plain array")
    return ScalarField(grid, np.asarray(u, dtype=float))


def error_norms(u, exact, grid: Grid | None = None) -> ErrorReport:
    """``exact`` may be a callable of coordinates or a full node array."""
    uf = _as_field(u, grid)
    g = uf.grid
    ex = sample_function(g, exact).values if callable(exact) else np.asarray(exact, dtype=float)
    e = ScalarField(g, uf.values - ex)
    w = float(np.prod(g.h))
    inner = e.values[g.interior]
    grad = gradient_fd(e).values
    hess = hessian_fd(e).matrix()
    return ErrorReport(
        linf=float(np.max(np.abs(inner))),
        l2=math.sqrt(w * float(np.sum(inner**2))),
        h1=math.sqrt(w * float(np.sum(grad**2))),
        h2=math.sqrt(w * float(np.sum(hess**2))),
    )


def _ring_offsets(grid: Grid) -> np.ndarray:
    """Distance (in nodes) of each interior node to the nearest boundary face."""
    idx = np.indices(grid.interior_shape) + 1
    n = np.array(grid.n).reshape((-1,) + (1,) * grid.dim)
    return np.min(np.minimum(idx, n - 1 - idx), axis=0)


def convexity_report(u, grid: Grid | None = None, k: int = 2) -> ConvexityReport:
    if k < 1:
        raise ValueError(f"margin k must be >= 1, got {k}")
    uf = _as_field(u, grid)
    g = uf.grid
    comps = hessian_fd(uf).values
    eigs = eigvals_components(comps, g.dim)
    det = det_hessian(comps, g.dim)
    lap = laplacian_fd(uf)
    ring = _ring_offsets(g)
    sel = ring >= k
    if not sel.any():
        raise ValueError(f"deep_interior({k}) is empty on grid {g.n}")
    width = None
    for off in range(1, int(ring.max()) + 1):
        if eigs[ring == off][..., 0].min() >= 0.0:
            width = off
            break
    return ConvexityReport(
        min_eig=float(eigs[sel][:, 0].min()),
        max_eig=float(eigs[sel][:, -1].max()),
        min_det=float(det[sel].min()),
        min_laplacian=float(lap[sel].min()),
        margin=k,
        n_nodes=int(sel.sum()),
        boundary_layer_width=width,
    )


def cross_section(u: ScalarField, axis: int, coordinate: float, at: Sequence[float] | None = None) -> list[tuple[float, float]]:
    """Samples along the grid line ``x[axis] = coordinate`` (snapped to the nearest line).

    The line runs along axis ``(axis + 1) % dim``. In 3-D the remaining axis
    is held at ``at`` (default: the mid-plane node).
    """
    g = u.grid
    if not 0 <= axis < g.dim:
        raise ValueError(f"axis {axis} out of range for a {g.dim}-D grid")
    if not g.lo[axis] <= coordinate <= g.hi[axis]:
        raise ValueError(f"coordinate {coordinate} outside [{g.lo[axis]}, {g.hi[axis]}]")
    run = (axis + 1) % g.dim
    index: list = [None] * g.dim
    index[axis] = int(round((coordinate - g.lo[axis]) / g.h[axis]))
    index[run] = slice(None)
    for a in range(g.dim):
        if index[a] is None:
            pos = (g.lo[a] + g.hi[a]) / 2 if at is None else at[0]
            index[a] = int(round((pos - g.lo[a]) / g.h[a]))
    values = u.values[tuple(index)]
    coords = g.axis_coords(run)
    return [(float(c), float(v)) for c, v in zip(coords, values)]


def interior_minima(section: Sequence[tuple[float, float]]) -> int:
    """Number of strict local minima among the interior samples of a section."""
    v = np.array([p[1] for p in section])
    mid = v[1:-1]
    return int(np.sum((mid < v[:-2]) & (mid < v[2:])))


@dataclass
class MomentStudy:
    values: list[float]
    stage_errors: list[ErrorReport | None]
    differences: list[ErrorReport] = field(default_factory=list)
    completed: bool = True


def moment_convergence_study(
    model: ModelSpec,
    grid: Grid,
    schedule: Sequence[float] | EpsilonSchedule,
    aux_value: float | None = None,
    opts: NewtonOptions | None = None,
) -> MomentStudy:
    """Per-stage errors (when an exact solution is known) and norms of u^{eps_k} - u^{eps_k+1}.

    A failed stage truncates the tables at the last converged stage.
    """
    if not isinstance(schedule, EpsilonSchedule):
        schedule = EpsilonSchedule(tuple(schedule), strict=False)
    if len(schedule.values) < 2:
        raise ValueError("a convergence study needs at least two stages")
    res = continuation_solve(model, grid, schedule, aux_value=aux_value, opts=opts)
    good = [st for st in res.stages if st.report.converged]
    fields = [st.full_field() for st in good]
    study = MomentStudy(values=[st.value for st in good], stage_errors=[], completed=res.completed)
    for U in fields:
        study.stage_errors.append(error_norms(U, model.exact, grid) if model.exact else None)
    for a, b in zip(fields, fields[1:]):
        study.differences.append(error_norms(a, b, grid))
    return study


def convergence_rate(e_coarse: float, e_fine: float) -> float | str:
    """Observed order ``log2(e_h / e_{h/2})``; ``"exact"`` when the fine error is zero."""
    if e_coarse < 0 or e_fine < 0:
        raise ValueError("errors must be non-negative")
    if e_fine == 0.0:
        return "exact"
    if e_coarse == 0.0:
        raise ValueError("coarse error is zero but the fine error is not")
    return math.log2(e_coarse / e_fine)


def operator_order(op: Callable[[ScalarField], np.ndarray], fn, exact, lo, hi, n: int) -> float:
    """Observed order of ``op`` on ``fn`` between ``n`` and ``2n - 1`` nodes, max-norm error."""
    errs = []
    for m in (n, 2 * n - 1):
        g = build_grid(lo, hi, m)
        u = sample_function(g, fn)
        ref = exact(g.coords()[g.interior])
        errs.append(float(np.max(np.abs(op(u) - ref))))
    return convergence_rate(*errs)
