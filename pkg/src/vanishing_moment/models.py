"""Catalogue of second-order fully nonlinear operators F(D^2u, grad u, u, x).

Every evaluation is vectorized over a leading node shape. Hessians enter in
upper-triangle component form (see :func:`operators.hessian_pairs`), so the
partial derivative with respect to an off-diagonal component already counts
both symmetric entries.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np

from .grid import Grid
from .operators import (
    components_to_matrix,
    det_hessian,
    eigvals_components,
    eigvector_components,
    hessian_pairs,
    matrix_to_components,
)

Variant = Literal[
    "MongeAmpereClassical",
    "MongeAmpereGeneral",
    "GaussCurvature",
    "PucciMax",
    "PucciMin",
    "InfinityLaplace",
    "ParabolicMongeAmpere",
    "Poisson",
]
VARIANTS: tuple[str, ...] = Variant.__args__  # type: ignore[attr-defined]

MONGE_AMPERE_FAMILY = ("MongeAmpereClassical", "MongeAmpereGeneral", "GaussCurvature", "ParabolicMongeAmpere")

# relative eigenvalue gap below which a Pucci evaluation is flagged nonsmooth
PUCCI_GAP_TOL = 1e-10


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    """A PDE instance: operator variant plus data.

    Callables take coordinates ``x`` of shape ``(..., dim)``:

    * ``source(x)`` for the classical, Pucci, infinity-Laplace and Poisson variants;
    * ``source(x, u, grad)`` for ``MongeAmpereGeneral`` (with optional
      ``source_partials(x, u, grad) -> (df_du, df_dgrad)``);
    * ``source(x, t)`` for ``ParabolicMongeAmpere``.

    ``exact_derivatives(x[, t])`` returns ``(u, grad, hess)`` of the exact
    solution when one is known; it is used only for diagnostics and checks.
    ``Poisson`` (F = trace of the Hessian) is a linear check mode.
    """

    variant: str
    dim: int = 2
    source: Callable | None = None
    boundary: Callable | None = None
    gauss_K: float = 0.0
    pucci_alpha: float | None = None
    exact: Callable | None = None
    exact_derivatives: Callable | None = None
    source_partials: Callable | None = None
    name: str = ""
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ModelError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.dim not in (2, 3):
            raise ModelError(f"dim must be 2 or 3, got {self.dim}")
        if self.variant in ("PucciMax", "PucciMin"):
            a = self.pucci_alpha
            if a is None or not (0 < a <= 1 / self.dim):
                raise ModelError(f"pucci_alpha must lie in (0, 1/{self.dim}], got {a}")
        elif self.pucci_alpha is not None:
            raise ModelError(f"pucci_alpha given for non-Pucci variant {self.variant}")
        if self.variant == "GaussCurvature":
            if not self.gauss_K >= 0:
                raise ModelError(f"gauss_K must be >= 0, got {self.gauss_K}")
        elif self.gauss_K:
            raise ModelError(f"gauss_K given for variant {self.variant}")
        if self.variant == "MongeAmpereGeneral" and self.source is None:
            raise ModelError("MongeAmpereGeneral needs a source f(x, u, grad)")

    @property
    def time_dependent(self) -> bool:
        return self.variant == "ParabolicMongeAmpere"


@dataclass(frozen=True)
class PointState:
    x: np.ndarray
    u: float
    grad: np.ndarray
    hess: np.ndarray
    t: float | None = None

    def __post_init__(self):
        hess = np.asarray(self.hess, dtype=float)
        if not np.allclose(hess, hess.T, rtol=0, atol=0):
            raise ModelError("PointState.hess must be symmetric")
        for name in ("x", "grad"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        object.__setattr__(self, "hess", hess)


@dataclass
class Partials:
    """Pointwise partial derivatives of the residual."""

    d_hess: np.ndarray  # (..., ncomp)
    d_grad: np.ndarray  # (..., dim)
    d_u: np.ndarray  # (...)
    nonsmooth: np.ndarray  # (...) bool


def _eval_source(model: ModelSpec, x, u, grad, t):
    v = model.variant
    if v == "GaussCurvature":
        return np.zeros(np.shape(u))
    if model.source is None:
        return np.zeros(np.shape(u))
    if v == "MongeAmpereGeneral":
        out = model.source(x, u, grad)
    elif v == "ParabolicMongeAmpere":
        out = model.source(x, 0.0 if t is None else t)
    else:
        out = model.source(x)
    return np.broadcast_to(np.asarray(out, dtype=float), np.shape(u))


def cofactor_components(comps: np.ndarray, dim: int) -> np.ndarray:
    """Cofactor matrix of each symmetric matrix, in component form."""
    if dim == 2:
        xx, xy, yy = comps[..., 0], comps[..., 1], comps[..., 2]
        return np.stack([yy, -xy, xx], axis=-1)
    xx, xy, xz, yy, yz, zz = (comps[..., k] for k in range(6))
    return np.stack(
        [
            yy * zz - yz * yz,
            -(xy * zz - yz * xz),
            xy * yz - yy * xz,
            xx * zz - xz * xz,
            -(xx * yz - xy * xz),
            xx * yy - xy * xy,
        ],
        axis=-1,
    )


def _sym_weights(dim: int) -> np.ndarray:
    return np.array([1.0 if a == b else 2.0 for a, b in hessian_pairs(dim)])


def _pucci_parts(model: ModelSpec, comps: np.ndarray):
    dim = model.dim
    lam = eigvals_components(comps, dim)
    idx = dim - 1 if model.variant == "PucciMax" else 0
    other = dim - 2 if model.variant == "PucciMax" else 1
    lam_ext = lam[..., idx]
    scale = np.max(np.abs(comps), axis=-1)
    gap = np.abs(lam[..., idx] - lam[..., other])
    nonsmooth = gap < PUCCI_GAP_TOL * scale
    return lam_ext, nonsmooth


def evaluate_residual(model: ModelSpec, x, u, grad, comps, t=None) -> np.ndarray:
    """F(D^2u, grad u, u, x) - f, vectorized over the leading shape."""
    dim = model.dim
    v = model.variant
    f = _eval_source(model, x, u, grad, t)
    if v in ("MongeAmpereClassical", "MongeAmpereGeneral", "ParabolicMongeAmpere"):
        return det_hessian(comps, dim) - f
    if v == "GaussCurvature":
        q = 1.0 + np.sum(grad * grad, axis=-1)
        return det_hessian(comps, dim) - model.gauss_K * q ** ((dim + 2) / 2)
    if v == "Poisson":
        return sum(comps[..., k] for k, (a, b) in enumerate(hessian_pairs(dim)) if a == b) - f
    if v in ("PucciMax", "PucciMin"):
        alpha = model.pucci_alpha
        trace = sum(comps[..., k] for k, (a, b) in enumerate(hessian_pairs(dim)) if a == b)
        lam_ext, _ = _pucci_parts(model, comps)
        return alpha * trace + (1 - dim * alpha) * lam_ext - f
    if v == "InfinityLaplace":
        H = components_to_matrix(comps, dim)
        return np.einsum("...ab,...a,...b->...", H, grad, grad) - f
    raise ModelError(f"unhandled variant {v}")


def evaluate_partials(model: ModelSpec, x, u, grad, comps, t=None) -> Partials:
    dim = model.dim
    v = model.variant
    shape = np.shape(u)
    ncomp = len(hessian_pairs(dim))
    d_hess = np.zeros(shape + (ncomp,))
    d_grad = np.zeros(shape + (dim,))
    d_u = np.zeros(shape)
    nonsmooth = np.zeros(shape, dtype=bool)
    w = _sym_weights(dim)
    if v in MONGE_AMPERE_FAMILY:
        d_hess = cofactor_components(comps, dim) * w
        if v == "GaussCurvature":
            q = 1.0 + np.sum(grad * grad, axis=-1)
            d_grad = -model.gauss_K * (dim + 2) * (q ** (dim / 2))[..., None] * grad
        elif v == "MongeAmpereGeneral":
            df_du, df_dg = _source_partials(model, x, u, grad)
            d_u = -df_du
            d_grad = -df_dg
    elif v == "Poisson":
        d_hess = np.broadcast_to(np.array([1.0 if a == b else 0.0 for a, b in hessian_pairs(dim)]), shape + (ncomp,)).copy()
    elif v in ("PucciMax", "PucciMin"):
        alpha = model.pucci_alpha
        lam_ext, nonsmooth = _pucci_parts(model, comps)
        q = eigvector_components(comps, lam_ext, dim)
        qq = matrix_to_components(q[..., :, None] * q[..., None, :]) * w
        ident = np.array([1.0 if a == b else 0.0 for a, b in hessian_pairs(dim)])
        d_hess = alpha * ident + (1 - dim * alpha) * qq
        if 1 - dim * alpha == 0:
            nonsmooth = np.zeros(shape, dtype=bool)
    elif v == "InfinityLaplace":
        gg = matrix_to_components(grad[..., :, None] * grad[..., None, :]) * w
        d_hess = gg
        H = components_to_matrix(comps, dim)
        d_grad = 2 * np.einsum("...ab,...b->...a", H, grad)
    else:
        raise ModelError(f"unhandled variant {v}")
    return Partials(d_hess, d_grad, d_u, nonsmooth)


def _source_partials(model: ModelSpec, x, u, grad):
    if model.source_partials is not None:
        df_du, df_dg = model.source_partials(x, u, grad)
        return np.broadcast_to(df_du, np.shape(u)), np.broadcast_to(df_dg, np.shape(grad))
    # central differences when no analytic partials are supplied
    step = 1e-6
    df_du = (model.source(x, u + step, grad) - model.source(x, u - step, grad)) / (2 * step)
    cols = []
    for a in range(model.dim):
        e = np.zeros(model.dim)
        e[a] = step
        cols.append((model.source(x, u, grad + e) - model.source(x, u, grad - e)) / (2 * step))
    return np.broadcast_to(df_du, np.shape(u)), np.stack(cols, axis=-1)


def _check_state(model: ModelSpec, s: PointState):
    if s.grad.shape != (model.dim,) or s.hess.shape != (model.dim, model.dim):
        raise ModelError(f"state dimension does not match model dim {model.dim}")
    if model.time_dependent and s.t is None:
        raise ModelError("ParabolicMongeAmpere needs a time in the point state")


def residual_point(model: ModelSpec, s: PointState) -> float:
    _check_state(model, s)
    comps = matrix_to_components(s.hess)
    return float(evaluate_residual(model, s.x, np.float64(s.u), s.grad, comps, s.t))


def linearize_point(model: ModelSpec, s: PointState, delta: PointState) -> float:
    """Directional derivative of :func:`residual_point` at ``s`` along ``delta``."""
    _check_state(model, s)
    value, _ = linearize_point_flagged(model, s, delta)
    return value


def linearize_point_flagged(model: ModelSpec, s: PointState, delta: PointState) -> tuple[float, bool]:
    """As :func:`linearize_point`, also returning the Pucci nonsmooth flag."""
    comps = matrix_to_components(s.hess)
    p = evaluate_partials(model, s.x, np.float64(s.u), s.grad, comps, s.t)
    dcomps = matrix_to_components(np.asarray(delta.hess, dtype=float))
    value = float(np.dot(p.d_hess, dcomps) + np.dot(p.d_grad, delta.grad) + p.d_u * delta.u)
    return value, bool(p.nonsmooth)


def forcing_field(model: ModelSpec, grid: Grid, t: float | None = None) -> np.ndarray:
    """Source samples at interior nodes (state-independent part only).

    For ``MongeAmpereGeneral`` the source is evaluated at ``u = 0, grad = 0``;
    for ``GaussCurvature`` this is the constant ``K``.
    """
    x = grid.coords()[grid.interior]
    shape = x.shape[:-1]
    if model.variant == "GaussCurvature":
        return np.full(shape, float(model.gauss_K))
    if model.source is None:
        return np.zeros(shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        if model.variant == "MongeAmpereGeneral":
            f = model.source(x, np.zeros(shape), np.zeros(shape + (grid.dim,)))
        elif model.variant == "ParabolicMongeAmpere":
            f = model.source(x, 0.0 if t is None else t)
        else:
            f = model.source(x)
    f = np.broadcast_to(np.asarray(f, dtype=float), shape).copy()
    bad = ~np.isfinite(f)
    if bad.any():
        idx = tuple(int(i) + 1 for i in np.argwhere(bad)[0])
        raise ModelError(f"source is singular at node {idx}, x={grid.node_coords(idx)}")
    return f
