"""The eleven benchmark problems, with corrected exact data where needed.

Exact solutions come with hand-derived gradients and Hessians so that the
residual of F at the exact state can be checked before any solve.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..grid import Grid, build_grid
from ..models import ModelSpec

DEFAULT_SCHEDULE = (1e-1, 1e-2, 1e-3)


@dataclass(frozen=True)
class Case:
    name: str
    title: str
    make_model: Callable[..., ModelSpec]
    lo: tuple[float, ...]
    hi: tuple[float, ...]
    n: int
    schedule: tuple[float, ...] = DEFAULT_SCHEDULE
    parameter: str | None = None
    parameter_default: float | None = None
    notes: str = ""
    sections: tuple[float, ...] = (0.1, 0.3, 0.5, 0.7, 0.9)
    extra: dict = field(default_factory=dict, compare=False)

    @property
    def dim(self) -> int:
        return len(self.lo)

    def model(self, value: float | None = None) -> ModelSpec:
        if self.parameter is None:
            return self.make_model()
        return self.make_model(self.parameter_default if value is None else value)

    def grid(self, n: int | None = None) -> Grid:
        return build_grid(self.lo, self.hi, n or self.n)

    def section_coords(self) -> tuple[float, ...]:
        """Section positions mapped from the unit interval onto the box."""
        lo, hi = self.lo[0], self.hi[0]
        return tuple(lo + s * (hi - lo) for s in self.sections)


def _r2(x):
    return np.sum(x * x, axis=-1)


def _ones(x):
    return np.ones(x.shape[:-1])


def _zeros(x):
    return np.zeros(x.shape[:-1])


def _gaussian_bump(x):
    """u = exp(|x|^2 / 2): grad = x u, hess = (I + x x^T) u."""
    u = np.exp(_r2(x) / 2)
    d = x.shape[-1]
    grad = x * u[..., None]
    hess = (np.eye(d) + x[..., :, None] * x[..., None, :]) * u[..., None, None]
    return u, grad, hess


def _power34(x):
    """u = c r^{3/2}, c = 2 sqrt(2)/3: grad = sqrt2 r^{-1/2} x, hess = sqrt2 (r^{-1/2} I - x x^T r^{-5/2}/2)."""
    r = np.sqrt(_r2(x))
    c = 2 * np.sqrt(2) / 3
    u = c * r**1.5
    with np.errstate(divide="ignore", invalid="ignore"):  # singular at the origin corner
        grad = np.sqrt(2) * x / np.sqrt(r)[..., None]
        eye = np.eye(x.shape[-1])
        hess = np.sqrt(2) * (eye / np.sqrt(r)[..., None, None] - 0.5 * x[..., :, None] * x[..., None, :] / (r**2.5)[..., None, None])
    return u, grad, hess


def _sphere_cap(x):
    """u = sqrt(4 - |x|^2): grad = -x/u, hess = -I/u - x x^T / u^3."""
    u = np.sqrt(4 - _r2(x))
    grad = -x / u[..., None]
    eye = np.eye(x.shape[-1])
    hess = -eye / u[..., None, None] - x[..., :, None] * x[..., None, :] / (u**3)[..., None, None]
    return u, grad, hess


def _aronsson(x):
    """u = |x|^{4/3} - |y|^{4/3}; twice differentiable off the axes only."""
    ax, ay = np.abs(x[..., 0]), np.abs(x[..., 1])
    u = ax ** (4 / 3) - ay ** (4 / 3)
    grad = np.stack([4 / 3 * np.sign(x[..., 0]) * np.cbrt(ax), -4 / 3 * np.sign(x[..., 1]) * np.cbrt(ay)], axis=-1)
    hess = np.zeros(x.shape[:-1] + (2, 2))
    with np.errstate(divide="ignore"):
        hess[..., 0, 0] = 4 / 9 * ax ** (-2 / 3)
        hess[..., 1, 1] = -4 / 9 * ay ** (-2 / 3)
    return u, grad, hess


def _exact_fn(deriv):
    return lambda x: deriv(x)[0]


def _ma(name, dim, source, boundary, exact=None):
    return lambda: ModelSpec(
        "MongeAmpereClassical",
        dim=dim,
        source=source,
        boundary=boundary,
        exact=_exact_fn(exact) if exact else None,
        exact_derivatives=exact,
        name=name,
    )


def _gauss(K: float) -> ModelSpec:
    return ModelSpec(
        "GaussCurvature",
        dim=2,
        boundary=lambda x: _r2(x) - 1.0,
        gauss_K=float(K),
        name="test6",
        params={"K": float(K)},
    )


def _infinity() -> ModelSpec:
    return ModelSpec(
        "InfinityLaplace",
        dim=2,
        boundary=_exact_fn(_aronsson),
        exact=_exact_fn(_aronsson),
        exact_derivatives=_aronsson,
        name="test7",
    )


UNIT2 = ((0.0, 0.0), (1.0, 1.0))
UNIT3 = ((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))

_CASES = [
    Case("test1", "Monge-Ampere, f=1, g=0 (no classical solution)", _ma("test1", 2, _ones, _zeros), *UNIT2, n=33),
    Case(
        "test2",
        "Monge-Ampere with exact solution exp((x^2+y^2)/2)",
        _ma("test2", 2, lambda x: (1 + _r2(x)) * np.exp(_r2(x)), _exact_fn(_gaussian_bump), _gaussian_bump),
        *UNIT2,
        n=33,
        notes="exact solution read as exp(r^2/2), the function matching the stated f and g",
    ),
    Case(
        "test3",
        "Monge-Ampere with exact solution (2 sqrt2/3) r^{3/2}",
        _ma("test3", 2, lambda x: 1 / np.sqrt(_r2(x)), _exact_fn(_power34), _power34),
        *UNIT2,
        n=33,
        notes="source 1/r, the Monge-Ampere measure of the stated exact solution; singular at the corner (0,0)",
    ),
    Case("test4", "degenerate Monge-Ampere, f=(1-x-y)^2", _ma("test4", 2, lambda x: (1 - x[..., 0] - x[..., 1]) ** 2, _zeros), *UNIT2, n=33),
    Case("test5", "sign-changing Monge-Ampere, f=x^2-y^2", _ma("test5", 2, lambda x: x[..., 0] ** 2 - x[..., 1] ** 2, _zeros), *UNIT2, n=33),
    Case(
        "test6",
        "Gauss curvature on (-0.57,0.57)^2, g=x^2+y^2-1",
        _gauss,
        (-0.57, -0.57),
        (0.57, 0.57),
        n=33,
        parameter="K",
        parameter_default=1.0,
        extra={"sweep": (0.1, 1.0, 2.0, 2.1, 2.2, 2.3, 2.4)},
    ),
    Case("test7", "infinity Laplacian, exact x^{4/3}-y^{4/3}", _infinity, (-0.5, -0.5), (0.5, 0.5), n=33),
    Case("test8", "re-run of test1", _ma("test8", 2, _ones, _zeros), *UNIT2, n=33),
    Case(
        "test9",
        "Monge-Ampere with exact solution sqrt(4-x^2-y^2)",
        _ma("test9", 2, lambda x: 4 / (4 - _r2(x)) ** 2, _exact_fn(_sphere_cap), _sphere_cap),
        *UNIT2,
        n=33,
        schedule=(-1e-1, -1e-2, -1e-3),
        notes="the exact solution is concave, so it is reached on the eps<0 branch",
    ),
    Case(
        "test10",
        "3-D Monge-Ampere with exact solution exp((x^2+y^2+z^2)/2)",
        _ma("test10", 3, lambda x: (1 + _r2(x)) * np.exp(1.5 * _r2(x)), _exact_fn(_gaussian_bump), _gaussian_bump),
        *UNIT3,
        n=17,
        schedule=(1e-2, 1e-3),
        notes="source (1+r^2) exp(3 r^2/2), the determinant of the exact Hessian in 3-D",
    ),
    Case("test11", "3-D Monge-Ampere, f=1, g=0", _ma("test11", 3, _ones, _zeros), *UNIT3, n=17, schedule=(1e-2, 1e-3)),
]


def registry() -> dict[str, Case]:
    return {c.name: c for c in _CASES}


def get_case(name: str) -> Case:
    cases = registry()
    if name not in cases:
        raise KeyError(f"unknown case {name!r}; known: {', '.join(cases)}")
    return cases[name]
