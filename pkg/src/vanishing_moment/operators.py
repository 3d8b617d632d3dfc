"""Second-order centered finite-difference operators on uniform grids.

Operators act on full node arrays and return values on the interior block
(shape ``grid.interior_shape``). Nothing here uses one-sided differences; the
biharmonic operator reads ghost values produced by a boundary closure.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .grid import Grid, ScalarField

# closure(values, grid) -> array of shape n+2 holding face ghost values
BoundaryClosure = Callable[[np.ndarray, Grid], np.ndarray]


def hessian_pairs(dim: int) -> list[tuple[int, int]]:
    """Upper-triangle component order: xx, xy, [xz], yy, [yz, zz]."""
    return [(a, b) for a in range(dim) for b in range(a, dim)]


@dataclass(frozen=True)
class VectorField:
    grid: Grid
    values: np.ndarray  # interior_shape + (dim,)


@dataclass(frozen=True)
class HessianField:
    grid: Grid
    values: np.ndarray  # interior_shape + (ncomp,)

    def component(self, a: int, b: int) -> np.ndarray:
        a, b = min(a, b), max(a, b)
        return self.values[..., hessian_pairs(self.grid.dim).index((a, b))]

    def matrix(self) -> np.ndarray:
        return components_to_matrix(self.values, self.grid.dim)


@dataclass(frozen=True)
class EigenField:
    grid: Grid
    values: np.ndarray  # interior_shape + (dim,), ascending


def components_to_matrix(comps: np.ndarray, dim: int) -> np.ndarray:
    out = np.empty(comps.shape[:-1] + (dim, dim))
    for k, (a, b) in enumerate(hessian_pairs(dim)):
        out[..., a, b] = comps[..., k]
        out[..., b, a] = comps[..., k]
    return out


def matrix_to_components(mat: np.ndarray) -> np.ndarray:
    dim = mat.shape[-1]
    return np.stack([mat[..., a, b] for a, b in hessian_pairs(dim)], axis=-1)


def _shifted(u: np.ndarray, offset: tuple[int, ...]) -> np.ndarray:
    """View of ``u`` at interior nodes shifted by ``offset``."""
    return u[tuple(slice(1 + o, n - 1 + o) for o, n in zip(offset, u.shape))]


def _unit(dim: int, axis: int, step: int = 1) -> tuple[int, ...]:
    return tuple(step if a == axis else 0 for a in range(dim))


def first_diff(u: np.ndarray, h: tuple[float, ...], axis: int) -> np.ndarray:
    d = u.ndim
    return (_shifted(u, _unit(d, axis)) - _shifted(u, _unit(d, axis, -1))) / (2 * h[axis])


def second_diff(u: np.ndarray, h: tuple[float, ...], a: int, b: int) -> np.ndarray:
    d = u.ndim
    if a == b:
        return (_shifted(u, _unit(d, a)) - 2 * _shifted(u, (0,) * d) + _shifted(u, _unit(d, a, -1))) / h[a] ** 2
    pp = tuple(int(k == a) + int(k == b) for k in range(d))
    pm = tuple(int(k == a) - int(k == b) for k in range(d))
    mp = tuple(-v for v in pm)
    mm = tuple(-v for v in pp)
    return (_shifted(u, pp) - _shifted(u, pm) - _shifted(u, mp) + _shifted(u, mm)) / (4 * h[a] * h[b])


def laplacian_array(u: np.ndarray, h: tuple[float, ...]) -> np.ndarray:
    out = second_diff(u, h, 0, 0)
    for a in range(1, u.ndim):
        out = out + second_diff(u, h, a, a)
    return out


def gradient_fd(u: ScalarField) -> VectorField:
    g = u.grid
    return VectorField(g, np.stack([first_diff(u.values, g.h, a) for a in range(g.dim)], axis=-1))


def hessian_fd(u: ScalarField) -> HessianField:
    g = u.grid
    comps = [second_diff(u.values, g.h, a, b) for a, b in hessian_pairs(g.dim)]
    return HessianField(g, np.stack(comps, axis=-1))


def laplacian_fd(u: ScalarField) -> np.ndarray:
    return laplacian_array(u.values, u.grid.h)


def biharmonic_fd(u: ScalarField, boundary_closure: BoundaryClosure | None) -> np.ndarray:
    """Iterated discrete Laplacian (13-point in 2-D, 25-point in 3-D).

    The inner Laplacian is taken at every face node using ghost values from
    ``boundary_closure``; edge and corner ghosts are never read.
    """
    if boundary_closure is None:
        raise ValueError("biharmonic_fd needs a boundary closure for the ghost layer next to the boundary")
    g = u.grid
    padded = boundary_closure(u.values, g)
    if padded.shape != tuple(n + 2 for n in g.shape):
        raise ValueError(f"closure returned shape {padded.shape}, expected {tuple(n + 2 for n in g.shape)}")
    # Laplacian at every original node; entries at edges/corners may be NaN
    with np.errstate(invalid="ignore"):
        lap_all = laplacian_array(padded, g.h)
    return laplacian_array(lap_all, g.h)


def det_hessian(H: HessianField | np.ndarray, dim: int | None = None) -> np.ndarray:
    comps = H.values if isinstance(H, HessianField) else np.asarray(H)
    dim = H.grid.dim if isinstance(H, HessianField) else dim
    if dim is None:
        dim = 2 if comps.shape[-1] == 3 else 3
    if dim == 2:
        xx, xy, yy = (comps[..., k] for k in range(3))
        return xx * yy - xy * xy
    xx, xy, xz, yy, yz, zz = (comps[..., k] for k in range(6))
    return xx * (yy * zz - yz * yz) - xy * (xy * zz - yz * xz) + xz * (xy * yz - yy * xz)


def _eigvals_sym2(xx, xy, yy):
    m = 0.5 * (xx + yy)
    r = np.hypot(0.5 * (xx - yy), xy)
    return np.stack([m - r, m + r], axis=-1)


def _eigvals_sym3(comps):
    scale = np.max(np.abs(comps), axis=-1)
    safe = np.where(scale > 0, scale, 1.0)
    xx, xy, xz, yy, yz, zz = (comps[..., k] / safe for k in range(6))
    off = xy * xy + xz * xz + yz * yz
    q = (xx + yy + zz) / 3
    p2 = (xx - q) ** 2 + (yy - q) ** 2 + (zz - q) ** 2 + 2 * off
    p = np.sqrt(p2 / 6)
    ps = np.where(p > 0, p, 1.0)
    bxx, byy, bzz = (xx - q) / ps, (yy - q) / ps, (zz - q) / ps
    bxy, bxz, byz = xy / ps, xz / ps, yz / ps
    detb = bxx * (byy * bzz - byz * byz) - bxy * (bxy * bzz - byz * bxz) + bxz * (bxy * byz - byy * bxz)
    r = np.clip(detb / 2, -1.0, 1.0)
    phi = np.arccos(r) / 3
    hi = q + 2 * p * np.cos(phi)
    lo = q + 2 * p * np.cos(phi + 2 * np.pi / 3)
    mid = 3 * q - lo - hi
    trig = np.stack([lo, mid, hi], axis=-1)
    diag = np.sort(np.stack([xx, yy, zz], axis=-1), axis=-1)
    near_scalar = (np.sqrt(off) < 1e-14)[..., None]
    vals = np.where(near_scalar, diag, np.sort(trig, axis=-1))
    return vals * scale[..., None]


def eigvals_components(comps: np.ndarray, dim: int) -> np.ndarray:
    """Ascending closed-form eigenvalues of symmetric matrices in component form."""
    comps = np.asarray(comps, dtype=float)
    if dim == 2:
        return _eigvals_sym2(comps[..., 0], comps[..., 1], comps[..., 2])
    return _eigvals_sym3(comps)


def hessian_eigs(H: HessianField) -> EigenField:
    return EigenField(H.grid, eigvals_components(H.values, H.grid.dim))


def eigvector_components(comps: np.ndarray, lam: np.ndarray, dim: int) -> np.ndarray:
    """Unit eigenvector for eigenvalue ``lam`` of each symmetric matrix.

    Deterministic: for repeated eigenvalues an arbitrary but fixed vector of
    the eigenspace is returned.
    """
    comps = np.asarray(comps, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if dim == 2:
        xx, xy, yy = comps[..., 0], comps[..., 1], comps[..., 2]
        v1 = np.stack([lam - yy, xy], axis=-1)
        v2 = np.stack([xy, lam - xx], axis=-1)
        n1 = np.linalg.norm(v1, axis=-1)
        n2 = np.linalg.norm(v2, axis=-1)
        v = np.where((n1 >= n2)[..., None], v1, v2)
        nv = np.maximum(n1, n2)
        scale = np.maximum(np.max(np.abs(comps), axis=-1), np.abs(lam))
        degenerate = nv <= 1e-14 * np.where(scale > 0, scale, 1.0)
        fallback = np.zeros_like(v)
        fallback[..., 0] = 1.0
        return np.where(degenerate[..., None], fallback, v / np.where(nv > 0, nv, 1.0)[..., None])
    mat = components_to_matrix(comps, 3) - lam[..., None, None] * np.eye(3)
    rows = [mat[..., k, :] for k in range(3)]
    cands = [np.cross(rows[0], rows[1]), np.cross(rows[0], rows[2]), np.cross(rows[1], rows[2])]
    norms = np.stack([np.linalg.norm(c, axis=-1) for c in cands], axis=-1)
    best = np.argmax(norms, axis=-1)
    v = np.choose(best[..., None], cands)
    nv = np.max(norms, axis=-1)
    scale = np.maximum(np.max(np.abs(comps), axis=-1), np.abs(lam))
    scale = np.where(scale > 0, scale, 1.0)
    rank1 = nv <= 1e-14 * scale**2
    # eigenspace of dimension >= 2: take a vector orthogonal to the largest row
    rnorm = np.stack([np.linalg.norm(r, axis=-1) for r in rows], axis=-1)
    rbig = np.choose(np.argmax(rnorm, axis=-1)[..., None], rows)
    axis = np.argmin(np.abs(rbig), axis=-1)
    e = np.eye(3)[axis]
    w = np.cross(rbig, e)
    wn = np.linalg.norm(w, axis=-1)
    w = np.where((wn > 1e-14 * scale)[..., None], w, np.broadcast_to(np.eye(3)[0], w.shape))
    v = np.where(rank1[..., None], w, v)
    return v / np.linalg.norm(v, axis=-1)[..., None]


def infinity_laplacian(u: ScalarField) -> np.ndarray:
    grad = gradient_fd(u).values
    H = hessian_fd(u).matrix()
    return np.einsum("...ab,...a,...b->...", H, grad, grad)
