"""Discrete regularized system  -eps * biharmonic(u) + F(D^2u, grad u, u, x) - f = 0.

Unknowns are the interior nodes in flat order; Dirichlet nodes carry ``g``.
The auxiliary condition ``laplacian(u) = aux_value`` on the boundary is
imposed through ghost nodes one layer outside the box. Because the ghost is
chosen so that the discrete Laplacian at each face node equals ``aux_value``,
the ghost-eliminated biharmonic Jacobian is simply ``L_II @ L_II`` with
``L_II`` the Dirichlet-eliminated interior Laplacian.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal

import numpy as np
import scipy.sparse as sp

from .grid import MIN_NODES, Grid, ScalarField, classify_nodes
from .linalg import MixedILU0, SparseMatrix
from .models import ModelSpec, evaluate_partials, evaluate_residual
from .operators import biharmonic_fd, components_to_matrix, matrix_to_components, first_diff, hessian_pairs, laplacian_array, second_diff

AuxKind = Literal["laplacian", "normal_laplacian_derivative", "second_normal_moment"]
AUX_KINDS = ("laplacian", "normal_laplacian_derivative", "second_normal_moment")


class AssemblyError(FloatingPointError):
    pass


def check_epsilon(eps: float, allow_zero: bool = False) -> float:
    eps = float(eps)
    if not np.isfinite(eps) or abs(eps) > 1:
        raise ValueError(f"epsilon must be finite with |eps| <= 1, got {eps}")
    if eps == 0 and not allow_zero:
        raise ValueError("epsilon must be nonzero")
    return eps


@dataclass(frozen=True)
class BoundaryConditions:
    dirichlet: np.ndarray  # full node array; only boundary entries are read
    aux_value: float
    aux_kind: str = "laplacian"

    def __post_init__(self):
        if self.aux_kind not in AUX_KINDS:
            raise ValueError(f"unknown auxiliary condition {self.aux_kind!r}")
        if not np.isfinite(self.aux_value):
            raise ValueError("aux_value must be finite")
        d = np.asarray(self.dirichlet, dtype=float)
        mask = ~np.pad(np.ones(tuple(n - 2 for n in d.shape), dtype=bool), 1)
        if not np.all(np.isfinite(d[mask])):
            raise ValueError("Dirichlet data must be finite on every boundary node")
        object.__setattr__(self, "dirichlet", d)


def dirichlet_from_model(model: ModelSpec, grid: Grid, t: float | None = None) -> np.ndarray:
    """Boundary samples of ``model.boundary`` (zero if absent); interior left at 0."""
    g = np.zeros(grid.shape)
    if model.boundary is None:
        return g
    x = grid.coords()
    mask = ~grid.interior_mask()
    vals = model.boundary(x[mask]) if t is None or not model.time_dependent else model.boundary(x[mask], t)
    g[mask] = np.broadcast_to(np.asarray(vals, dtype=float), (int(mask.sum()),))
    return g


def ghost_closure(u: np.ndarray, grid: Grid, bcs: BoundaryConditions) -> np.ndarray:
    """Pad ``u`` with face ghosts so that the discrete Laplacian on each face node equals ``aux_value``.

    Edge and corner ghosts are never referenced by the biharmonic stencil and are left NaN.
    """
    if bcs.aux_kind != "laplacian":
        raise NotImplementedError(f"auxiliary condition {bcs.aux_kind!r} is not implemented; only 'laplacian' is")
    d = grid.dim
    padded = np.full(tuple(n + 2 for n in grid.shape), np.nan)
    padded[(slice(1, -1),) * d] = u
    other_h = lambda a: tuple(grid.h[c] for c in range(d) if c != a)  # noqa: E731
    for a in range(d):
        n = grid.n[a]
        for b_idx, inward, ghost_idx in ((0, 1, 0), (n - 1, n - 2, n + 1)):
            face = np.take(u, b_idx, axis=a)
            inner = np.take(u, inward, axis=a)
            tangential = laplacian_array(face, other_h(a))
            core = (slice(1, -1),) * (d - 1)
            ghost = 2 * face[core] - inner[core] + grid.h[a] ** 2 * (bcs.aux_value - tangential)
            target = tuple(ghost_idx if c == a else slice(2, -2) for c in range(d))
            padded[target] = ghost
    return padded


def laplacian_closure(bcs: BoundaryConditions):
    return lambda values, grid: ghost_closure(values, grid, bcs)


def _stencil_coo(grid: Grid, offsets_weights: list[tuple[tuple[int, ...], float]], unknown_of: np.ndarray):
    """COO triplets of an interior-to-interior stencil (boundary columns dropped)."""
    interior = np.argwhere(grid.interior_mask())
    rows, cols, vals = [], [], []
    row_ids = np.arange(len(interior))
    for off, w in offsets_weights:
        nb = interior + np.array(off)
        flat = np.ravel_multi_index(tuple(nb.T), grid.shape)
        col = unknown_of[flat]
        keep = col >= 0
        rows.append(row_ids[keep])
        cols.append(col[keep])
        vals.append(np.full(int(keep.sum()), w))
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


def _unit(d, a, s=1):
    return tuple(s if k == a else 0 for k in range(d))


@dataclass(frozen=True)
class StencilMatrices:
    """Interior-restricted difference operators and the fixed Jacobian pattern."""

    grid: Grid
    n_unknowns: int
    d1: list  # per axis, COO triplets
    d2: list  # per hessian component, COO triplets
    lap: sp.csr_matrix
    bih: tuple  # COO triplets of L_II @ L_II
    pattern_row_ptr: np.ndarray = field(repr=False)
    pattern_cols: np.ndarray = field(repr=False)

    def positions(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        keys = rows.astype(np.int64) * self.n_unknowns + cols
        pat_rows = np.repeat(np.arange(self.n_unknowns, dtype=np.int64), np.diff(self.pattern_row_ptr))
        pat_keys = pat_rows * self.n_unknowns + self.pattern_cols
        pos = np.searchsorted(pat_keys, keys)
        assert np.array_equal(pat_keys[pos], keys)
        return pos


_STENCIL_CACHE: dict[Grid, "StencilMatrices"] = {}


def stencil_matrices(grid: Grid) -> StencilMatrices:
    if grid in _STENCIL_CACHE:
        return _STENCIL_CACHE[grid]
    d = grid.dim
    nodes = classify_nodes(grid)
    unknown_of = np.full(grid.size, -1, dtype=np.int64)
    unknown_of[nodes.interior] = np.arange(nodes.interior.size)
    m = int(nodes.interior.size)
    h = grid.h
    d1 = [_stencil_coo(grid, [(_unit(d, a), 1 / (2 * h[a])), (_unit(d, a, -1), -1 / (2 * h[a]))], unknown_of) for a in range(d)]
    d2 = []
    for a, b in hessian_pairs(d):
        if a == b:
            ow = [(_unit(d, a), 1 / h[a] ** 2), ((0,) * d, -2 / h[a] ** 2), (_unit(d, a, -1), 1 / h[a] ** 2)]
        else:
            c = 1 / (4 * h[a] * h[b])
            pp = tuple(int(k == a) + int(k == b) for k in range(d))
            pm = tuple(int(k == a) - int(k == b) for k in range(d))
            ow = [(pp, c), (pm, -c), (tuple(-v for v in pm), -c), (tuple(-v for v in pp), c)]
        d2.append(_stencil_coo(grid, ow, unknown_of))
    lap = sp.csr_matrix((m, m))
    for k, (a, b) in enumerate(hessian_pairs(d)):
        if a == b:
            r, c, v = d2[k]
            lap = lap + sp.csr_matrix((v, (r, c)), shape=(m, m))
    lap.sum_duplicates()
    lap.sort_indices()
    bih = (lap @ lap).tocoo()
    bih_t = (bih.row.astype(np.int64), bih.col.astype(np.int64), bih.data)
    # fixed union pattern: biharmonic, Hessian and gradient stencils, diagonal
    all_r = [bih_t[0], np.arange(m)] + [t[0] for t in d1 + d2]
    all_c = [bih_t[1], np.arange(m)] + [t[1] for t in d1 + d2]
    pat = sp.csr_matrix((np.ones(sum(len(r) for r in all_r)), (np.concatenate(all_r), np.concatenate(all_c))), shape=(m, m))
    pat.sum_duplicates()
    pat.sort_indices()
    out = StencilMatrices(grid, m, d1, d2, lap, bih_t, pat.indptr.astype(np.int64), pat.indices.astype(np.int64))
    _STENCIL_CACHE[grid] = out
    return out


def _project_hessian_partials(d_hess: np.ndarray, dim: int, sign: float) -> np.ndarray:
    """Clip the coefficient matrix of D^2 to ``sign * A >= 0`` (off-diagonal partials count twice)."""
    off = np.array([1.0 if a == b else 0.5 for a, b in hessian_pairs(dim)])
    A = components_to_matrix(d_hess * off, dim)
    lam, Q = np.linalg.eigh(sign * A)
    if lam.min() >= 0:
        return d_hess
    A = sign * (Q * np.maximum(lam, 0.0)[:, None, :]) @ np.swapaxes(Q, -1, -2)
    return matrix_to_components(A) / off


@dataclass
class DiscreteSystem:
    """Nonlinear algebraic system on the interior unknowns.

    ``eps = 0`` is accepted for truncation-error checks of the unregularized
    scheme; solvers reject it.
    """

    grid: Grid
    model: ModelSpec
    eps: float
    bcs: BoundaryConditions
    t: float | None = None

    def __post_init__(self):
        self.eps = check_epsilon(self.eps, allow_zero=True)
        if min(self.grid.n) < MIN_NODES:
            raise ValueError(f"grid {self.grid.n} is too coarse for the 13-point stencil (need {MIN_NODES} nodes per axis)")
        if self.model.dim != self.grid.dim:
            raise ValueError(f"model dim {self.model.dim} != grid dim {self.grid.dim}")
        if self.bcs.dirichlet.shape != self.grid.shape:
            raise ValueError("Dirichlet array does not match the grid")
        if self.bcs.aux_kind != "laplacian":
            raise NotImplementedError(f"auxiliary condition {self.bcs.aux_kind!r} is not implemented; only 'laplacian' is")

    @cached_property
    def stencils(self) -> StencilMatrices:
        return stencil_matrices(self.grid)

    @cached_property
    def _positions(self):
        st = self.stencils
        m = st.n_unknowns
        parts = [st.positions(*st.bih[:2]), st.positions(np.arange(m), np.arange(m))]
        parts += [st.positions(r, c) for r, c, _ in st.d1 + st.d2]
        return parts

    @cached_property
    def interior_coords(self) -> np.ndarray:
        return self.grid.coords()[self.grid.interior]

    @property
    def n_unknowns(self) -> int:
        return int(np.prod(self.grid.interior_shape))

    def full_field(self, u_int: np.ndarray) -> np.ndarray:
        U = self.bcs.dirichlet.copy()
        U[self.grid.interior] = np.asarray(u_int, dtype=float).reshape(self.grid.interior_shape)
        return U

    def _local_state(self, U: np.ndarray):
        g = self.grid
        grad = np.stack([first_diff(U, g.h, a) for a in range(g.dim)], axis=-1)
        comps = np.stack([second_diff(U, g.h, a, b) for a, b in hessian_pairs(g.dim)], axis=-1)
        return U[g.interior], grad, comps

    def residual(self, u_int: np.ndarray) -> np.ndarray:
        U = self.full_field(u_int)
        u, grad, comps = self._local_state(U)
        with np.errstate(all="ignore"):
            F = evaluate_residual(self.model, self.interior_coords, u, grad, comps, self.t)
            R = F
            if self.eps != 0:
                B = biharmonic_fd(ScalarField(self.grid, U), laplacian_closure(self.bcs))
                R = -self.eps * B + F
        R = R.ravel()
        self._check_finite(R, "residual")
        return R

    def linearize(self, u_int: np.ndarray, scale: float = 1.0, shift: float = 0.0) -> tuple[SparseMatrix, int]:
        """Jacobian ``scale * dR/du + shift * I`` on the fixed pattern, plus the count of nonsmooth nodes."""
        return self._assemble(u_int, scale, shift, -self.eps, project=False)

    def _assemble(self, u_int, scale, shift, bih_coef, project):
        st = self.stencils
        U = self.full_field(u_int)
        u, grad, comps = self._local_state(U)
        with np.errstate(all="ignore"):
            p = evaluate_partials(self.model, self.interior_coords, u, grad, comps, self.t)
        d_hess = p.d_hess.reshape(-1, p.d_hess.shape[-1])
        if project:
            d_hess = _project_hessian_partials(d_hess, self.grid.dim, -1.0 if self.eps < 0 else 1.0)
        d_grad = p.d_grad.reshape(-1, self.grid.dim)
        d_u = p.d_u.reshape(-1)
        weights = [bih_coef * st.bih[2], d_u]
        weights += [d_grad[r, a] * v for a, (r, _, v) in enumerate(st.d1)]
        weights += [d_hess[r, k] * v for k, (r, _, v) in enumerate(st.d2)]
        pos = np.concatenate(self._positions)
        w = np.concatenate(weights)
        self._check_finite(w, "jacobian")
        data = np.bincount(pos, weights=w, minlength=st.pattern_cols.size)
        if scale != 1.0:
            data = scale * data
        if shift:
            data[self._positions[1]] += shift
        return SparseMatrix(st.n_unknowns, st.pattern_row_ptr, st.pattern_cols, data), int(p.nonsmooth.sum())

    def jacobian(self, u_int: np.ndarray) -> SparseMatrix:
        return self.linearize(u_int)[0]

    @cached_property
    def _lap_sparse(self) -> SparseMatrix:
        return SparseMatrix.from_scipy(self.stencils.lap)

    def preconditioner(self, J: SparseMatrix, u: np.ndarray | None = None, scale: float = 1.0, shift: float = 0.0) -> MixedILU0:
        """ILU(0) of the split form ``w = L d`` of the Jacobian.

        ``J`` must come from :meth:`linearize` with the same ``scale`` and
        ``shift``. When the state ``u`` is given, the second-order
        coefficient matrix is first projected onto the definite cone of the
        branch (sign of eps), which keeps the factorization stable where the
        iterate loses convexity.
        """
        if u is None:
            st = self.stencils
            bih = np.bincount(self._positions[0], weights=st.bih[2], minlength=st.pattern_cols.size)
            C = SparseMatrix(J.n, J.row_ptr, J.col_idx, J.values + scale * self.eps * bih)
        else:
            C = self._assemble(u, scale, shift, 0.0, project=True)[0]
        return MixedILU0(C, self._lap_sparse, -scale * self.eps)

    def _check_finite(self, values: np.ndarray, what: str):
        bad = ~np.isfinite(values)
        if bad.any():
            k = int(np.flatnonzero(bad)[0])
            if what == "residual":
                idx = tuple(int(i) + 1 for i in np.unravel_index(k, self.grid.interior_shape))
                raise AssemblyError(f"non-finite {what} at node {idx}, x={self.grid.node_coords(idx)}")
            raise AssemblyError(f"non-finite {what} entry {k}")


def build_system(
    model: ModelSpec,
    grid: Grid,
    eps: float,
    aux_value: float | None = None,
    aux_kind: str = "laplacian",
    t: float | None = None,
) -> DiscreteSystem:
    """System with Dirichlet data from ``model.boundary`` and ``aux_value`` defaulting to eps**2."""
    aux = eps**2 if aux_value is None else aux_value
    bcs = BoundaryConditions(dirichlet_from_model(model, grid, t), aux, aux_kind)
    return DiscreteSystem(grid, model, eps, bcs, t)


def residual_vector(sys_: DiscreteSystem, u_int: np.ndarray) -> np.ndarray:
    return sys_.residual(u_int)


def jacobian_matrix(sys_: DiscreteSystem, u_int: np.ndarray) -> SparseMatrix:
    return sys_.jacobian(u_int)
