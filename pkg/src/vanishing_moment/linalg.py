"""CSR matrices, ILU(0) and right-preconditioned restarted GMRES.

The kernels are small numba loops so that summation order is fixed and the
results are bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np
import scipy.sparse as sp


class ZeroPivotError(ArithmeticError):
    def __init__(self, row: int, pivot: float):
        super().__init__(f"ILU(0) pivot {pivot!r} at row {row} is (near) zero")
        self.row = row
        self.pivot = pivot


@dataclass(frozen=True)
class SparseMatrix:
    n: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        rp = np.ascontiguousarray(self.row_ptr, dtype=np.int64)
        ci = np.ascontiguousarray(self.col_idx, dtype=np.int64)
        va = np.ascontiguousarray(self.values, dtype=np.float64)
        if rp.shape != (self.n + 1,) or rp[0] != 0 or rp[-1] != ci.size or ci.size != va.size:
            raise ValueError("inconsistent CSR arrays")
        if np.any(np.diff(rp) < 0):
            raise ValueError("row_ptr must be monotone")
        if ci.size and (ci.min() < 0 or ci.max() >= self.n):
            raise ValueError("column index out of range")
        if not _cols_strictly_ascending(rp, ci):
            raise ValueError("column indices must be strictly ascending within each row")
        if not np.all(np.isfinite(va)):
            raise ValueError("matrix has non-finite values")
        object.__setattr__(self, "row_ptr", rp)
        object.__setattr__(self, "col_idx", ci)
        object.__setattr__(self, "values", va)

    @property
    def nnz(self) -> int:
        return int(self.values.size)

    @classmethod
    def from_scipy(cls, A) -> "SparseMatrix":
        A = sp.csr_matrix(A, copy=True)
        A.sum_duplicates()
        A.sort_indices()
        return cls(A.shape[0], A.indptr, A.indices, A.data)

    @classmethod
    def from_dense(cls, D: np.ndarray) -> "SparseMatrix":
        return cls.from_scipy(sp.csr_matrix(np.asarray(D, dtype=float)))

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.values, self.col_idx, self.row_ptr), shape=(self.n, self.n))

    def to_dense(self) -> np.ndarray:
        return self.to_scipy().toarray()

    def diagonal(self) -> np.ndarray:
        return self.to_scipy().diagonal()

    def __matmul__(self, x):
        return matvec(self, x)


@numba.njit(cache=True)
def _cols_strictly_ascending(rp, ci):
    for i in range(rp.size - 1):
        for k in range(rp[i] + 1, rp[i + 1]):
            if ci[k] <= ci[k - 1]:
                return False
    return True


@numba.njit(cache=True)
def _csr_matvec(rp, ci, va, x):
    n = rp.size - 1
    y = np.empty(n)
    for i in range(n):
        s = 0.0
        for k in range(rp[i], rp[i + 1]):
            s += va[k] * x[ci[k]]
        y[i] = s
    return y


def matvec(A: SparseMatrix, x: np.ndarray) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.shape != (A.n,):
        raise ValueError(f"dimension mismatch: matrix {A.n}, vector {x.shape}")
    return _csr_matvec(A.row_ptr, A.col_idx, A.values, x)


@numba.njit(cache=True)
def _ilu0(rp, ci, va, rel_tol):
    n = rp.size - 1
    lu = va.copy()
    diag = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        for k in range(rp[i], rp[i + 1]):
            if ci[k] == i:
                diag[i] = k
                break
        if diag[i] < 0:
            return lu, diag, i
    maxabs = 0.0
    for k in range(va.size):
        if abs(va[k]) > maxabs:
            maxabs = abs(va[k])
    thresh = rel_tol * maxabs
    pos = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        for k in range(rp[i], rp[i + 1]):
            pos[ci[k]] = k
        for kk in range(rp[i], diag[i]):
            k = ci[kk]
            lu[kk] /= lu[diag[k]]
            lik = lu[kk]
            for jj in range(diag[k] + 1, rp[k + 1]):
                p = pos[ci[jj]]
                if p >= 0:
                    lu[p] -= lik * lu[jj]
        for k in range(rp[i], rp[i + 1]):
            pos[ci[k]] = -1
        if abs(lu[diag[i]]) < thresh or lu[diag[i]] == 0.0:
            return lu, diag, i
    return lu, diag, -1


@numba.njit(cache=True)
def _ilu0_apply(rp, ci, lu, diag, b):
    n = rp.size - 1
    y = np.empty(n)
    for i in range(n):
        s = b[i]
        for k in range(rp[i], diag[i]):
            s -= lu[k] * y[ci[k]]
        y[i] = s
    x = np.empty(n)
    for i in range(n - 1, -1, -1):
        s = y[i]
        for k in range(diag[i] + 1, rp[i + 1]):
            s -= lu[k] * x[ci[k]]
        x[i] = s / lu[diag[i]]
    return x


@dataclass(frozen=True)
class ILU0Factors:
    """Combined L\\U factors on the pattern of the source matrix (unit-diagonal L implied)."""

    lu: SparseMatrix
    diag_ptr: np.ndarray

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.ascontiguousarray(b, dtype=np.float64)
        return _ilu0_apply(self.lu.row_ptr, self.lu.col_idx, self.lu.values, self.diag_ptr, b)

    def lower(self) -> np.ndarray:
        dense = self.lu.to_dense()
        return np.tril(dense, -1) + np.eye(self.lu.n)

    def upper(self) -> np.ndarray:
        return np.triu(self.lu.to_dense())


def ilu0_factor(A: SparseMatrix, pivot_tol: float = 1e-14) -> ILU0Factors:
    lu, diag, bad = _ilu0(A.row_ptr, A.col_idx, A.values, pivot_tol)
    if bad >= 0:
        pivot = float(lu[diag[bad]]) if diag[bad] >= 0 else 0.0
        raise ZeroPivotError(int(bad), pivot)
    return ILU0Factors(SparseMatrix(A.n, A.row_ptr, A.col_idx, lu), diag)


@dataclass(frozen=True)
class KrylovOptions:
    tol: float = 1e-10
    restart: int = 50
    max_iters: int = 5000

    def __post_init__(self):
        if not 0 < self.tol < 1:
            raise ValueError(f"tol must lie in (0, 1), got {self.tol}")
        if self.restart < 5:
            raise ValueError(f"restart must be >= 5, got {self.restart}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")


@dataclass
class GmresStats:
    converged: bool
    iterations: int
    restarts: int
    relative_residual: float
    # relative residual estimate after each inner iteration, cycle by cycle
    cycle_histories: list[list[float]] = field(default_factory=list)


def gmres_solve(
    A: SparseMatrix,
    b: np.ndarray,
    M=None,
    opts: KrylovOptions | None = None,
    x0: np.ndarray | None = None,
) -> tuple[np.ndarray, GmresStats]:
    """Right-preconditioned restarted GMRES with modified Gram-Schmidt.

    ``M`` is any object with ``solve(v)`` approximating ``A^{-1} v``. Never
    raises on non-convergence; check ``stats.converged``. The returned iterate
    is the one with the smallest true residual seen at a restart.
    """
    opts = opts or KrylovOptions()
    b = np.ascontiguousarray(b, dtype=np.float64)
    n = A.n
    if b.shape != (n,):
        raise ValueError(f"dimension mismatch: matrix {n}, rhs {b.shape}")
    precond = M.solve if M is not None else (lambda v: v)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), GmresStats(True, 0, 0, 0.0)
    r = b - matvec(A, x)
    beta = np.linalg.norm(r)
    best_x, best_rel = x.copy(), beta / bnorm
    stats = GmresStats(best_rel <= opts.tol, 0, 0, best_rel)
    m = opts.restart
    while not stats.converged and stats.iterations < opts.max_iters:
        V = np.zeros((m + 1, n))
        Hm = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[0] = r / beta
        history = []
        j_done = 0
        for j in range(m):
            w = matvec(A, precond(V[j]))
            for i in range(j + 1):
                Hm[i, j] = np.dot(w, V[i])
                w = w - Hm[i, j] * V[i]
            Hm[j + 1, j] = np.linalg.norm(w)
            if Hm[j + 1, j] != 0.0:
                V[j + 1] = w / Hm[j + 1, j]
            for i in range(j):
                tmp = cs[i] * Hm[i, j] + sn[i] * Hm[i + 1, j]
                Hm[i + 1, j] = -sn[i] * Hm[i, j] + cs[i] * Hm[i + 1, j]
                Hm[i, j] = tmp
            denom = np.hypot(Hm[j, j], Hm[j + 1, j])
            cs[j], sn[j] = (1.0, 0.0) if denom == 0 else (Hm[j, j] / denom, Hm[j + 1, j] / denom)
            Hm[j, j] = cs[j] * Hm[j, j] + sn[j] * Hm[j + 1, j]
            Hm[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            stats.iterations += 1
            j_done = j + 1
            history.append(abs(g[j + 1]) / bnorm)
            if history[-1] <= opts.tol or stats.iterations >= opts.max_iters or Hm[j, j] == 0.0:
                break
        stats.cycle_histories.append(history)
        k = j_done
        y = np.zeros(k)
        for i in range(k - 1, -1, -1):
            if Hm[i, i] == 0.0:
                y[i] = 0.0
                continue
            y[i] = (g[i] - np.dot(Hm[i, i + 1 : k], y[i + 1 : k])) / Hm[i, i]
        x = x + precond(V[:k].T @ y)
        r = b - matvec(A, x)
        beta = np.linalg.norm(r)
        rel = beta / bnorm
        if rel < best_rel:
            best_x, best_rel = x.copy(), rel
        stats.relative_residual = best_rel
        stats.converged = best_rel <= opts.tol
        stats.restarts += 1
        if beta == 0.0 or (history and history[-1] <= opts.tol and rel > opts.tol and stats.restarts > 50):
            break
    return best_x, stats


class MixedILU0:
    """ILU(0) preconditioner for ``J = coupling * L @ L + C`` built on the split form.

    With ``w = L d`` the system ``J d = v`` is equivalent to

        w - L d = 0,    coupling * L w + C d = v,

    whose node-interleaved matrix (w before d at each node) has a stable
    ILU(0); the 13-point ``J`` itself generally does not. ``solve`` returns
    the ``d`` block of the factored split system applied to ``(0, v)``.
    """

    def __init__(self, C: SparseMatrix, L: SparseMatrix, coupling: float):
        m = C.n
        I = sp.identity(m, format="csr")
        Ls = L.to_scipy()
        K = sp.bmat([[I, -Ls], [coupling * Ls, C.to_scipy()]], format="csr")
        perm = np.empty(2 * m, dtype=np.int64)
        perm[0::2] = np.arange(m)
        perm[1::2] = m + np.arange(m)
        self.m = m
        self.perm = perm
        self.split = SparseMatrix.from_scipy(K[perm][:, perm])
        self.factors = ilu0_factor(self.split)

    def solve(self, v: np.ndarray) -> np.ndarray:
        rhs = np.zeros(2 * self.m)
        rhs[1::2] = v
        return self.factors.solve(rhs)[1::2]
