"""Uniform tensor-product grids over axis-aligned boxes.

Nodes are stored as numpy arrays of shape ``grid.shape`` with axis 0 the
first coordinate. Flat indices follow C (row-major, last axis fastest) order
everywhere in the package, so matrices and dumps are reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

MIN_NODES = 5


@dataclass(frozen=True)
class Grid:
    lo: tuple[float, ...]
    hi: tuple[float, ...]
    n: tuple[int, ...]
    h: tuple[float, ...] = field(init=False)
    # storage-only grids (e.g. parsed dumps) may go down to 2 nodes; solvers need MIN_NODES
    min_nodes: int = field(default=MIN_NODES, compare=False, repr=False)

    def __post_init__(self):
        if len(self.lo) not in (2, 3) or not (len(self.lo) == len(self.hi) == len(self.n)):
            raise ValueError(f"grid must be 2-D or 3-D with matching lo/hi/n, got {self.lo}, {self.hi}, {self.n}")
        for a, (lo, hi, n) in enumerate(zip(self.lo, self.hi, self.n)):
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise ValueError(f"non-finite bounds on axis {a}: ({lo}, {hi})")
            if not hi > lo:
                raise ValueError(f"axis {a}: hi={hi} must exceed lo={lo}")
            if n < max(2, self.min_nodes):
                raise ValueError(f"axis {a}: need at least {max(2, self.min_nodes)} nodes, got {n}")
        object.__setattr__(self, "h", tuple((hi - lo) / (n - 1) for lo, hi, n in zip(self.lo, self.hi, self.n)))

    @property
    def dim(self) -> int:
        return len(self.n)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.n)

    @property
    def size(self) -> int:
        return int(np.prod(self.n))

    @property
    def interior_shape(self) -> tuple[int, ...]:
        return tuple(n - 2 for n in self.n)

    @property
    def interior(self) -> tuple[slice, ...]:
        """Slice tuple selecting the interior block of a node array."""
        return (slice(1, -1),) * self.dim

    def axis_coords(self, axis: int) -> np.ndarray:
        return self.lo[axis] + np.arange(self.n[axis]) * self.h[axis]

    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``grid.shape + (dim,)``."""
        axes = [self.axis_coords(a) for a in range(self.dim)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def node_coords(self, index: Sequence[int]) -> tuple[float, ...]:
        return tuple(self.lo[a] + index[a] * self.h[a] for a in range(self.dim))

    def flat(self, index: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(index), self.shape))

    def unflat(self, k: int) -> tuple[int, ...]:
        return tuple(int(i) for i in np.unravel_index(k, self.shape))

    def interior_mask(self) -> np.ndarray:
        return self.deep_interior_mask(1)

    def deep_interior_mask(self, k: int) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        if all(n - 1 - k >= k for n in self.n):
            mask[(slice(k, -k if k else None),) * self.dim] = True
        return mask


def build_grid(lo: Sequence[float], hi: Sequence[float], n: Sequence[int] | int, min_nodes: int = MIN_NODES) -> Grid:
    """Build a uniform grid; ``n`` may be a single count applied to every axis."""
    lo = tuple(float(v) for v in lo)
    hi = tuple(float(v) for v in hi)
    if isinstance(n, (int, np.integer)):
        n = (int(n),) * len(lo)
    return Grid(lo, hi, tuple(int(v) for v in n), min_nodes)


@dataclass(frozen=True)
class NodeSets:
    grid: Grid
    interior: np.ndarray
    boundary: np.ndarray

    def deep_interior(self, k: int) -> np.ndarray:
        """Flat indices of nodes with ``k <= i[a] <= n[a]-1-k`` on every axis."""
        return np.flatnonzero(self.grid.deep_interior_mask(k).ravel())


def classify_nodes(grid: Grid) -> NodeSets:
    mask = grid.interior_mask().ravel()
    return NodeSets(grid, np.flatnonzero(mask), np.flatnonzero(~mask))


@dataclass(frozen=True)
class ScalarField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise ValueError(f"field shape {values.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "values", values)

    def interior_values(self) -> np.ndarray:
        return self.values[self.grid.interior].ravel()


def sample_function(grid: Grid, fn: Callable[[np.ndarray], np.ndarray]) -> ScalarField:
    """Evaluate ``fn`` at every node.

    ``fn`` receives coordinates of shape ``(..., dim)`` and must broadcast.
    """
    x = grid.coords()
    values = np.broadcast_to(np.asarray(fn(x), dtype=float), grid.shape).copy()
    bad = ~np.isfinite(values)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise ValueError(f"non-finite value {values[idx]} at node {idx}, x={grid.node_coords(idx)}")
    return ScalarField(grid, values)
