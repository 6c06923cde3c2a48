"""Quadtree index arithmetic on the auxiliary structured grid.

The tree is full and never stored: cell ``i`` on level ``k`` is
``i = t1 + 2**k * t2`` with ``0 <= t1, t2 < 2**k`` (x index, y index), and its
parent on level ``k - 1`` is ``(t1 // 2) + 2**(k - 1) * (t2 // 2)``.
"""
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, GeometryError

# one below 1.0, so floor(u * 2**k) never reaches 2**k
_ONE_MINUS = np.nextafter(1.0, 0.0)


@dataclass(frozen=True)
class AuxGrid:
    a1: float
    b1: float
    a2: float
    b2: float
    depth: int

    def __post_init__(self):
        if not (self.b1 > self.a1 and self.b2 > self.a2):
            raise GeometryError(f"degenerate box ({self.a1}, {self.b1}) x ({self.a2}, {self.b2})")
        if self.depth < 1:
            raise ArgumentError("quadtree depth must be >= 1")

    @classmethod
    def from_points(cls, coords, n_dofs=None):
        coords = np.asarray(coords, dtype=np.float64)
        n = len(coords) if n_dofs is None else n_dofs
        return cls(*bounding_box(coords), choose_depth(n))

    def width(self, k):
        return 1 << k

    @property
    def box(self):
        return (self.a1, self.b1, self.a2, self.b2)


@dataclass(eq=False)
class AggregationMap:
    """``agg_of[j]`` is the aggregate holding DoF ``j``; aggregates may be empty."""
    level: int
    agg_of: np.ndarray
    n_aggregates: int

    def __post_init__(self):
        self.agg_of = np.asarray(self.agg_of, dtype=np.int64)
        if self.agg_of.size and (self.agg_of.min() < 0 or self.agg_of.max() >= self.n_aggregates):
            raise ArgumentError("aggregate id out of range")

    @property
    def n_dofs(self):
        return len(self.agg_of)

    @property
    def sizes(self):
        return np.bincount(self.agg_of, minlength=self.n_aggregates)

    @property
    def members(self):
        """Inverse lists, ``members[i]`` sorted ascending (possibly empty)."""
        cached = self.__dict__.get("_members")
        if cached is None:
            order = np.argsort(self.agg_of, kind="stable")
            split = np.cumsum(self.sizes)[:-1]
            cached = np.split(order, split)
            self.__dict__["_members"] = cached
        return cached

    def nonempty(self):
        return self.sizes > 0


def bounding_box(coords):
    """Return ``(a1, b1, a2, b2)``: the coordinate-wise min/max of the points."""
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != 2:
        raise ArgumentError("coords must have shape (n, 2)")
    if len(coords) == 0:
        raise ArgumentError("bounding box of an empty point set")
    if not np.all(np.isfinite(coords)):
        raise GeometryError("non-finite coordinate")
    a1, a2 = coords.min(axis=0)
    b1, b2 = coords.max(axis=0)
    if b1 == a1 or b2 == a2:
        raise GeometryError(f"degenerate bounding box ({a1}, {b1}) x ({a2}, {b2})")
    return float(a1), float(b1), float(a2), float(b2)


def choose_depth(n_dofs, dim=2):
    """Quadtree depth ``L = floor(log(N) / log(4))``, lowered so that ``4**L < N``.

    Evaluated in integer arithmetic; powers of four land on ``L - 1``.
    """
    if dim != 2:
        raise ArgumentError("only the 2D quadtree is supported")
    n = int(n_dofs)
    if n < 4:
        raise ArgumentError(f"need at least 4 DoFs to build a quadtree, got {n}")
    depth = (n.bit_length() - 1) // 2
    if 4 ** depth == n:
        depth -= 1
    return depth


def _normalized(vals, lo, hi, what):
    vals = np.asarray(vals, dtype=np.float64)
    if np.any(vals < lo) or np.any(vals > hi) or not np.all(np.isfinite(vals)):
        raise GeometryError(f"{what} coordinate outside [{lo}, {hi}]")
    u = (vals - lo) / (hi - lo)
    return np.minimum(u, _ONE_MINUS)


def cell_indices(x, y, grid, k):
    """Vectorized (xIdx, yIdx) of the level-``k`` cells containing the points."""
    w = 1 << k
    u = _normalized(x, grid.a1, grid.b1, "x")
    v = _normalized(y, grid.a2, grid.b2, "y")
    return (np.floor(u * w).astype(np.int64), np.floor(v * w).astype(np.int64))


def subregion_of_point(x, y, grid, k):
    """Lexicographic index ``yIdx * 2**k + xIdx`` of the level-``k`` cell holding ``(x, y)``.

    Cells are half-open ``[low, high)``; points on the upper edge of the box
    fall into the last cell.  Accepts scalars or arrays.
    """
    if k < 0:
        raise ArgumentError("level must be >= 0")
    xi, yi = cell_indices(x, y, grid, k)
    i = yi * (1 << k) + xi
    return int(i) if np.ndim(i) == 0 else i


def aggregate_finest(coords, grid):
    """Aggregate unstructured DoFs by the level-``L`` auxiliary cell they fall in."""
    coords = np.asarray(coords, dtype=np.float64)
    L = grid.depth
    agg = subregion_of_point(coords[:, 0], coords[:, 1], grid, L)
    return AggregationMap(L, np.atleast_1d(agg), 4 ** L)


def aggregate_coarse(k):
    """Map the ``4**k`` cells of level ``k`` onto their parents on level ``k - 1``."""
    if k < 1:
        raise ArgumentError("coarse aggregation needs level k >= 1")
    w = 1 << k
    j = np.arange(w * w)
    t1, t2 = j % w, j // w
    agg = (t2 // 2) * (w // 2) + t1 // 2
    return AggregationMap(k, agg, 4 ** (k - 1))


def color_of(i, k):
    """Four-coloring of level-``k`` cells: ``(t1 % 2) + 2 * (t2 % 2)``.

    Cells sharing an edge or a corner always get different colors.
    """
    w = 1 << k
    i = np.asarray(i)
    if np.any(i < 0) or np.any(i >= w * w):
        raise ArgumentError(f"cell index out of range for level {k}")
    c = (i % w) % 2 + 2 * ((i // w) % 2)
    return int(c) if c.ndim == 0 else c


def level_colors(k):
    return color_of(np.arange(4 ** k), k)
