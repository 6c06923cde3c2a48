"""Setup phase: aggregation, 9-point coarse operators and grid transfers.

Levels are stored finest first.  Each :class:`Level` keeps the quadtree level
number ``k`` (coarse = small); the unstructured finest system is tagged
``k = L + 1``.
"""
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .auxgrid import AuxGrid, aggregate_coarse, aggregate_finest, bounding_box, choose_depth
from .errors import DefinitenessError, SizeError, StructureError
from .smoother import ColorSchedule, factor_blocks
from .sparse import SENTINEL, CsrMatrix, DenseMatrix, EllMatrix

log = logging.getLogger(__name__)

STENCIL_WIDTH = 9
# (dx, dy) of slots 0..8: the cell itself, then i1..i8 counter-clockwise from east
STENCIL_OFFSETS = ((0, 0), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1))
_SLOT = np.full((3, 3), -1, dtype=np.int64)
for _t, (_dx, _dy) in enumerate(STENCIL_OFFSETS):
    _SLOT[_dy + 1, _dx + 1] = _t


@dataclass
class HierarchyOptions:
    coarsest_size: int = 64
    strict_locality: bool = False
    lump_dropped: bool = False
    symmetry_tol: float = 1e-10


@dataclass
class DroppedCouplings:
    """Fine couplings between auxiliary cells that are not stencil neighbors."""
    count: int = 0
    mass: float = 0.0
    entries: list = field(default_factory=list)


@dataclass(eq=False)
class Level:
    k: int
    A: object
    active: np.ndarray
    agg: object = None            # AggregationMap onto the next coarser level
    schedule: ColorSchedule = None
    factors: object = None        # BlockFactors on the finest level only

    @property
    def size(self):
        return self.A.shape[0]

    @property
    def nnz(self):
        return self.A.nnz

    @property
    def structured(self):
        return isinstance(self.A, EllMatrix)


@dataclass(eq=False)
class Hierarchy:
    levels: list
    coarsest: DenseMatrix
    grid: AuxGrid = None
    options: HierarchyOptions = field(default_factory=HierarchyOptions)
    dropped: DroppedCouplings = field(default_factory=DroppedCouplings)
    setup_time: float = 0.0

    @property
    def n_levels(self):
        return len(self.levels)

    def sizes(self):
        return [lvl.size for lvl in self.levels]

    def operator_complexity(self):
        nnz = [lvl.nnz for lvl in self.levels]
        return sum(nnz) / nnz[0] if nnz[0] else 1.0

    def stats(self):
        return {
            "levels": self.n_levels,
            "sizes": self.sizes(),
            "nnz": [lvl.nnz for lvl in self.levels],
            "k": [lvl.k for lvl in self.levels],
            "operator_complexity": self.operator_complexity(),
            "depth": None if self.grid is None else self.grid.depth,
            "dropped_couplings": self.dropped.count,
            "dropped_mass": self.dropped.mass,
        }


# --- stencil and coarse operators -------------------------------------------

def build_stencil_indices(k):
    """Column-major ``Aj`` (length ``9 * 4**k``) of the level-``k`` 9-point stencil.

    Slot 0 is the cell itself; slots 1..8 are the neighbors east, north-east,
    north, north-west, west, south-west, south, south-east.  Neighbors
    outside the grid get the sentinel ``-1``.
    """
    w = 1 << k
    i = np.arange(w * w)
    t1, t2 = i % w, i // w
    aj = np.empty((STENCIL_WIDTH, w * w), dtype=np.int64)
    for t, (dx, dy) in enumerate(STENCIL_OFFSETS):
        s1, s2 = t1 + dx, t2 + dy
        inside = (s1 >= 0) & (s1 < w) & (s2 >= 0) & (s2 < w)
        aj[t] = np.where(inside, s1 + w * s2, SENTINEL)
    return aj.ravel()


def _sum_into_stencil(rows, cols, vals, agg_of, k, strict, lump, dropped):
    """Aggregate-sum ``(rows, cols, vals)`` triplets into level-``k`` 9-point slots."""
    w = 1 << k
    n = w * w
    r, q = agg_of[rows], agg_of[cols]
    dx = q % w - r % w
    dy = q // w - r // w
    local = (np.abs(dx) <= 1) & (np.abs(dy) <= 1)
    if not local.all():
        far = ~local & (vals != 0.0)
        if far.any():
            if strict:
                e = int(np.argmax(far))
                raise StructureError(
                    f"coupling ({int(rows[e])}, {int(cols[e])}) joins non-neighboring "
                    f"auxiliary cells {int(r[e])} and {int(q[e])} on level {k}")
            mass = float(np.abs(vals[far]).sum())
            dropped.count += int(far.sum())
            dropped.mass += mass
            dropped.entries.extend(zip(rows[far].tolist(), cols[far].tolist(), vals[far].tolist()))
            log.warning("level %d: %d couplings beyond the 9-point stencil %s (sum |a| = %.3e)",
                        k, int(far.sum()), "lumped to the diagonal" if lump else "dropped", mass)
        if lump:
            # keeps row sums: a_rq moves to (r, r)
            dx = np.where(local, dx, 0)
            dy = np.where(local, dy, 0)
        else:
            keep = local
            r, dx, dy, vals = r[keep], dx[keep], dy[keep], vals[keep]
    slot = _SLOT[dy + 1, dx + 1]
    ax = np.bincount(slot * n + r, weights=vals, minlength=STENCIL_WIDTH * n)
    return ax


def _finish_level(ax, k, n_members):
    n = 4 ** k
    aj = build_stencil_indices(k)
    ax = np.where(aj == SENTINEL, 0.0, ax)
    active = n_members > 0
    ax[:n][~active] = 1.0
    return EllMatrix(n, STENCIL_WIDTH, aj, ax), active


def assemble_coarse_finest(A, agg, strict=False, lump_dropped=False, dropped=None):
    """Galerkin operator on the auxiliary grid from the unstructured matrix.

    Each entry is ``sum_{i in G_r} sum_{j in G_q} a_ij`` for ``q`` in the
    9-point stencil of ``r``.  Couplings between cells that are not stencil
    neighbors are dropped with a warning (or lumped onto the diagonal when
    ``lump_dropped``), or raise StructureError when ``strict``.  Rows of
    empty aggregates get diagonal 1.

    Returns
    -------
    A_coarse : EllMatrix
    active : ndarray of bool
    """
    if A.n_rows != agg.n_dofs:
        raise SizeError("aggregation does not match matrix order")
    dropped = DroppedCouplings() if dropped is None else dropped
    ax = _sum_into_stencil(A.row_of_entry, A.col_idx, A.values, agg.agg_of, agg.level,
                           strict, lump_dropped, dropped)
    return _finish_level(ax, agg.level, agg.sizes)


def assemble_coarse_structured(A_next, k, active_next=None):
    """Galerkin operator on level ``k`` from the 9-point operator on level ``k + 1``.

    Each coarse cell aggregates its four children.  Inactive fine rows are
    excluded from the sums; a coarse cell with no active child is inactive.

    Returns
    -------
    A_coarse : EllMatrix
    active : ndarray of bool
    """
    n_next = A_next.n_rows
    if n_next != 4 ** (k + 1):
        raise SizeError(f"level {k + 1} operator must have {4 ** (k + 1)} rows")
    if active_next is None:
        active_next = np.ones(n_next, dtype=bool)
    cols = A_next.cols
    rows = np.broadcast_to(np.arange(n_next), cols.shape)
    live = cols != SENTINEL
    live &= active_next[rows] & active_next[np.where(live, cols, 0)]
    r, c, v = rows[live], cols[live], A_next.vals[live]
    agg = aggregate_coarse(k + 1)
    dropped = DroppedCouplings()
    ax = _sum_into_stencil(r, c, v, agg.agg_of, k, True, False, dropped)
    n_active_children = np.bincount(agg.agg_of, weights=active_next, minlength=4 ** k)
    return _finish_level(ax, k, n_active_children)


def galerkin_sum(A, agg):
    """General summation-form Galerkin product ``P^T A P`` as a CsrMatrix.

    Used when the aggregation has no stencil structure (arbitrary partitions).
    """
    nc = agg.n_aggregates
    r = agg.agg_of[A.row_of_entry]
    q = agg.agg_of[A.col_idx]
    keys = r * nc + q
    uniq, inv = np.unique(keys, return_inverse=True)
    vals = np.bincount(inv, weights=A.values, minlength=len(uniq))
    rows, cols = uniq // nc, uniq % nc
    row_ptr = np.zeros(nc + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=nc), out=row_ptr[1:])
    return CsrMatrix(nc, nc, row_ptr, cols.astype(np.int64), vals)


# --- transfers ----------------------------------------------------------------

def prolongate(v_coarse, agg, active_fine=None):
    """Piecewise-constant interpolation: fine DoF ``i`` copies its aggregate's value.

    Fine DoFs flagged inactive receive 0.
    """
    v_coarse = np.asarray(v_coarse, dtype=np.float64)
    if v_coarse.shape != (agg.n_aggregates,):
        raise SizeError(f"expected {agg.n_aggregates} coarse values, got {v_coarse.shape}")
    v = v_coarse[agg.agg_of]
    if active_fine is not None:
        v[~active_fine] = 0.0
    return v


def restrict_structured(v, k):
    """Four-child restriction from level ``k`` to ``k - 1`` in closed form."""
    w = 1 << k
    g = np.asarray(v, dtype=np.float64).reshape(w, w)   # g[t2, t1]
    return (g[0::2, 0::2] + g[0::2, 1::2] + g[1::2, 1::2] + g[1::2, 0::2]).ravel()


def restrict(v_fine, agg, active_fine=None):
    """Sum fine values over each aggregate; empty aggregates yield 0."""
    v_fine = np.asarray(v_fine, dtype=np.float64)
    if v_fine.shape != (agg.n_dofs,):
        raise SizeError(f"expected {agg.n_dofs} fine values, got {v_fine.shape}")
    if active_fine is not None:
        v_fine = np.where(active_fine, v_fine, 0.0)
    if agg.n_aggregates * 4 == agg.n_dofs == 4 ** agg.level and _is_standard_coarse(agg):
        return restrict_structured(v_fine, agg.level)
    return np.bincount(agg.agg_of, weights=v_fine, minlength=agg.n_aggregates)


def _is_standard_coarse(agg):
    std = agg.__dict__.get("_standard")
    if std is None:
        std = bool(np.array_equal(agg.agg_of, aggregate_coarse(agg.level).agg_of))
        agg.__dict__["_standard"] = std
    return std


# --- whole hierarchy ---------------------------------------------------------

def check_spd_input(A, tol=1e-10):
    if A.n_rows != A.n_cols:
        raise StructureError(f"matrix must be square, got {A.shape}")
    if A.n_rows == 0:
        return
    S = A.scipy
    asym = abs(S - S.T)
    scale = np.abs(A.values).max() if A.nnz else 1.0
    if asym.nnz and asym.max() > tol * scale:
        raise StructureError(f"matrix is not symmetric (max |a_ij - a_ji| = {asym.max():.3e})")
    d = A.diagonal()
    if np.any(d <= 0.0):
        r = int(np.argmax(d <= 0.0))
        raise DefinitenessError(f"nonpositive diagonal entry {d[r]!r} in row {r}")


def setup_hierarchy(A, coords, options=None, **overrides):
    """Build the auxiliary-grid AMG hierarchy for an SPD matrix.

    Parameters
    ----------
    A : CsrMatrix
        Symmetric positive definite finest-level operator.
    coords : array_like, shape (N, 2)
        Coordinates of the DoFs.
    options : HierarchyOptions, optional
        Keyword overrides (``coarsest_size=...``) are applied on top.

    Returns
    -------
    Hierarchy
    """
    t0 = time.perf_counter()
    opts = HierarchyOptions() if options is None else options
    if overrides:
        opts = HierarchyOptions(**{**opts.__dict__, **overrides})
    check_spd_input(A, opts.symmetry_tol)
    n = A.n_rows
    coords = np.asarray(coords, dtype=np.float64)
    if coords.shape != (n, 2):
        raise SizeError(f"coords must have shape ({n}, 2), got {coords.shape}")

    depth = choose_depth(n) if n >= 4 else 0
    if n <= opts.coarsest_size or depth < 1:
        finest = Level(depth + 1, A, np.ones(n, dtype=bool))
        coarsest = DenseMatrix(A.to_dense()).factor()
        return Hierarchy([finest], coarsest, None, opts, DroppedCouplings(),
                         time.perf_counter() - t0)

    grid = AuxGrid(*bounding_box(coords), depth)
    agg = aggregate_finest(coords, grid)
    dropped = DroppedCouplings()
    A_k, active = assemble_coarse_finest(A, agg, opts.strict_locality, opts.lump_dropped, dropped)
    factors = factor_blocks(A, agg)
    finest = Level(depth + 1, A, np.ones(n, dtype=bool), agg, factors.schedule(), factors)
    levels = [finest]

    k = depth
    while True:
        lvl = Level(k, A_k, active)
        levels.append(lvl)
        if A_k.n_rows <= opts.coarsest_size or k == 0:
            break
        lvl.agg = aggregate_coarse(k)
        lvl.schedule = ColorSchedule.for_level(k, active)
        A_k, active = assemble_coarse_structured(A_k, k - 1, active)
        k -= 1

    coarsest = DenseMatrix(levels[-1].A.to_dense()).factor()
    h = Hierarchy(levels, coarsest, grid, opts, dropped, time.perf_counter() - t0)
    log.info("hierarchy: sizes %s, operator complexity %.3f", h.sizes(), h.operator_complexity())
    return h
