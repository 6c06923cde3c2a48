"""Four-color Gauss-Seidel relaxation.

Structured levels relax point-wise, the unstructured finest level relaxes
aggregate blocks.  Every unit of one color is updated simultaneously from the
same snapshot of ``x``; colors are processed 0, 1, 2, 3 on a forward sweep and
3, 2, 1, 0 on the transposed (backward) sweep.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from .auxgrid import color_of
from .errors import DefinitenessError, SingularSmootherError, SizeError, StructureError
from .sparse import SENTINEL, csr_to_ell

log = logging.getLogger(__name__)

N_COLORS = 4
FORWARD = "forward"
BACKWARD = "backward"


@dataclass(eq=False)
class ColorSchedule:
    """Per-color index lists (cells or blocks); inactive units are left out."""
    lists: list
    _plans: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_colors(cls, colors, active=None):
        colors = np.asarray(colors)
        if active is None:
            active = np.ones(len(colors), dtype=bool)
        idx = np.arange(len(colors))
        return cls([idx[(colors == c) & active] for c in range(N_COLORS)])

    @classmethod
    def for_level(cls, k, active=None):
        return cls.from_colors(color_of(np.arange(4 ** k), k), active)

    def order(self, direction):
        if direction == FORWARD:
            return range(N_COLORS)
        if direction == BACKWARD:
            return range(N_COLORS - 1, -1, -1)
        raise ValueError(f"direction must be '{FORWARD}' or '{BACKWARD}'")

    def covered(self):
        return np.sort(np.concatenate(self.lists))


@dataclass(eq=False)
class _ColorPlan:
    rows: np.ndarray      # DoFs relaxed in this color, grouped by block size
    cols: np.ndarray      # (width, len(rows)) safe column indices
    vals: np.ndarray      # (width, len(rows)) coupling values outside the own block
    groups: list          # (lo, hi, size, inverse-or-diagonal) slices into rows


def _relax_color(plan, b, x):
    if len(plan.rows) == 0:
        return
    cols, vals = plan.cols, plan.vals
    s = vals[0] * x[cols[0]]
    for t in range(1, len(cols)):
        s += vals[t] * x[cols[t]]
    rhs = b[plan.rows] - s
    for lo, hi, size, inv in plan.groups:
        if size == 1:
            x[plan.rows[lo:hi]] = rhs[lo:hi] / inv
        else:
            r = rhs[lo:hi].reshape(-1, size)
            x[plan.rows[lo:hi]] = np.einsum("mij,mj->mi", inv, r).ravel()


# --- point smoother ----------------------------------------------------------

def _point_plans(A, schedule):
    key = ("point", id(A))
    plans = schedule._plans.get(key)
    if plans is not None and plans[0] is A:
        return plans[1]
    cols, vals = A.safe_cols, A.vals
    diag = vals[0]
    plans = []
    for rows in schedule.lists:
        if np.any(diag[rows] == 0.0):
            bad = int(rows[np.argmax(diag[rows] == 0.0)])
            raise SingularSmootherError(f"zero diagonal on active row {bad}")
        groups = [(0, len(rows), 1, diag[rows])] if len(rows) else []
        plans.append(_ColorPlan(rows, cols[1:, rows] if A.width > 1 else np.zeros((1, len(rows)), dtype=np.int64),
                                vals[1:, rows] if A.width > 1 else np.zeros((1, len(rows))),
                                groups))
    schedule._plans[key] = (A, plans)
    return plans


def point_gs_sweep(A, b, x, schedule, direction=FORWARD):
    """One colored point Gauss-Seidel sweep on an EllMatrix, updating ``x`` in place.

    Parameters
    ----------
    A : EllMatrix
        Diagonal-first operator.
    b, x : ndarray
        Right-hand side and iterate; ``x`` is overwritten.
    schedule : ColorSchedule
        Rows of each color.  Rows absent from every list are never touched.
    direction : {'forward', 'backward'}
        Color order 0..3 or 3..0.

    Returns
    -------
    x : ndarray
    """
    if len(b) != A.n_rows or len(x) != A.n_rows:
        raise SizeError("vector length does not match operator")
    plans = _point_plans(A, schedule)
    for c in schedule.order(direction):
        _relax_color(plans[c], b, x)
    return x


# --- block smoother ----------------------------------------------------------

@dataclass(eq=False)
class BlockFactors:
    """Inverted diagonal blocks ``A[G_i, G_i]`` of the finest operator.

    ``inverses[i]`` is ``None`` for empty aggregates.  The inverses come from
    LAPACK LU (``getrf``/``getri`` through ``numpy.linalg.inv``) on blocks of a
    handful of DoFs each.
    """
    A: object
    members: list
    blocks: list
    inverses: list
    colors: np.ndarray
    padded: object = field(repr=False, default=None)
    external: np.ndarray = field(repr=False, default=None)
    _plans: dict = field(default_factory=dict, repr=False)

    @property
    def n_blocks(self):
        return len(self.members)

    def nonempty(self):
        return np.array([len(m) > 0 for m in self.members], dtype=bool)

    def schedule(self):
        return ColorSchedule.from_colors(self.colors, self.nonempty())


def _extract_blocks(A, member_matrix):
    m, s = member_matrix.shape
    rows = np.repeat(member_matrix, s, axis=1).ravel()
    cols = np.tile(member_matrix, (1, s)).ravel()
    vals = np.asarray(A.scipy[rows, cols]).ravel()
    return vals.reshape(m, s, s)


def factor_blocks(A, agg, colors=None):
    """Factor the principal submatrix of every nonempty aggregate.

    Parameters
    ----------
    A : CsrMatrix
    agg : AggregationMap
        Blocks are the aggregates; empty aggregates get no factorization.
    colors : array_like, optional
        Color of each aggregate.  Defaults to the quadtree coloring of level
        ``agg.level`` when ``agg`` has ``4**level`` aggregates, else color 0.

    Returns
    -------
    BlockFactors
    """
    if A.n_rows != agg.n_dofs:
        raise SizeError("aggregation does not match matrix order")
    nb = agg.n_aggregates
    if colors is None:
        if nb == 4 ** agg.level:
            colors = color_of(np.arange(nb), agg.level)
        else:
            colors = np.zeros(nb, dtype=np.int64)
    colors = np.asarray(colors, dtype=np.int64)
    members = agg.members
    sizes = agg.sizes
    blocks = [None] * nb
    inverses = [None] * nb
    for size in np.unique(sizes[sizes > 0]):
        ids = np.flatnonzero(sizes == size)
        mm = np.stack([members[i] for i in ids])
        sub = _extract_blocks(A, mm)
        try:
            inv = np.linalg.inv(sub)
        except np.linalg.LinAlgError:
            inv = None
        if inv is None or not np.all(np.isfinite(inv)):
            for i, blk in zip(ids, sub):
                try:
                    bi = np.linalg.inv(blk)
                except np.linalg.LinAlgError:
                    bi = None
                if bi is None or not np.all(np.isfinite(bi)):
                    raise DefinitenessError(f"diagonal block of aggregate {int(i)} is singular")
        for i, blk, bi in zip(ids, sub, inv):
            blocks[i] = blk
            inverses[i] = bi

    width = max(1, int(A.row_lengths().max())) if A.n_rows else 1
    padded = csr_to_ell(A, width)
    cols = padded.cols
    rows = np.broadcast_to(np.arange(A.n_rows), cols.shape)
    own = (cols != SENTINEL) & (agg.agg_of[padded.safe_cols] == agg.agg_of[rows])
    external = np.where(own, 0.0, padded.vals)
    return BlockFactors(A, members, blocks, inverses, colors, padded, external)


def _block_plans(factors, schedule):
    key = ("block", id(schedule))
    plans = factors._plans.get(key)
    if plans is not None and plans[0] is schedule:
        return plans[1]
    safe = factors.padded.safe_cols
    plans = []
    for ids in schedule.lists:
        sizes = np.array([len(factors.members[i]) for i in ids], dtype=np.int64)
        rows, groups, lo = [], [], 0
        for size in np.unique(sizes[sizes > 0]):
            sel = ids[sizes == size]
            mm = np.stack([factors.members[i] for i in sel])
            if size == 1:
                inv = np.array([factors.blocks[i][0, 0] for i in sel])
            else:
                inv = np.stack([factors.inverses[i] for i in sel])
            rows.append(mm.ravel())
            groups.append((lo, lo + mm.size, int(size), inv))
            lo += mm.size
        rows = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
        plans.append(_ColorPlan(rows, safe[:, rows], factors.external[:, rows], groups))
    factors._plans[key] = (schedule, plans)
    return plans


def block_gs_sweep(A, factors, b, x, schedule, direction=FORWARD):
    """One colored block Gauss-Seidel sweep with aggregates as blocks.

    For each color, every block ``G`` of that color solves
    ``A[G, G] x[G] = b[G] - A[G, not G] x[not G]`` against the iterate as it
    stood when the color began.  ``x`` is updated in place and returned.
    """
    if factors.A is not A:
        raise StructureError("block factors were built for a different matrix")
    if len(b) != A.n_rows or len(x) != A.n_rows:
        raise SizeError("vector length does not match operator")
    plans = _block_plans(factors, schedule)
    for c in schedule.order(direction):
        _relax_color(plans[c], b, x)
    return x


@dataclass
class LocalityReport:
    violations: list

    @property
    def clean(self):
        return not self.violations


def check_color_locality(A, agg, schedule):
    """List couplings ``a_ij != 0`` between two distinct blocks of the same color.

    Such couplings turn the within-color update into a simultaneous
    (Jacobi-like) update, which is still a valid smoother.  Returns a
    :class:`LocalityReport` whose ``violations`` are ``(i, j, block_i, block_j)``.
    """
    color = np.full(agg.n_aggregates, -1, dtype=np.int64)
    for c, ids in enumerate(schedule.lists):
        color[ids] = c
    rows = A.row_of_entry
    bi, bj = agg.agg_of[rows], agg.agg_of[A.col_idx]
    bad = (bi != bj) & (A.values != 0.0) & (color[bi] == color[bj]) & (color[bi] >= 0)
    hits = np.flatnonzero(bad)
    violations = [(int(rows[e]), int(A.col_idx[e]), int(bi[e]), int(bj[e])) for e in hits]
    if violations:
        log.warning("%d same-color block couplings; those blocks relax simultaneously",
                    len(violations))
    return LocalityReport(violations)


def smooth(level, b, x, direction=FORWARD, sweeps=1):
    """Apply ``sweeps`` sweeps of the level's own smoother."""
    for _ in range(sweeps):
        if level.factors is not None:
            block_gs_sweep(level.A, level.factors, b, x, level.schedule, direction)
        else:
            point_gs_sweep(level.A, b, x, level.schedule, direction)
    return x
