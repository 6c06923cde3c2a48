"""Sparse storage (ELL, CSR, dense), mat-vec kernels and Matrix Market I/O.

ELL layout: ``col_idx`` and ``values`` are flat arrays of length
``n_rows * width`` in column-major order, so logical slot ``(r, t)`` lives at
offset ``t * n_rows + r``.  Slot 0 of every row holds the diagonal; unused
slots carry column ``-1`` and value ``0.0``.
"""
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg
import scipy.sparse

from . import parallel
from .errors import CapacityError, DefinitenessError, ParseError, SizeError, StructureError

SENTINEL = -1


@dataclass(frozen=True, eq=False)
class EllMatrix:
    n_rows: int
    width: int
    col_idx: np.ndarray
    values: np.ndarray
    n_cols: int = None

    def __post_init__(self):
        n, k = self.n_rows, self.width
        if self.n_cols is None:
            object.__setattr__(self, "n_cols", n)
        if self.col_idx.shape != (n * k,) or self.values.shape != (n * k,):
            raise SizeError(f"ELL arrays must have length {n}*{k}")

    @property
    def cols(self):
        """``(width, n_rows)`` view; ``cols[t, r]`` is slot ``t`` of row ``r``."""
        return self.col_idx.reshape(self.width, self.n_rows)

    @property
    def vals(self):
        return self.values.reshape(self.width, self.n_rows)

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self):
        return int(np.count_nonzero(self.col_idx != SENTINEL))

    def diagonal(self):
        return self.vals[0].copy()

    @cached_property
    def safe_cols(self):
        # padded slots read x[0]; their value is 0.0
        c = self.cols.copy()
        c[c == SENTINEL] = 0
        return c

    def check(self):
        """Raise StructureError if any ELL invariant is violated."""
        c, v = self.cols, self.vals
        n = self.n_rows
        if self.n_cols != n:
            raise StructureError("diagonal-first storage needs a square matrix")
        if n and not np.array_equal(c[0], np.arange(n)):
            raise StructureError("slot 0 must hold the diagonal")
        pad = c == SENTINEL
        if np.any(v[pad] != 0.0):
            raise StructureError("padded slots must carry 0.0")
        live = c[~pad]
        if live.size and (live.min() < 0 or live.max() >= n):
            raise StructureError("column index out of range")
        srt = np.sort(np.where(pad, -1 - np.arange(self.width)[:, None], c), axis=0)
        if np.any(srt[1:] == srt[:-1]):
            raise StructureError("duplicate column within a row")

    def to_csr(self):
        c, v = self.cols.T, self.vals.T
        keep = c != SENTINEL
        rows = np.broadcast_to(np.arange(self.n_rows)[:, None], c.shape)[keep]
        m = scipy.sparse.coo_matrix((v[keep], (rows, c[keep])), shape=self.shape).tocsr()
        m.sort_indices()
        return CsrMatrix.from_scipy(m)

    def to_dense(self):
        return self.to_csr().to_dense()


@dataclass(frozen=True, eq=False)
class CsrMatrix:
    n_rows: int
    n_cols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        rp = self.row_ptr
        if rp.shape != (self.n_rows + 1,) or rp[0] != 0 or rp[-1] != len(self.col_idx):
            raise StructureError("row_ptr inconsistent with nnz")
        if np.any(np.diff(rp) < 0):
            raise StructureError("row_ptr must be nondecreasing")
        if len(self.values) != len(self.col_idx):
            raise SizeError("col_idx and values differ in length")
        if len(self.col_idx) and (self.col_idx.min() < 0 or self.col_idx.max() >= self.n_cols):
            raise StructureError("column index out of range")

    @classmethod
    def from_scipy(cls, m):
        m = scipy.sparse.csr_matrix(m, dtype=np.float64)
        m.sum_duplicates()
        m.sort_indices()
        return cls(m.shape[0], m.shape[1], m.indptr.astype(np.int64),
                   m.indices.astype(np.int64), m.data.astype(np.float64))

    @classmethod
    def from_dense(cls, a):
        a = np.asarray(a, dtype=np.float64)
        return cls.from_scipy(scipy.sparse.csr_matrix(a))

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self):
        return len(self.values)

    def row_lengths(self):
        return np.diff(self.row_ptr)

    @cached_property
    def scipy(self):
        return scipy.sparse.csr_matrix(
            (self.values, self.col_idx, self.row_ptr), shape=self.shape)

    @cached_property
    def row_of_entry(self):
        return np.repeat(np.arange(self.n_rows), self.row_lengths())

    def diagonal(self):
        return self.scipy.diagonal()

    def to_dense(self):
        return self.scipy.toarray()

    def transpose(self):
        return CsrMatrix.from_scipy(self.scipy.T.tocsr())

    def _chunk(self, lo, hi):
        key = (lo, hi)
        cache = self.__dict__.setdefault("_chunks", {})
        if key not in cache:
            cache[key] = self.scipy[lo:hi]
        return cache[key]

    def __eq__(self, other):
        return (isinstance(other, CsrMatrix) and self.shape == other.shape
                and np.array_equal(self.row_ptr, other.row_ptr)
                and np.array_equal(self.col_idx, other.col_idx)
                and np.array_equal(self.values, other.values))

    __hash__ = None


@dataclass(eq=False)
class DenseMatrix:
    """Small dense matrix with an optional LU factorization."""
    entries: np.ndarray
    lu: tuple = field(default=None, repr=False)

    @property
    def n(self):
        return self.entries.shape[0]

    def factor(self):
        a = self.entries
        if a.size and not np.all(np.isfinite(a)):
            raise DefinitenessError("coarsest matrix has non-finite entries")
        if a.size == 0:
            self.lu = (a.copy(), np.zeros(0, dtype=np.int32))
            return self
        lu, piv = scipy.linalg.lu_factor(a, check_finite=False)
        d = np.abs(np.diag(lu))
        if d.min() <= 1e-14 * max(d.max(), 1e-300):
            raise DefinitenessError("coarsest matrix is singular")
        self.lu = (lu, piv)
        return self

    def solve(self, f):
        if self.lu is None:
            self.factor()
        f = np.asarray(f, dtype=np.float64)
        if f.shape != (self.n,):
            raise SizeError(f"expected vector of length {self.n}, got {f.shape}")
        if self.n == 0:
            return f.copy()
        return scipy.linalg.lu_solve(self.lu, f, check_finite=False)


def _check_vector(n, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (n,):
        raise SizeError(f"expected vector of length {n}, got shape {x.shape}")
    return x


def ell_spmv(A, x, out=None):
    """Compute ``y = A x`` for an :class:`EllMatrix`.

    Slots are accumulated in order ``t = 0, 1, ..., width-1`` for each row.
    Rows are independent, so any partition of rows gives identical bits.
    """
    x = _check_vector(A.n_cols, x)
    y = np.empty(A.n_rows) if out is None else out
    cols, vals = A.safe_cols, A.vals

    def kernel(lo, hi):
        acc = vals[0, lo:hi] * x[cols[0, lo:hi]]
        for t in range(1, A.width):
            acc += vals[t, lo:hi] * x[cols[t, lo:hi]]
        y[lo:hi] = acc

    if A.width == 0:
        y[:] = 0.0
        return y
    parallel.for_rows(kernel, A.n_rows)
    return y


def csr_spmv(A, x, out=None):
    """Compute ``y = A x`` for a :class:`CsrMatrix`."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (A.n_cols,):
        raise SizeError(f"expected vector of length {A.n_cols}, got shape {x.shape}")
    y = np.empty(A.n_rows) if out is None else out

    def kernel(lo, hi):
        y[lo:hi] = A._chunk(lo, hi) @ x

    parallel.for_rows(kernel, A.n_rows)
    return y


def spmv(A, x):
    if isinstance(A, EllMatrix):
        return ell_spmv(A, x)
    if isinstance(A, CsrMatrix):
        return csr_spmv(A, x)
    if isinstance(A, DenseMatrix):
        return A.entries @ _check_vector(A.n, x)
    raise TypeError(f"unsupported matrix type {type(A).__name__}")


def csr_to_ell(A, width):
    """Convert to ELL with the diagonal in slot 0.

    Off-diagonal entries keep their CSR order.  Rows whose CSR diagonal is
    absent raise StructureError; rows longer than ``width`` raise
    CapacityError.
    """
    if A.n_rows != A.n_cols:
        raise StructureError("ELL storage requires a square matrix")
    n = A.n_rows
    lengths = A.row_lengths()
    if n and lengths.max() > width:
        r = int(np.argmax(lengths > width))
        raise CapacityError(f"row {r} has {lengths[r]} nonzeros, width is {width}")
    rows = A.row_of_entry
    is_diag = A.col_idx == rows
    has_diag = np.zeros(n, dtype=bool)
    has_diag[rows[is_diag]] = True
    if not has_diag.all():
        r = int(np.argmin(has_diag))
        raise StructureError(f"row {r} has no stored diagonal entry")
    # slot of each entry: 0 for the diagonal, else 1 + rank among the row's off-diagonals
    off_rank = np.cumsum(~is_diag) - 1
    off_start = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows[~is_diag], minlength=n), out=off_start[1:])
    slot = np.where(is_diag, 0, off_rank - off_start[rows] + 1)
    cols = np.full((width, n), SENTINEL, dtype=np.int64)
    vals = np.zeros((width, n))
    cols[slot, rows] = A.col_idx
    vals[slot, rows] = A.values
    return EllMatrix(n, width, cols.ravel(), vals.ravel())


def ell_from_arrays(aj, ax, n_cols=None):
    """Build an EllMatrix from row-major ``(n_rows, width)`` index/value tables.

    No diagonal-first normalization is applied; this is the literal layout
    constructor used for fixtures such as hand-written matrices.
    """
    aj = np.asarray(aj, dtype=np.int64)
    ax = np.asarray(ax, dtype=np.float64)
    n, k = aj.shape
    return EllMatrix(n, k, np.ascontiguousarray(aj.T).ravel(), np.ascontiguousarray(ax.T).ravel(),
                     n_cols)


# --- Matrix Market -----------------------------------------------------------

def read_matrix_market(path):
    """Read a real coordinate Matrix Market file into a CsrMatrix.

    ``symmetric`` files storing one triangle are expanded to full storage.
    Indices are 1-based per the format; anything else is a ParseError.
    """
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty file", path, 1)
    header = lines[0].split()
    if (len(header) != 5 or header[0].lower() != "%%matrixmarket"
            or header[1].lower() != "matrix" or header[2].lower() != "coordinate"):
        raise ParseError("expected '%%MatrixMarket matrix coordinate <field> <symmetry>'", path, 1)
    field_, symmetry = header[3].lower(), header[4].lower()
    if field_ not in ("real", "double", "integer"):
        raise ParseError(f"unsupported field '{field_}'", path, 1)
    if symmetry not in ("general", "symmetric"):
        raise ParseError(f"unsupported symmetry '{symmetry}'", path, 1)

    lineno = 1
    size = None
    rows, cols, vals = [], [], []
    for lineno, text in enumerate(lines[1:], start=2):
        s = text.strip()
        if not s or s.startswith("%"):
            continue
        parts = s.split()
        if size is None:
            try:
                size = tuple(int(p) for p in parts)
            except ValueError:
                raise ParseError("bad size line", path, lineno) from None
            if len(size) != 3 or min(size) < 0:
                raise ParseError("size line must be 'rows cols nnz'", path, lineno)
            continue
        if len(parts) != 3:
            raise ParseError("entry line must be 'i j value'", path, lineno)
        try:
            i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise ParseError("malformed entry", path, lineno) from None
        if not (1 <= i <= size[0] and 1 <= j <= size[1]):
            raise ParseError(f"index ({i}, {j}) out of range (indices are 1-based)", path, lineno)
        rows.append(i - 1)
        cols.append(j - 1)
        vals.append(v)
    if size is None:
        raise ParseError("missing size line", path, lineno)
    if len(vals) != size[2]:
        raise ParseError(f"expected {size[2]} entries, found {len(vals)}", path, lineno)

    r = np.array(rows, dtype=np.int64)
    c = np.array(cols, dtype=np.int64)
    v = np.array(vals, dtype=np.float64)
    if symmetry == "symmetric":
        if size[0] != size[1]:
            raise ParseError("symmetric matrix must be square", path, 1)
        off = r != c
        r, c, v = np.concatenate([r, c[off]]), np.concatenate([c, r[off]]), np.concatenate([v, v[off]])
    m = scipy.sparse.coo_matrix((v, (r, c)), shape=size[:2]).tocsr()
    return CsrMatrix.from_scipy(m)


def write_matrix_market(A, path, symmetric=False):
    """Write ``A`` as a ``general`` (or lower-triangle ``symmetric``) coordinate file."""
    rows = A.row_of_entry
    cols, vals = A.col_idx, A.values
    if symmetric:
        keep = cols <= rows
        rows, cols, vals = rows[keep], cols[keep], vals[keep]
    kind = "symmetric" if symmetric else "general"
    with open(path, "w") as fh:
        fh.write(f"%%MatrixMarket matrix coordinate real {kind}\n")
        fh.write(f"{A.n_rows} {A.n_cols} {len(vals)}\n")
        for i, j, v in zip(rows.tolist(), cols.tolist(), vals.tolist()):
            fh.write(f"{i + 1} {j + 1} {v!r}\n")
