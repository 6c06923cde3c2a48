import numpy as np
import pytest
import scipy.sparse
from scipy.spatial import Delaunay

from auxamg import parallel
from auxamg.problems import TriMesh, boundary_from_edges
from auxamg.sparse import CsrMatrix


def dense_P(agg, active_fine=None):
    """Boolean prolongation, built entry by entry from the definition."""
    P = np.zeros((agg.n_dofs, agg.n_aggregates))
    for i, j in enumerate(agg.agg_of):
        if active_fine is None or active_fine[i]:
            P[i, j] = 1.0
    return P


def random_spd(n, rng, density=1.0):
    B = rng.standard_normal((n, n))
    if density < 1.0:
        B *= rng.random((n, n)) < density
    return B @ B.T + n * np.eye(n)


def lattice_laplacian(w, shift=0.0, nine_point=False):
    """Operator on a ``w x w`` cell lattice, cell ``t1 + w*t2`` = unknown index."""
    n = w * w
    A = np.zeros((n, n))
    offs = [(1, 0), (-1, 0), (0, 1), (0, -1)]
    if nine_point:
        offs += [(1, 1), (1, -1), (-1, 1), (-1, -1)]
    for t2 in range(w):
        for t1 in range(w):
            i = t1 + w * t2
            for dx, dy in offs:
                s1, s2 = t1 + dx, t2 + dy
                if 0 <= s1 < w and 0 <= s2 < w:
                    A[i, s1 + w * s2] = -1.0
            A[i, i] = (len(offs) if not nine_point else 8.0) + shift
    return A


def cell_centers(w):
    c = (np.arange(w) + 0.5) / w
    X, Y = np.meshgrid(c, c)
    return np.column_stack([X.ravel(), Y.ravel()])


def graded_warp(amplitude):
    """Smooth boundary-preserving map of the unit square; spacing varies by (1 +- amplitude)."""
    def warp(x, y):
        return (x - amplitude * np.sin(2 * np.pi * x) / (2 * np.pi) * (1 + 0.3 * np.sin(np.pi * y)),
                y - amplitude * np.sin(2 * np.pi * y) / (2 * np.pi))
    return warp


def disk_mesh(rings, radius=1.0):
    """Ring-of-points triangulation of a disk; outer ring is the boundary."""
    pts = [(0.0, 0.0)]
    for k in range(1, rings + 1):
        m = 6 * k
        th = 2 * np.pi * np.arange(m) / m + (k % 2) * np.pi / m
        r = radius * k / rings
        pts += list(zip(r * np.cos(th), r * np.sin(th)))
    pts = np.array(pts)
    tri = Delaunay(pts).simplices
    return TriMesh(pts, tri, boundary_from_edges(tri))


def csr(a):
    return CsrMatrix.from_dense(a)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(autouse=True)
def _single_thread():
    yield
    parallel.set_threads(1)


def sparse_poisson(m):
    T = scipy.sparse.diags([-1.0, 2.0, -1.0], [-1, 0, 1], shape=(m, m))
    I = scipy.sparse.identity(m)
    return (scipy.sparse.kron(I, T) + scipy.sparse.kron(T, I)).tocsr()
