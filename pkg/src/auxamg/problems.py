"""Model problems: 5-point Poisson, P1 finite elements on triangles, mesh files.

Mesh text format (1-based ids)::

    NODES <count>
    <id> <x> <y>
    ...
    ELEMENTS <count>
    <id> <v1> <v2> <v3>
    ...
    BOUNDARY <count>        (optional)
    <node id>
    ...
"""
from dataclasses import dataclass

import numpy as np
import scipy.sparse

from .errors import ArgumentError, GeometryError, ParseError
from .sparse import CsrMatrix

AREA_TOL = 1e-14


@dataclass(eq=False)
class TriMesh:
    nodes: np.ndarray            # (n, 2)
    triangles: np.ndarray        # (m, 3), 0-based
    boundary_nodes: np.ndarray   # sorted 0-based ids

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=np.float64).reshape(-1, 2)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        self.boundary_nodes = np.unique(np.asarray(self.boundary_nodes, dtype=np.int64))
        n = len(self.nodes)
        if self.triangles.size and (self.triangles.min() < 0 or self.triangles.max() >= n):
            raise ArgumentError("triangle vertex index out of range")
        if self.boundary_nodes.size and (self.boundary_nodes[0] < 0 or self.boundary_nodes[-1] >= n):
            raise ArgumentError("boundary node index out of range")

    @property
    def n_nodes(self):
        return len(self.nodes)

    def signed_areas(self):
        p = self.nodes[self.triangles]
        d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


@dataclass(eq=False)
class LinearSystem:
    A: CsrMatrix
    b: np.ndarray
    coords: np.ndarray
    exact: np.ndarray = None
    dofs: np.ndarray = None      # mesh node id of each unknown, when from a mesh

    @property
    def n(self):
        return self.A.n_rows


def gen_poisson_uniform2d(n, source=None):
    """5-point Poisson matrix on the ``(n-1)**2`` interior nodes of the unit square.

    Unknown ``(i, j)`` (node ``(i*h, j*h)``, ``1 <= i, j < n``) has index
    ``(i-1) + (n-1)*(j-1)``.  ``b_ij = h**2 * f(x_i, y_j)`` with ``f = 1``
    unless ``source`` is given; boundary values are zero.
    """
    if n < 2:
        raise ArgumentError(f"need n >= 2 cells per side, got {n}")
    m = n - 1
    h = 1.0 / n
    T = scipy.sparse.diags([-1.0, 2.0, -1.0], [-1, 0, 1], shape=(m, m))
    I = scipy.sparse.identity(m)
    A = CsrMatrix.from_scipy((scipy.sparse.kron(I, T) + scipy.sparse.kron(T, I)).tocsr())
    x = np.arange(1, n) * h
    X, Y = np.meshgrid(x, x)
    coords = np.column_stack([X.ravel(), Y.ravel()])
    f = np.ones(m * m) if source is None else np.asarray(source(coords[:, 0], coords[:, 1]), dtype=float)
    return LinearSystem(A, h * h * f, coords)


def structured_square_mesh(n, warp=None):
    """Unit square split into ``n x n`` cells, each cut by its SW-NE diagonal.

    Node ``(i, j)`` has id ``i + (n+1)*j``.  ``warp`` optionally maps the
    node coordinates ``(x, y) -> (x', y')`` and must keep the boundary on
    the boundary.
    """
    if n < 1:
        raise ArgumentError("need at least one cell per side")
    t = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(t, t)
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    if warp is not None:
        nodes = np.column_stack(warp(nodes[:, 0], nodes[:, 1]))
    i, j = np.meshgrid(np.arange(n), np.arange(n))
    sw = (i + (n + 1) * j).ravel()
    se, nw, ne = sw + 1, sw + n + 1, sw + n + 2
    tris = np.concatenate([np.column_stack([sw, se, ne]), np.column_stack([sw, ne, nw])])
    return TriMesh(nodes, tris, boundary_from_edges(tris))


def boundary_from_edges(triangles):
    """Endpoints of edges that belong to exactly one triangle."""
    tri = np.asarray(triangles, dtype=np.int64)
    if tri.size == 0:
        return np.zeros(0, dtype=np.int64)
    edges = np.sort(np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]]), axis=1)
    uniq, counts = np.unique(edges, axis=0, return_counts=True)
    return np.unique(uniq[counts == 1])


def element_stiffness(p):
    """P1 stiffness matrices for a stack of triangles ``p`` of shape ``(m, 3, 2)``."""
    x, y = p[..., 0], p[..., 1]
    # b_i = y_j - y_k, c_i = x_k - x_j over cyclic (i, j, k)
    b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    area = np.abs(0.5 * (c[:, 2] * b[:, 1] - c[:, 1] * b[:, 2]))
    K = (b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :]) / (4.0 * area[:, None, None])
    return K, area


def _assemble(rows, cols, vals, n):
    # duplicates summed in input (element) order, so a_ij and a_ji see the same sums
    keys = rows * n + cols
    uniq, inv = np.unique(keys, return_inverse=True)
    summed = np.bincount(inv, weights=vals, minlength=len(uniq))
    r, c = uniq // n, uniq % n
    row_ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(r, minlength=n), out=row_ptr[1:])
    return CsrMatrix(n, n, row_ptr, c.astype(np.int64), summed)


def assemble_stiffness(mesh):
    """Full P1 stiffness matrix and element areas, before any boundary treatment."""
    area = mesh.signed_areas()
    bad = np.flatnonzero(np.abs(area) <= AREA_TOL)
    if bad.size:
        raise GeometryError(f"degenerate triangle {int(bad[0])} (area {area[bad[0]]:.3e})")
    K, _ = element_stiffness(mesh.nodes[mesh.triangles])
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    return _assemble(rows, cols, K.ravel(), mesh.n_nodes), np.abs(area)


def assemble_fem_triangle(mesh, f=1.0, exact=None):
    """Linear finite elements for ``-Laplace(u) = f``, ``u = 0`` on the boundary.

    Parameters
    ----------
    mesh : TriMesh
    f : float or callable
        Source term; a callable is evaluated at the vertices and integrated
        with the vertex (lumped) rule ``f(v) * area / 3``.
    exact : callable, optional
        Reference solution evaluated at the unknowns and stored on the result.

    Returns
    -------
    LinearSystem
        Boundary rows and columns eliminated; unknowns ordered by node id.
    """
    K, area = assemble_stiffness(mesh)
    n = mesh.n_nodes
    if callable(f):
        fv = np.asarray(f(mesh.nodes[:, 0], mesh.nodes[:, 1]), dtype=np.float64)[mesh.triangles]
    else:
        fv = np.full(mesh.triangles.shape, float(f))
    load = np.bincount(mesh.triangles.ravel(), weights=(fv * (area / 3.0)[:, None]).ravel(),
                       minlength=n)
    interior = np.ones(n, dtype=bool)
    interior[mesh.boundary_nodes] = False
    dofs = np.flatnonzero(interior)
    # zero Dirichlet data: dropping boundary rows/cols leaves b unchanged
    A = CsrMatrix.from_scipy(K.scipy[dofs][:, dofs])
    coords = mesh.nodes[dofs]
    ex = None if exact is None else np.asarray(exact(coords[:, 0], coords[:, 1]), dtype=np.float64)
    return LinearSystem(A, load[dofs], coords, ex, dofs)


# --- mesh files --------------------------------------------------------------

def read_mesh(path):
    """Parse a mesh file (format in the module docstring) into a TriMesh.

    Boundary nodes are the endpoints of edges used by exactly one triangle,
    united with any ``BOUNDARY`` list in the file.
    """
    with open(path) as fh:
        lines = [(no, ln.split()) for no, ln in enumerate(fh, start=1)]
    lines = [(no, p) for no, p in lines if p and not p[0].startswith("#")]
    pos = 0

    def section(name):
        nonlocal pos
        if pos >= len(lines):
            raise ParseError(f"missing {name} section", path, lines[-1][0] if lines else 1)
        no, parts = lines[pos]
        if parts[0].upper() != name or len(parts) != 2:
            raise ParseError(f"expected '{name} <count>'", path, no)
        try:
            count = int(parts[1])
        except ValueError:
            raise ParseError(f"bad {name} count", path, no) from None
        if count < 0 or pos + count > len(lines) - 1:
            raise ParseError(f"{name} section is truncated", path, no)
        body = lines[pos + 1:pos + 1 + count]
        pos += 1 + count
        return body

    def ids(no, fields, limit, what):
        try:
            vals = [int(v) for v in fields]
        except ValueError:
            raise ParseError(f"non-integer {what}", path, no) from None
        for v in vals:
            if not 1 <= v <= limit:
                raise ParseError(f"{what} {v} out of range 1..{limit} (ids are 1-based)", path, no)
        return [v - 1 for v in vals]

    node_lines = section("NODES")
    n = len(node_lines)
    nodes = np.empty((n, 2))
    for no, parts in node_lines:
        if len(parts) != 3:
            raise ParseError("node line must be 'id x y'", path, no)
        (i,) = ids(no, parts[:1], n, "node id")
        try:
            nodes[i] = float(parts[1]), float(parts[2])
        except ValueError:
            raise ParseError("bad node coordinate", path, no) from None

    elem_lines = section("ELEMENTS")
    tris = np.empty((len(elem_lines), 3), dtype=np.int64)
    for no, parts in elem_lines:
        if len(parts) != 4:
            raise ParseError("element line must be 'id v1 v2 v3'", path, no)
        (e,) = ids(no, parts[:1], len(elem_lines), "element id")
        tris[e] = ids(no, parts[1:], n, "vertex")

    listed = []
    if pos < len(lines):
        for no, parts in section("BOUNDARY"):
            if len(parts) != 1:
                raise ParseError("boundary line must hold one node id", path, no)
            listed += ids(no, parts, n, "node id")
    if pos < len(lines):
        raise ParseError("unexpected trailing content", path, lines[pos][0])
    boundary = np.union1d(boundary_from_edges(tris), np.array(listed, dtype=np.int64))
    return TriMesh(nodes, tris, boundary)


def write_mesh(mesh, path, boundary=False):
    with open(path, "w") as fh:
        fh.write(f"NODES {mesh.n_nodes}\n")
        for i, (x, y) in enumerate(mesh.nodes.tolist(), start=1):
            fh.write(f"{i} {x!r} {y!r}\n")
        fh.write(f"ELEMENTS {len(mesh.triangles)}\n")
        for e, (a, b, c) in enumerate(mesh.triangles.tolist(), start=1):
            fh.write(f"{e} {a + 1} {b + 1} {c + 1}\n")
        if boundary:
            fh.write(f"BOUNDARY {len(mesh.boundary_nodes)}\n")
            for v in mesh.boundary_nodes.tolist():
                fh.write(f"{v + 1}\n")
