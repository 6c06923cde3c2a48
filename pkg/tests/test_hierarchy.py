import logging

import numpy as np
import pytest

from auxamg.auxgrid import AggregationMap, AuxGrid, aggregate_coarse, aggregate_finest, bounding_box
from auxamg.errors import DefinitenessError, StructureError
from auxamg.hierarchy import (DroppedCouplings, assemble_coarse_finest, assemble_coarse_structured,
                              build_stencil_indices, galerkin_sum, prolongate, restrict,
                              restrict_structured, setup_hierarchy)
from auxamg.problems import gen_poisson_uniform2d
from auxamg.sparse import csr_to_ell

from conftest import cell_centers, csr, dense_P, lattice_laplacian, random_spd


def stencil_rows(k):
    return build_stencil_indices(k).reshape(9, 4**k)


def neumann(w, nine_point=True):
    D = lattice_laplacian(w, nine_point=nine_point)
    np.fill_diagonal(D, 0.0)
    return D - np.diag(D.sum(1))


def random_nine_point(rng, w):
    A = lattice_laplacian(w, nine_point=True)
    mask = A != 0
    V = rng.standard_normal(A.shape)
    A = np.where(mask, V + V.T, 0.0)
    np.fill_diagonal(A, 20.0 + rng.random(w * w))
    return A


# --- stencil -------------------------------------------------------------------

def test_stencil_examples():
    aj = stencil_rows(2)
    assert aj[:, 5].tolist() == [5, 6, 10, 9, 8, 4, 0, 1, 2]
    assert stencil_rows(1)[:, 0].tolist() == [0, 1, 3, 2, -1, -1, -1, -1, -1]
    corner = stencil_rows(2)[:, 15]
    assert corner[0] == 15 and np.count_nonzero(corner[1:] >= 0) == 3


def test_stencil_is_symmetric_relation():
    aj = stencil_rows(3)
    for i in range(64):
        for j in aj[1:, i]:
            if j >= 0:
                assert i in aj[1:, j]


# --- Galerkin products ----------------------------------------------------------

def finest_operator(A_dense, coords, depth):
    A = csr(A_dense)
    agg = aggregate_finest(coords, AuxGrid(*bounding_box(coords), depth))
    Ac, active = assemble_coarse_finest(A, agg)
    return A, agg, Ac, active


def test_galerkin_identity():
    pts = cell_centers(4)
    # 16 points on a depth-1 grid: 4 per aggregate, so P^T I P = 4 I
    _, _, Ac, active = finest_operator(np.eye(16), pts, 1)
    assert np.array_equal(Ac.to_dense(), 4 * np.eye(4))
    assert active.all()


def test_galerkin_matches_dense_pairs():
    # 4 x 2 lattice, two DoFs per aggregate
    xs, ys = np.meshgrid((np.arange(4) + 0.5) / 4, (np.arange(2) + 0.5) / 2)
    pts = np.column_stack([xs.ravel(), ys.ravel()])
    A_dense = np.zeros((8, 8))
    for i in range(8):
        for j in range(8):
            xi, yi = i % 4, i // 4
            xj, yj = j % 4, j // 4
            if abs(xi - xj) + abs(yi - yj) == 1:
                A_dense[i, j] = -1.0
    A_dense += np.diag(4.0 - A_dense.sum(1) * 0)
    A, agg, Ac, _ = finest_operator(A_dense, pts, 1)
    assert agg.sizes.tolist() == [2, 2, 2, 2]
    P = dense_P(agg)
    assert np.array_equal(Ac.to_dense(), P.T @ A_dense @ P)


def test_galerkin_sum_random_partition(rng):
    D = random_spd(30, rng)
    agg = AggregationMap(1, rng.integers(0, 9, 30), 9)
    P = dense_P(agg)
    G = galerkin_sum(csr(D), agg).to_dense()
    assert np.allclose(G, P.T @ D @ P, rtol=0, atol=1e-12 * np.abs(D).sum())


def test_finest_galerkin_random_lattice(rng):
    w = 8
    D = random_nine_point(rng, w)
    A, agg, Ac, _ = finest_operator(D, cell_centers(w), 2)
    P = dense_P(agg)
    assert np.allclose(Ac.to_dense(), P.T @ D @ P, rtol=0, atol=1e-12)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_structured_row_sums_zero(k):
    A = csr_to_ell(csr(neumann(2 ** (k + 1))), 9)
    # pure Neumann 9-point Laplacian: constant null vector
    Ac, _ = assemble_coarse_structured(A, k)
    assert np.allclose(Ac.to_dense().sum(1), 0.0, atol=1e-13)


def test_structured_identity():
    I = csr_to_ell(csr(np.eye(16)), 9)
    Ac, active = assemble_coarse_structured(I, 1)
    assert np.array_equal(Ac.to_dense(), 4 * np.eye(4))
    assert active.all()


def test_structured_random_matches_dense(rng):
    D = random_nine_point(rng, 8)
    Ac, _ = assemble_coarse_structured(csr_to_ell(csr(D), 9), 2)
    P = dense_P(aggregate_coarse(3))
    assert np.allclose(Ac.to_dense(), P.T @ D @ P, rtol=0, atol=1e-12)


def test_structured_inactive_rows_excluded(rng):
    D = random_nine_point(rng, 4)
    active = np.ones(16, dtype=bool)
    active[[0, 1, 4, 5]] = False    # the whole south-west quadrant
    Ac, act_c = assemble_coarse_structured(csr_to_ell(csr(D), 9), 1, active)
    P = dense_P(aggregate_coarse(2), active)
    want = P.T @ D @ P
    want[0, 0] = 1.0
    assert act_c.tolist() == [False, True, True, True]
    assert np.allclose(Ac.to_dense(), want, rtol=0, atol=1e-12)


# --- dropped couplings ----------------------------------------------------------

def far_coupled():
    w = 8
    D = lattice_laplacian(w, shift=1.0)
    D[0, 63] = D[63, 0] = -0.5
    return D, cell_centers(w)


def test_far_coupling_dropped_with_warning(caplog):
    D, pts = far_coupled()
    with caplog.at_level(logging.WARNING):
        A, agg, Ac, _ = finest_operator(D, pts, 2)
    assert "beyond the 9-point stencil" in caplog.text
    D0 = D.copy()
    D0[0, 63] = D0[63, 0] = 0.0
    assert np.array_equal(Ac.to_dense(), dense_P(agg).T @ D0 @ dense_P(agg))


def test_far_coupling_lumped_keeps_row_sums():
    D, pts = far_coupled()
    A = csr(D)
    agg = aggregate_finest(pts, AuxGrid(*bounding_box(pts), 2))
    dropped = DroppedCouplings()
    Ac, _ = assemble_coarse_finest(A, agg, lump_dropped=True, dropped=dropped)
    assert dropped.count == 2 and dropped.mass == 1.0
    assert np.allclose(Ac.to_dense().sum(1), restrict(D.sum(1), agg))


def test_far_coupling_strict_raises():
    D, pts = far_coupled()
    with pytest.raises(StructureError):
        setup_hierarchy(csr(D), pts, coarsest_size=1, strict_locality=True)


# --- transfers -------------------------------------------------------------------

def test_prolongate_restrict_examples():
    agg = AggregationMap(1, [0, 0, 1, 3, 3, 3], 4)
    assert prolongate([1.0, 2, 3, 4], agg).tolist() == [1, 1, 2, 4, 4, 4]
    assert restrict([1.0, 2, 3, 4, 5, 6], agg).tolist() == [3, 3, 0, 15]
    active = np.array([1, 1, 0, 1, 1, 1], dtype=bool)
    assert prolongate([1.0, 2, 3, 4], agg, active).tolist() == [1, 1, 0, 4, 4, 4]
    assert restrict([1.0, 2, 3, 4, 5, 6], agg, active).tolist() == [3, 0, 0, 15]


def test_transfers_adjoint(rng):
    agg = AggregationMap(2, rng.integers(0, 16, 50), 16)
    active = rng.random(50) < 0.8
    u, v = rng.standard_normal(16), rng.standard_normal(50)
    assert np.isclose(prolongate(u, agg, active) @ v, u @ restrict(v, agg, active), rtol=1e-13)


@pytest.mark.parametrize("k", [1, 2, 4])
def test_structured_restriction_closed_form(rng, k):
    v = rng.standard_normal(4**k)
    agg = aggregate_coarse(k)
    want = np.bincount(agg.agg_of, weights=v, minlength=4 ** (k - 1))
    assert np.allclose(restrict_structured(v, k), want, rtol=0, atol=1e-14)
    assert np.allclose(restrict(v, agg), want, rtol=0, atol=1e-14)


# --- whole setup --------------------------------------------------------------------

def test_setup_poisson_256_sizes():
    s = gen_poisson_uniform2d(17)
    h = setup_hierarchy(s.A, s.coords, coarsest_size=4)
    assert s.A.n_rows == 256
    assert h.grid.depth == 3
    assert h.sizes() == [256, 64, 16, 4]
    assert [lvl.k for lvl in h.levels] == [4, 3, 2, 1]


def test_setup_small_is_direct_only():
    s = gen_poisson_uniform2d(3)
    h = setup_hierarchy(s.A, s.coords)
    assert h.n_levels == 1 and h.sizes() == [4]
    assert np.allclose(h.coarsest.solve(s.A.to_dense() @ np.ones(4)), 1.0)


def test_setup_rejects_nonsymmetric():
    D = lattice_laplacian(4, shift=1.0)
    D[0, 1] = -2.0
    with pytest.raises(StructureError):
        setup_hierarchy(csr(D), cell_centers(4), coarsest_size=1)


def test_setup_rejects_nonpositive_diagonal():
    D = lattice_laplacian(4, shift=1.0)
    D[3, 3] = 0.0
    with pytest.raises(DefinitenessError):
        setup_hierarchy(csr(D), cell_centers(4), coarsest_size=1)


def test_levels_symmetric_and_conservative(rng):
    s = gen_poisson_uniform2d(33)
    h = setup_hierarchy(s.A, s.coords, coarsest_size=4)
    for lvl in h.levels[1:]:
        D = lvl.A.to_dense()
        assert np.array_equal(D, D.T)
    # constants restrict to constants, sums are conserved
    v = rng.standard_normal(s.A.n_rows)
    lvl = h.levels[0]
    assert np.isclose(restrict(v, lvl.agg).sum(), v.sum(), rtol=1e-12)


def test_null_vector_preserved():
    # Neumann operator: constant in the null space on every level
    w = 16
    A = csr(neumann(w) + 1e-3 * np.eye(w * w))
    h = setup_hierarchy(A, cell_centers(w), coarsest_size=1)
    for lvl in h.levels[1:]:
        M = lvl.A.to_dense()
        ones = np.ones(lvl.size)
        assert np.allclose(M @ ones, 1e-3 * (w * w // lvl.size), rtol=1e-8)


def test_disk_hierarchy_has_inactive_cells():
    from conftest import disk_mesh
    from auxamg.problems import assemble_fem_triangle
    s = assemble_fem_triangle(disk_mesh(20))
    h = setup_hierarchy(s.A, s.coords, coarsest_size=16)
    lvl1 = h.levels[1]
    assert not lvl1.active.all()
    D = lvl1.A.to_dense()
    off = ~lvl1.active
    assert np.array_equal(D[off][:, off], np.eye(off.sum()))
    assert np.all(D[off][:, ~off] == 0.0)
