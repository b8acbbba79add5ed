import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from haldane_ions.eigen_solver import (
    degenerate_blocks,
    dense_eigenpairs,
    energy_gap,
    ground_state,
    lowest_eigenpairs,
)
from haldane_ions.exceptions import ConvergenceFailure, InvalidParams
from haldane_ions.spin_model import SpinModelParams, build_hamiltonian, total_sz_operator


@given(st.integers(2, 5), st.floats(-0.5, 2.0), st.floats(-1.0, 3.0), st.integers(0, 2))
@settings(max_examples=20)
def test_lanczos_matches_dense(n, lam, d, sector):
    sector = min(sector, n)
    h = build_hamiltonian(SpinModelParams(n, lam=lam, d_coeff=d), total_sz=sector)
    k = min(3, h.dim)
    it = lowest_eigenpairs(h, k)
    ref = dense_eigenpairs(h, k)
    np.testing.assert_allclose(it.eigenvalues, ref.eigenvalues, atol=1e-10)
    assert np.all(it.residuals < 1e-10)


def test_residuals_and_orthonormality():
    h = build_hamiltonian(SpinModelParams(6, lam=1.0), total_sz=0)
    res = lowest_eigenpairs(h, 4)
    v = res.eigenvectors
    assert np.max(np.abs(v.conj().T @ v - np.eye(4))) < 1e-10
    r = np.linalg.norm(h.matrix @ v - v * res.eigenvalues, axis=0)
    assert np.all(r < 1e-9)
    assert res.sector == "Sz=0"
    assert np.all(np.diff(res.eigenvalues) >= -1e-12)


def test_full_dimension_request():
    h = build_hamiltonian(SpinModelParams(2, lam=1.0))
    res = lowest_eigenpairs(h, 9)
    np.testing.assert_allclose(res.eigenvalues, [-2, -1, -1, -1, 1, 1, 1, 1, 1], atol=1e-10)
    assert res.degenerate_blocks == ((1, 2, 3), (4, 5, 6, 7, 8))
    with pytest.raises(InvalidParams):
        lowest_eigenpairs(h, 10)
    with pytest.raises(InvalidParams):
        lowest_eigenpairs(h, 0)


def test_accepts_raw_matrices():
    a = sp.diags([3.0, -1.0, 2.0, 0.5])
    res = lowest_eigenpairs(a, 2)
    np.testing.assert_allclose(res.eigenvalues, [-1.0, 0.5], atol=1e-12)
    assert lowest_eigenpairs(a.toarray(), 1).eigenvalues[0] == pytest.approx(-1.0)
    with pytest.raises(InvalidParams):
        lowest_eigenpairs([[1.0]], 1)


def test_degenerate_block_grouping():
    assert degenerate_blocks(np.array([0.0, 0.0, 1.0, 2.0, 2.0 + 1e-12])) == ((0, 1), (3, 4))
    assert degenerate_blocks(np.array([1.0])) == ()


def test_large_d_gap_tracks_d():
    # single exciton above the m=0 product: gap = D minus an O(J) hopping band
    for d in (40.0, 400.0):
        g = energy_gap(SpinModelParams(6, lam=1.0, d_coeff=d))
        assert g.ground_sector == 0 and g.multiplet_size == 1
        assert 0 < d - g.gap < 2.0
    assert g.gap == pytest.approx(400.0, rel=0.01)


def test_haldane_gap_finite_size_trend():
    # Periodic chains avoid edge states; the gap decreases towards the known bulk value ~0.41
    gaps = [energy_gap(SpinModelParams(n, lam=1.0, boundary="periodic")).gap for n in (4, 6, 8)]
    assert gaps[0] > gaps[1] > gaps[2] > 0.41
    assert gaps[2] < 0.6


def test_open_chain_edge_multiplet():
    # two spin-1/2 edges give a singlet below a triplet, split ~ exp(-N / xi)
    splits = []
    for n in (6, 8, 10):
        g = energy_gap(SpinModelParams(n, lam=1.0), sectors=(0, 1, -1, 2), k_per_sector=2)
        low = g.levels[:4]
        assert low[0][1] == 0
        assert sorted(s for _, s in low[1:]) == [-1, 0, 1]
        assert np.ptp([e for e, _ in low[1:]]) < 1e-9
        splits.append(g.gap)
    assert splits[0] > splits[1] > splits[2]


def test_ferromagnetic_side_closes_gap():
    g = energy_gap(SpinModelParams(8, lam=-1.5, d_coeff=0.0), sectors="all", k_per_sector=2)
    assert g.gap < 1e-2
    assert abs(g.ground_sector) == 8


def test_ground_state_annihilated_by_total_sz():
    res = ground_state(SpinModelParams(6, lam=1.0, d_coeff=0.2))
    psi = res.full_vector()
    assert np.linalg.norm(total_sz_operator(6) @ psi) < 1e-12


def test_convergence_failure_carries_residuals():
    h = build_hamiltonian(SpinModelParams(6, lam=1.0), total_sz=0)
    with pytest.raises(ConvergenceFailure) as exc:
        lowest_eigenpairs(h, 2, tol=1e-30, max_basis=8, max_restarts=1)
    assert exc.value.residuals is not None and len(exc.value.residuals) > 0


def test_seed_determinism():
    h = build_hamiltonian(SpinModelParams(7, lam=0.8, d_coeff=0.3), total_sz=0)
    a = lowest_eigenpairs(h, 2, seed=11)
    b = lowest_eigenpairs(h, 2, seed=11)
    assert np.array_equal(a.eigenvalues, b.eigenvalues)
    assert np.array_equal(a.eigenvectors, b.eigenvectors)
    c = lowest_eigenpairs(h, 2, seed=12)
    np.testing.assert_allclose(c.eigenvalues, a.eigenvalues, atol=1e-10)
