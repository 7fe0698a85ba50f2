import numpy as np
import pytest

from diracsphere.grid import QuadratureGrid
from diracsphere.spectral import (AliasingError, SphereBasis, SpectralSpinor,
                                  dirac_apply, dirac_eigenvalue,
                                  dirac_multiplicity, h_half_inner, l2_inner,
                                  load_spinor, save_spinor, split)
from conftest import random_spinor


@pytest.fixture(scope="module")
def basis5():
    return SphereBasis(5)


@pytest.fixture(scope="module")
def grid5():
    return QuadratureGrid(degree=18)


def test_spectrum_formulas_general_m():
    assert dirac_eigenvalue(2, 2, 1) == 3.0
    assert dirac_eigenvalue(3, 0, -1) == -1.5
    assert dirac_multiplicity(2, 0) == 2
    assert dirac_multiplicity(2, 2) == 6
    assert dirac_multiplicity(3, 0) == 2
    assert dirac_multiplicity(3, 1) == 6  # (j+1)(j+2) on S^3


def test_multiplicity_and_eigenvalues_of_basis(basis5):
    for j in range(6):
        for sigma in (1, -1):
            members = [ix for ix in basis5.indices
                       if ix.j == j and ix.sigma == sigma]
            assert len(members) == 2 * (j + 1) == dirac_multiplicity(2, j)
            assert all(ix.eigenvalue == sigma * (j + 1) for ix in members)
    # j = 0 has four basis spinors in total, two per sign
    j0 = [ix for ix in basis5.indices if ix.j == 0]
    assert len(j0) == 4


def test_gram_matrix_identity(basis5, grid5):
    S = basis5.synthesis_matrix(grid5)
    wf = (grid5.weights / grid5.f_pref)[:, None, None]
    G = np.tensordot(np.conj(S) * wf, S, axes=([0, 1], [0, 1]))
    assert np.abs(G - np.eye(basis5.n_basis)).max() <= 1e-10


def test_eigen_relation_residual(basis5, grid5):
    """D eta_k = lambda_k eta_k with the chart Dirac operator applied through
    exact derivatives of the closed forms."""
    S = basis5.synthesis_matrix(grid5)
    Dz = basis5.synthesis_matrix(grid5, deriv=(1, 0))
    Dzb = basis5.synthesis_matrix(grid5, deriv=(0, 1))
    Dphi = np.empty_like(S)
    Dphi[:, 0, :] = -2j * Dz[:, 1, :]
    Dphi[:, 1, :] = -2j * Dzb[:, 0, :]
    resid = Dphi / grid5.f_pref[:, None, None] - S * basis5.eigenvalues
    r = np.sqrt(np.einsum("n,nci->i", grid5.weights / grid5.f_pref,
                          np.abs(resid) ** 2).real)
    assert r.max() <= 1e-8


def test_dirac_apply_examples(ws8):
    basis = ws8.basis
    zero = SpectralSpinor.zero(basis)
    assert np.all(dirac_apply(zero).coeff == 0)
    i = next(k for k, ix in enumerate(basis.indices) if ix.j == 2 and ix.sigma == 1)
    e = SpectralSpinor.zero(basis)
    e.coeff[i] = 1.0
    out = dirac_apply(e)
    assert out.coeff[i] == 3.0  # lambda = 1 + j at j = 2
    assert np.count_nonzero(out.coeff) == 1


def test_dirac_self_adjoint(ws8):
    rng = np.random.default_rng(5)
    for _ in range(5):
        a = ws8.spinor(random_spinor(ws8, rng))
        b = ws8.spinor(random_spinor(ws8, rng))
        lhs = l2_inner(dirac_apply(a), b)
        rhs = l2_inner(a, dirac_apply(b))
        assert abs(lhs - rhs) <= 1e-12 * (1 + abs(lhs))


def test_h_half_inner_examples(ws8):
    basis = ws8.basis
    i = next(k for k, ix in enumerate(basis.indices) if ix.j == 1 and ix.sigma == 1)
    e = SpectralSpinor.zero(basis)
    e.coeff[i] = 1.0
    assert h_half_inner(e, e) == 2.0  # |lambda| = 2 at j = 1, unit L^2 norm
    rng = np.random.default_rng(6)
    psi = ws8.spinor(random_spinor(ws8, rng))
    plus, minus = split(psi)
    assert h_half_inner(plus, minus) == 0.0
    # ||psi||^2 >= ||psi||_{L^2}^2 since |lambda_k| >= 1
    assert h_half_inner(psi, psi) >= l2_inner(psi, psi).real - 1e-12


def test_split_properties(ws8):
    rng = np.random.default_rng(7)
    psi = ws8.spinor(random_spinor(ws8, rng))
    plus, minus = split(psi)
    assert np.allclose(plus.coeff + minus.coeff, psi.coeff)
    again, rest = split(plus)
    assert np.array_equal(again.coeff, plus.coeff)
    assert np.all(rest.coeff == 0)
    d_plus = np.sum(ws8.basis.eigenvalues * np.abs(plus.coeff) ** 2)
    d_minus = np.sum(ws8.basis.eigenvalues * np.abs(minus.coeff) ** 2)
    assert d_plus > 0 and d_minus < 0


def test_transform_round_trip_and_parseval():
    basis = SphereBasis(8)
    grid = QuadratureGrid(degree=2 * 8 + 8)  # 2x margin over the Nyquist bound
    rng = np.random.default_rng(8)
    coeff = (rng.normal(size=basis.n_basis) + 1j * rng.normal(size=basis.n_basis))
    values = basis.synthesize(coeff, grid)
    back = basis.analyze(values, grid)
    assert np.abs(back - coeff).max() <= 1e-10
    zero = basis.synthesize(np.zeros(basis.n_basis, complex), grid)
    assert np.all(zero == 0)
    l2_grid = float(grid.integrate(np.sum(np.abs(values) ** 2, 1) / grid.f_pref))
    assert abs(l2_grid - np.sum(np.abs(coeff) ** 2)) <= 1e-10 * np.sum(np.abs(coeff) ** 2)


def test_aliasing_guard():
    basis = SphereBasis(8)
    with pytest.raises(AliasingError):
        basis.synthesis_matrix(QuadratureGrid(degree=10))


def test_h_half_norm_stable_under_truncation_extension():
    rng = np.random.default_rng(9)
    small = SphereBasis(4)
    big = SphereBasis(6)
    coeff = rng.normal(size=small.n_basis) + 1j * rng.normal(size=small.n_basis)
    lookup = {(ix.j, ix.sigma, ix.k): i for i, ix in enumerate(big.indices)}
    embedded = np.zeros(big.n_basis, complex)
    for i, ix in enumerate(small.indices):
        embedded[lookup[(ix.j, ix.sigma, ix.k)]] = coeff[i]
    n_small = float(np.sum(small.abs_eigenvalues * np.abs(coeff) ** 2))
    n_big = float(np.sum(big.abs_eigenvalues * np.abs(embedded) ** 2))
    assert n_big >= n_small - 1e-14
    assert abs(n_big - n_small) < 1e-12


def test_coefficient_file_round_trip(tmp_path, ws8):
    rng = np.random.default_rng(10)
    psi = ws8.spinor(random_spinor(ws8, rng))
    path = tmp_path / "state.txt"
    save_spinor(path, psi)
    again = load_spinor(path)
    assert again.basis.J == ws8.basis.J
    assert np.array_equal(again.coeff, psi.coeff)
    header = path.read_text().splitlines()[:5]
    assert header[0].startswith("# diracsphere-spinor")
    assert any("J=8" in line for line in header)
    with pytest.raises(ValueError):
        load_spinor(path, SphereBasis(4))


def test_basis_chart_transition_consistency():
    """Chart A values at z = 1/w match the fixed SU(2) transition gauge of the
    chart B closed forms."""
    basis = SphereBasis(4)
    rng = np.random.default_rng(11)
    w = rng.normal(size=8) + 1j * rng.normal(size=8)
    z = 1.0 / w
    A = basis.evaluate_matrix(z, "a")
    B = basis.evaluate_matrix(w, "b")
    g = 1j * z
    assert np.abs(g[:, None] * A[:, 0, :] - B[:, 0, :]).max() < 1e-12
    assert np.abs(np.conj(g)[:, None] * A[:, 1, :] - B[:, 1, :]).max() < 1e-12
