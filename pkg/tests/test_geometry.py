import math

import numpy as np
import pytest

from diracsphere.geometry import (closedness_defect, cotangent_mean_curvature,
                                  edge_length_relative_error, export_obj,
                                  export_ply, gauss_bonnet_defect, icosphere,
                                  mesh_edges, nodal_analysis, read_obj, read_ply,
                                  reconstruct_immersion, scal_identity_check,
                                  willmore)
from diracsphere.spectral import SpectralSpinor
from conftest import random_spinor


@pytest.fixture(scope="module")
def killing_state(ws8):
    """Exact solution of D psi = |psi|^2 psi: a Killing spinor of unit length."""
    basis = ws8.basis
    coeff = np.zeros(basis.n_basis, complex)
    i = next(k for k, ix in enumerate(basis.indices) if ix.j == 0 and ix.sigma == 1)
    coeff[i] = math.sqrt(4 * math.pi)
    return SpectralSpinor(basis, coeff)


def test_nodal_killing(ws8, killing_state):
    rep = nodal_analysis(killing_state, ws8)
    assert rep.verdict == "zero-free"
    assert rep.min_psi_grid == pytest.approx(1.0, abs=1e-4)
    # bound = -1 + (4 pi)/(4 pi) = 0 < 1
    assert rep.zero_count_bound == pytest.approx(0.0, abs=1e-10)
    assert rep.window_chain


def test_nodal_engineered_zero(ws8):
    """A level-1 eigenspinor with angular index 1 vanishes linearly at the
    north pole; the candidate search must localize it within a grid cell."""
    basis = ws8.basis
    coeff = np.zeros(basis.n_basis, complex)
    i = next(k for k, ix in enumerate(basis.indices)
             if ix.j == 1 and ix.sigma == 1 and ix.k == 1)
    coeff[i] = 2.0
    psi = SpectralSpinor(basis, coeff)
    rep = nodal_analysis(psi, ws8)
    assert rep.verdict in ("zeros", "inconclusive")
    assert rep.candidates
    best = min(rep.candidates, key=lambda c: c.value)
    north = np.array([0.0, 0.0, 1.0])
    assert math.acos(np.clip(best.position @ north, -1, 1)) <= ws8.grid.mean_spacing()
    assert best.vanishing_order == pytest.approx(1.0, abs=0.2)


def test_nodal_bound_monotone(ws8, killing_state):
    rep1 = nodal_analysis(killing_state, ws8)
    rep2 = nodal_analysis(SpectralSpinor(ws8.basis, 1.3 * killing_state.coeff), ws8)
    # bound increases with int Q^2 |psi|^4
    assert rep2.zero_count_bound > rep1.zero_count_bound


def test_scal_identity_killing(ws8, killing_state):
    rep = scal_identity_check(killing_state, ws8)
    assert rep.l1_residual <= 1e-6
    assert rep.pde_residual <= 1e-10


def test_scal_negative_control(ws8):
    rng = np.random.default_rng(20)
    psi = ws8.spinor(random_spinor(ws8, rng))
    with pytest.raises(ValueError):
        scal_identity_check(psi, ws8)          # not a solution
    rep = scal_identity_check(psi, ws8, require_solution=False)
    assert rep.l1_residual > 1e-2              # the identity is not an accident


def test_killing_spinor_connection_identity(ws8, killing_state):
    """nabla_X psi* = -1/2 X . psi* for the unit-spinor chart components;
    pins the spin connection sign used by the scal check.  The trivialized
    components are c = phi/f^{1/2}, the weighted ones divided by the
    conformal weight."""
    basis = ws8.basis
    grid = ws8.grid
    phi = basis.synthesize(killing_state.coeff, grid)
    d10 = np.tensordot(basis.synthesis_matrix(grid, (1, 0)),
                       killing_state.coeff, axes=([2], [0]))
    d01 = np.tensordot(basis.synthesis_matrix(grid, (0, 1)),
                       killing_state.coeff, axes=([2], [0]))
    z = np.where(grid.use_a, grid.chart_a, grid.chart_b)
    f = grid.f_pref
    c = phi / np.sqrt(f)[:, None]
    # d_k c = d_k phi / sqrt(f) - (1/2) phi f^{-3/2} d_k f, with d_k f = -x_k f^2
    d1_phi = d10 + d01
    d2_phi = 1j * (d10 - d01)
    d1f = -z.real * f**2
    d2f = -z.imag * f**2
    d1_c = d1_phi / np.sqrt(f)[:, None] - 0.5 * phi * (d1f / f**1.5)[:, None]
    d2_c = d2_phi / np.sqrt(f)[:, None] - 0.5 * phi * (d2f / f**1.5)[:, None]
    # round metric in the chart: e^{2v} = f^2, so d_k v = -x_k f
    d1v = -z.real * f
    d2v = -z.imag * f
    s3 = np.array([1.0, -1.0])
    n1 = d1_c + 0.5j * d2v[:, None] * (s3 * c)
    n2 = d2_c - 0.5j * d1v[:, None] * (s3 * c)
    # right side: -(1/2) X . c with X = partial_k of length e^v = f
    e1c = -1j * c[:, ::-1]
    e2c = np.stack([-c[:, 1], c[:, 0]], axis=1)
    assert np.abs(n1 + 0.5 * f[:, None] * e1c).max() <= 1e-10
    assert np.abs(n2 + 0.5 * f[:, None] * e2c).max() <= 1e-10


def test_willmore_killing_and_bound(ws8, killing_state):
    W, embedded = willmore(killing_state, ws8)
    assert W == pytest.approx(4 * math.pi, abs=1e-10)
    assert embedded
    # W <= Q_max int Q |psi|^4 (pointwise Q^2 <= Q_max Q)
    values = ws8.synthesize(killing_state.coeff)
    nsq = ws8.fiber_norm_sq(values)
    e4 = float(ws8.grid.integrate(ws8.q_nodes * nsq**2))
    assert W <= ws8.q_nodes.max() * e4 + 1e-12


def test_conformal_measure_spot_check(ws8, killing_state):
    # int Q^2 |psi|^4 dvol_round == int Q^2 dmu with dmu = |psi|^4 dvol:
    # identical sums on the same quadrature
    values = ws8.synthesize(killing_state.coeff)
    nsq = ws8.fiber_norm_sq(values)
    lhs = float(ws8.grid.integrate(ws8.q_nodes**2 * nsq**2))
    dmu = nsq**2 * ws8.grid.weights
    rhs = float(np.sum(ws8.q_nodes**2 * dmu))
    assert abs(lhs - rhs) <= 1e-12 * abs(lhs)


def test_icosphere_counts():
    for k, nv in ((0, 12), (2, 162), (4, 2562)):
        verts, faces = icosphere(k)
        assert verts.shape[0] == nv
        assert faces.shape[0] == 20 * 4**k
        ne = mesh_edges(faces).shape[0]
        assert nv - ne + faces.shape[0] == 2
        assert np.allclose(np.linalg.norm(verts, axis=1), 1.0, atol=1e-14)


def test_round_sphere_reconstruction(ws8, killing_state):
    mesh = reconstruct_immersion(killing_state, ws8, subdivisions=4)
    assert mesh.vertices.shape[0] == 2562
    assert mesh.euler_characteristic() == 2
    center = mesh.vertices.mean(axis=0)
    r = np.linalg.norm(mesh.vertices - center, axis=1)
    assert np.abs(r - 1.0).max() <= 1e-2           # radius 1/Q with Q = 1
    rel = mesh.mean_curvature - 1.0
    assert math.sqrt(np.mean(rel**2)) <= 0.02
    assert abs(gauss_bonnet_defect(mesh.vertices, mesh.faces)) <= 0.01 * 4 * math.pi
    assert edge_length_relative_error(mesh, killing_state) <= 0.02
    assert mesh.closure_defect <= 1e-8
    assert mesh.closedness_precheck <= 1e-10
    assert mesh.alignment_residual <= 1e-8


def test_reconstruction_refuses_zero_state(ws8):
    basis = ws8.basis
    coeff = np.zeros(basis.n_basis, complex)
    i = next(k for k, ix in enumerate(basis.indices)
             if ix.j == 1 and ix.sigma == 1 and ix.k == 1)
    coeff[i] = 2.0
    with pytest.raises(ValueError):
        reconstruct_immersion(SpectralSpinor(basis, coeff), ws8, subdivisions=2)


def test_cotangent_estimator_on_spheres():
    verts, faces = icosphere(3)
    for radius in (1.0, 2.5):
        H = cotangent_mean_curvature(radius * verts, faces)
        assert np.abs(H - 1.0 / radius).max() <= 0.01 / radius


def test_mesh_io_round_trip(tmp_path, ws8, killing_state):
    mesh = reconstruct_immersion(killing_state, ws8, subdivisions=2)
    obj = tmp_path / "m.obj"
    ply = tmp_path / "m.ply"
    export_obj(obj, mesh)
    export_ply(ply, mesh)
    v1, f1 = read_obj(obj)
    assert np.array_equal(v1, mesh.vertices)       # repr round trip, bit exact
    assert np.array_equal(f1, mesh.faces)
    v2, f2, attrs = read_ply(ply)
    assert np.array_equal(v2, mesh.vertices)
    assert np.array_equal(f2, mesh.faces)
    assert np.array_equal(attrs[:, 1], mesh.mean_curvature)
    header = ply.read_bytes()[:400].decode(errors="ignore")
    assert "mean_curvature" in header and "float64" in header


def test_closedness_defect_on_solution(ws8, killing_state):
    z = 0.7 * np.exp(1j * np.linspace(0, 6.0, 25))
    assert closedness_defect(killing_state, z, "a") <= 1e-12
