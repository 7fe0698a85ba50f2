"""Shared fixtures: small workspaces and the two reference continuation solves.

The constant-curvature solve (J=12) and the perturbed solve Q = 1 + 0.3 x3^2
(J=16) are expensive, so they run once per session and are shared between the
solver, geometry, and acceptance tests.
"""

import numpy as np
import pytest

from diracsphere.conformal import Bubble
from diracsphere.energy import PolynomialCurvature, Workspace, constant_curvature
from diracsphere.grid import QuadratureGrid
from diracsphere.reduction import solve_continuation
from diracsphere.spectral import SphereBasis

SCHEDULE = [3.0, 3.4, 3.7, 3.9, 3.97, 4.0]


def make_workspace(J, Q=None, degree=None):
    basis = SphereBasis(J)
    grid = QuadratureGrid(degree=degree or 3 * J)
    return Workspace(basis, grid, Q or constant_curvature(1.0))


def random_spinor(ws, rng, decay=0.5, plus_only=False):
    basis = ws.basis
    c = (rng.normal(size=basis.n_basis) + 1j * rng.normal(size=basis.n_basis))
    c = c * decay**basis.j_arr
    if plus_only:
        c = np.where(basis.plus_mask, c, 0.0)
    return c


@pytest.fixture(scope="session")
def ws8():
    return make_workspace(8)


@pytest.fixture(scope="session")
def ws12():
    return make_workspace(12)


@pytest.fixture(scope="session")
def perturbed_q():
    return PolynomialCurvature([(0, 0, 0, 1.0), (0, 0, 2, 0.3)])


@pytest.fixture(scope="session")
def const_solution(ws12):
    """Continuation solve for Q = 1 from a bubble at the north pole."""
    result = solve_continuation(
        ws12, SCHEDULE, Bubble(center=[0, 0, 1], rho=0.3, q_center=1.0),
        tol_final=1e-7)
    return ws12, result


@pytest.fixture(scope="session")
def perturbed_solution(perturbed_q):
    """Continuation solve for Q = 1 + 0.3 x3^2 at J = 16."""
    ws = make_workspace(16, perturbed_q)
    result = solve_continuation(
        ws, SCHEDULE, Bubble(center=[0, 0, 1], rho=0.3, q_center=1.3),
        tol_final=1e-7)
    return ws, result
