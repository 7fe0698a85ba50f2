"""Fiberwise spinor algebra for the rank-2 complex spinor bundle over a surface.

The whole package works with one fixed matrix representation of the Clifford
algebra Cl(R^2):

    e1 . = -i sigma_1 = [[0, -i], [-i, 0]]
    e2 . = -i sigma_2 = [[0, -1], [ 1, 0]]

so that  e_i e_j + e_j e_i = -2 delta_ij Id  and Clifford multiplication by a
unit vector is skew-adjoint for the standard hermitian product on C^2.  The
complex volume element i e1 e2 equals sigma_3 = diag(1, -1), so the two spinor
components are the +/- half-spinor parts.  Every other module (chart forms of
the Dirac operator, bubbles, transition functions) is written against this
choice; do not mix in another representation.
"""

from __future__ import annotations

import numpy as np

SIGMA1 = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA2 = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA3 = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)

# Clifford action of the two orthonormal frame vectors.
E1 = -1j * SIGMA1
E2 = -1j * SIGMA2

# i e1. e2. , the complex volume element; equals sigma_3.
VOLUME_ELEMENT = 1j * (E1 @ E2)


def clifford_matrix(x):
    """Matrix of Clifford multiplication by the tangent vector x = (x1, x2).

    Accepts a length-2 real (or complex, for chart work with z-coordinates
    split into components) vector, or arrays of shape (..., 2); returns the
    matching (..., 2, 2) stack.
    """
    x = np.asarray(x)
    return x[..., 0, None, None] * E1 + x[..., 1, None, None] * E2


def clifford_mul(x, phi):
    """X . phi, Clifford multiplication of a spinor by a tangent vector.

    ``x`` has shape (..., 2) in orthonormal-frame coordinates, ``phi`` shape
    (..., 2) in spinor components; broadcasting applies.
    """
    x = np.asarray(x)
    phi = np.asarray(phi, dtype=complex)
    out = np.empty(np.broadcast(x, phi).shape, dtype=complex)
    # (-i sigma_1 x1 - i sigma_2 x2) phi, written out
    out[..., 0] = -1j * x[..., 0] * phi[..., 1] - x[..., 1] * phi[..., 1]
    out[..., 1] = -1j * x[..., 0] * phi[..., 0] + x[..., 1] * phi[..., 0]
    return out


def hermitian(phi, chi):
    """Hermitian product (phi, chi) on the spinor fiber, antilinear in chi."""
    phi = np.asarray(phi, dtype=complex)
    chi = np.asarray(chi, dtype=complex)
    return np.sum(phi * np.conj(chi), axis=-1)


def fiber_norm_sq(phi):
    """|phi|^2 = (phi, phi), real and nonnegative."""
    phi = np.asarray(phi, dtype=complex)
    return np.sum(np.abs(phi) ** 2, axis=-1)


def check_dirac_bundle_axioms(atol: float = 1e-14) -> None:
    """Raise AssertionError unless the fixed representation satisfies the
    Dirac-bundle axioms (anticommutation and skew-adjointness) exactly."""
    ident = np.eye(2)
    for i, a in enumerate((E1, E2)):
        for j, b in enumerate((E1, E2)):
            anti = a @ b + b @ a
            target = -2.0 * ident if i == j else np.zeros((2, 2))
            assert np.allclose(anti, target, atol=atol)
    for a in (E1, E2):
        assert np.allclose(a.conj().T, -a, atol=atol)
