"""Prescribed-curvature fields Q and the variational functionals.

The strongly indefinite energy at exponent p in (2, 4]:

    L_p(psi) = 1/2 (||psi^+||^2 - ||psi^-||^2) - (1/p) integral Q |psi|^p,

with || . || the spectral H^{1/2} norm.  Gradients are always returned as
H^{1/2} Riesz representatives, coefficientwise

    grad_k = sign(lambda_k) a_k - N_k / |lambda_k|,
    N = projection of Q |psi|^{p-2} psi,

so finite-difference checks pair them with the H^{1/2} inner product.

Conventions: Q is kept in physical (unnormalized) scale everywhere; the
normalization integral Q dvol = 1 is applied only inside the Rayleigh-type
comparisons across exponents (see reduction.estimate_tau), never mixed into
the same formula.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .chartexpr import ChartExpr
from .conformal import ambient_coord_exprs
from .grid import QuadratureGrid
from .spectral import SphereBasis, SpectralSpinor

# -- curvature fields ---------------------------------------------------------


class CurvatureField:
    """Base class: positive smooth function on S^2 with derivative access."""

    exact_derivatives = False

    def evaluate(self, xyz) -> np.ndarray:
        raise NotImplementedError

    def ambient_gradient(self, xyz) -> np.ndarray:
        """Gradient of an ambient extension, finite differences by default."""
        xyz = np.atleast_2d(np.asarray(xyz, dtype=float))
        h = 1e-6
        out = np.empty_like(xyz)
        for a in range(3):
            e = np.zeros(3)
            e[a] = h
            fp = self.evaluate(_renorm(xyz + e))
            fm = self.evaluate(_renorm(xyz - e))
            out[:, a] = (fp - fm) / (2 * h)
        return out

    def ambient_hessian(self, xyz) -> np.ndarray:
        xyz = np.atleast_2d(np.asarray(xyz, dtype=float))
        h = 1e-4
        out = np.empty((xyz.shape[0], 3, 3))
        for a in range(3):
            e = np.zeros(3)
            e[a] = h
            gp = self.ambient_gradient(_renorm(xyz + e))
            gm = self.ambient_gradient(_renorm(xyz - e))
            out[:, a, :] = (gp - gm) / (2 * h)
        return 0.5 * (out + np.swapaxes(out, 1, 2))

    def chart_expr(self, chart: str) -> ChartExpr | None:
        """Exact chart form when available (polynomial families)."""
        return None


def _renorm(xyz):
    return xyz / np.linalg.norm(xyz, axis=-1, keepdims=True)


class PolynomialCurvature(CurvatureField):
    """Q = sum c * x1^i x2^j x3^k restricted to the sphere; exact derivatives."""

    exact_derivatives = True

    def __init__(self, terms):
        # terms: iterable of (i, j, k, coeff)
        self.terms = [(int(i), int(j), int(k), float(c)) for i, j, k, c in terms]

    def evaluate(self, xyz):
        xyz = np.asarray(xyz, dtype=float)
        x1, x2, x3 = xyz[..., 0], xyz[..., 1], xyz[..., 2]
        out = np.zeros(xyz.shape[:-1])
        for i, j, k, c in self.terms:
            out += c * x1**i * x2**j * x3**k
        return out

    def ambient_gradient(self, xyz):
        xyz = np.atleast_2d(np.asarray(xyz, dtype=float))
        x = [xyz[:, 0], xyz[:, 1], xyz[:, 2]]
        out = np.zeros_like(xyz)
        for i, j, k, c in self.terms:
            e = (i, j, k)
            for a in range(3):
                if e[a] == 0:
                    continue
                term = c * e[a] * np.ones(xyz.shape[0])
                for b in range(3):
                    pw = e[b] - (1 if b == a else 0)
                    if pw:
                        term = term * x[b] ** pw
                out[:, a] += term
        return out

    def ambient_hessian(self, xyz):
        xyz = np.atleast_2d(np.asarray(xyz, dtype=float))
        x = [xyz[:, 0], xyz[:, 1], xyz[:, 2]]
        out = np.zeros((xyz.shape[0], 3, 3))
        for i, j, k, c in self.terms:
            e = (i, j, k)
            for a in range(3):
                for b in range(3):
                    ea = list(e)
                    fac = ea[a]
                    if fac == 0:
                        continue
                    ea[a] -= 1
                    fac *= ea[b]
                    if fac == 0:
                        continue
                    ea[b] -= 1
                    term = c * fac * np.ones(xyz.shape[0])
                    for d in range(3):
                        if ea[d]:
                            term = term * x[d] ** ea[d]
                    out[:, a, b] += term
        return out

    def chart_expr(self, chart: str) -> ChartExpr:
        coords = ambient_coord_exprs(chart)
        total = ChartExpr()
        for i, j, k, c in self.terms:
            term = ChartExpr.monomial(c, 0, 0, 0)
            for expr, power in zip(coords, (i, j, k)):
                for _ in range(power):
                    term = term * expr
            total = total + term
        return total

    def is_affine(self) -> bool:
        return all(i + j + k <= 1 for i, j, k, _ in self.terms)


def constant_curvature(value: float = 1.0) -> PolynomialCurvature:
    return PolynomialCurvature([(0, 0, 0, value)])


class SphericalHarmonicCurvature(CurvatureField):
    """Q from a real spherical-harmonic table [(l, m, coeff), ...].

    Real convention: m = 0 uses Y_l0; m > 0 uses sqrt(2) Re Y_lm, m < 0 uses
    sqrt(2) Im Y_l|m|.  Derivatives fall back to finite differences, with the
    accuracy degradation that implies for hypothesis checks.
    """

    def __init__(self, coeffs):
        self.coeffs = [(int(l), int(m), float(c)) for l, m, c in coeffs]

    def evaluate(self, xyz):
        try:
            from scipy.special import sph_harm_y

            def harm(m, l, phi, theta):
                return sph_harm_y(l, m, theta, phi)
        except ImportError:  # older scipy
            from scipy.special import sph_harm as harm

        xyz = np.asarray(xyz, dtype=float)
        theta = np.arccos(np.clip(xyz[..., 2], -1, 1))
        phi = np.arctan2(xyz[..., 1], xyz[..., 0])
        out = np.zeros(xyz.shape[:-1])
        for l, m, c in self.coeffs:
            y = harm(abs(m), l, phi, theta)
            if m == 0:
                out += c * y.real
            elif m > 0:
                out += c * math.sqrt(2.0) * y.real
            else:
                out += c * math.sqrt(2.0) * y.imag
        return out


# -- hypothesis (Q) analysis --------------------------------------------------


@dataclass
class CriticalPoint:
    position: np.ndarray
    value: float
    grad_norm: float
    hess_eigs: tuple[float, float]
    kind: str  # 'max' | 'min' | 'saddle' | 'degenerate'


@dataclass
class QHypothesisReport:
    q_max: float
    q_min: float
    half_threshold: float          # 2^{-1/(m-1)} q_max
    max_points: list
    critical_points: list
    admissible_d: tuple[float, float] | None
    constant: bool
    contractibility: str
    search_converged: bool
    notes: list


def _tangent_frame(xi):
    a = np.array([1.0, 0.0, 0.0]) if abs(xi[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(xi, a)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(xi, e1)
    return e1, e2


def intrinsic_gradient(Q: CurvatureField, xyz) -> np.ndarray:
    """Sphere gradient: tangential projection of the ambient gradient."""
    xyz = np.atleast_2d(np.asarray(xyz, dtype=float))
    g = Q.ambient_gradient(xyz)
    return g - np.sum(g * xyz, axis=1, keepdims=True) * xyz

def intrinsic_hessian(Q: CurvatureField, xi) -> np.ndarray:
    """2x2 sphere Hessian at a point, in an orthonormal tangent frame.

    Hess_S Q(X, Y) = Hess_ambient(X, Y) - (grad_ambient . xi) <X, Y> on the
    unit sphere (shape-operator correction).
    """
    xi = np.asarray(xi, dtype=float)
    e1, e2 = _tangent_frame(xi)
    H = Q.ambient_hessian(xi[None])[0]
    g = Q.ambient_gradient(xi[None])[0]
    radial = float(g @ xi)
    frame = np.stack([e1, e2], axis=0)
    return frame @ H @ frame.T - radial * np.eye(2)


def find_critical_points(Q: CurvatureField, seed_degree: int = 24,
                         grad_tol: float = 1e-9, dedupe_dist: float = 0.03,
                         max_iter: int = 80):
    """Multi-start sphere Newton for grad Q = 0; returns (points, all_converged)."""
    grid = QuadratureGrid(degree=seed_degree)
    seeds = grid.xyz
    found = []
    all_ok = True
    for xi in seeds:
        xi = xi.copy()
        ok = False
        for _ in range(max_iter):
            g3 = intrinsic_gradient(Q, xi[None])[0]
            gn = np.linalg.norm(g3)
            if gn < grad_tol:
                ok = True
                break
            e1, e2 = _tangent_frame(xi)
            H2 = intrinsic_hessian(Q, xi)
            g2 = np.array([g3 @ e1, g3 @ e2])
            try:
                step = np.linalg.solve(H2, -g2)
            except np.linalg.LinAlgError:
                step = -g2
            if not np.all(np.isfinite(step)) or np.linalg.norm(step) > 0.5:
                step = -0.2 * g2 / max(gn, 1e-30)
            xi = xi + step[0] * e1 + step[1] * e2
            xi /= np.linalg.norm(xi)
        if not ok:
            all_ok = False
            continue
        if all(np.arccos(np.clip(xi @ p.position, -1, 1)) > dedupe_dist for p in found):
            val = float(Q.evaluate(xi[None])[0])
            eigs = np.linalg.eigvalsh(intrinsic_hessian(Q, xi))
            scale = max(abs(eigs).max(), 1e-12)
            tol = 1e-6 * max(scale, 1.0)
            if eigs[0] > tol and eigs[1] > tol:
                kind = "min"
            elif eigs[0] < -tol and eigs[1] < -tol:
                kind = "max"
            elif eigs[0] < -tol and eigs[1] > tol:
                kind = "saddle"
            else:
                kind = "degenerate"
            found.append(CriticalPoint(xi, val, float(np.linalg.norm(
                intrinsic_gradient(Q, xi[None])[0])), (float(eigs[0]), float(eigs[1])), kind))
    found.sort(key=lambda p: -p.value)
    return found, all_ok


def check_q_hypothesis(Q: CurvatureField, m: int = 2,
                       value_tol: float = 1e-9) -> QHypothesisReport:
    """Analytic parts of the curvature hypothesis: extrema, critical values,
    Hessian definiteness, and the admissible interval for the gap value d.

    The topological clauses (contractibility of the maximum set in its
    neighborhoods and sublevel sets) are reported as not checked.
    """
    probe = QuadratureGrid(degree=64)
    vals = Q.evaluate(probe.xyz)
    crits, converged = find_critical_points(Q)
    cand_max = max(vals.max(), max((p.value for p in crits), default=-np.inf))
    cand_min = min(vals.min(), min((p.value for p in crits), default=np.inf))
    q_max, q_min = float(cand_max), float(cand_min)
    if q_min <= 0:
        raise ValueError("curvature field must be positive on S^2")
    notes = []
    constant = (q_max - q_min) <= value_tol * max(1.0, abs(q_max))
    half = 2.0 ** (-1.0 / (m - 1)) * q_max
    max_points = [p for p in crits if p.value >= q_max - value_tol * max(1.0, q_max)]
    if constant:
        admissible = None
        notes.append("constant curvature: admissible d interval is empty")
    else:
        lo = max(half, q_min)
        for p in crits:
            interior = p.value < q_max - value_tol * max(1.0, q_max)
            posdef = p.kind == "min"
            if interior and not posdef and p.value > lo:
                lo = p.value
        admissible = (lo, q_max) if lo < q_max - value_tol else None
        if admissible is None:
            notes.append("no admissible d: interior critical values without "
                         "positive-definite Hessian reach the maximum level")
    if isinstance(Q, PolynomialCurvature) and Q.is_affine() and not constant:
        notes.append("affine curvature 1 + c.x: known obstruction family, not a "
                     "mean curvature of any conformal immersion (kept as a "
                     "documented negative fixture)")
    return QHypothesisReport(
        q_max=q_max, q_min=q_min, half_threshold=half,
        max_points=max_points, critical_points=crits,
        admissible_d=admissible, constant=constant,
        contractibility="not checked", search_converged=converged, notes=notes,
    )


# -- workspace ----------------------------------------------------------------


@dataclass
class Workspace:
    """Bundles basis, quadrature grid and curvature samples for the solver."""

    basis: SphereBasis
    grid: QuadratureGrid
    Q: CurvatureField

    def __post_init__(self):
        if self.grid.degree < 3 * self.basis.J:
            raise ValueError(
                f"grid degree {self.grid.degree} < 3J = {3 * self.basis.J}: "
                "cubic nonlinearity would alias")
        self.q_nodes = np.asarray(self.Q.evaluate(self.grid.xyz), dtype=float)
        if self.q_nodes.ndim == 0:
            self.q_nodes = np.full(self.grid.n_nodes, float(self.q_nodes))
        if np.any(self.q_nodes <= 0):
            raise ValueError("curvature field must be positive at the nodes")
        self.q_integral = float(self.grid.integrate(self.q_nodes))

    def synthesize(self, coeff) -> np.ndarray:
        return self.basis.synthesize(coeff, self.grid)

    def analyze(self, values) -> np.ndarray:
        return self.basis.analyze(values, self.grid)

    def fiber_norm_sq(self, values) -> np.ndarray:
        """|psi|^2 at the nodes from weighted chart values."""
        return np.sum(np.abs(values) ** 2, axis=1) / self.grid.f_pref

    def fiber_re_inner(self, v1, v2) -> np.ndarray:
        """real(psi, chi) at the nodes."""
        return np.sum(np.real(v1 * np.conj(v2)), axis=1) / self.grid.f_pref

    def spinor(self, coeff) -> SpectralSpinor:
        return SpectralSpinor(self.basis, np.asarray(coeff, dtype=complex))


def _check_p(p: float):
    if not 2.0 < p <= 4.0:
        raise ValueError(f"exponent p={p} outside (2, 4]")


@dataclass
class EnergyReport:
    value: float
    grad: np.ndarray        # H^{1/2} Riesz representative, coefficient vector
    nonlinear: float        # A(psi) = integral Q |psi|^p
    plus_sq: float
    minus_sq: float


def eval_A(coeff, p: float, ws: Workspace, values=None) -> float:
    """A(psi) = integral Q |psi|^p dvol."""
    _check_p(p)
    if values is None:
        values = ws.synthesize(coeff)
    nsq = ws.fiber_norm_sq(values)
    return float(ws.grid.integrate(ws.q_nodes * nsq ** (p / 2.0)))


def nonlinear_projection(values, p: float, ws: Workspace) -> np.ndarray:
    """Coefficients of Q |psi|^{p-2} psi (the L^2 projection onto the basis)."""
    nsq = ws.fiber_norm_sq(values)
    factor = ws.q_nodes * nsq ** ((p - 2.0) / 2.0)
    return ws.analyze(values * factor[:, None])


def eval_L(coeff, p: float, ws: Workspace) -> EnergyReport:
    """Value and H^{1/2} gradient of L_p; the report carries the split parts."""
    _check_p(p)
    coeff = np.asarray(coeff, dtype=complex)
    basis = ws.basis
    values = ws.synthesize(coeff)
    plus_sq = float(np.sum(basis.abs_eigenvalues[basis.plus_mask]
                           * np.abs(coeff[basis.plus_mask]) ** 2))
    minus_sq = float(np.sum(basis.abs_eigenvalues[basis.minus_mask]
                            * np.abs(coeff[basis.minus_mask]) ** 2))
    A = eval_A(coeff, p, ws, values=values)
    value = 0.5 * (plus_sq - minus_sq) - A / p
    N = nonlinear_projection(values, p, ws)
    grad = np.sign(basis.eigenvalues) * coeff - N / basis.abs_eigenvalues
    return EnergyReport(value=value, grad=grad, nonlinear=A,
                        plus_sq=plus_sq, minus_sq=minus_sq)


def hessian_apply(psi_values, p: float, ws: Workspace, w_coeff) -> np.ndarray:
    """H^{1/2} Riesz representative of L_p''(psi)[w, .], as a coefficient map.

    L_p''(psi)[w, v] = real int (Dw, v) - int Q |psi|^{p-2} real(w, v)
                       - (p-2) int Q |psi|^{p-4} real(psi, w) real(psi, v).
    """
    _check_p(p)
    basis = ws.basis
    w_coeff = np.asarray(w_coeff, dtype=complex)
    w_values = ws.synthesize(w_coeff)
    nsq = ws.fiber_norm_sq(psi_values)
    pw = np.where(nsq > 0, nsq ** ((p - 2.0) / 2.0), 0.0)
    lin = pw * ws.q_nodes
    dot = ws.fiber_re_inner(psi_values, w_values)
    # |psi|^{p-4} real(psi,w): continuous at zeros for p > 2, set 0 there
    with np.errstate(divide="ignore", invalid="ignore"):
        quad = np.where(nsq > 0, (p - 2.0) * ws.q_nodes * pw / nsq * dot, 0.0)
    field = lin[:, None] * w_values + quad[:, None] * psi_values
    M = ws.analyze(field)
    return np.sign(basis.eigenvalues) * w_coeff - M / basis.abs_eigenvalues


def hessian_quadratic_form(psi_values, p: float, ws: Workspace, w_coeff) -> float:
    """L_p''(psi)[w, w] evaluated directly by quadrature."""
    basis = ws.basis
    w_coeff = np.asarray(w_coeff, dtype=complex)
    w_values = ws.synthesize(w_coeff)
    nsq = ws.fiber_norm_sq(psi_values)
    pw = np.where(nsq > 0, nsq ** ((p - 2.0) / 2.0), 0.0)
    wsq = ws.fiber_norm_sq(w_values)
    dot = ws.fiber_re_inner(psi_values, w_values)
    with np.errstate(divide="ignore", invalid="ignore"):
        quart = np.where(nsq > 0, pw / nsq * dot**2, 0.0)
    quad_part = float(ws.grid.integrate(ws.q_nodes * (pw * wsq + (p - 2.0) * quart)))
    dirac_part = float(np.sum(basis.eigenvalues * np.abs(w_coeff) ** 2))
    return dirac_part - quad_part


# -- Rayleigh quotient --------------------------------------------------------


def eval_rayleigh(coeff, p: float, ws: Workspace, normalized: bool = False) -> float:
    """R_p(psi) = int (D psi, psi) / A(psi)^{2/p}; scale invariant."""
    _check_p(p)
    coeff = np.asarray(coeff, dtype=complex)
    A = eval_A(coeff, p, ws)
    if normalized:
        A = A / ws.q_integral
    if A <= 0:
        raise ValueError("Rayleigh quotient undefined: A(psi) = 0")
    num = float(np.sum(ws.basis.eigenvalues * np.abs(coeff) ** 2))
    return num / A ** (2.0 / p)


def rayleigh_grad(coeff, p: float, ws: Workspace) -> np.ndarray:
    """H^{1/2} Riesz representative of R_p'(psi)."""
    _check_p(p)
    coeff = np.asarray(coeff, dtype=complex)
    basis = ws.basis
    values = ws.synthesize(coeff)
    A = eval_A(coeff, p, ws, values=values)
    if A <= 0:
        raise ValueError("Rayleigh quotient undefined: A(psi) = 0")
    R = float(np.sum(basis.eigenvalues * np.abs(coeff) ** 2)) / A ** (2.0 / p)
    N = nonlinear_projection(values, p, ws)
    # R'(psi)[v] = (2/A^{2/p}) [ real(D psi, v) - (R/p) A^{(2-p)/p} A'(psi)[v] ]
    core = np.sign(basis.eigenvalues) * coeff \
        - (R * A ** ((2.0 - p) / p)) * N / basis.abs_eigenvalues
    return (2.0 / A ** (2.0 / p)) * core


def lp_mean(coeff, q: float, ws: Workspace) -> float:
    """(integral Qhat |psi|^q)^{1/q} with Qhat the normalized copy of Q."""
    values = ws.synthesize(coeff)
    nsq = ws.fiber_norm_sq(values)
    val = float(ws.grid.integrate(ws.q_nodes / ws.q_integral * nsq ** (q / 2.0)))
    return val ** (1.0 / q)
