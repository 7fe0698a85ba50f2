"""Reduction couple, Nehari projection, tau estimation and the continuation solver.

The saddle structure of L_p is removed in two steps:

* ``reduce``: for u in E^+, the unique maximizer h_p(u) of the strictly
  concave v -> L_p(u + v) on E^- (Newton-CG; the Hessian satisfies
  L_p'' <= -id there, so the shifted operator is positive definite and CG is
  unconditionally safe).  I_p(u) = L_p(u + h_p(u)).
* ``nehari_project``: the unique t(u) > 0 with d/dt I_p(t u) = 0 (safeguarded
  bracketing + Brent), landing on the natural constraint
  N_p = {I_p'(u)[u] = 0}.

Critical points of I_p restricted to N_p are found by projected gradient
descent in the spectral H^{1/2} metric with a tangent-space Newton endgame.
The continuation driver walks a schedule p_0 < p_1 < ... < 4, warm starting
each stage, and watches the concentration function

    Theta(r) = max_a integral_{B_r(a)} |psi|^p dvol

together with a clamped barycenter of the |psi|^4 mass; persistent capture of
90% mass at radii of a few grid spacings is declared blow-up and reported
with the concentration point and a fitted bubble profile.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .conformal import Bubble, StereoChart, bubble_to_sphere
from .energy import (Workspace, eval_A, eval_L, eval_rayleigh, hessian_apply,
                     nonlinear_projection, _check_p)
from .spectral import SpectralSpinor

# -- inner problem: maximize over E^- -----------------------------------------


@dataclass
class ReductionResult:
    h: np.ndarray               # E^- maximizer coefficients
    psi: np.ndarray             # u + h
    value: float                # L_p(u + h) = I_p(u)
    grad: np.ndarray            # full H^{1/2} gradient of L_p at psi
    residual_minus: float       # H^{1/2} norm of the E^- gradient (Eq. hlm proxy)
    iterations: int


def _h_norm(ws: Workspace, coeff) -> float:
    return math.sqrt(max(float(np.sum(ws.basis.abs_eigenvalues
                                      * np.abs(coeff) ** 2)), 0.0))


def _h_inner(ws: Workspace, a, b) -> float:
    return float(np.sum(ws.basis.abs_eigenvalues * np.real(a * np.conj(b))))


def _lp_value(coeff, p, ws) -> float:
    basis = ws.basis
    plus_sq = float(np.sum(basis.abs_eigenvalues[basis.plus_mask]
                           * np.abs(coeff[basis.plus_mask]) ** 2))
    minus_sq = float(np.sum(basis.abs_eigenvalues[basis.minus_mask]
                            * np.abs(coeff[basis.minus_mask]) ** 2))
    return 0.5 * (plus_sq - minus_sq) - eval_A(coeff, p, ws) / p


def _neg_cg(ws: Workspace, psi_values, p, rhs, tol, max_iter=200, x0=None):
    """Solve (-L_p'' restricted to E^-) x = rhs by CG in the H^{1/2} metric.

    The operator in Riesz form is x + M(x)/|lambda| on E^-, which is
    >= identity, so plain CG converges fast.
    """
    neg = ws.basis.minus_mask
    lam = ws.basis.abs_eigenvalues

    def apply_op(x):
        full = np.zeros_like(rhs)
        full[neg] = x[neg]
        hx = hessian_apply(psi_values, p, ws, full)
        out = np.zeros_like(rhs)
        out[neg] = -hx[neg]
        return out

    x = np.zeros_like(rhs) if x0 is None else x0.copy()
    r = rhs - apply_op(x)
    d = r.copy()
    rr = float(np.sum(lam[neg] * np.abs(r[neg]) ** 2))
    tol_sq = tol * tol
    for it in range(max_iter):
        if rr <= tol_sq:
            break
        Ad = apply_op(d)
        dAd = float(np.sum(lam[neg] * np.real(d[neg] * np.conj(Ad[neg]))))
        if dAd <= 0:
            break
        alpha = rr / dAd
        x = x + alpha * d
        r = r - alpha * Ad
        rr_new = float(np.sum(lam[neg] * np.abs(r[neg]) ** 2))
        d = r + (rr_new / rr) * d
        rr = rr_new
    return x


def reduce_minus(u_coeff, p: float, ws: Workspace, v0=None,
                 tol_inner: float = 1e-10, max_iter: int = 60) -> ReductionResult:
    """h_p(u): the unique E^- maximizer of v -> L_p(u + v)."""
    _check_p(p)
    basis = ws.basis
    neg = basis.minus_mask
    u_coeff = np.asarray(u_coeff, dtype=complex)
    v = np.zeros_like(u_coeff) if v0 is None else np.where(neg, v0, 0.0)
    val = _lp_value(u_coeff + v, p, ws)
    # absolute tolerance for O(1) fields; large-amplitude states carry a
    # proportionally larger roundoff floor in the gradient
    scale = max(1.0, eval_A(u_coeff, p, ws) ** ((p - 1.0) / p))
    tol_eff = tol_inner * scale
    for it in range(max_iter):
        psi = u_coeff + v
        values = ws.synthesize(psi)
        N = nonlinear_projection(values, p, ws)
        g = np.where(neg, -psi - N / basis.abs_eigenvalues, 0.0)
        res = _h_norm(ws, g)
        if res <= tol_eff:
            rep = eval_L(psi, p, ws)
            return ReductionResult(h=v, psi=psi, value=rep.value, grad=rep.grad,
                                   residual_minus=res, iterations=it)
        delta = _neg_cg(ws, values, p, g, tol=min(0.1 * res, res * res, tol_eff))
        step = 1.0
        for _ in range(30):
            v_try = v + step * delta
            val_try = _lp_value(u_coeff + v_try, p, ws)
            if val_try >= val - 1e-14 * abs(val):
                v, val = v_try, val_try
                break
            step *= 0.5
        else:
            break
    psi = u_coeff + v
    rep = eval_L(psi, p, ws)
    res = _h_norm(ws, np.where(neg, rep.grad, 0.0))
    if res > 10 * tol_eff:
        raise RuntimeError(
            f"inner reduction did not reach tol_inner={tol_inner:g} "
            f"(residual {res:.3e}); the problem is concave, this indicates "
            "an aliasing or conditioning issue")
    return ReductionResult(h=v, psi=psi, value=rep.value, grad=rep.grad,
                           residual_minus=res, iterations=max_iter)


# -- Nehari projection ---------------------------------------------------------


@dataclass
class NehariState:
    t: float                    # scaling with t u on the Nehari set
    u: np.ndarray               # scaled E^+ coefficients, on N_p
    h: np.ndarray               # h_p(t u)
    value: float                # I_p(t u)
    f_value: float              # F_p from the energy: ((2p/(p-2)) I)^{(p-2)/p}
    f_value_rayleigh: float     # F_p = R_p(tu + h), the independent route
    ray_second_derivative: float | None = None


def nehari_project(u_coeff, p: float, ws: Workspace, tol_t: float = 1e-12,
                   tol_inner: float = 1e-10, h0=None,
                   second_derivative: bool = False) -> NehariState:
    """Scale u onto the Nehari set: the unique root of t -> d/dt I_p(t u)."""
    _check_p(p)
    u_coeff = np.asarray(u_coeff, dtype=complex)
    unorm = _h_norm(ws, u_coeff)
    if unorm == 0:
        raise ValueError("cannot project the zero direction")
    u0 = u_coeff / unorm
    cache = {"h": None if h0 is None else h0.copy()}

    def slope(t):
        red = reduce_minus(t * u0, p, ws, v0=cache["h"], tol_inner=tol_inner)
        cache["h"] = red.h
        cache["red"] = red
        cache["t"] = t
        return _h_inner(ws, red.grad, u0)

    t_lo, t_hi = 0.5, 2.0
    s_lo = slope(t_lo)
    for _ in range(80):
        if s_lo > 0:
            break
        t_lo *= 0.5
        s_lo = slope(t_lo)
    else:
        raise RuntimeError("no positive slope near t = 0; A(u + h) <= 0?")
    s_hi = slope(t_hi)
    for _ in range(80):
        if s_hi < 0:
            break
        t_hi *= 2.0
        s_hi = slope(t_hi)
    else:
        raise RuntimeError("Nehari bracketing failed: slope never negative")
    t_root = brentq(slope, t_lo, t_hi, xtol=tol_t, rtol=8.8817841970012523e-16)
    if cache.get("t") != t_root:
        slope(t_root)
    red = cache["red"]
    I_val = red.value
    f_energy = ((2.0 * p / (p - 2.0)) * max(I_val, 0.0)) ** ((p - 2.0) / p)
    f_ray = eval_rayleigh(red.psi, p, ws)
    d2 = None
    if second_derivative:
        dt = 1e-4 * t_root
        vals = []
        for tt in (t_root - dt, t_root, t_root + dt):
            vals.append(reduce_minus(tt * u0, p, ws, v0=cache["h"],
                                     tol_inner=tol_inner).value)
        d2 = (vals[0] - 2 * vals[1] + vals[2]) / dt**2
    return NehariState(t=t_root / unorm, u=t_root * u0, h=red.h, value=I_val,
                       f_value=f_energy, f_value_rayleigh=f_ray,
                       ray_second_derivative=d2)


def nehari_defect(u_coeff, p: float, ws: Workspace, red: ReductionResult) -> float:
    """H_p(u) = I_p'(u)[u], zero on the Nehari set."""
    return _h_inner(ws, red.grad, np.where(ws.basis.plus_mask, u_coeff, 0.0))


# -- F_p and tau ----------------------------------------------------------------


@dataclass
class TauEstimate:
    p: float
    values: np.ndarray          # F_p over the sample directions (physical Q)
    values_normalized: np.ndarray
    minimum: float
    minimum_normalized: float


def estimate_tau(p: float, ws: Workspace, samples, tol_inner: float = 1e-10) -> TauEstimate:
    """Upper estimate of tau_p = inf F_p from a fixed set of E^+ directions.

    ``values`` uses the physical Q; ``values_normalized`` rescales to the
    integral-one normalization of Q under which p -> F_p(u) is pointwise
    non-increasing.  (The two differ by the constant (int Q)^{2/p}.)
    """
    out = []
    for u in samples:
        st = nehari_project(u, p, ws, tol_inner=tol_inner)
        out.append(st.f_value_rayleigh)
    vals = np.array(out)
    vals_norm = vals * ws.q_integral ** (2.0 / p)
    return TauEstimate(p=p, values=vals, values_normalized=vals_norm,
                       minimum=float(vals.min()),
                       minimum_normalized=float(vals_norm.min()))


# -- concentration diagnostics ---------------------------------------------------


def concentration_profile(values, p: float, ws: Workspace, radii):
    """Theta(r) = max over centers of the |psi|^p mass in geodesic r-balls.

    Centers range over the grid nodes.  Returns (theta, centers) with the
    maximizing node index per radius.
    """
    radii = np.atleast_1d(np.asarray(radii, dtype=float))
    nsq = ws.fiber_norm_sq(np.asarray(values))
    density = ws.grid.weights * nsq ** (p / 2.0)
    dist = ws.grid.geodesic_distance_matrix()
    theta = np.empty(radii.size)
    centers = np.empty(radii.size, dtype=int)
    for i, r in enumerate(radii):
        masses = (dist <= r) @ density
        centers[i] = int(np.argmax(masses))
        theta[i] = float(masses[centers[i]])
    return theta, centers


def barycenter(values, ws: Workspace, pole, clamp_radius: float) -> np.ndarray:
    """Clamped barycenter of the |psi|^4 mass in the chart that projects from
    ``pole`` (the chart covers the sphere minus the pole)."""
    pole = np.asarray(pole, dtype=float)
    chart = StereoChart(center=-pole / np.linalg.norm(pole))
    rotated = ws.grid.xyz @ chart.rotation.T
    # nodes at the projection pole would map to infinity; nudge off it,
    # the clamp sends them to the boundary circle anyway
    rotated[:, 2] = np.maximum(rotated[:, 2], -1.0 + 1e-12)
    z = (rotated[:, 0] + 1j * rotated[:, 1]) / (1.0 + rotated[:, 2])
    pts = np.stack([z.real, z.imag], axis=1)
    r = np.linalg.norm(pts, axis=1)
    scalefac = np.where(r > clamp_radius, clamp_radius / np.maximum(r, 1e-300), 1.0)
    zeta = pts * scalefac[:, None]
    nsq = ws.fiber_norm_sq(np.asarray(values))
    density = ws.grid.weights * nsq**2
    total = float(density.sum())
    if total <= 0:
        raise ValueError("barycenter undefined: |psi|^4 mass vanishes")
    return (density @ zeta) / total


# -- continuation driver ----------------------------------------------------------


class SolveFailure(RuntimeError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class BlowUpDetected(SolveFailure):
    def __init__(self, message, trace, point, stage_p, rho_hat, profile_distance):
        super().__init__(message, trace)
        self.point = point
        self.stage_p = stage_p
        self.rho_hat = rho_hat
        self.profile_distance = profile_distance


class StagnationDetected(SolveFailure):
    def __init__(self, message, trace, stage_p, residual):
        super().__init__(message, trace)
        self.stage_p = stage_p
        self.residual = residual


@dataclass
class StageSummary:
    p: float
    iterations: int
    value: float
    residual: float
    nehari_defect: float
    theta_radii: np.ndarray
    theta: np.ndarray
    theta_center: np.ndarray
    capture_radius: float
    barycenter: np.ndarray
    min_psi: float
    warm_start_value: float


@dataclass
class SolverTrace:
    schedule: list
    rows: list = field(default_factory=list)
    stages: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def add_row(self, **kw):
        self.rows.append(kw)

    def to_csv(self, path):
        import json

        cols = ["kind", "stage", "p", "iter", "value", "residual",
                "nehari_defect", "capture_radius", "bary_x", "bary_y", "min_psi"]
        with open(path, "w") as fh:
            fh.write("# diracsphere-trace v1\n")
            fh.write("# config " + json.dumps(self.config, sort_keys=True) + "\n")
            fh.write(",".join(cols) + "\n")
            for row in self.rows:
                out = []
                for c in cols:
                    v = row.get(c, "")
                    out.append(repr(v) if isinstance(v, float) else str(v))
                fh.write(",".join(out) + "\n")


@dataclass
class ContinuationResult:
    psi: SpectralSpinor
    trace: SolverTrace
    final_residual: float
    energy_window: tuple[float, float]
    window_value: float
    window_ok: bool


def _stage_diagnostics(values, p, ws, radii, pole, clamp_radius, capture):
    theta, centers = concentration_profile(values, p, ws, radii)
    total = float(ws.grid.integrate(ws.fiber_norm_sq(values) ** (p / 2.0)))
    nsq = ws.fiber_norm_sq(values)
    min_psi = float(np.sqrt(max(nsq.min(), 0.0)))
    frac = theta / max(total, 1e-300)
    above = np.nonzero(frac >= capture)[0]
    cap_r = float(radii[above[0]]) if above.size else float("inf")
    center = ws.grid.xyz[centers[above[0]]] if above.size else ws.grid.xyz[centers[-1]]
    bary = barycenter(values, ws, pole, clamp_radius)
    return theta, cap_r, center, bary, min_psi, total


def solve_continuation(ws: Workspace, schedule, init: SpectralSpinor | Bubble,
                       tol_final: float = 1e-7, tol_stage: float = 1e-6,
                       tol_inner: float = 1e-10, max_outer: int = 200,
                       newton_switch: float = 1e-3,
                       blowup_capture: float = 0.9,
                       blowup_spacing_factor: float = 5.0,
                       monitor_pole=None, clamp_radius: float = 10.0,
                       config_echo: dict | None = None) -> ContinuationResult:
    """Walk the exponent schedule up to the critical p = 4, warm starting.

    Raises BlowUpDetected or StagnationDetected (both carrying the trace) on
    the corresponding failure modes.
    """
    schedule = list(schedule)
    if not schedule or abs(schedule[-1] - 4.0) > 1e-12:
        raise ValueError("schedule must end at the critical exponent 4.0")
    if any(b <= a for a, b in zip(schedule, schedule[1:])) or schedule[0] <= 2.0:
        raise ValueError("schedule must be strictly increasing inside (2, 4]")

    if isinstance(init, Bubble):
        psi0, rep = bubble_to_sphere(init, ws.basis, require_capture=True)
    else:
        psi0 = init
    u = np.where(ws.basis.plus_mask, psi0.coeff, 0.0)
    if _h_norm(ws, u) == 0:
        raise ValueError("initialization has no E^+ part")

    if monitor_pole is None:
        qmin_idx = int(np.argmin(ws.q_nodes))
        monitor_pole = ws.grid.xyz[qmin_idx]
    spacing = ws.grid.mean_spacing()
    radii = np.array(sorted({round(k * spacing, 12) for k in (1, 2, 3, 4, 5, 6, 8)}
                            | {0.3, 0.5, 0.8, 1.2, 1.7, 2.3, math.pi}))
    q_max = float(ws.q_nodes.max())
    tau_sq = 4.0 * math.pi / q_max          # (tau_{2*})^m for m = 2, physical Q
    window = (0.25 * tau_sq, 0.5 * tau_sq)  # on L_p values, Eq. of the monitor

    trace = SolverTrace(schedule=schedule, config=config_echo or {})
    prev_capture_small = False
    prev_value = float("nan")

    for stage, p in enumerate(schedule):
        tol = tol_final if stage == len(schedule) - 1 else tol_stage
        st = nehari_project(u, p, ws, tol_inner=tol_inner)
        u, h = st.u, st.h
        warm_I = st.value
        step = 1.0
        res = float("inf")
        it = 0
        for it in range(max_outer):
            red = reduce_minus(u, p, ws, v0=h, tol_inner=tol_inner)
            h = red.h
            gplus = np.where(ws.basis.plus_mask, red.grad, 0.0)
            res = _h_norm(ws, gplus)
            defect = nehari_defect(u, p, ws, red)
            trace.add_row(kind="iter", stage=stage, p=p, iter=it, value=red.value,
                          residual=res, nehari_defect=defect)
            if res <= tol:
                break
            if res <= newton_switch:
                delta = _tangent_newton_step(u, p, ws, red, gplus, tol_inner)
            else:
                delta = None
            moved = False
            if delta is not None:
                st_try = nehari_project(u + delta, p, ws, tol_inner=tol_inner, h0=h)
                if st_try.value <= red.value + 1e-12 * abs(red.value):
                    u, h = st_try.u, st_try.h
                    moved = True
            if not moved:
                for _ in range(25):
                    st_try = nehari_project(u - step * gplus, p, ws,
                                            tol_inner=tol_inner, h0=h)
                    if st_try.value < red.value - 1e-4 * step * res * res:
                        u, h = st_try.u, st_try.h
                        step = min(step * 1.4, 1e3)
                        moved = True
                        break
                    step *= 0.4
                if not moved:
                    break
        red = reduce_minus(u, p, ws, v0=h, tol_inner=tol_inner)
        gplus = np.where(ws.basis.plus_mask, red.grad, 0.0)
        res = _h_norm(ws, gplus)
        values = ws.synthesize(red.psi)
        theta, cap_r, center, bary, min_psi, total = _stage_diagnostics(
            values, p, ws, radii, monitor_pole, clamp_radius, blowup_capture)
        trace.add_row(kind="stage", stage=stage, p=p, iter=it, value=red.value,
                      residual=res, nehari_defect=nehari_defect(u, p, ws, red),
                      capture_radius=cap_r, bary_x=float(bary[0]),
                      bary_y=float(bary[1]), min_psi=min_psi)
        trace.stages.append(StageSummary(
            p=p, iterations=it + 1, value=red.value, residual=res,
            nehari_defect=nehari_defect(u, p, ws, red), theta_radii=radii,
            theta=theta, theta_center=center, capture_radius=cap_r,
            barycenter=bary, min_psi=min_psi, warm_start_value=warm_I))

        capture_small = cap_r <= blowup_spacing_factor * spacing
        if capture_small and prev_capture_small:
            center = _local_mass_center(values, p, ws, center, 2.5 * spacing)
            nsq_max = float(ws.fiber_norm_sq(values).max())
            q_at = float(ws.Q.evaluate(center[None])[0])
            rho_hat = 1.0 / max(q_at * nsq_max, 1e-300)
            prof_dist = _bubble_profile_distance(red.psi, center, rho_hat, q_at, ws)
            raise BlowUpDetected(
                f"concentration captured {blowup_capture:.0%} of |psi|^p mass "
                f"within {cap_r:.3f} rad at stages p={schedule[stage-1]:.3g}, "
                f"p={p:.3g}", trace, point=center, stage_p=p, rho_hat=rho_hat,
                profile_distance=prof_dist)
        prev_capture_small = capture_small
        if res > tol:
            raise StagnationDetected(
                f"stage p={p} stalled at residual {res:.3e} (tol {tol:g})",
                trace, stage_p=p, residual=res)
        prev_value = red.value

    final = reduce_minus(u, p, ws, v0=h, tol_inner=tol_inner)
    psi = SpectralSpinor(ws.basis, final.psi)
    wv = final.value
    ok = window[0] < wv < window[1]
    return ContinuationResult(psi=psi, trace=trace, final_residual=res,
                              energy_window=window, window_value=wv, window_ok=ok)


def _tangent_newton_step(u, p, ws, red: ReductionResult, gplus, tol_inner):
    """One inexact Newton step for I_p on the tangent space of the Nehari set.

    Each reduced Hessian product solves the inner E^- correction h'(u) w by
    CG; curvature failures return None and the caller falls back to gradient.
    """
    basis = ws.basis
    pos = basis.plus_mask
    psi_values = ws.synthesize(red.psi)

    def reduced_hess(w):
        full = np.where(pos, w, 0.0)
        rhs_for_corr = hessian_apply(psi_values, p, ws, full)
        corr = _neg_cg(ws, psi_values, p,
                       np.where(basis.minus_mask, rhs_for_corr, 0.0),
                       tol=0.01 * tol_inner ** 0.5)
        tot = full + np.where(basis.minus_mask, corr, 0.0)
        out = hessian_apply(psi_values, p, ws, tot)
        return np.where(pos, out, 0.0)

    # Nehari normal direction: Riesz vector of H_p'(u)
    un = np.where(pos, u, 0.0)
    n_vec = np.where(pos, red.grad, 0.0) + reduced_hess(un)
    nn = _h_inner(ws, n_vec, n_vec)

    def project_t(w):
        if nn <= 0:
            return w
        return w - (_h_inner(ws, n_vec, w) / nn) * n_vec

    b = project_t(-gplus)
    x = np.zeros_like(u)
    r = b.copy()
    d = r.copy()
    rr = _h_inner(ws, r, r)
    tol_cg = max(1e-4 * math.sqrt(rr), 1e-14)
    for _ in range(40):
        if math.sqrt(rr) <= tol_cg:
            break
        Ad = project_t(reduced_hess(d))
        dAd = _h_inner(ws, d, Ad)
        if dAd <= 1e-14 * _h_inner(ws, d, d):
            return None if _h_inner(ws, x, x) == 0 else x
        alpha = rr / dAd
        x = x + alpha * d
        r = r - alpha * Ad
        rr_new = _h_inner(ws, r, r)
        d = r + (rr_new / rr) * d
        rr = rr_new
    return x


def _local_mass_center(values, p, ws, center, radius) -> np.ndarray:
    """Sub-grid concentration point: |psi|^p-weighted mean near the peak node."""
    nsq = ws.fiber_norm_sq(np.asarray(values))
    density = ws.grid.weights * nsq ** (p / 2.0)
    dots = ws.grid.xyz @ np.asarray(center, dtype=float)
    mask = dots >= math.cos(radius)
    if not np.any(mask):
        return np.asarray(center, dtype=float)
    mean = density[mask] @ ws.grid.xyz[mask]
    nrm = np.linalg.norm(mean)
    return mean / nrm if nrm > 0 else np.asarray(center, dtype=float)


def _bubble_profile_distance(psi_coeff, center, rho_hat, q_at, ws) -> float:
    """Relative L^2 distance between an iterate and the fitted bubble profile."""
    rho = min(max(rho_hat, 1e-3), 2.0)
    try:
        bub, _ = bubble_to_sphere(Bubble(center=center, rho=rho, q_center=q_at),
                                  ws.basis)
    except Exception:
        return float("nan")
    a = np.asarray(psi_coeff)
    b = bub.coeff
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return float("nan")
    # compare shapes modulo scale and global phase
    inner = np.vdot(b, a)
    phase = inner / abs(inner) if abs(inner) > 0 else 1.0
    return float(np.linalg.norm(a / na - phase * b / nb))
