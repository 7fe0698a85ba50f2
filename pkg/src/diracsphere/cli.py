"""Command-line driver: spectrum tables, bubble reports, the continuation
solve, diagnostics on saved states, and immersion export.

Run configuration is a single JSON document (schema_version 1); every run
echoes the full configuration into its JSON report and the trace header, and
fixed seeds give bit-identical trace and state files.

Exit codes: 0 success, 2 configuration error, 3 blow-up detected,
4 stagnation, 5 postcondition failure (zero-free or energy-window check).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .conformal import Bubble, bubble_energy_flat, bubble_to_sphere
from .energy import (CurvatureField, PolynomialCurvature,
                     SphericalHarmonicCurvature, Workspace, check_q_hypothesis,
                     constant_curvature, eval_L)
from .geometry import (edge_length_relative_error, export_obj, export_ply,
                       gauss_bonnet_defect, nodal_analysis,
                       reconstruct_immersion, scal_identity_check, willmore)
from .grid import QuadratureGrid
from .reduction import (BlowUpDetected, StagnationDetected, solve_continuation)
from .spectral import (SphereBasis, dirac_eigenvalue, dirac_multiplicity,
                       load_spinor, save_spinor)

log = logging.getLogger("diracsphere")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BLOWUP = 3
EXIT_STAGNATION = 4
EXIT_POSTCONDITION = 5

DEFAULT_SCHEDULE = [3.0, 3.4, 3.7, 3.9, 3.97, 4.0]


class ConfigError(ValueError):
    pass


def curvature_from_spec(spec) -> CurvatureField:
    """Build a curvature field from its JSON specification."""
    if not isinstance(spec, dict) or "family" not in spec:
        raise ConfigError("Q spec must be an object with a 'family' key")
    fam = spec["family"]
    if fam == "constant":
        return constant_curvature(float(spec.get("value", 1.0)))
    if fam == "polynomial":
        terms = spec.get("terms")
        if not terms:
            raise ConfigError("polynomial Q needs a nonempty 'terms' list")
        return PolynomialCurvature([tuple(t) for t in terms])
    if fam == "sph_harm":
        coeffs = spec.get("coeffs")
        if not coeffs:
            raise ConfigError("sph_harm Q needs a nonempty 'coeffs' list")
        return SphericalHarmonicCurvature([tuple(c) for c in coeffs])
    raise ConfigError(f"unknown Q family '{fam}'")


def load_config(path) -> dict:
    with open(path) as fh:
        cfg = json.load(fh)
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    if cfg.get("schema_version") != 1:
        raise ConfigError("config schema_version must be 1")
    J = cfg.get("J")
    if not isinstance(J, int) or J < 4:
        raise ConfigError("J must be an integer >= 4")
    degree = cfg.get("grid_degree", 3 * J)
    if degree < 3 * J:
        raise ConfigError(f"grid_degree {degree} below the de-aliasing bound 3J={3*J}")
    sched = cfg.get("schedule", DEFAULT_SCHEDULE)
    if len(sched) == 0 or abs(sched[-1] - 4.0) > 1e-12:
        raise ConfigError("schedule must end at 4.0")
    if sched[0] <= 2.0 or any(b <= a for a, b in zip(sched, sched[1:])):
        raise ConfigError("schedule must be strictly increasing inside (2, 4]")
    tols = cfg.get("tolerances", {})
    for key in ("inner", "stage", "final", "blowup_capture", "blowup_spacing_factor"):
        if key in tols and not tols[key] > 0:
            raise ConfigError(f"tolerance '{key}' must be positive")
    curvature_from_spec(cfg.get("Q", {"family": "constant"}))
    init = cfg.get("init", {"type": "bubble", "rho": 0.3, "center": "argmax"})
    if init.get("type") not in ("bubble", "state"):
        raise ConfigError("init.type must be 'bubble' or 'state'")
    if init.get("type") == "bubble" and not init.get("rho", 0.3) > 0:
        raise ConfigError("init.rho must be positive")


def build_workspace(cfg: dict) -> Workspace:
    J = cfg["J"]
    degree = cfg.get("grid_degree", 3 * J)
    basis = SphereBasis(J)
    grid = QuadratureGrid(degree=degree)
    Q = curvature_from_spec(cfg.get("Q", {"family": "constant"}))
    return Workspace(basis, grid, Q)


def _json_ready(obj):
    if isinstance(obj, dict):
        return {k: _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _json_ready(obj.tolist())
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and (math.isnan(obj) or math.isinf(obj)):
        return repr(obj)
    return obj


def hypothesis_report_dict(rep) -> dict:
    return _json_ready({
        "q_max": rep.q_max,
        "q_min": rep.q_min,
        "half_threshold": rep.half_threshold,
        "admissible_d": rep.admissible_d,
        "constant": rep.constant,
        "contractibility": rep.contractibility,
        "search_converged": rep.search_converged,
        "notes": rep.notes,
        "max_points": [{"position": p.position, "value": p.value,
                        "kind": p.kind, "hess_eigs": p.hess_eigs}
                       for p in rep.max_points],
        "critical_points": [{"position": p.position, "value": p.value,
                             "kind": p.kind, "hess_eigs": p.hess_eigs}
                            for p in rep.critical_points[:64]],
    })


# -- subcommands -----------------------------------------------------------------


def cmd_spectrum(args) -> int:
    m, J = args.m, args.j_max
    print(f"# Dirac spectrum on S^{m}, levels j <= {J}")
    print("# lambda  multiplicity")
    total = 0
    for j in range(J + 1):
        lam = dirac_eigenvalue(m, j, +1)
        mult = dirac_multiplicity(m, j)
        total += 2 * mult
        print(f"  +-{lam:g}  {mult}")
    print(f"# total basis size through level {J}: {total}")
    if m == 2 and not args.skip_validation:
        basis = SphereBasis(min(J, 8))
        grid = QuadratureGrid(degree=3 * basis.J + 3)
        S = basis.synthesis_matrix(grid)
        wf = (grid.weights / grid.f_pref)[:, None, None]
        G = np.tensordot(np.conj(S) * wf, S, axes=([0, 1], [0, 1]))
        err = float(np.abs(G - np.eye(basis.n_basis)).max())
        print(f"# Gram residual at J={basis.J}: {err:.3e}")
        if err > 1e-10:
            log.error("Gram validation failed")
            return 1
    return EXIT_OK


def cmd_bubble(args) -> int:
    center = np.array(args.center, dtype=float)
    bub = Bubble(center=center, rho=args.rho, q_center=args.q)
    quad, ana = bubble_energy_flat(2, args.rho, args.q)
    print(f"flat critical energy: quadrature {quad!r}, analytic {ana!r} "
          f"(4 pi / Q(y)^2 = {4 * math.pi / args.q ** 2!r})")
    basis = SphereBasis(args.J)
    psi, rep = bubble_to_sphere(bub, basis)
    print(f"transport at J={args.J}: captured L2 mass {rep.l2_mass_captured!r} "
          f"of {rep.l2_mass_exact!r} (loss {rep.truncation_loss:.3e})")
    ws = Workspace(basis, QuadratureGrid(degree=3 * args.J), constant_curvature(args.q))
    er = eval_L(psi.coeff, 4.0, ws)
    print(f"sphere energies: int Q|psi|^4 = {er.nonlinear!r}, L(psi) = {er.value!r}")
    if rep.truncation_loss > 0.01:
        log.warning("truncation loss %.2f%% exceeds 1%%", 100 * rep.truncation_loss)
    return EXIT_OK


def _solve_pipeline(cfg: dict, outdir: Path) -> int:
    t_start = time.time()
    ws = build_workspace(cfg)
    outdir.mkdir(parents=True, exist_ok=True)
    report = {"config": cfg, "version": __version__}

    hyp = check_q_hypothesis(ws.Q)
    report["hypothesis"] = hypothesis_report_dict(hyp)
    analytic_ok = hyp.constant or hyp.admissible_d is not None
    if not analytic_ok:
        msg = "curvature field fails the analytic hypothesis checks"
        if cfg.get("allow_hypothesis_failure", False):
            log.warning("%s (continuing on explicit override)", msg)
        else:
            log.error("%s; set allow_hypothesis_failure to proceed", msg)
            report["status"] = "config-error"
            _write_report(outdir, report)
            return EXIT_CONFIG

    init_cfg = cfg.get("init", {"type": "bubble", "rho": 0.3, "center": "argmax"})
    if init_cfg["type"] == "state":
        init = load_spinor(init_cfg["path"], ws.basis)
    else:
        center_spec = init_cfg.get("center", "argmax")
        if center_spec == "argmax":
            if hyp.max_points:
                center = hyp.max_points[0].position
            else:
                center = ws.grid.xyz[int(np.argmax(ws.q_nodes))]
        else:
            center = np.asarray(center_spec, dtype=float)
        qy = float(ws.Q.evaluate(center[None])[0])
        init = Bubble(center=center, rho=float(init_cfg.get("rho", 0.3)), q_center=qy)
        report["init"] = _json_ready({"type": "bubble", "center": center,
                                      "rho": init.rho, "q_center": qy})

    tols = cfg.get("tolerances", {})
    status = "ok"
    exit_code = EXIT_OK
    try:
        result = solve_continuation(
            ws, cfg.get("schedule", DEFAULT_SCHEDULE), init,
            tol_final=tols.get("final", 1e-7),
            tol_stage=tols.get("stage", 1e-6),
            tol_inner=tols.get("inner", 1e-10),
            max_outer=cfg.get("max_outer", 200),
            blowup_capture=tols.get("blowup_capture", 0.9),
            blowup_spacing_factor=tols.get("blowup_spacing_factor", 3.0),
            clamp_radius=cfg.get("clamp_radius", 10.0),
            config_echo=cfg)
        trace = result.trace
        psi = result.psi
    except BlowUpDetected as exc:
        log.error("blow-up detected: %s", exc)
        report["status"] = "blow-up"
        report["blowup"] = _json_ready({
            "point": exc.point, "stage_p": exc.stage_p, "rho_hat": exc.rho_hat,
            "profile_distance": exc.profile_distance,
            "nearest_critical_point": _nearest_critical(hyp, exc.point)})
        exc.trace.to_csv(outdir / "trace.csv")
        _write_report(outdir, report)
        return EXIT_BLOWUP
    except StagnationDetected as exc:
        log.error("stagnation: %s", exc)
        report["status"] = "stagnation"
        report["stagnation"] = {"stage_p": exc.stage_p, "residual": exc.residual}
        exc.trace.to_csv(outdir / "trace.csv")
        _write_report(outdir, report)
        return EXIT_STAGNATION

    trace.to_csv(outdir / "trace.csv")
    save_spinor(outdir / "state.txt", psi)

    nodal = nodal_analysis(psi, ws)
    W, embedded = willmore(psi, ws)
    scal = scal_identity_check(psi, ws, require_solution=False)
    values = ws.synthesize(psi.coeff)
    nsq = ws.fiber_norm_sq(values)
    e4 = float(ws.grid.integrate(ws.q_nodes * nsq**2))
    q_max = hyp.q_max
    window = (4.0 * math.pi / q_max, 8.0 * math.pi / q_max)
    margin = min(e4 - window[0], window[1] - e4)
    window_ok = margin > -1e-9 * max(1.0, e4)

    report.update(_json_ready({
        "status": status,
        "final_residual": result.final_residual,
        "stages": [{"p": s.p, "iterations": s.iterations, "value": s.value,
                    "residual": s.residual, "min_psi": s.min_psi,
                    "capture_radius": s.capture_radius,
                    "barycenter": s.barycenter,
                    "warm_start_value": s.warm_start_value}
                   for s in trace.stages],
        "energy": {"int_Q_psi4": e4, "window": window, "window_margin": margin,
                   "window_ok": window_ok, "L_value": result.window_value},
        "nodal": {"verdict": nodal.verdict, "min_psi": nodal.min_psi_grid,
                  "bound": nodal.zero_count_bound,
                  "window_chain": nodal.window_chain, "note": nodal.note},
        "willmore": {"value": W, "embedded": embedded},
        "scal_identity": {"l1_residual": scal.l1_residual,
                          "pde_residual": scal.pde_residual},
        "runtime_seconds": time.time() - t_start,
    }))
    _write_report(outdir, report)
    if nodal.verdict != "zero-free" or not window_ok:
        log.error("postcondition failed: nodal=%s window_ok=%s", nodal.verdict,
                  window_ok)
        return EXIT_POSTCONDITION
    log.info("solve finished: residual %.2e, int Q|psi|^4 = %.6f, W = %.6f",
             result.final_residual, e4, W)
    return EXIT_OK


def _nearest_critical(hyp, point):
    best = None
    for p in hyp.critical_points:
        d = float(np.arccos(np.clip(np.dot(p.position, point), -1, 1)))
        if best is None or d < best["distance"]:
            best = {"distance": d, "value": p.value, "kind": p.kind,
                    "position": p.position}
    return best


def _write_report(outdir: Path, report: dict) -> None:
    with open(outdir / "report.json", "w") as fh:
        json.dump(_json_ready(report), fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_solve(args) -> int:
    try:
        cfg = load_config(args.config)
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    outdir = Path(args.output or cfg.get("output_dir", "run-out"))
    return _solve_pipeline(cfg, outdir)


def cmd_diagnose(args) -> int:
    try:
        cfg = load_config(args.config)
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    ws = build_workspace(cfg)
    psi = load_spinor(args.state, ws.basis)
    nodal = nodal_analysis(psi, ws)
    W, embedded = willmore(psi, ws)
    scal = scal_identity_check(psi, ws, require_solution=False)
    values = ws.synthesize(psi.coeff)
    nsq = ws.fiber_norm_sq(values)
    e4 = float(ws.grid.integrate(ws.q_nodes * nsq**2))
    out = _json_ready({
        "config": cfg,
        "nodal": {"verdict": nodal.verdict, "min_psi": nodal.min_psi_grid,
                  "bound": nodal.zero_count_bound, "note": nodal.note},
        "willmore": {"value": W, "embedded": embedded},
        "energy": {"int_Q_psi4": e4},
        "scal_identity": {"l1_residual": scal.l1_residual,
                          "pde_residual": scal.pde_residual},
    })
    json.dump(out, sys.stdout, indent=2, sort_keys=True)
    print()
    return EXIT_OK


def cmd_immerse(args) -> int:
    try:
        cfg = load_config(args.config)
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    ws = build_workspace(cfg)
    psi = load_spinor(args.state, ws.basis)
    nodal = nodal_analysis(psi, ws)
    if nodal.verdict != "zero-free":
        log.error("refusing to immerse: nodal verdict '%s' (min |psi| %.3e, "
                  "bound %.3f); %s", nodal.verdict, nodal.min_psi_grid,
                  nodal.zero_count_bound, nodal.note)
        return EXIT_POSTCONDITION
    mesh = reconstruct_immersion(psi, ws, subdivisions=args.subdivisions,
                                 nodal=nodal)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fmt = args.format or out.suffix.lstrip(".").lower() or "ply"
    if fmt == "obj":
        export_obj(out, mesh)
    elif fmt == "ply":
        export_ply(out, mesh)
    else:
        log.error("unknown mesh format '%s'", fmt)
        return EXIT_CONFIG
    rel = np.abs(mesh.mean_curvature - mesh.target_q) / mesh.target_q
    rel_l2 = float(np.sqrt(np.mean(((mesh.mean_curvature - mesh.target_q)
                                    / mesh.target_q) ** 2)))
    summary = _json_ready({
        "vertices": mesh.vertices.shape[0],
        "euler_characteristic": mesh.euler_characteristic(),
        "alignment_residual": mesh.alignment_residual,
        "closure_defect": mesh.closure_defect,
        "closedness_precheck": mesh.closedness_precheck,
        "gauss_bonnet_defect": gauss_bonnet_defect(mesh.vertices, mesh.faces),
        "edge_length_rel_error": edge_length_relative_error(mesh, psi),
        "mean_curvature_rel_l2": rel_l2,
        "mean_curvature_rel_max": float(rel.max()),
    })
    with open(out.with_suffix(out.suffix + ".json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    log.info("wrote %s (%d vertices, H vs Q rel L2 %.3f%%)", out,
             mesh.vertices.shape[0], 100 * rel_l2)
    return EXIT_OK


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    ap = argparse.ArgumentParser(
        prog="diracsphere",
        description="Nonlinear Dirac solver on S^2 with prescribed-mean-"
                    "curvature immersion output")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("spectrum", help="print the Dirac spectrum table")
    sp.add_argument("--m", type=int, default=2)
    sp.add_argument("--j-max", type=int, default=5)
    sp.add_argument("--skip-validation", action="store_true")
    sp.set_defaults(func=cmd_spectrum)

    bp = sub.add_parser("bubble", help="evaluate and transport a bubble")
    bp.add_argument("--rho", type=float, default=0.5)
    bp.add_argument("--center", type=float, nargs=3, default=[0.0, 0.0, 1.0])
    bp.add_argument("--q", type=float, default=1.0, help="Q value at the center")
    bp.add_argument("--J", type=int, default=16)
    bp.set_defaults(func=cmd_bubble)

    sv = sub.add_parser("solve", help="run the continuation solve")
    sv.add_argument("config", help="JSON run configuration")
    sv.add_argument("--output", help="output directory (overrides config)")
    sv.set_defaults(func=cmd_solve)

    dg = sub.add_parser("diagnose", help="re-run diagnostics on a state file")
    dg.add_argument("state")
    dg.add_argument("--config", required=True)
    dg.set_defaults(func=cmd_diagnose)

    im = sub.add_parser("immerse", help="reconstruct and export the immersion")
    im.add_argument("state")
    im.add_argument("--config", required=True)
    im.add_argument("--out", required=True)
    im.add_argument("--subdivisions", type=int, default=4)
    im.add_argument("--format", choices=["obj", "ply"])
    im.set_defaults(func=cmd_immerse)

    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
