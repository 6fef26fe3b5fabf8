"""Command-line interface.

Subcommands:
  evolve          one eps: run both flows against the reference, write the
                  per-snapshot error table
  sweep           full eps sweep: convergence report, CSVs and SVG plots
  basis-check     wave-packet basis validation suite
  residual-check  residual-identity validation suite

Exit codes: 0 success, 1 validation failure, 2 numerical failure, 3 I/O failure.
"""
from __future__ import annotations

import argparse
import sys

import numpy as np

from . import potentials
from .errors import NumericalError, ValidationError
from .grid import Grid
from .harness import ExperimentConfig, default_torsional_config, emit_report, epsilon_sweep, run_compare

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2
EXIT_IO = 3


def _load_config(path) -> ExperimentConfig:
    if path is None:
        return default_torsional_config()
    return ExperimentConfig.from_file(path)


def _cmd_evolve(args) -> int:
    import os

    cfg = _load_config(args.config)
    eps = args.eps if args.eps is not None else cfg.eps_list[0]
    refine = False if args.no_refine else None
    res = run_compare(cfg, eps, refine=refine)
    out_dir = args.out or cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"evolve_eps{eps:.10g}.csv")
    d = cfg.dimension
    with open(path, "w") as fh:
        header = ["t"]
        for i in range(d):
            header += [f"exp_x_{i}", f"exp_p_{i}", f"q_classical_{i}", f"p_classical_{i}",
                       f"q_corrected_{i}", f"p_corrected_{i}",
                       f"err_x_classical_{i}", f"err_p_classical_{i}",
                       f"err_x_corrected_{i}", f"err_p_corrected_{i}"]
        header += ["exp_H", "hgap_classical", "hgap_corrected",
                   "wferr_classical", "wferr_corrected"]
        fh.write(",".join(header) + "\n")
        for row, t in enumerate(res.times):
            vals = [t]
            for i in range(d):
                vals += [res.exp_x[row, i], res.exp_p[row, i],
                         res.q_classical[row, i], res.p_classical[row, i],
                         res.q_corrected[row, i], res.p_corrected[row, i],
                         res.err_x_classical[row, i], res.err_p_classical[row, i],
                         res.err_x_corrected[row, i], res.err_p_corrected[row, i]]
            vals += [res.exp_H[row], res.hgap_classical[row], res.hgap_corrected[row],
                     res.wferr_classical[row], res.wferr_corrected[row]]
            fh.write(",".join(f"{v:.17g}" for v in vals) + "\n")
    print(f"wrote {path}")
    print(f"max err_x: classical {res.err_x_classical.max():.3e}, "
          f"corrected {res.err_x_corrected.max():.3e}")
    print(f"max err_p: classical {res.err_p_classical.max():.3e}, "
          f"corrected {res.err_p_corrected.max():.3e}")
    print(f"reference achieved_tol: {res.achieved_tol:.3e}, "
          f"packet dt: {res.packet_dt:.3e}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = _load_config(args.config)
    refine = False if args.no_refine else None
    report = epsilon_sweep(cfg, jobs=args.jobs, refine=refine)
    out_dir = args.out or cfg.output_dir
    files = emit_report(report, out_dir)
    for f in files:
        print(f"wrote {f}")
    for key in sorted(report.slopes):
        fit = report.slopes[key]
        if fit is None:
            print(f"{key}: no usable signal")
        else:
            flag = "" if fit.reliable else "  [unreliable fit]"
            print(f"{key}: slope {fit.slope:+.3f} (R^2 {fit.r_squared:.4f}){flag}")
    return EXIT_OK


def _cmd_basis_check(args) -> int:
    from .basis import build_basis, apply_lowering, ladder_recurrence_eval
    from .packet import standard_packet
    from .wavefunction import l2_norm

    failures = 0

    def report(name, value, tol):
        nonlocal failures
        ok = value < tol
        failures += 0 if ok else 1
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {value:.3e} (tol {tol:.0e})")

    for d in (1, 2):
        eps = 0.1
        packet = standard_packet([0.4] * d, [0.3] * d, eps)
        grid = Grid([0.4] * d, [11.0 * np.sqrt(eps)] * d, 256 if d == 1 else 128)
        k = 4
        spectral = build_basis(packet, k, grid)
        algebraic = ladder_recurrence_eval(packet, k, grid)
        report(f"d={d} gram deviation", algebraic.gram_deviation(), 1e-7)
        low = apply_lowering(packet, algebraic[(0,) * d])
        report(f"d={d} lowering annihilates ground state",
               max(l2_norm(f) for f in low), 1e-8)
        agreement = max(
            l2_norm(spectral[n].with_values(spectral[n].values - algebraic[n].values))
            for n in algebraic.indices())
        report(f"d={d} spectral vs recurrence", agreement, 1e-7)
    return EXIT_OK if failures == 0 else EXIT_VALIDATION


def _write_residual_diagnostics(out_dir: str) -> str:
    """Per-eps residual norms and first-excited projections (see README)."""
    import os

    from .basis import ladder_recurrence_eval
    from .packet import standard_packet
    from .residuals import classical_first_excited_projection, zeta
    from .wavefunction import apply_momentum, inner_product, l2_norm

    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "residual_diagnostics.csv")
    pot = potentials.torsional(1)
    with open(path, "w") as fh:
        fh.write("eps,zeta0_norm,xi_zeta0_norm,eta_zeta0_norm,"
                 "proj_e1_re,proj_e1_im,proj_limit_re,proj_limit_im\n")
        for k in range(3, 10):
            eps = 2.0 ** -k
            st = standard_packet([0.7], [0.2], eps)
            grid = Grid([0.7], [10.0 * np.sqrt(eps)], 256)
            basis = ladder_recurrence_eval(st, 1, grid)
            z = zeta(st, pot, (0,), grid, basis=basis).base
            x = grid.meshes()[0]
            xi_z = l2_norm(z.with_values((x - st.q[0]) / np.sqrt(eps) * z.values))
            pz = apply_momentum(z, 0, warn_tail=False)
            eta_z = l2_norm(z.with_values((pz.values - st.p[0] * z.values) / np.sqrt(eps)))
            proj, limit = classical_first_excited_projection(st, pot, grid, basis=basis)
            row = [eps, l2_norm(z), xi_z, eta_z,
                   proj[0].real, proj[0].imag, limit[0].real, limit[0].imag]
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
    return path


def _cmd_residual_check(args) -> int:
    from .packet import standard_packet
    from .residuals import (eta_zeta_identity_residual, orthogonality_projections,
                            reconstruct_from_third_states, schrodinger_residual)

    failures = 0

    def report(name, value, tol):
        nonlocal failures
        ok = value < tol
        failures += 0 if ok else 1
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {value:.3e} (tol {tol:.0e})")

    eps = 0.05
    packet = standard_packet([0.7], [0.2], eps)
    pot = potentials.torsional(1)
    grid = Grid([0.7], [7.0 * np.sqrt(eps)], 256)
    _, rel = schrodinger_residual(packet, pot, grid)
    report("torsional d=1 ground-state evolution residual", rel, 1e-6)
    projections = orthogonality_projections(packet, pot, grid)
    report("torsional d=1 low-order projections",
           max(abs(v) for v in projections.values()), 1e-7)
    report("torsional d=1 third-state reconstruction",
           reconstruct_from_third_states(packet, pot, grid), 1e-6)
    report("torsional d=1 momentum-shifted identity",
           eta_zeta_identity_residual(packet, pot, grid), 1e-7)

    packet2 = standard_packet([0.3, -0.2], [0.1, 0.2], eps)
    pot2 = potentials.gaussian_well(2)
    grid2 = Grid([0.3, -0.2], [7.0 * np.sqrt(eps)] * 2, 128)
    report("gaussian_well d=2 momentum-shifted identity",
           eta_zeta_identity_residual(packet2, pot2, grid2), 1e-7)
    report("gaussian_well d=2 third-state reconstruction",
           reconstruct_from_third_states(packet2, pot2, grid2), 1e-6)
    if args.out:
        print(f"wrote {_write_residual_diagnostics(args.out)}")
    return EXIT_OK if failures == 0 else EXIT_VALIDATION


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gwpdyn",
        description="Gaussian wave-packet dynamics laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="experiment config JSON (default: built-in torsional d=1)")
        p.add_argument("--out", help="output directory (default: config output_dir)")
        p.add_argument("--jobs", type=int, default=1, help="parallel eps jobs")
        p.add_argument("--no-refine", action="store_true",
                       help="trust the given solver config, skip self-refinement")

    p_evolve = sub.add_parser("evolve", help="single-eps comparison run")
    add_common(p_evolve)
    p_evolve.add_argument("--eps", type=float, help="eps value (default: largest in config)")
    p_evolve.set_defaults(func=_cmd_evolve)

    p_sweep = sub.add_parser("sweep", help="eps sweep with convergence report")
    add_common(p_sweep)
    p_sweep.set_defaults(func=_cmd_sweep)

    p_basis = sub.add_parser("basis-check", help="wave-packet basis validation")
    add_common(p_basis)
    p_basis.set_defaults(func=_cmd_basis_check)

    p_resid = sub.add_parser("residual-check", help="residual-identity validation")
    add_common(p_resid)
    p_resid.set_defaults(func=_cmd_residual_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
