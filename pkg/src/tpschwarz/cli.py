"""Command-line front end: ``tpschwarz {modes,theory,solve,experiment}``.

Exit status 0 on success, 1 when a numerical failure is reported (no
convergence, QR breakdown) and 2 for usage or configuration errors.
Data goes to files or stdout, diagnostics to stderr.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from .eigen import EigenvalueBreakdown
from .experiments import SCENARIOS, InvariantViolation, ScenarioConfig, fmt, run
from .model import ConfigError, SpatialGrid, l2q_norm, load_problem, write_field_csv
from .modes import ParameterOverflow, coefficients, dump_csv, eigenbasis
from .pint import SchwarzSolver, monolithic_solve
from .theory import DEFAULT_THETA_SAMPLES, spectrum_report, symbol_curve

EXPERIMENT_SCHEMA = "tpschwarz/experiment-v1"


class UsageError(Exception):
    pass


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _positive_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"must be positive and finite, got {text}")
    return v


def _int_list(text):
    try:
        vals = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated integer list: {text!r}") from None
    if not vals or min(vals) < 2:
        raise argparse.ArgumentTypeError("N-list entries must be integers >= 2")
    return vals


def _workers(arg, N):
    if arg is not None:
        return max(1, min(arg, N))
    env = os.environ.get("TPS_WORKERS")
    if env:
        try:
            return max(1, min(int(env), N))
        except ValueError:
            raise UsageError(f"TPS_WORKERS must be an integer, got {env!r}") from None
    return max(1, min(os.cpu_count() or 1, N))


def _open_out(path):
    if path is None or path == "-":
        return sys.stdout, False
    return open(path, "w", newline=""), True


def _mode_coeffs(args):
    if not 1 <= args.m <= args.M:
        raise UsageError(f"--m must lie in 1..{args.M}")
    lam = eigenbasis(SpatialGrid(args.M)).lambdas[args.m - 1]
    return coefficients(lam, args.nu, args.dt)


# -- subcommands ----------------------------------------------------------

def cmd_modes_dump(args):
    fh, close = _open_out(args.out)
    try:
        dump_csv(eigenbasis(SpatialGrid(args.M)), args.nu, args.dt, out=fh)
    finally:
        if close:
            fh.close()
    return 0


def cmd_theory_report(args):
    c = _mode_coeffs(args)
    rows = []
    for N in args.N_list:
        rep = spectrum_report(c, N, args.theta_samples)
        rows.append([N, rep.rho, rep.rho_tilde, rep.inf_norm, rep.max_dist,
                     rep.frac_outside(args.eps), math.sqrt(rep.rho_tilde)])
    _emit(args.out, ["N", "rho", "rho_tilde", "inf_norm", "max_dist_sigmaT",
                     "frac_outside_eps", "sqrt_rho_tilde"], rows)
    return 0


def cmd_theory_spectrum(args):
    c = _mode_coeffs(args)
    rep = spectrum_report(c, args.N, args.theta_samples)
    lam = rep.eigenvalues
    order = np.lexsort((lam.imag, lam.real))
    _emit(args.out, ["re", "im", "in_region_D", "dist_sigmaT"],
          [[lam[i].real, lam[i].imag, bool(rep.in_region_D[i]), rep.dist_to_sigmaT[i]]
           for i in order])
    return 0


def cmd_theory_symbol(args):
    curve = symbol_curve(_mode_coeffs(args), args.theta_samples)
    _emit(args.out, ["theta", "re_plus", "im_plus", "re_minus", "im_minus"],
          [[t, p.real, p.imag, m.real, m.imag]
           for t, p, m in zip(curve.thetas, curve.mu_plus, curve.mu_minus)])
    return 0


def _emit(path, header, rows):
    fh, close = _open_out(path)
    try:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(fmt(v) for v in r) + "\n")
    finally:
        if close:
            fh.close()


def cmd_solve(args):
    problem, grid, decomp, _ = load_problem(args.config)
    workers = _workers(args.workers, decomp.N)
    reference = monolithic_solve(problem, grid, decomp)
    solver = SchwarzSolver(problem, grid, decomp, workers=workers)
    hist = solver.solve(args.tol, args.max_iters, reference=reference)
    _emit(args.out, ["iter", "interface_incr", "err_y", "err_p"],
          [[r["iter"], r["interface_incr"], r["err_y"], r["err_p"]] for r in hist.records])
    if args.dump_dir:
        out = Path(args.dump_dir)
        out.mkdir(parents=True, exist_ok=True)
        y, p = solver.fields(hist.state)
        write_field_csv(solver.target, grid, decomp, out / "target.csv")
        write_field_csv(y, grid, decomp, out / "state.csv")
        write_field_csv(p, grid, decomp, out / "adjoint.csv")
    if not hist.converged:
        print(f"tpschwarz: no convergence to tol={args.tol:g} within {args.max_iters} sweeps "
              f"(last increment {hist.records[-1]['interface_incr']:.3e})", file=sys.stderr)
        return 1
    if args.verbose:
        err = l2q_norm(solver.fields(hist.state)[0].values - reference[0].values, grid, decomp)
        print(f"tpschwarz: converged in {hist.iterations} sweeps, L2(Q) state error {err:.3e}",
              file=sys.stderr)
    return 0


def load_experiment_config(path, scenario):
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"{path}: config file not found") from None
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    if raw.get("schema") != EXPERIMENT_SCHEMA:
        raise ConfigError(f"{path}: schema must be {EXPERIMENT_SCHEMA!r}")
    unknown = set(raw) - {"schema", "params", "workers", "seed"}
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    try:
        return ScenarioConfig(scenario, dict(raw.get("params", {})),
                              seed=int(raw.get("seed", 0)), workers=int(raw.get("workers", 1)))
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def cmd_experiment(args):
    if args.config:
        cfg = load_experiment_config(args.config, args.id)
    else:
        cfg = ScenarioConfig(args.id)
    if args.workers is not None:
        cfg.workers = args.workers
    cfg.out_dir = args.out
    run(cfg)
    print(f"tpschwarz: wrote {args.id} results to {args.out}", file=sys.stderr)
    return 0


# -- parser ---------------------------------------------------------------

def _mode_args(p):
    p.add_argument("--M", type=_positive_int, required=True, help="interior spatial nodes")
    p.add_argument("--m", type=_positive_int, default=1, help="mode index (1-based)")
    p.add_argument("--nu", type=_positive_float, required=True)
    p.add_argument("--dt", type=_positive_float, required=True, help="subdomain length")
    p.add_argument("--theta-samples", type=_positive_int, default=DEFAULT_THETA_SAMPLES)
    p.add_argument("--out", default=None, help="output CSV (default stdout)")


def build_parser():
    parser = argparse.ArgumentParser(prog="tpschwarz", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    modes = sub.add_parser("modes").add_subparsers(dest="action", required=True)
    p = modes.add_parser("dump", help="per-mode lambda, sigma, C1, C2")
    p.add_argument("--M", type=_positive_int, required=True)
    p.add_argument("--nu", type=_positive_float, required=True)
    p.add_argument("--dt", type=_positive_float, required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_modes_dump)

    theory = sub.add_parser("theory").add_subparsers(dest="action", required=True)
    p = theory.add_parser("report", help="bounds and clustering statistics over N")
    _mode_args(p)
    p.add_argument("--N-list", type=_int_list, required=True)
    p.add_argument("--eps", type=_positive_float, default=1e-2)
    p.set_defaults(func=cmd_theory_report)
    p = theory.add_parser("spectrum", help="finite-section eigenvalues for one N")
    _mode_args(p)
    p.add_argument("--N", type=_positive_int, required=True)
    p.set_defaults(func=cmd_theory_spectrum)
    p = theory.add_parser("symbol", help="symbol eigenvalue curves")
    _mode_args(p)
    p.set_defaults(func=cmd_theory_symbol)

    p = sub.add_parser("solve", help="run the Schwarz iteration on a problem file")
    p.add_argument("--config", required=True)
    p.add_argument("--tol", type=_positive_float, default=1e-8)
    p.add_argument("--max-iters", type=_positive_int, default=50)
    p.add_argument("--workers", type=_positive_int, default=None)
    p.add_argument("--out", default=None, help="history CSV (default stdout)")
    p.add_argument("--dump-dir", default=None, help="write target/state/adjoint field CSVs here")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("experiment", help="regenerate a study's data")
    p.add_argument("id", choices=SCENARIOS)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=_positive_int, default=None)
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"tpschwarz: error: {exc}", file=sys.stderr)
        return 2
    except (EigenvalueBreakdown, ParameterOverflow, InvariantViolation,
            ArithmeticError) as exc:
        print(f"tpschwarz: numerical failure: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"tpschwarz: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
