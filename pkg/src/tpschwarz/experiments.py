"""Scenario runners that regenerate the data for each study.

Each runner is a pure function of its :class:`ScenarioConfig`, returns a dict of
named tables (lists of row dicts) and, when ``out_dir`` is set, writes one CSV
per table plus ``manifest.json``. Every runner cross-checks one theory/solver
invariant and raises :class:`InvariantViolation` when it fails.
"""
from __future__ import annotations

import csv
import json
import math
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .model import (ProblemSpec, SpatialGrid, TimeDecomposition, heatcool_target,
                    l2q_norm, manufactured_solution, sample, write_field_csv,
                    SpaceTimeField, ConfigError)
from .modes import coefficients, eigenbasis
from .pint import SchwarzSolver, monolithic_solve
from .theory import (assemble, dense_infinity_norm, infinity_norm_closed_form,
                     spectrum_report, spectral_radius)

SCENARIOS = ("bounds", "clustering", "cn-order", "weak-scaling", "heatcool")

DEFAULTS = {
    "bounds": {
        "M": 128, "nu": 1e-2, "dt": None, "N_list": [2, 4, 8, 16, 32, 64, 128, 256],
        "nu_list": [1e-1, 1e-2, 1e-3, 1e-4],
        "dt_list": [1 / 16, 1 / 32, 1 / 64, 1 / 128, 1 / 256],
    },
    "clustering": {
        "M": 128, "dt": None, "nu_list": [1e-2, 1e-4], "m_list": None,
        "N_list": [16, 32, 64, 128, 256, 512], "eps": 1e-2, "theta_samples": 2001,
    },
    "cn-order": {
        "nu": 0.1, "T": 1.0, "N": 2,
        "h_list": [2.0 ** -k for k in range(3, 9)],
    },
    "weak-scaling": {
        "h": 1 / 32, "nu": 0.1, "dt_list": [1.0, 1 / 4, 1 / 8, 1 / 16],
        "N_list": [2, 4, 8, 16], "tol": 1e-8, "max_iters": 10, "rate_window": 4,
    },
    "heatcool": {
        "h": 1 / 128, "nu": 0.1, "dt": 0.5, "L": 1.0,
        "N_list": [2 ** k for k in range(1, 10)], "tol": 1e-8, "max_iters": 10,
        "dump_N": 4, "rate_window": 4,
    },
}

# reference unknown counts reported for N = 2**9, h = 1/128, dt = 1/2
REFERENCE_UNKNOWNS = {"global": 8_323_326, "per_period": 16_510}


class InvariantViolation(AssertionError):
    """A runner's theory/solver cross-check failed."""


@dataclass
class ScenarioConfig:
    scenario: str
    params: dict = field(default_factory=dict)
    out_dir: str | None = None
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        unknown = set(self.params) - set(DEFAULTS[self.scenario])
        if unknown:
            raise ConfigError(f"unknown {self.scenario} parameters: {sorted(unknown)}")
        merged = dict(DEFAULTS[self.scenario])
        merged.update(self.params)
        for key, value in merged.items():
            if key.endswith("_list") and value is not None and len(value) == 0:
                raise ConfigError(f"{key} must be nonempty")
        self.params = merged


def _pmap(fn, items, workers):
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def write_csv(path, rows, columns=None):
    columns = columns or (list(rows[0]) if rows else [])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt(r[c]) for c in columns])


def decay_rate(errors, window: int) -> float:
    """Geometric mean of the last ``window`` successive error ratios.

    The iteration error often alternates with period two, so an even window is
    the meaningful choice.
    """
    e = np.asarray(errors, dtype=float)
    e = e[e > 0]
    if e.size < 2:
        return float("nan")
    w = min(window, e.size - 1)
    return float((e[-1] / e[-1 - w]) ** (1.0 / w))


def fit_order(h, err) -> float:
    """Least-squares slope of ``log(err)`` against ``log(h)``."""
    return float(np.polyfit(np.log(np.asarray(h)), np.log(np.asarray(err)), 1)[0])


# -- bounds ---------------------------------------------------------------

def run_bounds(config: ScenarioConfig) -> dict:
    p = config.params
    M = p["M"]
    dt = p["dt"] if p["dt"] is not None else 1.0 / M
    lambdas = eigenbasis(SpatialGrid(M)).lambdas

    def point(args):
        m, N = args
        c = coefficients(lambdas[m - 1], p["nu"], dt)
        T = assemble(c, N)
        rho, _ = spectral_radius(T)
        return {"m": m, "N": N, "rho": rho, "sqrt_rho_tilde": math.sqrt(c.rho_tilde),
                "rho_tilde": c.rho_tilde, "inf_norm": dense_infinity_norm(T),
                "inf_norm_closed": infinity_norm_closed_form(c)}

    rows = _pmap(point, [(m, N) for m in (1, M) for N in p["N_list"]], config.workers)
    for r in rows:
        if r["rho"] > r["sqrt_rho_tilde"] + 1e-10:
            raise InvariantViolation(f"rho exceeds sqrt(rho_tilde): {r}")

    curves = []
    for nu in p["nu_list"]:
        for m, lam in enumerate(lambdas, start=1):
            curves.append({"panel": "nu", "nu": nu, "dt": dt, "m": m,
                           "rho_tilde": coefficients(lam, nu, dt).rho_tilde})
    for dtv in p["dt_list"]:
        for m, lam in enumerate(lambdas, start=1):
            curves.append({"panel": "dt", "nu": p["nu"], "dt": dtv, "m": m,
                           "rho_tilde": coefficients(lam, p["nu"], dtv).rho_tilde})
    tag = f"M{M}_nu{p['nu']:.0e}"
    return {f"bounds_{tag}": rows, f"bounds_rhotilde_vs_m_M{M}": curves}


# -- clustering -----------------------------------------------------------

def run_clustering(config: ScenarioConfig) -> dict:
    p = config.params
    M = p["M"]
    dt = p["dt"] if p["dt"] is not None else 1.0 / M
    m_list = p["m_list"] or [1, M]
    lambdas = eigenbasis(SpatialGrid(M)).lambdas
    eps = p["eps"]

    def point(args):
        nu, m, N = args
        c = coefficients(lambdas[m - 1], nu, dt)
        return (nu, m, N, c, spectrum_report(c, N, p["theta_samples"]))

    results = _pmap(point, [(nu, m, N) for nu in p["nu_list"] for m in m_list
                            for N in p["N_list"]], config.workers)
    tables = {}
    stats = []
    for nu, m, N, c, rep in results:
        if not np.all(rep.in_region_D):
            raise InvariantViolation(f"eigenvalue outside region D (nu={nu}, m={m}, N={N})")
        n_out = int(np.count_nonzero(rep.dist_to_sigmaT > eps))
        stats.append({"nu": nu, "m": m, "N": N, "rho": rep.rho,
                      "sqrt_rho_tilde": math.sqrt(rep.rho_tilde), "c2": c.c2,
                      "sqrt_nu_c1": math.sqrt(nu) * abs(c.c1),
                      "max_dist": rep.max_dist, "n_outside": n_out,
                      "frac_outside_eps": n_out / N,
                      "frac_outside_per_eig": n_out / rep.eigenvalues.size})
        key = f"clustering_nu{nu:.0e}_m{m}_N{N}"
        order = np.lexsort((rep.eigenvalues.imag, rep.eigenvalues.real))
        tables[key] = [{"re": rep.eigenvalues[i].real, "im": rep.eigenvalues[i].imag,
                        "in_region_D": bool(rep.in_region_D[i]),
                        "dist_sigmaT": rep.dist_to_sigmaT[i]} for i in order]
    tables[f"clustering_stats_M{M}"] = stats
    return tables


# -- Crank-Nicolson order -------------------------------------------------

def cn_errors(h: float, nu: float, T: float = 1.0, N: int = 2):
    """L2(Q) errors of the monolithic CN solution against the manufactured one."""
    steps = round(T / h)
    if steps % N or not math.isclose(steps * h, T):
        raise ConfigError(f"h={h} does not split T={T} into {N} equal windows")
    grid = SpatialGrid(round(1.0 / h) - 1)
    decomp = TimeDecomposition(N, T / N, steps // N)
    y, p_, yhat = manufactured_solution(nu, T)
    Y, P = monolithic_solve(ProblemSpec(1.0, T, nu, yhat), grid, decomp)
    ey = l2q_norm(Y.values - sample(y, grid, decomp).values, grid, decomp)
    ep = l2q_norm(P.values - sample(p_, grid, decomp).values, grid, decomp)
    return ey, ep


def run_cn_order(config: ScenarioConfig) -> dict:
    p = config.params
    errs = _pmap(lambda h: cn_errors(h, p["nu"], p["T"], p["N"]), p["h_list"], config.workers)
    rows = [{"h": h, "err_y": ey, "err_p": ep} for h, (ey, ep) in zip(p["h_list"], errs)]
    slopes = [{"variable": v, "order": fit_order(p["h_list"], [r[f"err_{v}"] for r in rows])}
              for v in ("y", "p")]
    return {f"cn-order_nu{p['nu']:.0e}": rows, f"cn-order_slopes_nu{p['nu']:.0e}": slopes}


# -- weak scaling ---------------------------------------------------------

def schwarz_run(problem, grid, decomp, tol, max_iters, workers=1):
    """Schwarz history against the monolithic solution, with relative errors."""
    ref = monolithic_solve(problem, grid, decomp)
    solver = SchwarzSolver(problem, grid, decomp, workers=workers)
    hist = solver.solve(tol, max_iters, reference=ref)
    ny = l2q_norm(ref[0], grid, decomp)
    npn = l2q_norm(ref[1], grid, decomp)
    for r in hist.records:
        r["relerr_y"] = r["err_y"] / ny if ny else r["err_y"]
        r["relerr_p"] = r["err_p"] / npn if npn else r["err_p"]
    return hist, solver, ref


def run_weak_scaling(config: ScenarioConfig) -> dict:
    p = config.params
    h, nu = p["h"], p["nu"]
    M = round(1.0 / h) - 1
    grid = SpatialGrid(M)
    lam1 = eigenbasis(grid).lambdas[0]
    iters, summary = [], []
    for dt in p["dt_list"]:
        K = round(dt / h)
        if not math.isclose(K * h, dt):
            raise ConfigError(f"dt={dt} is not a multiple of h={h}")
        c = coefficients(lam1, nu, dt)
        bound = math.sqrt(c.rho_tilde)
        for N in p["N_list"]:
            decomp = TimeDecomposition(N, dt, K)
            T = N * dt
            _, _, yhat = manufactured_solution(nu, T)
            hist, _, _ = schwarz_run(ProblemSpec(1.0, T, nu, yhat), grid, decomp,
                                     p["tol"], p["max_iters"], config.workers)
            for r in hist.records:
                iters.append({"dt": dt, "N": N, "iter": r["iter"],
                              "interface_incr": r["interface_incr"],
                              "relerr_y": r["relerr_y"], "relerr_p": r["relerr_p"],
                              "predicted": hist.records[0]["relerr_y"] * bound ** (r["iter"] - 1)})
            Tm = assemble(c, N)
            rho, _ = spectral_radius(Tm)
            rate = decay_rate(hist.column("relerr_y"), p["rate_window"])
            summary.append({"dt": dt, "N": N, "iterations": hist.iterations,
                            "converged": hist.converged, "rho": rho,
                            "inf_norm": dense_infinity_norm(Tm), "rho_tilde": c.rho_tilde,
                            "sqrt_rho_tilde": bound, "observed_rate": rate,
                            "final_relerr_y": hist.records[-1]["relerr_y"],
                            "final_relerr_p": hist.records[-1]["relerr_p"]})
            if rate > 1.2 * bound:
                raise InvariantViolation(
                    f"observed decay {rate:.4g} exceeds bound {bound:.4g} (dt={dt}, N={N})")
    return {f"weak-scaling_nu{nu:.0e}_h{h:.4g}": iters,
            f"weak-scaling_summary_nu{nu:.0e}_h{h:.4g}": summary}


# -- heating-cooling ------------------------------------------------------

def unknown_counts(M: int, N: int, K: int) -> dict:
    """State plus adjoint values at every interior node and time level, t=0 and T included."""
    return {"global": 2 * M * (N * K + 1), "per_period": 2 * M * (K + 1)}


def period_variation(u: np.ndarray, K: int) -> list[dict]:
    """Relative L2 change of ``u`` between consecutive periods of ``K`` steps."""
    n_periods = (u.shape[0] - 1) // K
    slices = [u[n * K:(n + 1) * K + 1] for n in range(n_periods)]
    return [{"period": n + 1, "next_period": n + 2,
             "rel_change": float(np.linalg.norm(slices[n + 1] - slices[n])
                                 / np.linalg.norm(slices[n]))}
            for n in range(n_periods - 1)]


def run_heatcool(config: ScenarioConfig) -> dict:
    p = config.params
    h, nu, dt, L = p["h"], p["nu"], p["dt"], p["L"]
    M = round(L / h) - 1
    K = round(dt / h)
    grid = SpatialGrid(M, L)
    c = coefficients(eigenbasis(grid).lambdas[0], nu, dt)
    bound = math.sqrt(c.rho_tilde)
    iters, summary, tables = [], [], {}
    for N in p["N_list"]:
        decomp = TimeDecomposition(N, dt, K)
        problem = ProblemSpec(L, N * dt, nu, heatcool_target(L, dt, N))
        hist, solver, ref = schwarz_run(problem, grid, decomp, p["tol"], p["max_iters"],
                                        config.workers)
        for r in hist.records:
            iters.append({"N": N, "iter": r["iter"], "interface_incr": r["interface_incr"],
                          "relerr_y": r["relerr_y"], "relerr_p": r["relerr_p"],
                          "predicted": hist.records[0]["relerr_y"] * bound ** (r["iter"] - 1)})
        counts = unknown_counts(M, N, K)
        rate = decay_rate(hist.column("relerr_y"), p["rate_window"])
        summary.append({"N": N, "iterations": hist.iterations, "converged": hist.converged,
                        "observed_rate": rate, "sqrt_rho_tilde": bound,
                        "rho_tilde": c.rho_tilde, "unknowns_global": counts["global"],
                        "unknowns_per_period": counts["per_period"]})
        if rate > 1.2 * bound:
            raise InvariantViolation(f"observed decay {rate:.4g} exceeds bound {bound:.4g} (N={N})")
        if N == p["dump_N"]:
            y, pp = solver.fields(hist.state)
            tables[f"heatcool_periodicity_N{N}"] = period_variation(pp.values / nu, K)
            tables["_fields"] = {
                "target": solver.target,
                "state": y,
                "control": SpaceTimeField(pp.values / nu, "control"),
                "grid": grid, "decomp": decomp,
            }
    tables[f"heatcool_nu{nu:.0e}_h{h:.4g}"] = iters
    tables[f"heatcool_summary_nu{nu:.0e}_h{h:.4g}"] = summary
    return tables


RUNNERS = {
    "bounds": run_bounds,
    "clustering": run_clustering,
    "cn-order": run_cn_order,
    "weak-scaling": run_weak_scaling,
    "heatcool": run_heatcool,
}


def _versions():
    import numba
    import scipy
    return {"tpschwarz": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__, "numba": numba.__version__}


def run(config: ScenarioConfig) -> dict:
    """Run a scenario; write CSVs and ``manifest.json`` when ``out_dir`` is set."""
    t0 = time.perf_counter()
    tables = RUNNERS[config.scenario](config)
    elapsed = time.perf_counter() - t0
    if config.out_dir is None:
        return tables
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    fields = tables.pop("_fields", None)
    for name, rows in tables.items():
        path = out / f"{name}.csv"
        write_csv(path, rows)
        files.append(path.name)
    if fields is not None:
        for role in ("target", "state", "control"):
            path = out / f"{config.scenario}_field_{role}_N{fields['decomp'].N}.csv"
            write_field_csv(fields[role], fields["grid"], fields["decomp"], path)
            files.append(path.name)
        tables["_fields"] = fields
    manifest = {"scenario": config.scenario, "config": asdict(config),
                "versions": _versions(), "timings": {"total_seconds": elapsed},
                "files": sorted(files)}
    if config.scenario == "heatcool":
        manifest["unknown_count_convention"] = (
            "2 * M * (N*K + 1): state and adjoint at every interior node and every "
            "time level including t=0 and t=T; per period 2 * M * (K + 1)")
        manifest["reference_unknowns_N512"] = REFERENCE_UNKNOWNS
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str))
    return tables
