"""Command-line front end: solve, sweep, verify, simulate, estimate, alpha-star.

Every command writes its outputs plus ``manifest.json`` (resolved config, tool
version, seed) into the output directory. Passing a manifest back through
``--config`` reproduces the run. Floats are written with ``repr`` so files are
locale independent and round-trip exactly.

Exit codes: 0 ok, 1 I/O error, 2 parameter or validity-domain error,
3 verification failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import math
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .bayes import ObservationSummary, gaussian_posterior, posterior_weights
from .errors import DomainError, ParameterError
from .ingest import PriceFormatError, calibrate_prior, load_prices, mle_estimate
from .model import DiscretePrior, GaussianPrior, MarketParams, Preferences
from .odes import (
    alpha_star,
    alpha_star_integral,
    alpha_star_residual,
    check_equilibrium_domain,
    check_ode_domain,
    coefficients_at,
    solve_closed_form,
    solve_ode_numeric,
    equilibrium_alpha_bound,
    zeta,
)
from .sim import (
    SimConfig,
    estimate_inside_utility,
    estimate_J,
    martingale_check,
    perturbation_test,
    simulate_inside,
)
from .strategy import (
    EquilibriumFeedback,
    InsideOptimalFeedback,
    ScaledFeedback,
    ShiftedFeedback,
    ZeroFeedback,
    analytic_J,
    decompose,
    equilibrium_pi,
    foc_maximizer,
    g_value,
    hedging_ratios,
    pde_residual,
)

log = logging.getLogger("smoothamb")

OUTPUT_ENV = "SMOOTHAMB_OUTPUT_DIR"
EXIT_OK, EXIT_IO, EXIT_DOMAIN, EXIT_VERIFY = 0, 1, 2, 3

DEFAULTS: dict = {
    "market": {"r": 0.02, "sigma": 0.192, "T": 2.0},
    "prior": {"beta0": 0.172, "sigma0": 0.121},
    "prefs": {"k": 1.0, "alpha": 1.5},
    "grid": {
        "n_points": 1001,
        "rk4_steps": 100000,
        "strategy_times": 21,
        "beta_grid": [-0.1, 0.0, 0.1, 0.172, 0.3],
    },
    "sweep": {"axis": "alpha", "start": None, "stop": None, "n": 100, "t": 0.0},
    "sim": {
        "n_paths": 200000,
        "n_steps": 1000,
        "seed": 12345,
        "x0": 1.0,
        "z": None,
        "scheme": "exact-beta",
        "strategies": ["equilibrium", "zero", "inside_optimal"],
        "j_outer": 1000,
        "j_inner": 1000,
        "j_steps": 200,
    },
    "verify": {
        "martingale_paths": 200000,
        "martingale_deltas": [0.05, 0.1],
        "value_paths": 200000,
        "value_steps": 1000,
        "perturb_alphas": [0.5, 1.5],
        "perturb_h": [0.02, 0.01, 0.005],
        "perturb_outer": 2000,
        "perturb_inner": 1000,
        "grid_t": 10,
        "grid_beta": 10,
    },
    "estimate": {"csv": None, "dt": 1.0 / 252, "sigma0": None},
    "output_dir": None,
}

SWEEP_RANGES = {"alpha": (-0.25, 5.0), "sigma0": (0.005, 0.5)}

# verification thresholds
TOL_ODE = 1e-6
TOL_IDENTITY = 1e-8
TOL_FOC = 1e-8
TOL_PDE = 1e-8
TOL_POSTERIOR = 1e-6
Z_VALUE = 3.0
Z_MARTINGALE = 3.0
Z_SLOPE = 2.0


# --------------------------------------------------------------------------
# config handling
# --------------------------------------------------------------------------


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        where = f"{path}{key}"
        if key not in base:
            raise ParameterError(f"unknown config field {where!r}")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ParameterError(f"config field {where!r} must be an object")
            out[key] = _merge(base[key], val, where + ".")
        else:
            out[key] = val
    return out


def load_config(path: str | None) -> dict:
    if path is None:
        return copy.deepcopy(DEFAULTS)
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ParameterError("config must be a JSON object")
    if "config" in doc and "tool" in doc:  # a manifest from an earlier run
        doc = doc["config"]
    return _merge(DEFAULTS, doc)


FLAG_MAP = {
    "r": ("market", "r"),
    "sigma": ("market", "sigma"),
    "T": ("market", "T"),
    "beta0": ("prior", "beta0"),
    "sigma0": ("prior", "sigma0"),
    "k": ("prefs", "k"),
    "alpha": ("prefs", "alpha"),
    "n_points": ("grid", "n_points"),
    "rk4_steps": ("grid", "rk4_steps"),
    "axis": ("sweep", "axis"),
    "start": ("sweep", "start"),
    "stop": ("sweep", "stop"),
    "n": ("sweep", "n"),
    "seed": ("sim", "seed"),
    "n_paths": ("sim", "n_paths"),
    "n_steps": ("sim", "n_steps"),
    "scheme": ("sim", "scheme"),
    "strategies": ("sim", "strategies"),
    "csv": ("estimate", "csv"),
    "dt": ("estimate", "dt"),
    "override_sigma0": ("estimate", "sigma0"),
}


def apply_flags(cfg: dict, ns: argparse.Namespace) -> dict:
    cfg = copy.deepcopy(cfg)
    for flag, (sec, key) in FLAG_MAP.items():
        val = getattr(ns, flag, None)
        if val is not None:
            cfg[sec][key] = val
    return cfg


def _objects(cfg: dict):
    m = cfg["market"]
    p = cfg["prior"]
    f = cfg["prefs"]
    return (
        MarketParams(float(m["r"]), float(m["sigma"]), float(m["T"])),
        GaussianPrior(float(p["beta0"]), float(p["sigma0"])),
        Preferences(float(f["k"]), float(f["alpha"])),
    )


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path: Path, doc) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(doc), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_manifest(out: Path, command: str, cfg: dict, outputs: list[str]) -> None:
    # thread count is deliberately absent: it never changes the outputs
    write_json(out / "manifest.json", {
        "tool": "smoothamb",
        "version": __version__,
        "command": command,
        "seed": cfg["sim"]["seed"],
        "config": {k: v for k, v in cfg.items() if not k.startswith("_")},
        "outputs": sorted(outputs),
    })


def output_dir(ns: argparse.Namespace, cfg: dict) -> Path:
    raw = ns.out or cfg.get("output_dir") or os.environ.get(OUTPUT_ENV) or "smoothamb_out"
    out = Path(raw)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def _solution(cfg: dict, market, prior, prefs, strict: bool):
    return solve_closed_form(market, prior, prefs.alpha, int(cfg["grid"]["n_points"]),
                             strict=strict)


def cmd_solve(cfg: dict, out: Path, ns) -> int:
    market, prior, prefs = _objects(cfg)
    check_equilibrium_domain(prefs.alpha, market, prior)
    sol = _solution(cfg, market, prior, prefs, strict=True)
    rk4 = solve_ode_numeric(market, prior, prefs.alpha, int(cfg["grid"]["rk4_steps"]))
    ref = rk4.at(sol.grid)
    scale = np.max(np.abs(ref), axis=1)
    scale[scale == 0] = 1.0
    rel = np.max(np.abs(sol.m - ref) / scale[:, None], axis=0)
    A1, A2, z = sol.A1, sol.A2, sol.zeta
    write_csv(
        out / "ode_solution.csv",
        ["t", "m1", "m2", "m3", "m4", "m5", "m6", "A1", "A2", "zeta", "rk4_rel_err"],
        ([sol.grid[i], *sol.m[:, i], A1[i], A2[i], z[i], rel[i]] for i in range(sol.grid.size)),
    )
    n_t = int(cfg["grid"]["strategy_times"])
    rows = []
    for t in np.linspace(0.0, market.T, n_t):
        for b in cfg["grid"]["beta_grid"]:
            d = decompose(float(t), float(b), sol, market, prefs)
            rows.append([float(t), float(b), d.pi_total, d.pi_myopic, d.hZ, d.hBeta])
    write_csv(out / "strategy.csv", ["t", "beta", "pi", "pi_myopic", "hZ", "hBeta"], rows)
    write_manifest(out, "solve", cfg, ["ode_solution.csv", "strategy.csv"])
    print(f"solved alpha={prefs.alpha}: max rk4_rel_err = {float(rel.max()):.3e}")
    return EXIT_OK


def sweep_rows(cfg: dict, axis: str, values) -> list[list]:
    """One row per value: (value, hZ, hBeta, h, status) at time cfg.sweep.t."""
    market, prior, prefs = _objects(cfg)
    t = float(cfg["sweep"]["t"])
    rows = []
    for v in values:
        v = float(v)
        a = v if axis == "alpha" else prefs.alpha
        pr = prior if axis == "alpha" else GaussianPrior(prior.beta0, v)
        try:
            check_ode_domain(a, market, pr)
        except DomainError as exc:
            log.warning("sweep point %s=%r skipped: %s", axis, v, exc)
            rows.append([v, math.nan, math.nan, math.nan, "skipped"])
            continue
        status = "ok"
        try:
            check_equilibrium_domain(a, market, pr)
        except DomainError:
            status = "outside_equilibrium_domain"
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            m1, m2, m3 = coefficients_at(t, a, market, pr)
        hz, hb = hedging_ratios(m1, m2, m3, zeta(t, market, pr), a)
        rows.append([v, float(hz), float(hb), float(hz + hb), status])
    return rows


def cmd_sweep(cfg: dict, out: Path, ns) -> int:
    sw = cfg["sweep"]
    axis = sw["axis"]
    if axis not in SWEEP_RANGES:
        raise ParameterError(f"sweep axis must be one of {sorted(SWEEP_RANGES)}")
    lo, hi = SWEEP_RANGES[axis]
    start = lo if sw["start"] is None else float(sw["start"])
    stop = hi if sw["stop"] is None else float(sw["stop"])
    values = np.linspace(start, stop, int(sw["n"]))
    rows = sweep_rows(cfg, axis, values)
    write_csv(out / "sweep.csv", [axis, "hZ", "hBeta", "h", "status"], rows)
    write_manifest(out, "sweep", cfg, ["sweep.csv"])
    print(f"sweep over {axis}: {len(rows)} points")
    return EXIT_OK


def _check(name: str, value: float, threshold: float, passed: bool, **extra) -> dict:
    return {"name": name, "value": value, "threshold": threshold, "pass": bool(passed), **extra}


def run_verification(cfg: dict, m2_factor: float = 1.0) -> list[dict]:
    """All numeric checks for the configured alpha; ``m2_factor`` corrupts m2 (test hook)."""
    market, prior, prefs = _objects(cfg)
    vc = cfg["verify"]
    sc = cfg["sim"]
    alpha = prefs.alpha
    sol = _solution(cfg, market, prior, prefs, strict=True)
    if m2_factor != 1.0:
        sol = sol.scaled(1, m2_factor)
    rk4 = solve_ode_numeric(market, prior, alpha, int(cfg["grid"]["rk4_steps"]))
    checks = []

    ref = rk4.at(sol.grid)
    ode_err = max(float(np.max(np.abs(sol.m[i] - ref[i])) / np.max(np.abs(ref[i])))
                  for i in (1, 2))
    checks.append(_check("ode_oracle", ode_err, TOL_ODE, ode_err < TOL_ODE))

    ident = max(float(np.max(np.abs(rk4.m[3] + market.r * (rk4.m[0] + rk4.m[1])))),
                float(np.max(np.abs(rk4.m[4] + market.r * (rk4.m[1] + rk4.m[2])))))
    checks.append(_check("m4_m5_identities", ident, TOL_IDENTITY, ident < TOL_IDENTITY))

    ts = np.linspace(0.0, market.T, int(vc["grid_t"]) + 1)[:-1]
    betas = np.linspace(-0.3, 0.6, int(vc["grid_beta"]))
    foc_err, pde_err = 0.0, 0.0
    for t in ts:
        for b in betas:
            pi = equilibrium_pi(float(t), 1.0, float(b), sol, market, prefs)
            pf = foc_maximizer(float(t), 1.0, float(b), sol, market, prefs)
            foc_err = max(foc_err, abs(pf - pi) / abs(pi))
            for z in (b - 0.1, b, b + 0.1):
                res = pde_residual(float(t), 1.0, float(b), float(z), pi, sol, market, prefs)
                pde_err = max(pde_err, abs(res.scaled))
    checks.append(_check("foc_match", foc_err, TOL_FOC, foc_err < TOL_FOC))
    checks.append(_check("pde_residual", pde_err, TOL_PDE, pde_err < TOL_PDE))

    eq = EquilibriumFeedback(sol, market, prefs)
    z0 = prior.beta0
    vcfg = SimConfig(n_paths=int(vc["value_paths"]), n_steps=int(vc["value_steps"]),
                     seed=int(sc["seed"]), x0=float(sc["x0"]), scheme=sc["scheme"],
                     threads=int(cfg.get("_threads", 1)))
    rep = estimate_inside_utility(z0, eq, vcfg, market, prior, prefs)
    g0 = g_value(0.0, vcfg.x0, prior.beta0, z0, sol, market, prefs).g
    zs = rep.z_score(g0)
    checks.append(_check("value_match", abs(zs), Z_VALUE, abs(zs) <= Z_VALUE,
                         estimate=rep.estimate, std_error=rep.std_error, analytic=g0))

    mcfg = SimConfig(n_paths=int(vc["martingale_paths"]), n_steps=int(vc["value_steps"]),
                     seed=int(sc["seed"]), x0=float(sc["x0"]), scheme=sc["scheme"],
                     threads=int(cfg.get("_threads", 1)))
    for r in martingale_check(z0, mcfg, sol, market, prior, prefs, vc["martingale_deltas"]):
        zs = r.z_score(0.0)
        checks.append(_check(f"martingale_delta_{r.diagnostics['delta']!r}", abs(zs), Z_MARTINGALE,
                             abs(zs) <= Z_MARTINGALE, estimate=r.estimate,
                             std_error=r.std_error))

    if alpha in [float(a) for a in vc["perturb_alphas"]] or m2_factor != 1.0:
        pcfg = SimConfig(n_paths=int(vc["perturb_outer"]), inner_paths=int(vc["perturb_inner"]),
                         n_steps=int(vc["value_steps"]), seed=int(sc["seed"]),
                         x0=float(sc["x0"]), scheme=sc["scheme"],
                         threads=int(cfg.get("_threads", 1)))
        perturbs = {
            "shift_0.5": ShiftedFeedback(eq, 0.5),
            "double": ScaledFeedback(eq, 2.0),
            "zero": ZeroFeedback(),
        }
        for name, pp in perturbs.items():
            reps = perturbation_test(pp, vc["perturb_h"], pcfg, sol, market, prior, prefs,
                                     continuation="analytic")
            for r in reps:
                ratio = r.estimate / r.std_error if r.std_error > 0 else (
                    0.0 if r.estimate <= 0 else math.inf)
                checks.append(_check(f"perturbation_{name}_h{r.diagnostics['h']!r}", ratio,
                                     Z_SLOPE, ratio <= Z_SLOPE, slope=r.estimate,
                                     std_error=r.std_error))

    post_err = posterior_conjugacy_error(market, prior)
    checks.append(_check("posterior_conjugacy", post_err, TOL_POSTERIOR, post_err < TOL_POSTERIOR))
    return checks


def posterior_conjugacy_error(market: MarketParams, prior: GaussianPrior) -> float:
    """Max |conjugate mean - discretized-prior posterior mean| over a (t, dy) grid."""
    disc = DiscretePrior.from_gaussian(prior, 2001)
    err = 0.0
    for t in np.linspace(0.25, market.T, 4):
        for dy in np.linspace(-0.5, 0.5, 5):
            obs = ObservationSummary(float(t), float(dy))
            w = posterior_weights(disc, obs, market.sigma)
            mean = float(np.dot(w, disc.atoms))
            err = max(err, abs(mean - gaussian_posterior(prior, market, obs).beta))
    return err


def cmd_verify(cfg: dict, out: Path, ns) -> int:
    checks = run_verification(cfg, m2_factor=float(ns.corrupt_m2 or 1.0))
    ok = all(c["pass"] for c in checks)
    write_json(out / "verify.json", {"all_pass": ok, "checks": checks})
    write_manifest(out, "verify", cfg, ["verify.json"])
    for c in checks:
        print(f"{'PASS' if c['pass'] else 'FAIL'} {c['name']}: {c['value']:.3e} "
              f"(threshold {c['threshold']:g})")
    return EXIT_OK if ok else EXIT_VERIFY


def _strategy(name: str, sol, market, prefs, z: float):
    eq = EquilibriumFeedback(sol, market, prefs)
    table = {
        "equilibrium": eq,
        "zero": ZeroFeedback(),
        "inside_optimal": InsideOptimalFeedback(z, market, prefs),
    }
    if name not in table:
        raise ParameterError(f"unknown strategy {name!r}; choose from {sorted(table)}")
    return table[name]


def cmd_simulate(cfg: dict, out: Path, ns) -> int:
    market, prior, prefs = _objects(cfg)
    sc = cfg["sim"]
    sol = _solution(cfg, market, prior, prefs, strict=False)
    z = prior.beta0 if sc["z"] is None else float(sc["z"])
    threads = int(cfg.get("_threads", 1))
    scfg = SimConfig(n_paths=int(sc["n_paths"]), n_steps=int(sc["n_steps"]), seed=int(sc["seed"]),
                     x0=float(sc["x0"]), scheme=sc["scheme"], threads=threads)
    jcfg = SimConfig(n_paths=int(sc["j_outer"]), inner_paths=int(sc["j_inner"]),
                     n_steps=int(sc["j_steps"]), seed=int(sc["seed"]), x0=float(sc["x0"]),
                     scheme=sc["scheme"], threads=threads)
    g0 = g_value(0.0, scfg.x0, prior.beta0, z, sol, market, prefs).g
    J0 = analytic_J(0.0, jcfg.x0, prior.beta0, sol, market, prefs)
    prow, jrow = [], []
    for name in sc["strategies"]:
        strat = _strategy(name, sol, market, prefs, z)
        s = simulate_inside(z, strat, scfg, market, prior)
        X = s.X[s.finite]
        rep = estimate_inside_utility(z, strat, scfg, market, prior, prefs)
        ref = g0 if name == "equilibrium" else math.nan
        zs = rep.z_score(g0) if name == "equilibrium" else math.nan
        prow.append([name, z, scfg.n_paths, s.n_excluded, float(np.mean(X)),
                     float(np.std(X)), float(np.mean(s.beta[s.finite])), rep.estimate,
                     rep.std_error, ref, zs])
        j = estimate_J(strat, jcfg, market, prior, prefs)
        jref = J0 if name == "equilibrium" else math.nan
        jrow.append([name, jcfg.n_paths, jcfg.inner_paths, j.estimate, j.std_error,
                     j.diagnostics["jackknife_bias"], jref,
                     j.z_score(J0) if name == "equilibrium" else math.nan])
    write_csv(out / "paths_summary.csv",
              ["strategy", "z", "n_paths", "n_excluded", "mean_X_T", "sd_X_T", "mean_beta_T",
               "mean_U", "se_U", "analytic_g", "z_score"], prow)
    write_csv(out / "j_estimates.csv",
              ["strategy", "n_outer", "inner_paths", "J", "se", "jackknife_bias",
               "analytic_J", "z_score"], jrow)
    write_manifest(out, "simulate", cfg, ["paths_summary.csv", "j_estimates.csv"])
    print(f"simulated {len(prow)} strategies")
    return EXIT_OK


def cmd_estimate(cfg: dict, out: Path, ns) -> int:
    ec = cfg["estimate"]
    if not ec["csv"]:
        raise ParameterError("estimate needs a price file (--csv)")
    series = load_prices(ec["csv"], dt=float(ec["dt"]))
    est = mle_estimate(series)
    prior = calibrate_prior(est, None if ec["sigma0"] is None else float(ec["sigma0"]))
    doc = {
        "beta0": prior.beta0,
        "sigma": est.sigma,
        "sigma0": prior.sigma0,
        "sigma0_source": "override" if ec["sigma0"] is not None else "drift_standard_error",
        "n": est.n,
        "dt": est.dt,
        "note": "consecutive rows treated as one step dt; calendar gaps not adjusted",
    }
    write_json(out / "calibration.json", doc)
    write_manifest(out, "estimate", cfg, ["calibration.json"])
    print(json.dumps(_jsonable(doc)))
    return EXIT_OK


def cmd_alpha_star(cfg: dict, out: Path, ns) -> int:
    market, prior, _ = _objects(cfg)
    a = alpha_star(market, prior)
    doc = {
        "alpha_star": a,
        "residual": alpha_star_residual(a, market, prior),
        "integral_truncated": alpha_star_integral(a, "truncated"),
        "integral_substitution": alpha_star_integral(a, "substitution"),
        "equilibrium_alpha_bound": max(a, equilibrium_alpha_bound(market, prior)),
    }
    write_json(out / "alpha_star.json", doc)
    write_manifest(out, "alpha-star", cfg, ["alpha_star.json"])
    print(repr(a))
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "verify": cmd_verify,
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "alpha-star": cmd_alpha_star,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="smoothamb",
        description="Equilibrium strategies for smooth-ambiguity investors learning a drift.",
        epilog=(f"Defaults: r=0.02 sigma=0.192 T=2 beta0=0.172 sigma0=0.121 k=1 alpha=1.5; "
                f"sweep alpha in [-0.25, 5], sigma0 in [0.005, 0.5]. Output directory: --out, "
                f"else config output_dir, else ${OUTPUT_ENV}, else ./smoothamb_out."),
    )
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="JSON config or a manifest.json from an earlier run")
    p.add_argument("--out", help="output directory")
    p.add_argument("--threads", type=int, default=1, help="worker threads (0 = auto)")
    p.add_argument("-v", "--verbose", action="store_true")
    g = p.add_argument_group("model")
    for name in ("r", "sigma", "T", "beta0", "sigma0", "k", "alpha"):
        g.add_argument(f"--{name}", type=float)
    g = p.add_argument_group("grids and sweeps")
    g.add_argument("--n-points", dest="n_points", type=int, help="closed-form grid size (odd)")
    g.add_argument("--rk4-steps", dest="rk4_steps", type=int)
    g.add_argument("--axis", choices=sorted(SWEEP_RANGES))
    g.add_argument("--start", type=float)
    g.add_argument("--stop", type=float)
    g.add_argument("--n", type=int, help="number of sweep points")
    g = p.add_argument_group("simulation")
    g.add_argument("--seed", type=int)
    g.add_argument("--n-paths", dest="n_paths", type=int)
    g.add_argument("--n-steps", dest="n_steps", type=int)
    g.add_argument("--scheme", choices=["euler", "exact-beta"])
    g.add_argument("--strategies", type=lambda s: s.split(","),
                   help="comma-separated: equilibrium,zero,inside_optimal")
    g = p.add_argument_group("estimation")
    g.add_argument("--csv", help="price file with header date,close")
    g.add_argument("--dt", type=float, help="sampling interval in years (default 1/252)")
    g.add_argument("--override-sigma0", dest="override_sigma0", type=float)
    p.add_argument("--corrupt-m2", dest="corrupt_m2", type=float, help=argparse.SUPPRESS)
    return p


def main(argv: list[str] | None = None) -> int:
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = apply_flags(load_config(ns.config), ns)
        out = output_dir(ns, cfg)
        run_cfg = dict(cfg, _threads=ns.threads)
        fn = COMMANDS[ns.command]
        code = fn(run_cfg, out, ns) if ns.command in ("verify", "simulate") else fn(cfg, out, ns)
    except (OSError, json.JSONDecodeError, PriceFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (DomainError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
