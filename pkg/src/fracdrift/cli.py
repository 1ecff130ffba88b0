"""Command-line front end.

    fracdrift <subcommand> [--config FILE] [--out DIR] [--seed N] [--threads N]

Subcommands: beta-curve, lyapunov, kernel-bound, convergence, weights, sde,
verify-all.  The configuration is one YAML file whose sections are merged
over explicit defaults; unknown keys are rejected and flags win over the
file.  Exit codes: 0 success, 1 check failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import copy
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from .artifacts import provenance, write_csv, write_json
from .reports import CheckReport

DEFAULTS = {
    "model": {"d": 3, "alpha": 0.5, "kappa": None, "beta": 0.3},
    "grid": {"n": 64, "L": 8.0},
    "solver": {"dt": None, "t_end": 1.0, "eps_visc": 1e-3, "splitting": "strang",
               "delta_width": None},
    "mc": {"n_particles": 100_000, "dt": 0.005, "t_end": 0.5, "seed": 42,
           "start": [0.25, 0.0, 0.0], "bins": None, "fit_window": [0.0125, 0.125],
           "n_bins": 8},
    "beta_curve": {"kappa_min": 1e-3, "kappa_max": 1e3, "count": 61},
    "lyapunov": {"radii": [0.25, 0.5, 1.0], "beta": None, "tolerance": 1e-4},
    "kernel_bound": {"t_list": [0.25, 0.5, 1.0], "y_list": [0.05, 0.0794, 0.126, 0.2, 0.315, 0.5],
                     "relative": True, "method": "radial", "radial_L": 4.0},
    "convergence": {"eps_list": [1e-2, 1e-3, 1e-4], "r_list": [1, 2, 4, "inf"], "t_end": 1.0},
    "weights": {"s": 1.0, "s_list": [0.5, 1.0, 2.0], "t_fracs": [0.5, 0.75, 1.0],
                "eps_list": [1e-2, 1e-3, 1e-4], "n_list": [64, 96], "profiles": 10},
    "checks": {"which": ["beta_curve", "lyapunov", "kernel_bound", "convergence", "weights", "sde"],
               "tolerances": {}},
    "output": {"directory": "out", "formats": ["csv", "json"]},
}

TOLERANCE_DEFAULTS = {"kernel_bound": 0.5, "claim1_gradient": 0.05, "lr_contraction": 0.05,
                      "lemma_V": 0.1, "B3_weighted": 0.1, "B22_B23": 1e-3, "sde": 0.1}

SUBCOMMANDS = ("beta-curve", "lyapunov", "kernel-bound", "convergence", "weights", "sde", "verify-all")


class ConfigError(ValueError):
    """Invalid configuration; maps to exit code 2."""


# --------------------------------------------------------------------------
# configuration

def _merge(base: dict, update: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in update.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown configuration key '{where}'; allowed: {sorted(base)}")
        if isinstance(base[key], dict) and key != "tolerances":
            if not isinstance(value, dict):
                raise ConfigError(f"section '{where}' must be a mapping; schema: {_schema_hint(key)}")
            out[key] = _merge(base[key], value, where + ".")
        else:
            out[key] = value
    return out


def _schema_hint(section: str) -> str:
    return ", ".join(f"{k}={v!r}" for k, v in DEFAULTS.get(section, {}).items())


def load_config(path=None, overrides: dict | None = None) -> dict:
    """Defaults <- YAML file <- flag overrides, with validation."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            data = yaml.safe_load(Path(path).read_text())
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a mapping of sections")
        for name, section in data.items():
            if section is None and name in DEFAULTS:
                raise ConfigError(f"section '{name}' is empty; schema: {_schema_hint(name)}")
        cfg = _merge(cfg, data)
    if overrides:
        cfg = _merge(cfg, overrides)
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict):
    m = cfg["model"]
    if not isinstance(m["d"], int) or m["d"] < 1:
        raise ConfigError("model.d must be a positive integer")
    if not 0.0 < float(m["alpha"]) <= 1.0:
        raise ConfigError("model.alpha must lie in (0, 1]")
    if (m["kappa"] is None) == (m["beta"] is None):
        raise ConfigError("set exactly one of model.kappa and model.beta")
    if m["kappa"] is not None and float(m["kappa"]) < 0:
        raise ConfigError("model.kappa must be >= 0")
    if m["beta"] is not None and not 0.0 < float(m["beta"]) < float(m["alpha"]):
        raise ConfigError("model.beta must lie in (0, alpha)")
    bc = cfg["beta_curve"]
    if not 0 < float(bc["kappa_min"]) < float(bc["kappa_max"]) or int(bc["count"]) < 2:
        raise ConfigError("beta_curve needs 0 < kappa_min < kappa_max and count >= 2")
    if int(cfg["grid"]["n"]) < 16 or int(cfg["grid"]["n"]) % 2 or float(cfg["grid"]["L"]) <= 0:
        raise ConfigError("grid.n must be an even integer >= 16 and grid.L positive")
    if cfg["solver"]["splitting"] not in ("strang", "lie"):
        raise ConfigError("solver.splitting must be 'strang' or 'lie'")
    unknown = set(cfg["checks"]["which"]) - set(DEFAULTS["checks"]["which"])
    if unknown:
        raise ConfigError(f"checks.which has unknown entries {sorted(unknown)}")
    bad = set(cfg["checks"]["tolerances"]) - set(TOLERANCE_DEFAULTS)
    if bad:
        raise ConfigError(f"checks.tolerances has unknown entries {sorted(bad)}; "
                          f"allowed: {sorted(TOLERANCE_DEFAULTS)}")
    if not set(cfg["output"]["formats"]) <= {"csv", "json"}:
        raise ConfigError("output.formats may contain 'csv' and 'json'")
    if int(cfg["mc"]["n_particles"]) < 1:
        raise ConfigError("mc.n_particles must be positive")


def _tol(cfg: dict, name: str) -> float:
    return float(cfg["checks"]["tolerances"].get(name, TOLERANCE_DEFAULTS[name]))


# --------------------------------------------------------------------------
# shared builders

def model_params(cfg: dict):
    from .model import ModelParams, kappa_of_beta
    m = cfg["model"]
    base = ModelParams(d=int(m["d"]), alpha=float(m["alpha"]), kappa=0.0)
    kappa = float(m["kappa"]) if m["kappa"] is not None else float(kappa_of_beta(float(m["beta"]), base))
    return base.with_kappa(kappa)


def solver_config(cfg: dict, eps: float | None = None, n: int | None = None):
    from .evolve import SolverConfig
    from .fracops import GridSpec
    s = cfg["solver"]
    grid = GridSpec(int(cfg["model"]["d"]), int(n or cfg["grid"]["n"]), float(cfg["grid"]["L"]))
    return SolverConfig(grid=grid, eps_visc=float(s["eps_visc"] if eps is None else eps),
                        dt=None if s["dt"] is None else float(s["dt"]), t_end=float(s["t_end"]),
                        splitting=s["splitting"], delta_width=s["delta_width"])


def _smooth_bump(spec, center=(0.5, 0.0, 0.0), radius: float = 1.5):
    from .fracops import GridField
    r2 = sum((x - c) ** 2 for x, c in zip(spec.coords, center)) / radius**2
    inside = r2 < 1.0
    vals = np.zeros(spec.shape)
    vals[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
    return GridField(spec, vals)


def _beta(cfg: dict, params) -> float:
    from .model import beta_of_kappa
    return beta_of_kappa(params.kappa, params).beta


class Run:
    """Output directory, provenance and collected reports for one invocation."""

    def __init__(self, cfg: dict, command: str, threads: int = 1):
        self.cfg = cfg
        self.command = command
        self.threads = max(1, int(threads))
        self.out = Path(cfg["output"]["directory"])
        self.reports: list[CheckReport] = []
        self.report_only: set[str] = set()

    def prov(self, **extra) -> dict:
        return provenance(self.cfg, command=self.command, **extra)

    def csv(self, name, columns, rows, **extra):
        if "csv" in self.cfg["output"]["formats"]:
            write_csv(self.out / name, columns, rows, self.prov(**extra))

    def json(self, name, payload, **extra):
        if "json" in self.cfg["output"]["formats"]:
            write_json(self.out / name, payload, self.prov(**extra))

    def add(self, rep: CheckReport, report_only: bool = False):
        self.reports.append(rep)
        if report_only:
            self.report_only.add(rep.name)
        print(rep.line())
        return rep

    @property
    def failed(self) -> bool:
        return any(not r.passed for r in self.reports if r.name not in self.report_only)


# --------------------------------------------------------------------------
# subcommands

def cmd_beta_curve(run: Run):
    from .model import beta_of_kappa
    params = model_params(run.cfg)
    bc = run.cfg["beta_curve"]
    kappas = np.logspace(math.log10(float(bc["kappa_min"])), math.log10(float(bc["kappa_max"])),
                         int(bc["count"]))
    rows = []
    for k in kappas:
        sol = beta_of_kappa(float(k), params)
        rows.append((float(k), sol.beta, sol.residual))
    betas = np.array([r[1] for r in rows])
    resid = np.array([abs(r[2]) / max(1.0, r[0]) for r in rows])
    run.csv("beta_curve.csv", ["kappa", "beta", "residual"], rows)
    rep = CheckReport("beta_curve", float(resid.max()), 1e-12,
                      bool(resid.max() <= 1e-12 and np.all(np.diff(betas) > 0) and betas.max() < params.alpha),
                      0.0, {"monotone": bool(np.all(np.diff(betas) > 0)), "beta_max": float(betas.max()),
                            "params": params.as_dict()})
    run.add(rep)


def cmd_lyapunov(run: Run):
    from .fracops import lyapunov_residual
    params = model_params(run.cfg)
    ly = run.cfg["lyapunov"]
    forced = ly["beta"] is not None
    beta = float(ly["beta"]) if forced else _beta(run.cfg, params)
    rows = []
    for r in ly["radii"]:
        res = lyapunov_residual(beta, params.kappa, float(r), params)
        rows.append({"r": float(r), "residual": res, "scaled": abs(res) / float(r) ** (beta - params.alpha)})
    worst = max(row["scaled"] for row in rows)
    tol = float(ly["tolerance"])
    rep = CheckReport("lyapunov", worst, tol, bool(worst <= tol), 0.0,
                      {"beta": beta, "beta_forced": forced, "rows": rows, "params": params.as_dict()})
    run.csv("lyapunov.csv", ["r", "residual", "scaled_residual"],
            [(row["r"], row["residual"], row["scaled"]) for row in rows], beta=beta)
    run.json("lyapunov.json", rep.to_dict())
    # a deliberately mismatched beta is a diagnostic, not a verdict
    run.add(rep, report_only=forced and run.command != "verify-all")


def cmd_kernel_bound(run: Run):
    from .checks import check_kernel_bound
    params = model_params(run.cfg)
    kb = run.cfg["kernel_bound"]
    beta = _beta(run.cfg, params)
    cfg = solver_config(run.cfg, eps=0.0) if kb["method"] == "grid" else None
    rep = check_kernel_bound(kb["t_list"], kb["y_list"], beta, params, cfg=cfg, method=kb["method"],
                             relative=bool(kb["relative"]), tolerance=_tol(run.cfg, "kernel_bound"),
                             radial_L=float(kb["radial_L"]))
    rows = [(r["t"], r["y"], r.get("sup", math.nan), r.get("ratio", math.nan),
             r.get("ratio_half", math.nan), int(bool(r["resolved"]))) for r in rep.metadata["rows"]]
    run.csv("kernel_bound.csv", ["t", "y", "sup_column", "ratio", "ratio_half_exponent", "resolved"], rows)
    run.json("kernel_bound.json", rep.to_dict())
    run.add(rep)


def cmd_convergence(run: Run):
    from .checks import check_claim1_gradient, check_claim2_cauchy, check_lr_contraction
    params = model_params(run.cfg).with_sigma_bounds()
    cv = run.cfg["convergence"]
    cfg = solver_config(run.cfg)
    f = _smooth_bump(cfg.grid)
    t_end = float(cv["t_end"])
    r_list = [math.inf if str(r) == "inf" else float(r) for r in cv["r_list"]]
    reps = [
        check_claim1_gradient(f, t_end, cfg.eps_visc, cfg, params, _tol(run.cfg, "claim1_gradient")),
        check_claim2_cauchy(cv["eps_list"], f, cfg, params, t_end=t_end),
        check_lr_contraction(r_list, f, t_end, cfg.eps_visc, cfg, params, _tol(run.cfg, "lr_contraction")),
    ]
    run.json("convergence.json", {"reports": [r.to_dict() for r in reps]})
    for r in reps:
        run.add(r)


def cmd_weights(run: Run):
    from .checks import check_B3_weighted, check_lemma_V, default_test_profiles, lemma_V_terms
    from .fracops import GridSpec
    from .model import WeightSpec, check_B22_B23
    params = model_params(run.cfg).with_sigma_bounds()
    w = run.cfg["weights"]
    beta = _beta(run.cfg, params)
    s = float(w["s"])
    d, L = params.d, float(run.cfg["grid"]["L"])
    reps = [check_B22_B23(WeightSpec.for_params(s, beta, params), params,
                          tolerance=_tol(run.cfg, "B22_B23"))]
    grids = tuple(GridSpec(d, int(n), L) for n in w["n_list"])
    lem = check_lemma_V(w["eps_list"], s, beta, params, grids=grids, tolerance=_tol(run.cfg, "lemma_V"))
    reps.append(lem)
    cfg = solver_config(run.cfg)
    c_hat = {float(sv): lemma_V_terms(cfg.eps_visc, float(sv), beta, cfg.grid, params)["c_hat"]
             for sv in w["s_list"]}
    reps.append(check_B3_weighted([float(v) for v in w["s_list"]],
                                  default_test_profiles(cfg.grid, int(w["profiles"])), cfg, params,
                                  beta, c_hat, t_fracs=w["t_fracs"], tolerance=_tol(run.cfg, "B3_weighted")))
    run.csv("lemma_V.csv", ["n", "eps", "c_hat", "V_l1", "c0", "c_w"],
            [(r["n"], r["eps"], r["c_hat"], r["V_l1"], r["c0"], r["c_w"]) for r in lem.metadata["rows"]])
    run.json("weights.json", {"reports": [r.to_dict() for r in reps]})
    for r in reps:
        run.add(r)


def cmd_sde(run: Run):
    from .mc import MCConfig, fit_vanishing_exponent, radial_density, simulate_ensemble
    params = model_params(run.cfg)
    m = run.cfg["mc"]
    lo, hi = (float(v) for v in m["fit_window"])
    bins = m["bins"] if m["bins"] is not None else np.geomspace(lo, hi, int(m["n_bins"]) + 1)
    mcfg = MCConfig(n_particles=int(m["n_particles"]), dt=float(m["dt"]), t_end=float(m["t_end"]),
                    seed=int(m["seed"]), start=tuple(float(v) for v in m["start"]))
    workers = run.threads if run.command == "sde" else 1
    ens = simulate_ensemble(mcfg, params, workers=workers)
    prof = radial_density(ens, bins, params.d)
    beta = _beta(run.cfg, params) if params.kappa > 0 else 0.0
    extra = {"beta": beta}
    try:
        fit = fit_vanishing_exponent(prof, (lo, hi))
        extra.update(beta_hat=fit.beta_hat, stderr=fit.stderr, n_bins=fit.n_bins,
                     abs_error=abs(fit.beta_hat - beta))
        measured = fit.beta_hat
        bound = beta - 2.0 * fit.stderr - _tol(run.cfg, "sde")
        passed = measured >= bound
    except ValueError as exc:
        extra["fit_error"] = str(exc)
        measured, bound, passed = math.nan, beta, False
    run.csv("sde_profile.csv", ["r_mid", "density", "stderr", "count"],
            [(a, b, c, int(n)) for (a, b, c), n in zip(prof.as_rows(), prof.counts)])
    rep = CheckReport("sde_exponent", measured, bound, bool(passed), 0.0,
                      dict(extra, params=params.as_dict(),
                           provenance={"seed": mcfg.seed, "mc": mcfg.as_dict(), "workers": workers}))
    run.json("sde.json", rep.to_dict())
    run.add(rep)


COMMANDS = {
    "beta_curve": cmd_beta_curve, "lyapunov": cmd_lyapunov, "kernel_bound": cmd_kernel_bound,
    "convergence": cmd_convergence, "weights": cmd_weights, "sde": cmd_sde,
}


def _job(args):
    cfg, name = args
    run = Run(cfg, "verify-all")
    COMMANDS[name](run)
    return name, run.reports


def cmd_verify_all(run: Run):
    which = [w for w in DEFAULTS["checks"]["which"] if w in run.cfg["checks"]["which"]]
    jobs = [(run.cfg, name) for name in which]
    if run.threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=run.threads) as pool:
            results = list(pool.map(_job, jobs))
        for _, reps in results:
            for r in reps:
                run.add(r)
    else:
        for name in which:
            COMMANDS[name](run)
    ordered = sorted(run.reports, key=lambda r: r.name)
    run.json("verify_all.json", {"passed": not run.failed, "reports": [r.to_dict() for r in ordered]})


# --------------------------------------------------------------------------
# entry point

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fracdrift", description="Fractional diffusion with Hardy drift: "
                                 "exponent curves, PDE and Monte Carlo audits.")
    sub = ap.add_subparsers(dest="command", metavar="SUBCOMMAND")
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, default=None, help="YAML configuration file")
        p.add_argument("--out", type=Path, default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="Monte Carlo seed")
        p.add_argument("--threads", type=int, default=1, help="worker processes")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    if args.command is None:
        ap.print_usage(sys.stderr)
        return 2
    overrides = {}
    if args.out is not None:
        overrides["output"] = {"directory": str(args.out)}
    if args.seed is not None:
        overrides["mc"] = {"seed": int(args.seed)}
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    run = Run(cfg, args.command, args.threads)
    try:
        if args.command == "verify-all":
            cmd_verify_all(run)
        else:
            COMMANDS[args.command.replace("-", "_")](run)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 1 if run.failed else 0


if __name__ == "__main__":
    sys.exit(main())
