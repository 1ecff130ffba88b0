"""Quantitative audits: each function returns a CheckReport.

Generic constants (C, c0, c, c-hat, c_S) are measured as the smallest values
that make the corresponding inequality hold on the sampled points; trend
predicates are used where only the order of a bound is meaningful.
"""
from __future__ import annotations

import math
from dataclasses import replace
from functools import lru_cache

import numpy as np
from scipy import interpolate

from .evolve import (NormSeries, SolverConfig, get_solver, heat_kernel_column,
                     psi_on_grid)
from .fracops import (GridField, GridSpec, apply_symbol, fraclap_power_exact,
                      frac_laplacian_radial_point, grad_l2, gradient_spectral)
from .model import (CUTOFF_INNER, CUTOFF_OUTER, ModelParams, div_drift_radial,
                    drift_magnitude, laplacian_psi_radial, weight_eta, weight_eta_prime)
from .radial import kernel_column_sups
from .reports import CheckReport


def _grid_prov(cfg: SolverConfig, params: ModelParams, **extra) -> dict:
    solver = get_solver(cfg, params)
    prov = {"grid": {"d": cfg.grid.d, "n": cfg.grid.n, "L": cfg.grid.L},
            "dt": solver.dt, "eps": cfg.eps_visc, "splitting": cfg.splitting,
            "advection": cfg.advection}
    prov.update(extra)
    return prov


def loglog_slope(x, y) -> float:
    """Least-squares slope of log y against log x."""
    x, y = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    return float(np.polyfit(x, y, 1)[0])


# --------------------------------------------------------------------------
# vanishing kernel bound

def _decade_stats(ys, ratios, beta):
    span = math.log10(max(ys) / min(ys))
    variation = (max(ratios) / min(ratios)) ** (1.0 / span) - 1.0
    slope = loglog_slope(ys, ratios)
    # ratio with exponent beta/2 equals ratio * |y|^(beta/2) up to t factors
    slope_half = slope + beta / 2.0
    return {
        "variation_per_decade": variation,
        "slope": slope,
        "growth_as_y_decreases": 10.0 ** (-slope) - 1.0,
        "slope_half_exponent": slope_half,
        "growth_per_decade_half_exponent": 10.0 ** slope_half - 1.0,
    }


def column_sups(t: float, ys, params: ModelParams, method: str = "radial",
                cfg: SolverConfig | None = None, radial_L: float = 4.0) -> list[dict]:
    """sup_x of the kernel column for each |y| in ``ys`` at time t.

    ``radial``: exact three-dimensional radial reduction with a shell source
    (a lower bound for sup_x k_t(x, y) that is exact at x = 0; see
    ``radial.kernel_column_sups``).  ``grid``: periodic 3-d solver with a
    mollified point source at y = (|y|, 0, 0); |y| < 3h is marked unresolved.
    """
    if method == "radial":
        res = kernel_column_sups(params, t, ys, L=radial_L)
        return [{"y": c.rho, "sup": c.sup, "at_origin": c.at_origin, "argmax_r": c.argmax_r,
                 "resolved": True, "n": c.n, "h": c.h, "dt": c.dt} for c in res]
    if method == "grid":
        if cfg is None:
            raise ValueError("grid method needs a SolverConfig")
        out = []
        for y in ys:
            if y < 3.0 * cfg.grid.h:
                out.append({"y": float(y), "sup": math.nan, "resolved": False})
                continue
            col = heat_kernel_column(np.array([y, 0.0, 0.0]), t, cfg, params)
            out.append({"y": float(y), "sup": col.sup, "resolved": True,
                        "min": col.raw_min, "clipped_mass": col.clipped_mass})
        return out
    raise ValueError(f"unknown method {method!r}")


def check_kernel_bound(t_list, y_list, beta: float, params: ModelParams,
                       cfg: SolverConfig | None = None, method: str = "radial",
                       relative: bool = True, tolerance: float = 0.5,
                       discrimination: float = 1.0, asymptotic_window=None,
                       radial_L: float = 4.0) -> CheckReport:
    """Audit e^{-t Lambda}(x, y) <= C t^{-d/alpha} t^{-beta/alpha} |y|^beta.

    With ``relative`` the entries of ``y_list`` are multiples of t^{1/alpha}.
    For each t the ratio sup_x column / (t^{-d/alpha} t^{-beta/alpha} |y|^beta)
    is formed.  Passes when every ratio is finite, varies by less than
    ``tolerance`` per decade of |y| (max/min over the window, normalised to
    one decade), and the same ratio with beta/2 in place of beta grows by
    more than ``discrimination`` per decade (least-squares trend in log |y|).
    ``asymptotic_window`` (relative |y| values at t = 1) adds a report-only
    diagnostic deeper in the small-|y| regime.
    """
    d, alpha = params.d, params.alpha
    rows, per_t = [], {}
    for t in t_list:
        scale = t ** (1.0 / alpha) if relative else 1.0
        ys = np.asarray(y_list, dtype=float) * scale
        sups = column_sups(t, ys, params, method, cfg, radial_L)
        good = [s for s in sups if s["resolved"]]
        for s in sups:
            if s["resolved"]:
                s["ratio"] = s["sup"] * t ** (d / alpha) * t ** (beta / alpha) / s["y"] ** beta
                s["ratio_half"] = s["sup"] * t ** (d / alpha) * t ** (beta / (2 * alpha)) / s["y"] ** (beta / 2)
            rows.append({"t": t, **s})
        if len(good) >= 2:
            per_t[t] = _decade_stats([s["y"] for s in good], [s["ratio"] for s in good], beta)
        else:
            per_t[t] = {"variation_per_decade": math.nan, "excluded": len(sups) - len(good)}
    ratios = [r["ratio"] for r in rows if "ratio" in r]
    finite = bool(ratios) and all(math.isfinite(v) and v > 0 for v in ratios)
    variations = [v["variation_per_decade"] for v in per_t.values()]
    growths = [v.get("growth_per_decade_half_exponent", math.nan) for v in per_t.values()]
    flat_ok = finite and all(v < tolerance for v in variations)
    disc_ok = finite and all(g > discrimination for g in growths)
    meta = {"rows": rows, "per_t": per_t, "C_hat": max(ratios) if ratios else math.nan,
            "flat_ok": flat_ok, "discrimination_ok": disc_ok,
            "discrimination_threshold": discrimination, "method": method,
            "params": params.as_dict(), "beta": beta,
            "provenance": {"method": method, "radial_L": radial_L,
                           "grid": None if cfg is None else cfg.as_dict()}}
    if asymptotic_window is not None:
        ys = np.asarray(asymptotic_window, dtype=float) * 1.0
        deep = column_sups(1.0, ys, params, "radial", radial_L=radial_L)
        dr = [s["sup"] / s["y"] ** beta for s in deep]
        meta["asymptotic"] = {"y": ys.tolist(), "ratio": dr,
                              **_decade_stats(ys.tolist(), dr, beta)}
    return CheckReport("kernel_bound", max(variations) if variations else math.nan, tolerance,
                       flat_ok and disc_ok, tolerance, meta)


def check_kernel_nonnegativity(t: float, y, cfg: SolverConfig, params: ModelParams,
                               tolerance: float = 1e-4) -> CheckReport:
    """min_x column >= -tolerance * sup and clipped mass < tolerance."""
    col = heat_kernel_column(np.asarray(y, float), t, cfg, params)
    sup = col.sup
    measured = -col.raw_min / sup if sup > 0 else math.inf
    passed = measured <= tolerance and col.clipped_mass < tolerance
    return CheckReport("kernel_nonnegativity", measured, tolerance, bool(passed), tolerance,
                       {"min": col.raw_min, "sup": sup, "clipped_mass": col.clipped_mass,
                        "mass": col.mass, "params": params.as_dict(),
                        "provenance": _grid_prov(cfg, params, t=t, y=list(map(float, y)))})


# --------------------------------------------------------------------------
# Claims 1 and 2, L^r rates, ultracontractivity, Sobolev ratio

def check_claim1_gradient(f: GridField, t_max: float, eps: float, cfg: SolverConfig,
                          params: ModelParams, tolerance: float = 0.05) -> CheckReport:
    """||grad u(t)||_2 / ||grad f||_2 <= e^{t (sigma1 d + sigma2 / 2)} at every step t <= t_max."""
    cfg = replace(cfg, eps_visc=eps)
    s1, s2 = params.require_sigmas()
    omega = s1 * params.d + s2 / 2.0
    series = NormSeries()
    get_solver(cfg, params).evolve(f, t_max, series=series)
    arr = series.as_array()
    t, g = arr[:, 0], arr[:, 4]
    ratio = g / g[0]
    bound = np.exp(omega * t)
    rep = CheckReport.upper_bound("claim1_gradient", ratio, bound, tolerance,
                                  t=t, omega3=omega, sigma1=s1, sigma2=s2,
                                  params=params.as_dict(),
                                  provenance=_grid_prov(cfg, params))
    rep.metadata["max_ratio_over_bound"] = float(np.max(ratio / bound))
    return rep


def _snapshots(f: GridField, t_end: float, cfg: SolverConfig, params: ModelParams):
    snaps = [f.values.copy()]
    get_solver(cfg, params).evolve(f, t_end, callback=lambda now, u: snaps.append(u.copy()))
    return snaps


def check_claim2_cauchy(eps_list, f: GridField, cfg: SolverConfig, params: ModelParams,
                        t_end: float = 1.0) -> CheckReport:
    """sup_t ||u_{eps_i} - u_{eps_{i+1}}||_2 decreases along eps down to the splitting floor.

    All runs share one step (the most restrictive CFL step), so the time
    grids coincide.  The floor is sup_t ||u(dt) - u(dt/2)||_2 for the smallest
    eps, the size of the time-discretisation error itself.
    """
    eps_list = [float(e) for e in eps_list]
    if len(eps_list) < 3 or any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be strictly decreasing with at least 3 entries")
    dt = min(replace(cfg, eps_visc=e, dt=None).resolved_dt(params) for e in eps_list)
    if cfg.dt is not None:
        dt = min(dt, cfg.dt)
    runs = [_snapshots(f, t_end, replace(cfg, eps_visc=e, dt=dt), params) for e in eps_list]
    vol = f.spec.cell_volume
    diffs = []
    for a, b in zip(runs, runs[1:]):
        diffs.append(max(math.sqrt(vol * np.sum((x - y) ** 2)) for x, y in zip(a, b)))
    fine = _snapshots(f, t_end, replace(cfg, eps_visc=eps_list[-1], dt=dt / 2.0), params)
    floor = max(math.sqrt(vol * np.sum((x - y) ** 2)) for x, y in zip(runs[-1], fine[::2]))
    steps_ok = [b < a or b <= floor for a, b in zip(diffs, diffs[1:])]
    passed = bool(all(steps_ok) and all(math.isfinite(v) for v in diffs))
    return CheckReport("claim2_cauchy", diffs, [floor] * len(diffs), passed, 0.0,
                       {"eps_list": eps_list, "splitting_floor": floor, "dt": dt,
                        "strictly_decreasing": all(b < a for a, b in zip(diffs, diffs[1:])),
                        "params": params.as_dict(), "provenance": _grid_prov(cfg, params)})


def check_lr_contraction(r_list, f: GridField, t_max: float, eps: float, cfg: SolverConfig,
                         params: ModelParams, tolerance: float = 0.05) -> CheckReport:
    """||u(t)||_r / ||f||_r against e^{sigma2 t / r} (and 1 for r = inf)."""
    cfg = replace(cfg, eps_visc=eps)
    _, s2 = params.require_sigmas()
    snaps = []
    times = []
    solver = get_solver(cfg, params)
    solver.evolve(f, t_max, callback=lambda now, u: (snaps.append(GridField(f.spec, u)), times.append(now)))
    details, measured, bounds = {}, [], []
    for r in r_list:
        r = float(r)
        base = f.lp_norm(r)
        ratio = np.array([u.lp_norm(r) / base for u in snaps])
        rate = 0.0 if math.isinf(r) else s2 / r
        bound = np.exp(rate * np.array(times))
        details[str(r)] = {"ratio": ratio, "bound": bound}
        measured.append(float(np.max(ratio / bound)))
        bounds.append(1.0)
    passed = bool(all(m <= 1.0 + tolerance for m in measured))
    return CheckReport("lr_contraction", measured, bounds, passed, tolerance,
                       {"r_list": [float(r) for r in r_list], "t": times, "sigma2": s2,
                        "series": details, "params": params.as_dict(),
                        "provenance": _grid_prov(cfg, params)})


def check_ultracontractivity(f: GridField, t_list, r: float, q: float, cfg: SolverConfig,
                             params: ModelParams, slope_tolerance: float = 0.1) -> CheckReport:
    """t^{(d/alpha)(1/r - 1/q)} ||u(t)||_q / ||f||_r stays bounded as t decreases.

    Times below the resolvable floor (3h)^alpha are excluded.  Passes when the
    log-log trend against t is not a growth as t decreases by more than
    ``slope_tolerance``.
    """
    if not 1.0 <= r < q:
        raise ValueError("need 1 <= r < q")
    d, a = params.d, params.alpha
    expo = (d / a) * (1.0 / r - (0.0 if math.isinf(q) else 1.0 / q))
    floor_t = (3.0 * cfg.grid.h) ** a
    ts = sorted(float(t) for t in t_list if t >= floor_t)
    excluded = [float(t) for t in t_list if t < floor_t]
    if len(ts) < 2:
        raise ValueError("fewer than two resolvable times")
    solver = get_solver(cfg, params)
    base = f.lp_norm(r)
    u, now, vals = f, 0.0, []
    for t in ts:
        u = solver.evolve(u, t - now)
        now = t
        vals.append(t ** expo * u.lp_norm(q) / base)
    slope = loglog_slope(ts, vals)
    passed = bool(all(math.isfinite(v) for v in vals) and slope >= -slope_tolerance)
    return CheckReport("ultracontractivity", vals, max(vals), passed, slope_tolerance,
                       {"t": ts, "excluded_t": excluded, "slope_vs_t": slope, "r": r, "q": q,
                        "constant": max(vals), "params": params.as_dict(),
                        "provenance": _grid_prov(cfg, params)})


def sobolev_ratio(u: GridField, cfg: SolverConfig, params: ModelParams) -> float:
    """Re<Lambda^eps u, u> / ||u||^2_{2d/(d-alpha)} with Lambda^eps = symbol - b_eps . grad."""
    solver = get_solver(cfg, params)
    form = apply_symbol(u, params.alpha, cfg.eps_visc).inner(u)
    if solver.active:
        grads = gradient_spectral(u, dealias=False)
        adv = sum(bi * g.values for bi, g in zip(solver.b, grads))
        form -= float(u.spec.cell_volume * np.sum(adv * u.values))
    p = 2.0 * params.d / (params.d - params.alpha)
    return form / u.lp_norm(p) ** 2


def check_sobolev_ratio(fields, cfg: SolverConfig, params: ModelParams) -> CheckReport:
    vals = [sobolev_ratio(u, cfg, params) for u in fields]
    c_s = float(min(vals))
    return CheckReport("sobolev_ratio", c_s, 0.0, bool(c_s > 0), 0.0,
                       {"ratios": vals, "params": params.as_dict(),
                        "provenance": _grid_prov(cfg, params)})


# --------------------------------------------------------------------------
# Lemma on (Lambda^eps)^* psi and the weighted B3 bound

PSI_TABLE_TAU_MAX = 256.0


@lru_cache(maxsize=16)
def _fraclap_psi_remainder(beta: float, alpha: float, d: int):
    """Spline of (-Delta)^{alpha/2} [eta(|x|) - |x|^beta] on [0, PSI_TABLE_TAU_MAX]."""

    def rem(t):
        t = abs(t)
        return float(weight_eta(t, beta)) - t ** beta if t >= 1.0 else 0.0

    taus = np.unique(np.concatenate([
        np.linspace(0.05, 0.9, 6), np.linspace(0.95, 2.2, 30),
        np.geomspace(2.3, PSI_TABLE_TAU_MAX, 26)]))
    vals = [frac_laplacian_radial_point(rem, t, alpha, d, kinks=(1.0, 2.0), growth=beta,
                                        epsrel=1e-7) for t in taus]
    # rem vanishes on the unit ball, so its image is smooth there; extend to 0 evenly
    taus = np.concatenate([[0.0], taus])
    vals = np.concatenate([[vals[0]], vals])
    return interpolate.PchipInterpolator(taus, vals, extrapolate=True)


def fraclap_psi(s: float, r, beta: float, alpha: float, d: int) -> np.ndarray:
    """(-Delta)^{alpha/2} psi_s at radii r > 0 (closed form for the power part)."""
    r = np.asarray(r, dtype=float)
    lam = s ** (-1.0 / alpha)
    tau = lam * r
    rem = _fraclap_psi_remainder(round(beta, 14), alpha, d)
    # psi_s(x) = eta(lam |x|) and (-Delta)^{alpha/2} scales as lam^alpha = 1/s
    return (fraclap_power_exact(beta, tau, alpha, d) + rem(tau)) / s


def lemma_V_terms(eps: float, s: float, beta: float, spec: GridSpec, params: ModelParams) -> dict:
    """Radial profiles of (Lambda^eps)^* psi_s and of V_eps = P + |U| + W on the grid radii.

    c0 is the smallest constant with eps * Delta psi_s <= eps c0 |x|^{beta-2} on
    {0 < |x| <= 4^{1/alpha}}; c is the smallest constant with
    -div[(b_eps - b) psi_s] <= c |b_eps - b| on {1 <= |x| <= 2}.  The sign of
    U_eps is nonpositive, so its magnitude enters V_eps.
    """
    d, a, k = params.d, params.alpha, params.kappa
    radii, inverse = np.unique(spec.radius.ravel(), return_inverse=True)
    counts = np.bincount(inverse)
    pos = radii > 0
    r, cnt = radii[pos], counts[pos]
    lam = s ** (-1.0 / a)
    psi = weight_eta(lam * r, beta)
    dpsi = lam * weight_eta_prime(lam * r, beta)
    lap = laplacian_psi_radial(s, r, beta, d, a)
    if lam * float(r.max()) > PSI_TABLE_TAU_MAX:
        raise ValueError("grid extends beyond the tabulated range of (-Delta)^{alpha/2} psi")
    frac = fraclap_psi(s, r, beta, a, d)
    g_eps = drift_magnitude(r, params, eps)
    div_term = div_drift_radial(r, params, eps) * psi + g_eps * dpsi
    adj = -eps * lap + frac + div_term
    # P_eps
    ball = r <= 4.0 ** (1.0 / a)
    c0 = float(np.max(np.where(ball, lap / r ** (beta - 2.0), -np.inf)))
    c0 = max(c0, 0.0)
    P = np.where(ball, eps * c0 * r ** (beta - 2.0), 0.0)
    # U_eps (<= 0 pointwise); the power carries psi's normalisation s^{-beta/alpha}
    inner = r < CUTOFF_INNER
    U = np.where(inner, k * (d + beta - a) * ((r * r + eps) ** (-a / 2.0) - r ** (-a))
                 * r ** beta * s ** (-beta / a), 0.0)
    # W_eps on the cutoff annulus
    ann = (r >= CUTOFF_INNER) & (r <= CUTOFF_OUTER)
    db = np.abs(drift_magnitude(r, params, eps) - drift_magnitude(r, params, 0.0))
    div_diff = ((div_drift_radial(r, params, eps) - div_drift_radial(r, params, 0.0)) * psi
                + (drift_magnitude(r, params, eps) - drift_magnitude(r, params, 0.0)) * dpsi)
    with np.errstate(divide="ignore", invalid="ignore"):
        cw = np.where(ann & (db > 0), -div_diff / db, -np.inf)
    c_w = max(0.0, float(np.max(cw))) if np.any(ann) else 0.0
    W = np.where(ann, c_w * db, 0.0)
    V = P + np.abs(U) + W
    slack = -(adj + V) / psi
    return {"r": r, "counts": cnt, "psi": psi, "adjoint_psi": adj, "P": P, "U": U, "W": W,
            "V": V, "c0": c0, "c_w": c_w, "c_hat": s * float(np.max(slack)),
            "V_l1": float(spec.cell_volume * np.sum(cnt * V)),
            "U_max": float(np.max(U)), "W_sup": float(np.max(W))}


def check_lemma_V(eps_list, s: float, beta: float, params: ModelParams,
                  grids=(GridSpec(3, 64, 8.0), GridSpec(3, 96, 8.0)),
                  tolerance: float = 0.1) -> CheckReport:
    """||V_eps||_1 strictly decreasing along eps and c-hat stable within ``tolerance``.

    c-hat is the smallest constant with (Lambda^eps)^* psi_s >= -c-hat s^{-1} psi_s - V_eps
    at every grid point other than the origin.
    """
    eps_list = [float(e) for e in eps_list]
    table, c_hats, decreasing = [], [], True
    for spec in grids:
        norms = []
        for eps in eps_list:
            t = lemma_V_terms(eps, s, beta, spec, params)
            table.append({"n": spec.n, "L": spec.L, "eps": eps, "c_hat": t["c_hat"],
                          "V_l1": t["V_l1"], "c0": t["c0"], "c_w": t["c_w"],
                          "U_max": t["U_max"], "W_sup": t["W_sup"]})
            c_hats.append(t["c_hat"])
            norms.append(t["V_l1"])
        decreasing &= all(b < a for a, b in zip(norms, norms[1:]))
    c_arr = np.array(c_hats)
    c_ref = float(np.max(np.abs(c_arr)))
    spread = float((c_arr.max() - c_arr.min()) / c_ref) if c_ref > 0 else 0.0
    u_sign_ok = all(row["U_max"] <= 0.0 for row in table)
    passed = bool(decreasing and spread <= tolerance and u_sign_ok)
    return CheckReport("lemma_V", spread, tolerance, passed, tolerance,
                       {"rows": table, "c_hat": float(c_arr.max()), "V_l1_decreasing": decreasing,
                        "U_nonpositive": u_sign_ok, "s": s, "beta": beta,
                        "params": params.as_dict(),
                        "provenance": {"grids": [(g.n, g.L) for g in grids], "eps_list": eps_list}})


def default_test_profiles(spec: GridSpec, count: int = 10, seed: int = 0) -> list[GridField]:
    """Bounded smooth profiles, several of them sign-changing."""
    rng = np.random.default_rng(seed)
    X, Y, Z = spec.coords
    out = []
    for i in range(count):
        c = rng.uniform(-1.5, 1.5, 3) if i else np.zeros(3)
        w = rng.uniform(0.4, 1.2)
        r2 = (X - c[0]) ** 2 + (Y - c[1]) ** 2 + (Z - c[2]) ** 2
        g = np.exp(-r2 / (2 * w * w))
        if i % 2:
            kvec = rng.uniform(-2.0, 2.0, 3)
            g = g * np.cos(kvec[0] * X + kvec[1] * Y + kvec[2] * Z + rng.uniform(0, np.pi))
        out.append(GridField(spec, g))
    return out


def check_B3_weighted(s_list, profiles, cfg: SolverConfig, params: ModelParams, beta: float,
                      c_hat, t_fracs=(0.5, 1.0), tolerance: float = 0.1) -> CheckReport:
    """||psi_s e^{-t Lambda} g||_1 / ||psi_s g||_1 <= e^{(c-hat/s + sigma2) t} (1 + tolerance).

    The profiles g are bounded, so f = psi_s g vanishes at the origin like
    psi_s and f / psi_s = g is bounded.  ``c_hat`` is a number or a mapping s -> value.
    """
    _, s2 = params.require_sigmas()
    solver = get_solver(cfg, params)
    rows, worst = [], 0.0
    for s in s_list:
        ch = c_hat[s] if isinstance(c_hat, dict) else float(c_hat)
        psi = psi_on_grid(cfg.grid, s, beta, params.alpha)
        for j, g in enumerate(profiles):
            base = (psi * g).l1
            u, now = g, 0.0
            for frac in sorted(t_fracs):
                t = frac * s
                u = solver.evolve(u, t - now)
                now = t
                ratio = (psi * u).l1 / base
                bound = math.exp((max(ch, 0.0) / s + s2) * t)
                rows.append({"s": s, "profile": j, "t": t, "ratio": ratio, "bound": bound})
                worst = max(worst, ratio / bound)
    passed = bool(worst <= 1.0 + tolerance)
    return CheckReport("B3_weighted", worst, 1.0, passed, tolerance,
                       {"rows": rows, "c_hat": c_hat, "sigma2": s2, "params": params.as_dict(),
                        "provenance": _grid_prov(cfg, params)})
