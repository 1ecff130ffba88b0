"""Problem definition: parameters, the Hardy-type drift, the exponent
equation linking beta and kappa, and the desingularising weights.

The drift is ``b(x) = kappa * chi(|x|) * |x|^(-alpha) * x`` where ``chi`` is a
smooth cutoff equal to 1 on [0, 1] and 0 on [2, inf).  The regularised drift
replaces ``|x|`` by ``|x|_eps = sqrt(|x|^2 + eps)`` in the singular factor.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import integrate, optimize

from .reports import CheckReport
from .specfun import log_gamma, log_gamma_weight, sphere_area

CUTOFF_INNER = 1.0
CUTOFF_OUTER = 2.0


@dataclass(frozen=True)
class ModelParams:
    d: int = 3
    alpha: float = 0.5
    kappa: float = 1.0
    sigma1: float | None = None
    sigma2: float | None = None

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 3:
            raise ValueError(f"dimension must be an integer >= 3, got {self.d}")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not math.isfinite(self.kappa) or self.kappa < 0.0:
            # kappa = 0 is kept for the free-kernel oracles
            raise ValueError(f"kappa must be >= 0 (attracting drift unsupported), got {self.kappa}")

    @property
    def cutoff_inner(self) -> float:
        return CUTOFF_INNER

    @property
    def cutoff_outer(self) -> float:
        return CUTOFF_OUTER

    def with_kappa(self, kappa: float) -> "ModelParams":
        return replace(self, kappa=kappa, sigma1=None, sigma2=None)

    def with_sigma_bounds(self, eps_list=(1e-2, 1e-4, 1e-6), n_radial: int = 4001) -> "ModelParams":
        s1, s2 = sigma_bounds(self, eps_list, n_radial=n_radial)
        return replace(self, sigma1=s1, sigma2=s2)

    def require_sigmas(self) -> tuple[float, float]:
        if self.sigma1 is None or self.sigma2 is None:
            p = self.with_sigma_bounds()
            return p.sigma1, p.sigma2
        return self.sigma1, self.sigma2

    def as_dict(self) -> dict:
        return {"d": self.d, "alpha": self.alpha, "kappa": self.kappa,
                "sigma1": self.sigma1, "sigma2": self.sigma2}


@dataclass(frozen=True)
class BetaSolution:
    beta: float
    residual: float
    gap: float  # alpha - beta, kept separately for precision near the pole
    kappa: float


# --------------------------------------------------------------------------
# cutoff profile

def _bump(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def cutoff(r):
    """Smooth cutoff chi: 1 on [0, 1], 0 on [2, inf), C-infinity in between."""
    r = np.asarray(r, dtype=float)
    a = _bump(CUTOFF_OUTER - r)
    c = _bump(r - CUTOFF_INNER)
    out = np.where(r <= CUTOFF_INNER, 1.0, 0.0)
    mid = (r > CUTOFF_INNER) & (r < CUTOFF_OUTER)
    out[mid] = a[mid] / (a[mid] + c[mid])
    return out if out.ndim else float(out)


def cutoff_prime(r):
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    mid = (r > CUTOFF_INNER) & (r < CUTOFF_OUTER)
    if np.any(mid):
        rm = r[mid]
        u, v = CUTOFF_OUTER - rm, rm - CUTOFF_INNER
        a, c = np.exp(-1.0 / u), np.exp(-1.0 / v)
        out[mid] = -a * c * (1.0 / u**2 + 1.0 / v**2) / (a + c) ** 2
    return out if out.ndim else float(out)


# --------------------------------------------------------------------------
# drift

def _reg_power(r, eps, alpha):
    """|x|_eps^(-alpha); for eps == 0 returns |x|^(-alpha) with 0 at r = 0."""
    r = np.asarray(r, dtype=float)
    if eps > 0.0:
        return (r * r + eps) ** (-alpha / 2.0)
    with np.errstate(divide="ignore"):
        out = np.where(r > 0.0, r ** (-alpha), 0.0)
    return out


def drift_magnitude(r, params: ModelParams, eps: float = 0.0):
    """Signed radial component G(r) of the drift, b(x) = G(|x|) x / |x|."""
    r = np.asarray(r, dtype=float)
    return params.kappa * cutoff(r) * _reg_power(r, eps, params.alpha) * r


def drift_magnitude_prime(r, params: ModelParams, eps: float = 0.0):
    r = np.asarray(r, dtype=float)
    a = params.alpha
    p = _reg_power(r, eps, a)
    if eps > 0.0:
        inner = p - a * r * r * (r * r + eps) ** (-a / 2.0 - 1.0)
    else:
        inner = (1.0 - a) * p
    return params.kappa * (cutoff_prime(r) * p * r + cutoff(r) * inner)


def _vector_field(x, g_of_r):
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(r > 0.0, g_of_r(r) / np.where(r > 0.0, r, 1.0), 0.0)
    return x * scale[..., None]


def drift(x, params: ModelParams):
    """b(x) = kappa chi(|x|) |x|^(-alpha) x; x has shape (..., d)."""
    return _vector_field(x, lambda r: drift_magnitude(r, params, 0.0))


def drift_eps(x, eps: float, params: ModelParams):
    """Regularised drift b_eps with |x| -> sqrt(|x|^2 + eps) in the singular factor."""
    if not eps > 0.0:
        raise ValueError("eps must be positive")
    return _vector_field(x, lambda r: drift_magnitude(r, params, eps))


def div_drift_radial(r, params: ModelParams, eps: float = 0.0):
    """div b_eps as a function of |x| (eps = 0 gives div b away from 0)."""
    r = np.asarray(r, dtype=float)
    a, k, d = params.alpha, params.kappa, params.d
    p = _reg_power(r, eps, a)
    if eps > 0.0:
        core = d * p - a * (r * r + eps) ** (-a / 2.0 - 1.0) * r * r
    else:
        core = (d - a) * p
    return k * cutoff(r) * core + k * cutoff_prime(r) * p * r


def div_drift_eps(x, eps: float, params: ModelParams):
    if not eps > 0.0:
        raise ValueError("eps must be positive")
    r = np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
    return div_drift_radial(r, params, eps)


def sigma_bounds(params: ModelParams, eps_list, n_radial: int = 4001, pad: float = 0.10):
    """Measured (sigma1, sigma2) over 1 <= |x| <= 2 and the given eps values.

    sigma1 bounds |d_i b_eps| (Euclidean norm of the i-th column of the
    Jacobian); for a radial field that is max(|G'|, |G|/r).  sigma2 bounds
    |div b_eps|.  Both vanish for |x| >= 2.  A 10% pad is applied.
    """
    eps_list = list(eps_list)
    if not eps_list:
        raise ValueError("eps_list must be nonempty")
    r = np.linspace(CUTOFF_INNER, CUTOFF_OUTER, n_radial)
    s1 = s2 = 0.0
    for eps in eps_list:
        g = drift_magnitude(r, params, eps)
        gp = drift_magnitude_prime(r, params, eps)
        s1 = max(s1, float(np.max(np.maximum(np.abs(gp), np.abs(g) / r))))
        s2 = max(s2, float(np.max(np.abs(div_drift_radial(r, params, eps)))))
    return (1.0 + pad) * s1, (1.0 + pad) * s2


# --------------------------------------------------------------------------
# exponent equation

def _log_kappa(beta: float, gap: float, d: int, alpha: float) -> float:
    # gap = alpha - beta, supplied separately so small gaps keep full precision
    s_top = d + beta - 2.0
    s_bot = d + beta - alpha
    log_gw_top = log_gamma_weight(s_top, d)
    log_gw_bot = (s_bot * math.log(2.0) + 0.5 * d * math.log(math.pi)
                  + log_gamma(s_bot / 2.0) - log_gamma(gap / 2.0))
    return (math.log(beta) + math.log(s_top) - math.log(s_bot)
            + log_gw_top - log_gw_bot)


def _check_beta(beta, alpha):
    if not 0.0 < beta < alpha:
        raise ValueError(f"beta must lie in (0, alpha={alpha}), got {beta}")


def kappa_of_beta(beta, params: ModelParams):
    """kappa = beta (d+beta-2)/(d+beta-alpha) * gamma(d+beta-2)/gamma(d+beta-alpha)."""
    if np.ndim(beta):
        return np.array([kappa_of_beta(float(b), params) for b in np.ravel(beta)]).reshape(np.shape(beta))
    _check_beta(beta, params.alpha)
    return math.exp(_log_kappa(beta, params.alpha - beta, params.d, params.alpha))


def kappa_of_gap(gap: float, params: ModelParams) -> float:
    """kappa as a function of alpha - beta; accurate for tiny gaps."""
    if not 0.0 < gap < params.alpha:
        raise ValueError("gap must lie in (0, alpha)")
    return math.exp(_log_kappa(params.alpha - gap, gap, params.d, params.alpha))


def gap_asymptote(kappa: float, params: ModelParams) -> float:
    """Leading-order alpha - beta for large kappa, using Gamma(z) ~ 1/z at 0."""
    d, a = params.d, params.alpha
    s_top, s_bot = d + a - 2.0, float(d)
    log_pref = (math.log(a) + math.log(s_top) - math.log(s_bot) + log_gamma_weight(s_top, d)
                - (s_bot * math.log(2.0) + 0.5 * d * math.log(math.pi) + log_gamma(s_bot / 2.0)))
    # kappa ~ exp(log_pref) * Gamma(gap/2) ~ exp(log_pref) * 2 / gap
    return 2.0 * math.exp(log_pref) / kappa


def beta_of_kappa(kappa: float, params: ModelParams, lower_gap: float = 1e-12) -> BetaSolution:
    """Solve the exponent equation for beta in (0, alpha).

    The root is bracketed in the variable gap = alpha - beta on log scale and
    refined with Brent's method applied to log kappa(gap) - log kappa.
    """
    if not (math.isfinite(kappa) and kappa > 0.0):
        raise ValueError(f"kappa must be positive, got {kappa}")
    d, a = params.d, params.alpha
    log_target = math.log(kappa)

    def f(log_gap):
        gap = math.exp(log_gap)
        return _log_kappa(a - gap, gap, d, a) - log_target

    lo, hi = math.log(lower_gap), math.log(a * (1.0 - 1e-12))
    while f(lo) < 0.0:  # kappa beyond the default bracket
        lo -= 5.0
        if lo < -700.0:
            raise ValueError(f"kappa={kappa} too large to bracket")
    if f(hi) > 0.0:
        # beta below 1e-12 * alpha; kappa is linear in beta there
        beta = kappa / math.exp(_log_kappa(a * 1e-12, a * (1 - 1e-12), d, a)) * a * 1e-12
        gap = a - beta
    else:
        log_gap = optimize.brentq(f, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=500)
        gap = math.exp(log_gap)
        beta = a - gap
    kap = math.exp(_log_kappa(beta, gap, d, a))
    return BetaSolution(beta=beta, residual=abs(kap - kappa), gap=gap, kappa=kappa)


# --------------------------------------------------------------------------
# weights

def weight_eta(tau, beta: float):
    """Piecewise C^1 profile: tau^beta on [0,1), quadratic on [1,2), 1 + beta/2 after."""
    tau = np.asarray(tau, dtype=float)
    out = np.where(
        tau < 1.0,
        np.abs(tau) ** beta,
        np.where(tau < 2.0, beta * tau * (2.0 - tau / 2.0) + 1.0 - 1.5 * beta, 1.0 + beta / 2.0),
    )
    return out if out.ndim else float(out)


def weight_eta_prime(tau, beta: float):
    tau = np.asarray(tau, dtype=float)
    with np.errstate(divide="ignore"):
        inner = np.where(tau > 0.0, beta * np.abs(tau) ** (beta - 1.0), np.inf)
    out = np.where(tau < 1.0, inner, np.where(tau < 2.0, beta * (2.0 - tau), 0.0))
    return out if out.ndim else float(out)


def weight_eta_second(tau, beta: float):
    tau = np.asarray(tau, dtype=float)
    with np.errstate(divide="ignore"):
        inner = np.where(tau > 0.0, beta * (beta - 1.0) * np.abs(tau) ** (beta - 2.0), -np.inf)
    out = np.where(tau < 1.0, inner, np.where(tau < 2.0, -beta, 0.0))
    return out if out.ndim else float(out)


def weight_psi_radial(t: float, r, beta: float, alpha: float):
    if not t > 0.0:
        raise ValueError("time scale must be positive")
    return weight_eta(t ** (-1.0 / alpha) * np.asarray(r, dtype=float), beta)


def weight_psi(t: float, y, beta: float, params: ModelParams):
    """psi_t(y) = eta(t^(-1/alpha) |y|); y has shape (..., d)."""
    r = np.linalg.norm(np.asarray(y, dtype=float), axis=-1)
    return weight_psi_radial(t, r, beta, params.alpha)


def laplacian_psi_radial(t: float, r, beta: float, d: int, alpha: float):
    """Delta psi_t as a function of |x| > 0 (distributional jumps ignored: eta is C^1)."""
    r = np.asarray(r, dtype=float)
    lam = t ** (-1.0 / alpha)
    tau = lam * r
    return lam**2 * weight_eta_second(tau, beta) + (d - 1) * lam * weight_eta_prime(tau, beta) / r


@dataclass(frozen=True)
class WeightSpec:
    s: float
    beta: float
    d: int
    alpha: float

    def __post_init__(self):
        if not self.s > 0.0:
            raise ValueError("s must be positive")
        if not 0.0 < self.beta < self.alpha:
            raise ValueError("beta must lie in (0, alpha)")

    @property
    def theta(self) -> float:
        w = (2.0 - self.alpha) * self.d
        return w / (w + 8.0 * self.beta)

    @property
    def q_prime(self) -> float:
        return 2.0 / (1.0 - self.theta)

    @property
    def j_prime(self) -> float:
        return self.d / self.alpha

    @property
    def omega_ball_radius(self) -> float:
        return self.s ** (1.0 / self.alpha)

    @classmethod
    def for_params(cls, s: float, beta: float, params: ModelParams) -> "WeightSpec":
        return cls(s=s, beta=beta, d=params.d, alpha=params.alpha)


def weight_norm_on_ball(s: float, spec: WeightSpec) -> float:
    """|| psi_s^(-theta) ||_{L^{q'}(Omega^s)} by radial quadrature."""
    p = spec.theta * spec.beta * spec.q_prime  # psi^(-theta q') ~ r^(-p)
    radius = s ** (1.0 / spec.alpha)
    power = spec.d - 1.0 - p

    def smooth_part(r):
        # integrand divided by the algebraic weight r^power handled by QAWS
        psi = weight_psi_radial(s, r, spec.beta, spec.alpha)
        return psi ** (-spec.theta * spec.q_prime) * r ** (spec.d - 1.0) / r**power if r > 0 else \
            s ** (spec.beta * spec.theta * spec.q_prime / spec.alpha)

    val, _ = integrate.quad(smooth_part, 0.0, radius, weight="alg", wvar=(power, 0.0),
                            epsabs=0.0, epsrel=1e-13, limit=200)
    return (sphere_area(spec.d) * val) ** (1.0 / spec.q_prime)


def check_B22_B23(spec: WeightSpec, params: ModelParams, s_grid=None, tolerance: float = 1e-3) -> CheckReport:
    """Audit the two weight conditions used by the weighted Nash estimate.

    (B22): sup of psi_s^(-theta) off the ball of radius s^(1/alpha); exactly 1.
    (B23): the s-exponent of ||psi_s^(-theta)||_{q'} over the ball, fitted
    log-log over ``s_grid``, compared with j'/q'.
    """
    p = spec.theta * spec.beta * spec.q_prime
    meta = {"theta": spec.theta, "q_prime": spec.q_prime, "j_prime": spec.j_prime,
            "theta_beta_q_prime": p, "params": params.as_dict()}
    if p >= spec.d:
        return CheckReport("B22_B23", float("nan"), spec.j_prime / spec.q_prime, False, tolerance,
                           dict(meta, reason="psi^(-theta) not L^q' integrable"))
    if s_grid is None:
        s_grid = np.logspace(-3, math.log10(2.0), 13)
    s_grid = np.asarray(s_grid, dtype=float)
    norms = np.array([weight_norm_on_ball(s, spec) for s in s_grid])
    slope, intercept = np.polyfit(np.log(s_grid), np.log(norms), 1)
    target = spec.j_prime / spec.q_prime
    # off the ball eta(tau) >= 1 for tau >= 1, so psi^(-theta) <= 1 with equality on the sphere
    c2 = 1.0
    c3 = float(np.max(norms / s_grid**target))
    deviation = abs(slope - target)
    meta.update(c2=c2, c3=c3, fitted_exponent=slope, s_grid=s_grid, norms=norms,
                norm_at_s=weight_norm_on_ball(spec.s, spec))
    return CheckReport("B22_B23", float(slope), target, bool(deviation <= tolerance and c2 <= 1.0),
                       tolerance, meta)
