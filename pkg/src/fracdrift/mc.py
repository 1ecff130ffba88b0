"""Monte Carlo for dX = b(X) dt + dL with isotropic alpha-stable L.

Increments are drawn by subordination: a one-sided (alpha/2)-stable variable
S (Kanter's representation) scales a Gaussian, dL = sqrt(2 S) G, which gives
E exp(i xi . dL) = exp(-dt |xi|^alpha).

Particles are processed in fixed-size blocks.  Block k draws from a Philox
stream keyed by (seed, k), so results do not depend on how blocks are
distributed over worker processes.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .model import ModelParams, drift, drift_magnitude
from .specfun import sphere_area

DEFAULT_BLOCK = 1 << 14


def block_rng(seed: int, block: int) -> np.random.Generator:
    """Independent counter-based stream for one particle block."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(block),))
    return np.random.Generator(np.random.Philox(ss))


# --------------------------------------------------------------------------
# samplers

def sample_one_sided_stable(a: float, rng: np.random.Generator, size=None):
    """Positive stable variables with E exp(-lam S) = exp(-lam^a), 0 < a < 1."""
    if not 0.0 < a < 1.0:
        raise ValueError("stability index must lie in (0, 1)")
    u = rng.uniform(0.0, math.pi, size)
    e = rng.standard_exponential(size)
    # Kanter: S = A(U) / E^((1-a)/a) with Zolotarev's function A
    part = np.sin(a * u) / np.sin(u) ** (1.0 / a)
    rest = (np.sin((1.0 - a) * u) / e) ** ((1.0 - a) / a)
    return part * rest


def sample_stable_increment(alpha: float, dt: float, d: int, rng: np.random.Generator, size=None):
    """Isotropic alpha-stable increments with E exp(i xi.dL) = exp(-dt |xi|^alpha).

    Returns shape (size, d), or (d,) when size is None.  alpha = 1 is allowed
    (the subordinator index is then 1/2).
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    if not dt > 0:
        raise ValueError("dt must be positive")
    n = 1 if size is None else int(size)
    s = dt ** (2.0 / alpha) * sample_one_sided_stable(alpha / 2.0, rng, n)
    out = np.sqrt(2.0 * s)[:, None] * rng.standard_normal((n, d))
    return out[0] if size is None else out


def euler_step(x, dt: float, rng: np.random.Generator, params: ModelParams, noise: bool = True):
    """x + b(x) dt + dL for an array of positions (..., d)."""
    x = np.asarray(x, dtype=float)
    out = x + drift(x, params) * dt
    if noise:
        flat = out.reshape(-1, params.d)
        flat = flat + sample_stable_increment(params.alpha, dt, params.d, rng, flat.shape[0])
        out = flat.reshape(x.shape)
    return out


# --------------------------------------------------------------------------
# ensembles

@dataclass(frozen=True)
class MCConfig:
    n_particles: int = 100_000
    dt: float = 0.005
    t_end: float = 0.5
    seed: int = 42
    start: tuple = (1.0, 0.0, 0.0)
    bins: tuple | None = None
    block_size: int = DEFAULT_BLOCK

    def __post_init__(self):
        if self.n_particles < 1:
            raise ValueError("n_particles must be positive")
        if not self.dt > 0 or self.t_end < 0:
            raise ValueError("need dt > 0 and t_end >= 0")
        if self.block_size < 1:
            raise ValueError("block_size must be positive")
        if self.bins is not None and np.any(np.diff(self.bins) <= 0):
            raise ValueError("bins must be strictly increasing")

    def check_drift_step(self, params: ModelParams, limit: float = 0.01):
        """dt * sup|b| <= limit; the drift is bounded, so sup|b| is a grid max."""
        r = np.linspace(0.0, 2.0, 20001)
        bmax = float(np.max(np.abs(drift_magnitude(r, params))))
        if self.dt * bmax > limit:
            raise ValueError(f"dt * sup|b| = {self.dt * bmax:.3g} exceeds {limit}")
        return bmax

    def as_dict(self) -> dict:
        return {"n_particles": self.n_particles, "dt": self.dt, "t_end": self.t_end,
                "seed": self.seed, "start": list(self.start), "block_size": self.block_size,
                "bins": None if self.bins is None else list(self.bins)}


@dataclass
class ParticleEnsemble:
    positions: np.ndarray
    seed: int
    block_size: int
    n_blocks: int
    workers: int
    meta: dict = field(default_factory=dict)

    @property
    def radii(self) -> np.ndarray:
        return np.linalg.norm(self.positions, axis=1)


def _time_grid(t_end: float, dt: float) -> list[float]:
    n = int(math.floor(t_end / dt + 1e-9))
    steps = [dt] * n
    rest = t_end - n * dt
    if rest > 1e-12 * max(1.0, t_end):
        steps.append(rest)
    return steps


def _run_block(args):
    cfg, params, block, count, noise = args
    rng = block_rng(cfg.seed, block)
    x = np.tile(np.asarray(cfg.start, dtype=float), (count, 1))
    for h in _time_grid(cfg.t_end, cfg.dt):
        x = euler_step(x, h, rng, params, noise=noise)
    return x


def simulate_ensemble(cfg: MCConfig, params: ModelParams, workers: int = 1,
                      noise: bool = True) -> ParticleEnsemble:
    """Run n_particles independent Euler trajectories from cfg.start to cfg.t_end."""
    if len(cfg.start) != params.d:
        raise ValueError("start point has the wrong dimension")
    cfg.check_drift_step(params)
    nb = -(-cfg.n_particles // cfg.block_size)
    jobs = []
    for b in range(nb):
        count = min(cfg.block_size, cfg.n_particles - b * cfg.block_size)
        jobs.append((cfg, params, b, count, noise))
    workers = max(1, int(workers))
    if workers == 1 or nb == 1:
        parts = [_run_block(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_block, jobs))
    pos = np.concatenate(parts, axis=0)
    return ParticleEnsemble(pos, cfg.seed, cfg.block_size, nb, workers,
                            meta={"config": cfg.as_dict(), "params": params.as_dict()})


# --------------------------------------------------------------------------
# density estimation

@dataclass
class RadialProfile:
    edges: np.ndarray
    r_mid: np.ndarray
    density: np.ndarray
    stderr: np.ndarray
    counts: np.ndarray
    n_total: int

    @property
    def populated(self) -> np.ndarray:
        return self.counts > 0

    def as_rows(self):
        return list(zip(self.r_mid.tolist(), self.density.tolist(), self.stderr.tolist()))


def shell_volumes(edges, d: int) -> np.ndarray:
    edges = np.asarray(edges, dtype=float)
    return sphere_area(d) * np.diff(edges**d) / d


def radial_density(ensemble_or_radii, bins, d: int = 3) -> RadialProfile:
    """Shell-averaged density count / (N * shell volume) with Poisson errors."""
    if isinstance(ensemble_or_radii, ParticleEnsemble):
        radii = ensemble_or_radii.radii
        d = ensemble_or_radii.positions.shape[1]
    else:
        radii = np.asarray(ensemble_or_radii, dtype=float)
    edges = np.asarray(bins, dtype=float)
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0) or edges[0] < 0:
        raise ValueError("bins must be a strictly increasing array of nonnegative edges")
    counts, _ = np.histogram(radii, bins=edges)
    n = radii.size
    vol = shell_volumes(edges, d)
    dens = counts / (n * vol)
    err = np.sqrt(counts) / (n * vol)
    # geometric midpoints suit log-spaced bins and power-law fits
    if edges[0] > 0:
        mid = np.sqrt(edges[:-1] * edges[1:])
    else:
        mid = 0.5 * (edges[:-1] + edges[1:])
    return RadialProfile(edges, mid, dens, err, counts, n)


@dataclass(frozen=True)
class ExponentFit:
    beta_hat: float
    stderr: float
    n_bins: int
    intercept: float


def fit_vanishing_exponent(profile: RadialProfile, r_window, min_bins: int = 4) -> ExponentFit:
    """Weighted least squares of log density against log r inside r_window.

    Weights are the inverse variances of log density, counts / 1 under
    Poisson noise; empty bins are dropped.  The standard error is inflated
    by sqrt(chi^2 / dof) when the scatter exceeds the Poisson expectation.
    """
    lo, hi = r_window
    sel = (profile.r_mid >= lo) & (profile.r_mid <= hi) & (profile.density > 0) & (profile.stderr > 0)
    if int(sel.sum()) < min_bins:
        raise ValueError(f"only {int(sel.sum())} populated bins inside {r_window}; need {min_bins}")
    x = np.log(profile.r_mid[sel])
    y = np.log(profile.density[sel])
    w = (profile.density[sel] / profile.stderr[sel]) ** 2
    A = np.stack([np.ones_like(x), x], axis=1)
    Aw = A * w[:, None]
    cov = np.linalg.inv(A.T @ Aw)
    coef = cov @ (Aw.T @ y)
    resid = y - A @ coef
    dof = max(1, x.size - 2)
    chi2 = float(np.sum(w * resid**2)) / dof
    se = math.sqrt(cov[1, 1] * max(1.0, chi2))
    return ExponentFit(float(coef[1]), se, int(x.size), float(coef[0]))


# --------------------------------------------------------------------------
# closed forms used as oracles

def cauchy_radial_cdf(R, t: float):
    """P(|X_t| <= R) for the 3-d Cauchy (alpha = 1) process started at 0."""
    R = np.asarray(R, dtype=float)
    return (2.0 / math.pi) * (np.arctan(R / t) - t * R / (t * t + R * R))


def cauchy_density(r, t: float):
    """3-d Cauchy kernel t / (pi^2 (t^2 + r^2)^2)."""
    r = np.asarray(r, dtype=float)
    return t / (math.pi**2 * (t * t + r * r) ** 2)


def cauchy_shell_probability(edges, center, t: float, n_quad: int = 64):
    """Probability that a 3-d Cauchy variable centred at ``center`` lands in each
    shell {e_k <= |y| < e_{k+1}} around the origin.

    Uses the closed-form spherical mean of the Cauchy kernel over |y| = r:
    (1/(4 pi)) int p(|y - c|) dS / r^2 reduces to an elementary integral.
    """
    c = float(np.linalg.norm(center))
    edges = np.asarray(edges, dtype=float)
    if c == 0.0:
        return np.diff(cauchy_radial_cdf(edges, t))
    # P(|Y| < R) = int_0^R 4 pi r^2 M(r) dr with the spherical mean
    # M(r) = 1/(2 r c) int_{|r-c|}^{r+c} p(s) s ds and p(s) s ds integrates in closed form.
    def mean(r):
        def prim(s):
            return -t / (2.0 * math.pi**2 * (t * t + s * s))
        return (prim(r + c) - prim(np.abs(r - c))) / (2.0 * r * c)
    x, wts = np.polynomial.legendre.leggauss(n_quad)
    out = np.empty(edges.size - 1)
    for k in range(edges.size - 1):
        a, b = edges[k], edges[k + 1]
        r = 0.5 * (b - a) * x + 0.5 * (b + a)
        out[k] = 0.5 * (b - a) * np.sum(wts * 4.0 * math.pi * r * r * mean(r))
    return out
