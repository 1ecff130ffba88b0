"""Time stepping for the regularised semigroups on a periodic grid.

The forward generator is  -Lambda^eps u = -(eps|xi|^2 + |xi|^alpha) u + b_eps . grad u
and the adjoint one is    -(Lambda^eps)^* g = -(eps|xi|^2 + |xi|^alpha) g - div(b_eps g).

Each step splits into an exact Fourier-multiplier diffusion and an explicit
advection sub-step with 2/3-rule dealiasing.  The masked advection operators
are exact transposes of each other, so forward and adjoint steps are discrete
adjoints and duality holds to round-off.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .fracops import GridField, GridSpec, grad_l2, symbol
from .model import ModelParams, drift_magnitude, weight_psi_radial

SPLITTINGS = ("strang", "lie")
ADVECTION_SCHEMES = ("rk4", "rk2")


@dataclass(frozen=True)
class SolverConfig:
    """Grid, regularisation and time-step settings for one PDE run.

    ``eps_visc`` is the epsilon of Lambda^eps: it sets both the added
    viscosity and the drift regularisation |x|_eps.  With ``eps_visc = 0`` the
    singular drift is sampled directly (it is bounded, and zero at x = 0).
    ``dt = None`` picks the largest step allowed by the CFL number.
    """

    grid: GridSpec = field(default_factory=GridSpec)
    eps_visc: float = 0.0
    dt: float | None = None
    t_end: float = 1.0
    splitting: str = "strang"
    delta_width: float | None = None
    advection: str = "rk4"
    cfl: float = 0.5

    def __post_init__(self):
        if self.eps_visc < 0:
            raise ValueError("eps_visc must be >= 0")
        if self.splitting not in SPLITTINGS:
            raise ValueError(f"splitting must be one of {SPLITTINGS}")
        if self.advection not in ADVECTION_SCHEMES:
            raise ValueError(f"advection must be one of {ADVECTION_SCHEMES}")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.delta_width is not None and self.delta_width < 2.0 * self.grid.h:
            raise ValueError(f"delta_width {self.delta_width} < 2h = {2 * self.grid.h}")

    @property
    def width(self) -> float:
        return 2.5 * self.grid.h if self.delta_width is None else self.delta_width

    def resolved_dt(self, params: ModelParams) -> float:
        vmax = max_drift_speed(self.grid, params, self.eps_visc)
        limit = self.cfl * self.grid.h / vmax if vmax > 0 else math.inf
        if self.dt is None:
            if math.isinf(limit):
                return min(0.05, self.t_end) if self.t_end > 0 else 0.05
            return limit
        if self.dt > limit * (1 + 1e-12):
            raise ValueError(f"CFL violated: dt*sup|b|/h = {self.dt * vmax / self.grid.h:.3g} > {self.cfl}")
        return self.dt

    def as_dict(self) -> dict:
        return {"d": self.grid.d, "n": self.grid.n, "L": self.grid.L, "eps_visc": self.eps_visc,
                "dt": self.dt, "t_end": self.t_end, "splitting": self.splitting,
                "delta_width": self.width, "advection": self.advection, "cfl": self.cfl}


def max_drift_speed(grid: GridSpec, params: ModelParams, eps: float) -> float:
    return float(np.max(np.abs(drift_magnitude(grid.radius, params, eps))))


@dataclass
class NormSeries:
    """Norm history of a run: one row (t, L1, L2, Linf, gradL2) per step."""

    rows: list = field(default_factory=list)

    def record(self, t: float, u: GridField):
        self.rows.append((t, u.l1, u.l2, u.linf, grad_l2(u)))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.rows, dtype=float).reshape(-1, 5)

    @property
    def columns(self) -> tuple[str, ...]:
        return ("t", "L1", "L2", "Linf", "gradL2")


class GridSolver:
    """Splitting integrator bound to one (SolverConfig, ModelParams) pair."""

    def __init__(self, cfg: SolverConfig, params: ModelParams):
        if cfg.grid.d != params.d:
            raise ValueError("grid and model dimensions differ")
        self.cfg, self.params = cfg, params
        self.spec = cfg.grid
        self.dt = cfg.resolved_dt(params)
        spec = self.spec
        r = spec.radius
        g = drift_magnitude(r, params, cfg.eps_visc)
        with np.errstate(invalid="ignore", divide="ignore"):
            scale = np.where(r > 0, g / np.where(r > 0, r, 1.0), 0.0)
        self.b = [scale * c for c in spec.coords]
        self.sym = symbol(spec, params.alpha, cfg.eps_visc)
        self.mask = spec.dealias_mask
        self._factors = {}
        self.active = params.kappa != 0.0

    def _diffusion(self, u: np.ndarray, dt: float) -> np.ndarray:
        fac = self._factors.get(dt)
        if fac is None:
            fac = self._factors[dt] = np.exp(-dt * self.sym)
        return self.spec.inverse(self.spec.forward(u) * fac)

    def _forward_rhs(self, u):
        spec = self.spec
        c = spec.forward(u) * self.mask
        prod = sum(bi * spec.inverse(1j * k * c) for bi, k in zip(self.b, spec.wavenumbers))
        return spec.inverse(spec.forward(prod) * self.mask)

    def _adjoint_rhs(self, g):
        spec = self.spec
        gm = spec.inverse(spec.forward(g) * self.mask)
        div = sum(1j * k * spec.forward(bi * gm) for bi, k in zip(self.b, spec.wavenumbers))
        return -spec.inverse(div * self.mask)

    def _advect(self, u, dt, adjoint):
        rhs = self._adjoint_rhs if adjoint else self._forward_rhs
        if self.cfg.advection == "rk2":
            k1 = rhs(u)
            return u + dt * rhs(u + 0.5 * dt * k1)
        k1 = rhs(u)
        k2 = rhs(u + 0.5 * dt * k1)
        k3 = rhs(u + 0.5 * dt * k2)
        k4 = rhs(u + dt * k3)
        return u + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)

    def step_values(self, u: np.ndarray, dt: float | None = None, adjoint: bool = False) -> np.ndarray:
        dt = self.dt if dt is None else dt
        if self.cfg.splitting == "strang":
            u = self._diffusion(u, 0.5 * dt)
            if self.active:
                u = self._advect(u, dt, adjoint)
            u = self._diffusion(u, 0.5 * dt)
        elif adjoint:
            # transpose of the forward Lie step: advection first
            if self.active:
                u = self._advect(u, dt, adjoint)
            u = self._diffusion(u, dt)
        else:
            u = self._diffusion(u, dt)
            if self.active:
                u = self._advect(u, dt, adjoint)
        if not np.all(np.isfinite(u)):
            raise FloatingPointError(
                f"non-finite values after a step (dt={dt:.3g}, h={self.spec.h:.3g}, "
                f"eps={self.cfg.eps_visc:g}); reduce dt or refine the grid")
        return u

    def evolve(self, f: GridField, t: float, adjoint: bool = False,
               series: NormSeries | None = None, callback=None) -> GridField:
        if f.spec != self.spec:
            raise ValueError("field lives on a different grid")
        if t < 0:
            raise ValueError("time must be nonnegative")
        u = f.values.copy()
        nfull = int(math.floor(t / self.dt + 1e-9))
        steps = [self.dt] * nfull
        rest = t - nfull * self.dt
        if rest > 1e-12 * max(1.0, t):
            steps.append(rest)
        if adjoint:
            # the transpose of a product reverses its order
            steps.reverse()
        now = 0.0
        if series is not None:
            series.record(now, GridField(self.spec, u))
        for h in steps:
            u = self.step_values(u, h, adjoint)
            now += h
            if series is not None:
                series.record(now, GridField(self.spec, u))
            if callback is not None:
                callback(now, u)
        return GridField(self.spec, u)


_SOLVERS: dict = {}


def get_solver(cfg: SolverConfig, params: ModelParams) -> GridSolver:
    """Cached GridSolver (drift sampling and multipliers are reused)."""
    key = (cfg, params)
    s = _SOLVERS.get(key)
    if s is None:
        if len(_SOLVERS) > 8:
            _SOLVERS.clear()
        s = _SOLVERS[key] = GridSolver(cfg, params)
    return s


def step_forward(u: GridField, cfg: SolverConfig, params: ModelParams) -> GridField:
    """One splitting step of du/dt = -Lambda^eps u."""
    solver = get_solver(cfg, params)
    return GridField(u.spec, solver.step_values(u.values))


def evolve_forward(f: GridField, t: float, cfg: SolverConfig, params: ModelParams,
                   series: NormSeries | None = None, callback=None) -> GridField:
    """e^{-t Lambda^eps} f; optionally records the norm history in ``series``."""
    return get_solver(cfg, params).evolve(f, t, adjoint=False, series=series, callback=callback)


def evolve_adjoint(g: GridField, t: float, cfg: SolverConfig, params: ModelParams,
                   series: NormSeries | None = None, callback=None) -> GridField:
    """e^{-t (Lambda^eps)^*} g (mass conserving)."""
    return get_solver(cfg, params).evolve(g, t, adjoint=True, series=series, callback=callback)


# --------------------------------------------------------------------------
# point masses and kernels

def _periodic_offset(spec: GridSpec, center) -> list[np.ndarray]:
    out = []
    for c, x0 in zip(spec.coords, center):
        dx = c - x0
        out.append(dx - 2.0 * spec.L * np.round(dx / (2.0 * spec.L)))
    return out


def mollified_delta(spec: GridSpec, center, width: float) -> GridField:
    """Periodic Gaussian of standard deviation ``width``, unit grid mass."""
    center = np.asarray(center, dtype=float)
    if center.shape != (spec.d,):
        raise ValueError("center must be a d-vector")
    if np.any(np.abs(center) > spec.L):
        raise ValueError("center outside the grid box")
    r2 = sum(dx * dx for dx in _periodic_offset(spec, center))
    g = np.exp(-0.5 * r2 / width**2)
    return GridField(spec, g / (spec.cell_volume * np.sum(g)))


@dataclass
class KernelSlice:
    """A kernel column or row with clipping bookkeeping."""

    field: GridField
    raw_min: float
    clipped_mass: float
    mass: float

    @property
    def sup(self) -> float:
        return float(np.max(self.field.values))


def _kernel_slice(u: GridField) -> KernelSlice:
    v = u.values
    neg = v < 0
    clipped = float(-u.spec.cell_volume * np.sum(v[neg]))
    return KernelSlice(GridField(u.spec, np.where(neg, 0.0, v)), float(v.min()), clipped, u.integral())


def heat_kernel_column(y, t: float, cfg: SolverConfig, params: ModelParams) -> KernelSlice:
    """x -> e^{-t Lambda}(x, y): the forward semigroup applied to a bump at y.

    Negative undershoot is clipped for reporting and its mass recorded.
    """
    delta = mollified_delta(cfg.grid, y, cfg.width)
    return _kernel_slice(evolve_forward(delta, t, cfg, params))


def heat_kernel_row(x, t: float, cfg: SolverConfig, params: ModelParams) -> KernelSlice:
    """y -> e^{-t Lambda}(x, y): the adjoint (Fokker-Planck) flow from a bump at x."""
    delta = mollified_delta(cfg.grid, x, cfg.width)
    return _kernel_slice(evolve_adjoint(delta, t, cfg, params))


def psi_on_grid(spec: GridSpec, s: float, beta: float, alpha: float) -> GridField:
    return GridField(spec, weight_psi_radial(s, spec.radius, beta, alpha))


@dataclass
class PhiWeight:
    field: GridField
    minimum: float
    floor: float


def phi_weight(n: int, s: float, beta: float, cfg: SolverConfig, params: ModelParams) -> PhiWeight:
    """The regularised weight 1/n + e^{-(Lambda^eps)^*/n} psi_s on the grid.

    ``cfg.eps_visc`` is the epsilon.  Raises if the grid minimum drops to
    1/(2n) or below, which signals unresolved undershoot at psi's kinks.
    """
    if int(n) != n or n < 1:
        raise ValueError("n must be a positive integer")
    if not s > 0:
        raise ValueError("s must be positive")
    psi = psi_on_grid(cfg.grid, s, beta, params.alpha)
    phi = evolve_adjoint(psi, 1.0 / n, cfg, params) + 1.0 / n
    m = float(np.min(phi.values))
    if m <= 0.5 / n:
        raise ValueError(f"phi weight minimum {m:.3g} <= 1/(2n); refine the grid")
    return PhiWeight(phi, m, 1.0 / n)


def with_grid(cfg: SolverConfig, n: int | None = None, L: float | None = None) -> SolverConfig:
    grid = GridSpec(cfg.grid.d, n or cfg.grid.n, L or cfg.grid.L)
    return replace(cfg, grid=grid)
