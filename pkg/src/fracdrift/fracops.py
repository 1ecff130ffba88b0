"""Nonlocal operator kernels.

Two families live here:

* pointwise evaluation of (-Delta)^(alpha/2) and Riesz potentials of radial
  functions by quadrature over spherical means (no grid involved), and
* Fourier-multiplier operators on a periodic uniform grid.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft
from scipy import integrate

from .model import ModelParams
from .specfun import fraclap_constant, gamma_weight, log_gamma, sphere_area

_QUAD = dict(limit=200, epsabs=0.0)


def _quad(*args, **kw):
    # accuracy is verified against closed forms; roundoff warnings are noise
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        return integrate.quad(*args, **kw)


# --------------------------------------------------------------------------
# radial quadrature

def _mean_constant(d: int) -> float:
    # normalises int_0^pi sin^(d-2) to one
    return math.exp(log_gamma(d / 2.0) - log_gamma((d - 1) / 2.0)) / math.sqrt(math.pi)


def spherical_mean(f, r: float, rho: float, d: int, kinks=(), epsrel: float = 1e-12) -> float:
    """Average of the radial function f over the sphere |z - x| = rho, |x| = r.

    Substituting s = |x + z| turns the angular integral into
    c_d/(r rho) * int_{|r-rho|}^{r+rho} f(s) s (1 - c(s)^2)^((d-3)/2) ds.
    """
    lo, hi = abs(r - rho), r + rho
    pts = [k for k in kinks if lo < k < hi]
    cd = _mean_constant(d)
    if d == 3:
        def g(s):
            return s * float(f(s))
    else:
        e = (d - 3) / 2.0

        def g(s):
            c = (s * s - r * r - rho * rho) / (2.0 * r * rho)
            return s * float(f(s)) * max(0.0, 1.0 - c * c) ** e
    val, _ = _quad(g, lo, hi, points=pts or None, epsrel=epsrel, **_QUAD)
    return cd * val / (r * rho)


def radial_laplacian_fd(f, r: float, d: int, step: float | None = None) -> float:
    h = step if step is not None else 1e-3 * r
    f0, fp, fm = float(f(r)), float(f(r + h)), float(f(r - h))
    f2p, f2m = float(f(r + 2 * h)), float(f(r - 2 * h))
    d1 = (8.0 * (fp - fm) - (f2p - f2m)) / (12.0 * h)
    d2 = (16.0 * (fp + fm) - (f2p + f2m) - 30.0 * f0) / (12.0 * h * h)
    return d2 + (d - 1) * d1 / r


def frac_laplacian_radial_point(f, r: float, alpha: float, d: int, kinks=(),
                                delta: float | None = None, epsrel: float = 1e-10,
                                growth: float = 0.0) -> float:
    """(-Delta)^(alpha/2) f at a point with |x| = r, for radial f.

    Uses the symmetrised hypersingular integral written through spherical
    means M(rho):  -C(d, alpha) |S^{d-1}| int_0^inf (M(rho) - f(r)) rho^(-1-alpha) drho.
    ``kinks`` lists radii where f is not smooth (the origin is always added);
    ``growth`` is the power-growth exponent of f at infinity.
    """
    if not r > 0.0:
        raise ValueError("radius must be positive")
    if growth >= alpha:
        raise ValueError(f"growth {growth} >= alpha {alpha}: hypersingular integral diverges")
    kinks = tuple(sorted(set([0.0, *kinks])))
    f0 = float(f(r))
    if delta is None:
        delta = min(0.1, r / 2.0)
    # second-order Taylor remainder on a tiny ball, quadrature outside it
    taylor_radius = 1e-3 * min(delta, 1.0)
    lap = radial_laplacian_fd(f, r, d, step=min(1e-3 * r, 0.25 * taylor_radius * 10))
    inner = lap / (2.0 * d) * taylor_radius ** (2.0 - alpha) / (2.0 - alpha)

    def integrand(rho):
        return (spherical_mean(f, r, rho, d, kinks) - f0) * rho ** (-1.0 - alpha)

    brk = {delta, r}
    for k in kinks:
        brk.update({abs(r - k), r + k})
    far = 4.0 * max(brk | {1.0})
    edges = sorted(b for b in brk if taylor_radius < b < far)
    edges = [taylor_radius] + [e for e in edges if e > taylor_radius] + [far]
    total = inner
    for a, b in zip(edges[:-1], edges[1:]):
        if b > a:
            val, _ = _quad(integrand, a, b, epsrel=epsrel, **_QUAD)
            total += val
    tail, _ = _quad(integrand, far, np.inf, epsrel=epsrel, **_QUAD)
    total += tail
    return -fraclap_constant(d, alpha) * sphere_area(d) * total


def _kernel_sphere_mean(r: float, rho: float, nu: float, d: int) -> float:
    """Mean of |x - y|^(nu - d) over |y| = rho with |x| = r."""
    if d == 3:
        if abs(nu - 1.0) < 1e-14:
            return (math.log(r + rho) - math.log(abs(r - rho))) / (2.0 * r * rho)
        return ((r + rho) ** (nu - 1.0) - abs(r - rho) ** (nu - 1.0)) / (2.0 * r * rho * (nu - 1.0))
    cd = _mean_constant(d)

    def g(th):
        return (r * r + rho * rho - 2.0 * r * rho * math.cos(th)) ** ((nu - d) / 2.0) * math.sin(th) ** (d - 2)
    val, _ = _quad(g, 0.0, math.pi, epsrel=1e-12, **_QUAD)
    return cd * val


def riesz_potential_radial(f, nu: float, r: float, d: int, kinks=(), epsrel: float = 1e-10,
                           decay: float | None = None) -> float:
    """I_nu f(x) = gamma(nu)^(-1) int f(y) |x - y|^(nu - d) dy at |x| = r, radial f.

    ``decay`` is the power p with |f(rho)| <~ rho^(-p) at infinity; it is used
    only to reject divergent integrals (p must exceed nu).
    """
    if not 0.0 < nu < d:
        raise ValueError("nu must lie in (0, d)")
    if decay is not None and decay <= nu:
        raise ValueError("Riesz integral diverges at infinity")

    def integrand(rho):
        if rho == 0.0:
            return 0.0
        return float(f(rho)) * rho ** (d - 1) * _kernel_sphere_mean(r, rho, nu, d)

    edges = sorted({0.0, r, 2.0 * r, *[k for k in kinks if k > 0]})
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, _ = _quad(integrand, a, b, epsrel=epsrel, **_QUAD)
        total += val
    val, _ = _quad(integrand, edges[-1], np.inf, epsrel=epsrel, **_QUAD)
    total += val
    return sphere_area(d) * total / gamma_weight(nu, d)


def fraclap_power_exact(beta: float, r, alpha: float, d: int):
    """Closed form of (-Delta)^(alpha/2) |x|^beta for -d < beta < alpha."""
    lg = (alpha * math.log(2.0) + log_gamma((d + beta) / 2.0) + log_gamma((alpha - beta) / 2.0)
          - log_gamma((d + beta - alpha) / 2.0))
    g_neg = math.exp(log_gamma(1.0 - beta / 2.0)) / (-beta / 2.0)  # Gamma(-beta/2)
    return math.exp(lg) / g_neg * np.asarray(r, dtype=float) ** (beta - alpha)


def lyapunov_residual(beta: float, kappa: float, r: float, params: ModelParams) -> float:
    """[(-Delta)^(alpha/2) + div(kappa |x|^(-alpha) x .)] |x|^beta at |x| = r.

    The fractional part is computed by quadrature; the divergence term
    kappa (d + beta - alpha) r^(beta - alpha) is exact.
    """
    if not 0.0 < beta < params.alpha:
        raise ValueError("beta must lie in (0, alpha)")
    frac = frac_laplacian_radial_point(lambda s: abs(s) ** beta, r, params.alpha, params.d,
                                       growth=beta)
    return frac + kappa * (params.d + beta - params.alpha) * r ** (beta - params.alpha)


# --------------------------------------------------------------------------
# periodic grids

@dataclass(frozen=True)
class GridSpec:
    d: int = 3
    n: int = 64
    L: float = 8.0

    def __post_init__(self):
        if self.n % 2 or self.n < 16:
            raise ValueError("n_per_axis must be even and >= 16")
        if not self.L > 0:
            raise ValueError("half width must be positive")

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def cell_volume(self) -> float:
        return self.h ** self.d

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.L + self.h * np.arange(self.n)

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        """Broadcastable coordinate arrays, one per axis."""
        out = []
        for i in range(self.d):
            shape = [1] * self.d
            shape[i] = self.n
            out.append(self.axis.reshape(shape))
        return tuple(out)

    @cached_property
    def radius(self) -> np.ndarray:
        return np.sqrt(sum(c * c for c in self.coords))

    def points(self) -> np.ndarray:
        """All grid points, shape shape + (d,)."""
        return np.stack(np.broadcast_arrays(*self.coords), axis=-1)

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        """Broadcastable wavenumbers for the rfftn layout (last axis halved)."""
        full = 2.0 * np.pi * sfft.fftfreq(self.n, d=self.h)
        half = 2.0 * np.pi * sfft.rfftfreq(self.n, d=self.h)
        out = []
        for i in range(self.d):
            shape = [1] * self.d
            k = half if i == self.d - 1 else full
            shape[i] = k.size
            out.append(k.reshape(shape))
        return tuple(out)

    @cached_property
    def kabs(self) -> np.ndarray:
        return np.sqrt(sum(k * k for k in self.wavenumbers))

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        kmax = np.pi / self.h
        mask = np.ones(self.kabs.shape, dtype=bool)
        for k in self.wavenumbers:
            mask = mask & (np.abs(k) < (2.0 / 3.0) * kmax)
        return mask

    def forward(self, values):
        return sfft.rfftn(values)

    def inverse(self, coeffs):
        return sfft.irfftn(coeffs, s=self.shape)


@dataclass
class GridField:
    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.spec.shape:
            raise ValueError(f"values shape {self.values.shape} != grid shape {self.spec.shape}")

    def lp_norm(self, p: float) -> float:
        if math.isinf(p):
            return float(np.max(np.abs(self.values)))
        return float((self.spec.cell_volume * np.sum(np.abs(self.values) ** p)) ** (1.0 / p))

    @property
    def l1(self) -> float:
        return self.lp_norm(1.0)

    @property
    def l2(self) -> float:
        return self.lp_norm(2.0)

    @property
    def linf(self) -> float:
        return self.lp_norm(math.inf)

    def integral(self) -> float:
        return float(self.spec.cell_volume * np.sum(self.values))

    def inner(self, other: "GridField") -> float:
        return float(self.spec.cell_volume * np.sum(self.values * other.values))

    def copy(self) -> "GridField":
        return GridField(self.spec, self.values.copy())

    def __add__(self, other):
        v = other.values if isinstance(other, GridField) else other
        return GridField(self.spec, self.values + v)

    def __sub__(self, other):
        v = other.values if isinstance(other, GridField) else other
        return GridField(self.spec, self.values - v)

    def __mul__(self, other):
        v = other.values if isinstance(other, GridField) else other
        return GridField(self.spec, self.values * v)

    __rmul__ = __mul__


def symbol(spec: GridSpec, alpha: float, eps_visc: float = 0.0) -> np.ndarray:
    k = spec.kabs
    return k**alpha + eps_visc * k * k


def apply_symbol(field: GridField, alpha: float, eps_visc: float = 0.0) -> GridField:
    """Apply the multiplier |xi|^alpha + eps |xi|^2."""
    spec = field.spec
    coeffs = spec.forward(field.values) * symbol(spec, alpha, eps_visc)
    return GridField(spec, spec.inverse(coeffs))


def gradient_spectral(field: GridField, dealias: bool = True) -> list[GridField]:
    spec = field.spec
    coeffs = spec.forward(field.values)
    if dealias:
        coeffs = coeffs * spec.dealias_mask
    return [GridField(spec, spec.inverse(1j * k * coeffs)) for k in spec.wavenumbers]


def divergence_spectral(components, spec: GridSpec, dealias: bool = True) -> GridField:
    total = 0.0
    for k, comp in zip(spec.wavenumbers, components):
        total = total + 1j * k * spec.forward(comp.values if isinstance(comp, GridField) else comp)
    if dealias:
        total = total * spec.dealias_mask
    return GridField(spec, spec.inverse(total))


def grad_l2(field: GridField) -> float:
    """||grad u||_2 via Parseval (no dealiasing)."""
    spec = field.spec
    c = spec.forward(field.values)
    weights = np.full(c.shape[-1], 2.0)
    weights[0] = 1.0
    if spec.n % 2 == 0:
        weights[-1] = 1.0
    energy = np.sum(weights * spec.kabs**2 * np.abs(c) ** 2)
    return float(math.sqrt(energy * spec.cell_volume / spec.n**spec.d))
