"""Log-Gamma and the Riesz normalising weight gamma(s).

All evaluation happens in log space so that ratios such as
Gamma(s/2) / Gamma((d - s)/2) stay finite when s approaches d.
"""
from __future__ import annotations

import math

import numpy as np

# Godfrey's coefficients, g = 607/128, 15 terms.
_LANCZOS_G = 607.0 / 128.0
_LANCZOS_COEF = np.array([
    0.99999999999999709182,
    57.156235665862923517,
    -59.597960355475491248,
    14.136097974741747174,
    -0.49191381609762019978,
    0.33994649984811888699e-4,
    0.46523628927048575665e-4,
    -0.98374475304879564677e-4,
    0.15808870322491248884e-3,
    -0.21026444172410488319e-3,
    0.21743961811521264320e-3,
    -0.16431810653676389022e-3,
    0.84418223983852743293e-4,
    -0.26190838401581408670e-4,
    0.36899182659531622704e-5,
])
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


def _lanczos_log(x):
    # valid for x >= 0.5
    z = x - 1.0
    series = np.full_like(z, _LANCZOS_COEF[0])
    for k in range(1, len(_LANCZOS_COEF)):
        series = series + _LANCZOS_COEF[k] / (z + k)
    t = z + _LANCZOS_G + 0.5
    return _HALF_LOG_2PI + (z + 0.5) * np.log(t) - t + np.log(series)


def log_gamma(x):
    """Return ln Gamma(x) for positive finite ``x`` (scalar or array).

    Uses a Lanczos approximation on [0.5, inf) and the reflection formula
    below 0.5.
    """
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0):
        raise ValueError(f"log_gamma requires positive finite arguments, got {x!r}")
    out = np.empty_like(arr)
    big = arr >= 0.5
    out[big] = _lanczos_log(arr[big])
    small = ~big
    if np.any(small):
        xs = arr[small]
        out[small] = (math.log(math.pi) - np.log(np.sin(math.pi * xs))
                      - _lanczos_log(1.0 - xs))
    if np.ndim(x) == 0:
        return float(out)
    return out


def gamma_abs_negative(x: float) -> float:
    """|Gamma(x)| for x in (-1, 0), via Gamma(x) = Gamma(x + 1) / x."""
    if not -1.0 < x < 0.0:
        raise ValueError("gamma_abs_negative needs x in (-1, 0)")
    return math.exp(log_gamma(x + 1.0)) / abs(x)


def log_gamma_weight(s, d: int):
    """ln gamma(s) with gamma(s) = 2^s pi^(d/2) Gamma(s/2) / Gamma((d-s)/2)."""
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr <= 0.0) or np.any(s_arr >= d):
        raise ValueError(f"gamma weight needs 0 < s < d={d}, got {s!r}")
    out = (s_arr * math.log(2.0) + 0.5 * d * math.log(math.pi)
           + log_gamma(s_arr / 2.0) - log_gamma((d - s_arr) / 2.0))
    return float(out) if np.ndim(s) == 0 else out


def gamma_weight(s, d: int):
    """The Riesz-potential normaliser gamma(s) for 0 < s < d."""
    if int(d) != d or d < 1:
        raise ValueError("d must be a positive integer")
    return np.exp(log_gamma_weight(s, d)) if np.ndim(s) else math.exp(log_gamma_weight(s, d))


def fraclap_constant(d: int, alpha: float) -> float:
    """C(d, alpha) = 2^alpha Gamma((d+alpha)/2) / (pi^(d/2) |Gamma(-alpha/2)|).

    Normalises the hypersingular integral so that its symbol is |xi|^alpha.
    """
    if not 0.0 < alpha < 2.0:
        raise ValueError("alpha must lie in (0, 2)")
    log_c = (alpha * math.log(2.0) + log_gamma((d + alpha) / 2.0)
             - 0.5 * d * math.log(math.pi))
    return math.exp(log_c) / gamma_abs_negative(-alpha / 2.0)


def sphere_area(d: int) -> float:
    """Surface measure of the unit sphere S^{d-1}."""
    return 2.0 * math.pi ** (d / 2.0) / math.exp(log_gamma(d / 2.0))
