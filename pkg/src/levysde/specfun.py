"""Special functions for the noise-law densities.

gamma/log_gamma, the modified Bessel function of the third kind K_nu, and the
Whittaker W function. Backed by scipy.special; this module pins down domain
checking, pole handling, and the log-space variants the densities need. The
Whittaker function is computed through the confluent hypergeometric U:

    W_{lam,mu}(z) = exp(-z/2) * z^(mu+1/2) * U(mu - lam + 1/2, 1 + 2*mu, z)

All functions are pure and thread-safe.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special as _sp


class SpecialFunctionError(ArithmeticError):
    pass


def gamma(x):
    """Gamma function; poles at non-positive integers raise.

    Negative non-integer arguments are fine (scipy evaluates them via the
    reflection formula internally).
    """
    x_arr = np.asarray(x, dtype=float)
    if np.any((x_arr <= 0) & (x_arr == np.floor(x_arr))):
        raise SpecialFunctionError(f"gamma pole at non-positive integer in {x!r}")
    out = _sp.gamma(x_arr)
    return float(out) if np.isscalar(x) or x_arr.ndim == 0 else out


def log_gamma(x):
    """log|Gamma(x)| for x > 0 (the only case the densities need)."""
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr <= 0):
        raise SpecialFunctionError(f"log_gamma requires x > 0, got {x!r}")
    out = _sp.gammaln(x_arr)
    return float(out) if np.isscalar(x) or x_arr.ndim == 0 else out


def bessel_k(order, x):
    """Modified Bessel function of the third kind K_order(x), x > 0."""
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr <= 0):
        raise SpecialFunctionError(f"bessel_k requires x > 0, got {x!r}")
    out = _sp.kv(order, x_arr)
    return float(out) if np.isscalar(x) and np.isscalar(order) else out


def _log_k_small_arg(order: float, x: float) -> float:
    # K_v(x) = Gamma(v)/2 * (x/2)^(-v) * C(x), C = sum_k prod-term; accurate
    # for x^2/4 << v, which covers every case where kve overflows below
    # v ~ 300 (overflow there forces x tiny)
    q = 0.25 * x * x
    c, total = 1.0, 1.0
    k = 1
    while k < max(2.0, order - 0.5) and k <= 30:
        c *= q / (k * (k - order))
        total += c
        if abs(c) < 1e-17 * abs(total):
            break
        k += 1
    return math.log(0.5) + _sp.gammaln(order) - order * math.log(0.5 * x) + math.log(total)


def log_bessel_k(order, x):
    """log K_order(x), stable for large x (scaled kve) and for the
    large-order/small-argument corner where kve overflows."""
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr <= 0):
        raise SpecialFunctionError(f"log_bessel_k requires x > 0, got {x!r}")
    with np.errstate(over="ignore", divide="ignore"):
        # kve(v, x) = kv(v, x) * exp(x) stays representable far beyond kv's range
        out = np.log(_sp.kve(order, x_arr)) - x_arr
    bad = ~np.isfinite(out)
    if np.any(bad):
        order_b = np.broadcast_to(np.asarray(order, dtype=float), np.shape(out))
        x_b = np.broadcast_to(x_arr, np.shape(out))
        if out.ndim == 0:
            out = np.asarray(_log_k_small_arg(float(order_b), float(x_b)))
        else:
            idx = np.argwhere(bad)
            for i in idx:
                j = tuple(i)
                out[j] = _log_k_small_arg(float(order_b[j]), float(x_b[j]))
    return float(out) if np.isscalar(x) and np.isscalar(order) else out


def whittaker_w(lam: float, mu: float, z):
    """Whittaker function W_{lam,mu}(z) for z > 0 (vectorized in z)."""
    z_arr = np.asarray(z, dtype=float)
    if np.any(z_arr <= 0):
        raise SpecialFunctionError(f"whittaker_w requires z > 0, got {z!r}")
    a = mu - lam + 0.5
    b = 1.0 + 2.0 * mu
    u = _sp.hyperu(a, b, z_arr)
    if not np.all(np.isfinite(u)):
        raise SpecialFunctionError(
            f"whittaker_w failed to converge at lam={lam!r}, mu={mu!r}, z={z!r}"
        )
    out = np.exp(-0.5 * z_arr) * z_arr ** (mu + 0.5) * u
    return float(out) if np.isscalar(z) or z_arr.ndim == 0 else out


def log_whittaker_w(lam: float, mu: float, z):
    """log W_{lam,mu}(z); requires W > 0 (true for the density use cases)."""
    z_arr = np.asarray(z, dtype=float)
    if np.any(z_arr <= 0):
        raise SpecialFunctionError(f"log_whittaker_w requires z > 0, got {z!r}")
    a = mu - lam + 0.5
    b = 1.0 + 2.0 * mu
    u = _sp.hyperu(a, b, z_arr)
    if not np.all(np.isfinite(u)) or np.any(u <= 0):
        raise SpecialFunctionError(
            f"log_whittaker_w failed at lam={lam!r}, mu={mu!r}, z={z!r}"
        )
    out = -0.5 * z_arr + (mu + 0.5) * np.log(z_arr) + np.log(u)
    return float(out) if np.isscalar(z) or z_arr.ndim == 0 else out
