"""Special functions used by the kernel convolutions.

Thin, contract-checked wrappers: half-integer Bessel K orders use their
exponential-times-polynomial closed form, everything else defers to scipy.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special as _sp

INV_E = math.exp(-1.0)


def erf(x):
    """Error function, elementwise."""
    return _sp.erf(x)


def erfc(x):
    """Complementary error function; keeps precision where ``1 - erf`` cancels."""
    return _sp.erfc(x)


def _is_half_integer(order: float) -> bool:
    return abs(order - math.floor(order) - 0.5) < 1e-12


def _k_half_integer(n: int, z):
    # K_{n+1/2}(z) = sqrt(pi / 2z) e^{-z} sum_k (n+k)! / (k! (n-k)! (2z)^k)
    z = np.asarray(z, dtype=float)
    total = np.zeros_like(z)
    for k in range(n + 1):
        coef = math.factorial(n + k) / (math.factorial(k) * math.factorial(n - k))
        total = total + coef / (2.0 * z) ** k
    return np.sqrt(np.pi / (2.0 * z)) * np.exp(-z) * total


def bessel_k(order: float, z):
    """Modified Bessel function of the second kind ``K_order(z)``.

    ``order`` must be a non-negative integer or half-integer and ``z > 0``.
    """
    if order < 0 or not (float(order).is_integer() or _is_half_integer(order)):
        raise ValueError(f"unsupported Bessel order {order!r}")
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0):
        raise ValueError("bessel_k requires z > 0")
    if _is_half_integer(order):
        out = _k_half_integer(int(math.floor(order)), z)
    else:
        out = _sp.kv(order, z)
    return out if out.ndim else float(out)


def lambert_w0(x):
    """Principal branch of the Lambert W function, for ``x >= -1/e``."""
    arr = np.asarray(x, dtype=float)
    # tolerate the rounding of -1/e itself
    if np.any(arr < -INV_E - 1e-15):
        raise ValueError("lambert_w0 is undefined below -1/e")
    arr = np.maximum(arr, -INV_E)
    w = _sp.lambertw(arr, 0).real
    w = np.where(arr <= -INV_E, -1.0, w)  # scipy returns nan at the branch point itself
    # one Halley step tightens the residual near the branch point
    ew = np.exp(w)
    f = w * ew - arr
    denom = ew * (w + 1.0) - (w + 2.0) * f / (2.0 * w + 2.0 + 1e-300)
    step = np.where(np.abs(w + 1.0) > 1e-8, f / np.where(denom == 0, 1.0, denom), 0.0)
    w = w - step
    return w if w.ndim else float(w)
