"""Closed-form kernel self-convolutions and approximation-error diagnostics.

Spatial self-convolutions are taken over all of R^d; temporal ones are
restricted to the future, ``int_{t0}^inf k_T(|t - t_i|) k_T(|t - t_j|) dt``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special as _sp

from .kernels import Hyperparameters, spatial_correlation
from .special import erfc, lambert_w0

_TIME_SLACK = 1e-9


def _zk(alpha: float, z):
    """Stable ``z^alpha K_alpha(z)`` for ``z >= 0``."""
    z = np.asarray(z, dtype=float)
    frac = alpha - math.floor(alpha)
    if abs(frac - 0.5) < 1e-12:
        n = int(math.floor(alpha))
        # z^{n+1/2} K_{n+1/2}(z) = sqrt(pi/2) e^{-z} sum_k (n+k)!/(k!(n-k)! 2^k) z^{n-k}
        total = np.zeros_like(z)
        for k in range(n + 1):
            coef = math.factorial(n + k) / (math.factorial(k) * math.factorial(n - k) * 2.0 ** k)
            total = total + coef * z ** (n - k)
        return math.sqrt(math.pi / 2.0) * np.exp(-z) * total
    limit = math.gamma(alpha) * 2.0 ** (alpha - 1.0)
    small = z < 1e-8
    zs = np.where(small, 1.0, z)
    return np.where(small, limit, zs ** alpha * _sp.kv(alpha, zs))


def _matern_conv_prefactor(nu: float, d: int, l_s: float) -> float:
    c = math.sqrt(2.0 * nu) / l_s
    return (2.0 ** (d / 2.0 - 2.0 * nu + 1.0) * math.pi ** (d / 2.0)
            * math.gamma(nu + d / 2.0) ** 2
            / (math.gamma(nu) ** 2 * math.gamma(2.0 * nu + d))
            * c ** (2.0 * nu - d / 2.0))


def spatial_selfconv(delta, d: int, h: Hyperparameters):
    """``(k_S * k_S)`` over R^d.

    For isotropic kernels ``delta`` holds distances (any shape); with ARD
    lengthscales it holds difference vectors with a trailing axis of size ``d``.
    """
    fam = h.family
    if h.ard is not None:
        diff = np.asarray(delta, dtype=float)
        if diff.shape[-1] != d or len(h.ard) != d:
            raise ValueError("ARD convolution needs difference vectors of dimension d")
        M = np.asarray(h.ard)
        q = ((diff / M) ** 2).sum(-1)
        out = math.pi ** (d / 2.0) * float(np.prod(M)) * np.exp(-0.25 * q)
        return out if np.ndim(out) else float(out)
    r = np.asarray(delta, dtype=float)
    if np.any(r < 0):
        raise ValueError("distance must be non-negative")
    if fam.spatial == "se":
        out = math.pi ** (d / 2.0) * h.l_s ** d * np.exp(-(r * r) / (4.0 * h.l_s ** 2))
    else:
        alpha = 2.0 * fam.nu + d / 2.0
        if not (alpha.is_integer() or abs(alpha % 1 - 0.5) < 1e-12):
            raise ValueError(f"unsupported Matern pairing nu={fam.nu}, d={d}")
        c = math.sqrt(2.0 * fam.nu) / h.l_s
        # r^alpha K_alpha(c r) = c^{-alpha} (c r)^alpha K_alpha(c r)
        out = _matern_conv_prefactor(fam.nu, d, h.l_s) * c ** (-alpha) * _zk(alpha, c * r)
    return out if np.ndim(out) else float(out)


def spatial_selfconv_matrix(X1, X2, h: Hyperparameters):
    """Pairwise spatial self-convolutions between the rows of two point sets."""
    X1 = np.asarray(X1, dtype=float)
    X2 = np.asarray(X2, dtype=float)
    d = X1.shape[1]
    diff = X2[None, :, :] - X1[:, None, :]
    if h.ard is not None:
        return spatial_selfconv(diff, d, h)
    return spatial_selfconv(np.sqrt((diff * diff).sum(-1)), d, h)


def _falling(n: int, k: int) -> int:
    out = 1
    for i in range(k):
        out *= n - i
    return out


def _poly_derivative(n1: int, n2: int, k: int, a, delta):
    """k-th derivative of ``t^n1 (t + delta)^n2`` evaluated at ``t = a``."""
    total = np.zeros(np.broadcast(a, delta).shape)
    for j in range(n2 + 1):
        power = j + n1
        if power < k:
            continue
        total = total + (math.comb(n2, j) * _falling(power, k)
                         * delta ** (n2 - j) * a ** (power - k))
    return total


def _matern_restricted(a, delta, spread, p: int, l_t: float):
    # a = t0 - t_i, delta = t_i - t_j, spread = 2 t0 - t_i - t_j
    c = math.sqrt(2 * p + 1) / l_t
    head = (math.factorial(p) / math.factorial(2 * p)) ** 2
    total = np.zeros(np.broadcast(a, delta).shape)
    for k1 in range(p + 1):
        for k2 in range(p + 1):
            ckk = (head * math.factorial(p + k1) * math.factorial(p + k2)
                   / (math.factorial(k1) * math.factorial(k2)
                      * math.factorial(p - k1) * math.factorial(p - k2))
                   * (2.0 * c) ** (2 * p - k1 - k2 - 1))
            pkk = np.zeros_like(total)
            for k3 in range(2 * p - k1 - k2 + 1):
                pkk = pkk + (2.0 * c) ** (-k3) * _poly_derivative(p - k1, p - k2, k3, a, delta)
            total = total + ckk * pkk
    return np.exp(-c * spread) * total


def temporal_selfconv_restricted(t_i, t_j, t0: float, h: Hyperparameters):
    """``(k_T * k_T)`` restricted to ``[t0 - t_i, inf)``, evaluated at ``t_j - t_i``.

    Broadcasts over ``t_i`` and ``t_j``; every time must satisfy ``t <= t0``.
    """
    t_i = np.asarray(t_i, dtype=float)
    t_j = np.asarray(t_j, dtype=float)
    if np.any(t_i > t0 + _TIME_SLACK) or np.any(t_j > t0 + _TIME_SLACK):
        raise ValueError("observation times must not exceed the present time t0")
    t_i = np.minimum(t_i, t0)
    t_j = np.minimum(t_j, t0)
    fam = h.family
    spread = 2.0 * t0 - t_i - t_j
    if fam.temporal == "se":
        l = h.l_t
        out = (math.sqrt(math.pi) * l / 2.0 * np.exp(-((t_i - t_j) ** 2) / (4.0 * l * l))
               * erfc(spread / (2.0 * l)))
    elif fam.temporal == "matern":
        out = _matern_restricted(t0 - t_i, t_i - t_j, spread, fam.p, h.l_t)
    else:
        raise ValueError(f"no restricted convolution for temporal kernel {fam.temporal!r}")
    return out if np.ndim(out) else float(out)


def temporal_selfconv_matrix(t1, t2, t0: float, h: Hyperparameters):
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    return temporal_selfconv_restricted(t1[:, None], t2[None, :], t0, h)


# -- approximation error -----------------------------------------------------


def critical_lengthscale(x_i, x_j, d: int) -> float:
    """Spatial SE lengthscale at which the R^d-extension error peaks."""
    diff = np.asarray(x_i, dtype=float) - np.asarray(x_j, dtype=float)
    r2 = float(diff @ diff)
    w = lambert_w0(math.pi * r2 / (2.0 * d))
    return math.exp(0.5 * w) / math.sqrt(math.pi)


@dataclass(frozen=True)
class ApproxError:
    value: float
    stderr: float
    exterior: float
    exterior_se: float
    interior_gap: float
    interior_se: float


def approx_error_A(x_i, x_j, h: Hyperparameters, mc_samples: int = 100_000,
                   seed: int = 0) -> ApproxError:
    """Monte-Carlo estimate of the absolute error made by integrating over R^d.

    The error is the smaller of the product mass outside ``[0,1]^d`` and one
    minus the mass inside it. The inside mass uses uniform sampling, the
    outside mass a Gaussian proposal centred between the two points.
    """
    x_i = np.asarray(x_i, dtype=float)
    x_j = np.asarray(x_j, dtype=float)
    d = x_i.size
    rng = np.random.default_rng(seed)

    def integrand(X):
        ri = np.sqrt(((X - x_i) ** 2).sum(1))
        rj = np.sqrt(((X - x_j) ** 2).sum(1))
        return spatial_correlation(ri, h) * spatial_correlation(rj, h)

    U = rng.random((mc_samples, d))
    fin = integrand(U)
    interior = fin.mean()
    interior_se = fin.std(ddof=1) / math.sqrt(mc_samples)

    centre = 0.5 * (x_i + x_j)
    scale = h.l_s + 0.5 * math.sqrt(float((x_i - x_j) @ (x_i - x_j)))
    Z = rng.standard_normal((mc_samples, d))
    X = centre + scale * Z
    logq = -0.5 * (Z * Z).sum(1) - d * math.log(scale) - 0.5 * d * math.log(2 * math.pi)
    outside = np.any((X < 0.0) | (X > 1.0), axis=1)
    w = np.where(outside, integrand(X) * np.exp(-logq), 0.0)
    exterior = w.mean()
    exterior_se = w.std(ddof=1) / math.sqrt(mc_samples)

    gap = 1.0 - interior
    if exterior <= gap:
        value, se = exterior, exterior_se
    else:
        value, se = gap, interior_se
    return ApproxError(float(value), float(se), float(exterior), float(exterior_se),
                       float(gap), float(interior_se))
