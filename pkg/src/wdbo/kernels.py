"""Correlation families and the separable space-time covariance.

The covariance is ``lam * k_S(||x - x'||, l_S) * k_T(|t - t'|, l_T)``. Matérn
kernels are restricted to half-integer orders and evaluated in their
exponential-times-polynomial form.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import distance

SPATIAL_KINDS = ("se", "matern")
TEMPORAL_KINDS = ("se", "matern", "tv", None)
MATERN_NUS = (0.5, 1.5, 2.5)


@dataclass(frozen=True)
class SpaceTimePoint:
    x: np.ndarray
    t: float

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        if x.ndim != 1 or x.size < 1:
            raise ValueError("x must be a non-empty vector")
        if not (np.all(np.isfinite(x)) and np.isfinite(self.t)):
            raise ValueError("coordinates must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "t", float(self.t))

    @property
    def d(self) -> int:
        return self.x.size


@dataclass(frozen=True)
class Observation:
    point: SpaceTimePoint
    y: float

    def __post_init__(self):
        if not np.isfinite(self.y):
            raise ValueError("observation value must be finite")


@dataclass(frozen=True)
class KernelFamily:
    """Spatial and temporal correlation families.

    ``temporal=None`` drops the temporal factor (spatial-only GP), and
    ``temporal="tv"`` is the index-discounted factor ``(1 - eps)^{|i-j|/2}``
    where the time coordinate carries the query sequence number.
    """

    spatial: str = "matern"
    nu: float = 2.5
    temporal: Optional[str] = "matern"
    p: int = 1

    def __post_init__(self):
        if self.spatial not in SPATIAL_KINDS:
            raise ValueError(f"unknown spatial kernel {self.spatial!r}")
        if self.spatial == "matern" and self.nu not in MATERN_NUS:
            raise ValueError(f"unsupported spatial Matern order nu={self.nu}")
        if self.temporal not in TEMPORAL_KINDS:
            raise ValueError(f"unknown temporal kernel {self.temporal!r}")
        if self.temporal == "matern" and self.p not in (0, 1, 2):
            raise ValueError(f"unsupported temporal Matern order p={self.p}")

    @property
    def has_lengthscale_t(self) -> bool:
        return self.temporal in ("se", "matern")

    def label(self) -> str:
        s = "se" if self.spatial == "se" else f"matern{int(2 * self.nu)}/2"
        if self.temporal is None:
            return f"{s}|none"
        if self.temporal == "tv":
            return f"{s}|tv"
        t = "se" if self.temporal == "se" else f"matern{2 * self.p + 1}/2"
        return f"{s}|{t}"


@dataclass(frozen=True)
class Hyperparameters:
    lam: float = 1.0
    l_s: float = 0.2
    l_t: float = 0.2
    sigma2: float = 0.01
    family: KernelFamily = field(default_factory=KernelFamily)
    ard: Optional[tuple] = None
    eps: float = 0.0

    def __post_init__(self):
        if not (self.lam > 0 and self.l_s > 0 and self.l_t > 0 and self.sigma2 >= 0):
            raise ValueError(f"invalid hyperparameters {self}")
        if self.ard is not None:
            if self.family.spatial != "se":
                raise ValueError("ARD lengthscales require a squared-exponential spatial kernel")
            ard = tuple(float(v) for v in self.ard)
            if any(v <= 0 for v in ard):
                raise ValueError("ARD lengthscales must be positive")
            object.__setattr__(self, "ard", ard)
        if not 0.0 <= self.eps <= 1.0:
            raise ValueError("eps must lie in [0, 1]")


# -- correlation functions ---------------------------------------------------


def _matern_half_integer(u, nu):
    # u = sqrt(2 nu) r / l
    e = np.exp(-u)
    if nu == 0.5:
        return e
    if nu == 1.5:
        return (1.0 + u) * e
    if nu == 2.5:
        return (1.0 + u + u * u / 3.0) * e
    raise ValueError(f"unsupported Matern order nu={nu}")


def _matern_dlogl(u, nu):
    """Derivative of the half-integer Matérn correlation w.r.t. log lengthscale."""
    e = np.exp(-u)
    if nu == 0.5:
        return u * e
    if nu == 1.5:
        return u * u * e
    return u * u * (1.0 + u) * e / 3.0


def _correlation(r, kind, order, length):
    if kind == "se":
        return np.exp(-0.5 * (r / length) ** 2)
    return _matern_half_integer(np.sqrt(2.0 * order) * r / length, order)


def spatial_correlation(r, h: Hyperparameters):
    """Spatial correlation ``k_S(r)`` for a distance ``r >= 0``."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("distance must be non-negative")
    out = _correlation(r, h.family.spatial, h.family.nu, h.l_s)
    return out if out.ndim else float(out)


def temporal_correlation(tau, h: Hyperparameters):
    """Temporal correlation ``k_T(tau)`` for a lag ``tau >= 0``."""
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise ValueError("time lag must be non-negative")
    fam = h.family
    if fam.temporal is None:
        out = np.ones_like(tau)
    elif fam.temporal == "tv":
        out = (1.0 - h.eps) ** (tau / 2.0)
    else:
        out = _correlation(tau, fam.temporal, fam.p + 0.5, h.l_t)
    return out if out.ndim else float(out)


def covariance(p: SpaceTimePoint, q: SpaceTimePoint, h: Hyperparameters) -> float:
    if p.d != q.d:
        raise ValueError(f"dimension mismatch: {p.d} vs {q.d}")
    K = cross_covariance(p.x[None, :], np.array([p.t]), q.x[None, :], np.array([q.t]), h)
    return float(K[0, 0])


# -- matrices ----------------------------------------------------------------


def _sqdist(A, B):
    # direct differences: the expanded |a|^2 + |b|^2 - 2ab form leaves ~1e-9
    # distances on coincident points, visible through the Matern-1/2 cusp
    return distance.cdist(A, B, "sqeuclidean")


def spatial_matrix(X1, X2, h: Hyperparameters):
    """Matrix of ``k_S`` between two point sets (rows of ``X1`` and ``X2``)."""
    X1 = np.asarray(X1, dtype=float)
    X2 = np.asarray(X2, dtype=float)
    if X1.shape[1] != X2.shape[1]:
        raise ValueError("dimension mismatch")
    if h.ard is not None:
        scale = np.asarray(h.ard)
        if scale.size != X1.shape[1]:
            raise ValueError("ARD lengthscale count does not match dimension")
        return np.exp(-0.5 * _sqdist(X1 / scale, X2 / scale))
    r = np.sqrt(_sqdist(X1, X2))
    return _correlation(r, h.family.spatial, h.family.nu, h.l_s)


def temporal_matrix(t1, t2, h: Hyperparameters):
    lag = np.abs(np.asarray(t1, dtype=float)[:, None] - np.asarray(t2, dtype=float)[None, :])
    return temporal_correlation(lag, h)


def cross_covariance(X1, t1, X2, t2, h: Hyperparameters):
    return h.lam * spatial_matrix(X1, X2, h) * temporal_matrix(t1, t2, h)


def covariance_with_grads(X, t, h: Hyperparameters):
    """Prior covariance of a point set and its derivatives.

    Returns ``(K, grads)`` where ``grads`` lists ``dK/dlog(theta)`` for the
    continuous parameters in the order of :func:`free_parameter_names`
    (excluding the noise variance).
    """
    X = np.asarray(X, dtype=float)
    t = np.asarray(t, dtype=float)
    fam = h.family
    grads = []
    if h.ard is not None:
        scale = np.asarray(h.ard)
        Ks = np.exp(-0.5 * _sqdist(X / scale, X / scale))
        dks = []
        for k in range(X.shape[1]):
            diff = (X[:, k][:, None] - X[:, k][None, :]) / scale[k]
            dks.append(diff * diff * Ks)
    else:
        r = np.sqrt(_sqdist(X, X))
        if fam.spatial == "se":
            q = (r / h.l_s) ** 2
            Ks = np.exp(-0.5 * q)
            dks = [q * Ks]
        else:
            u = np.sqrt(2.0 * fam.nu) * r / h.l_s
            Ks = _matern_half_integer(u, fam.nu)
            dks = [_matern_dlogl(u, fam.nu)]
    lag = np.abs(t[:, None] - t[None, :])
    Kt = temporal_correlation(lag, h)
    K = h.lam * Ks * Kt
    grads.append(K)  # d/dlog(lam)
    grads.extend(h.lam * dk * Kt for dk in dks)
    if fam.has_lengthscale_t:
        if fam.temporal == "se":
            q = (lag / h.l_t) ** 2
            dkt = q * Kt
        else:
            u = np.sqrt(2.0 * fam.p + 1.0) * lag / h.l_t
            dkt = _matern_dlogl(u, fam.p + 0.5)
        grads.append(h.lam * Ks * dkt)
    return K, grads


def free_parameter_names(h: Hyperparameters, d: int) -> list[str]:
    names = ["lam"]
    names += [f"ard_{k}" for k in range(d)] if h.ard is not None else ["l_s"]
    if h.family.has_lengthscale_t:
        names.append("l_t")
    names.append("sigma2")
    return names


def pack_log(h: Hyperparameters) -> np.ndarray:
    vals = [h.lam]
    vals += list(h.ard) if h.ard is not None else [h.l_s]
    if h.family.has_lengthscale_t:
        vals.append(h.l_t)
    vals.append(h.sigma2)
    return np.log(np.asarray(vals, dtype=float))


def unpack_log(theta: Sequence[float], template: Hyperparameters) -> Hyperparameters:
    v = np.exp(np.asarray(theta, dtype=float))
    i = 1
    lam = float(v[0])
    if template.ard is not None:
        d = len(template.ard)
        ard = tuple(float(a) for a in v[i:i + d])
        l_s = float(np.exp(np.mean(np.log(ard))))
        i += d
    else:
        ard = None
        l_s = float(v[i])
        i += 1
    l_t = template.l_t
    if template.family.has_lengthscale_t:
        l_t = float(v[i])
        i += 1
    sigma2 = float(v[i])
    return Hyperparameters(lam=lam, l_s=l_s, l_t=l_t, sigma2=sigma2,
                           family=template.family, ard=ard, eps=template.eps)
