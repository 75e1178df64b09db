"""Wasserstein relevancy criterion.

Upper bounds on the squared 2-Wasserstein distance, integrated over the
future domain ``S x [t0, inf)``, between the posterior on the full dataset
and (a) the posterior with one observation removed, (b) the prior. Their
square-rooted ratio is the relevancy ``R`` of that observation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .convolutions import spatial_selfconv_matrix, temporal_selfconv_matrix
from .gp import GramState, block_inverse, diff_coefficients
from .kernels import Hyperparameters


def conv_matrix(X1, t1, X2, t2, t0: float, h: Hyperparameters) -> np.ndarray:
    """``C[i, j] = (k_S*k_S)(x_j - x_i) * (k_T*k_T)_{t0-t_i}(t_j - t_i)``.

    The restricted temporal integral equals ``int_{t0}^inf k_T(t-t_i) k_T(t-t_j) dt``,
    so ``C(X, X)`` is symmetric.
    """
    S = spatial_selfconv_matrix(X1, X2, h)
    T = temporal_selfconv_matrix(t1, t2, t0, h)
    return S * T


def _state_conv(state: GramState, t0: float) -> np.ndarray:
    d = state.data
    return conv_matrix(d.X, d.t, d.X, d.t, t0, state.h)


def w2_removal_sq(state: GramState, remove_index: int, t0: float,
                  C: np.ndarray | None = None, literal: bool = False) -> float:
    """Bound on the integrated squared distance between the full posterior and
    the posterior without observation ``remove_index``.

    ``literal=True`` builds the block parts from the reduced system instead of
    reading them off the full inverse (slower, used as a cross-check).
    """
    if C is None:
        C = _state_conv(state, t0)
    i = remove_index
    parts = block_inverse(state, i) if literal else None
    co = diff_coefficients(state, i, parts)
    E = parts.E if parts is not None else float(state.inv[i, i])
    rest = np.arange(state.n) != i
    c_row = C[i, rest]
    C_rest = C[np.ix_(rest, rest)]
    lam2 = state.h.lam ** 2
    val = ((co.a ** 2 + E) * C[i, i]
           + (2.0 * co.a * co.b + co.c) @ c_row
           + float(((np.outer(co.b, co.b) + co.M) * C_rest.T).sum()))
    return max(lam2 * val, 0.0)


def w2_prior_sq(state: GramState, t0: float, C: np.ndarray | None = None) -> float:
    """Bound on the integrated squared distance between the posterior and the prior."""
    if state.n < 1:
        raise ValueError("need at least one observation")
    if C is None:
        C = _state_conv(state, t0)
    al = state.alpha
    P = state.inv
    val = float(al @ C @ al) + float((P * C.T).sum())
    return state.h.lam ** 2 * val


def relevancy_ratio(state: GramState, remove_index: int, t0: float,
                    C: np.ndarray | None = None) -> float:
    if C is None:
        C = _state_conv(state, t0)
    den = w2_prior_sq(state, t0, C)
    if not den > 0:
        raise FloatingPointError("prior distance bound is not positive")
    return float(np.sqrt(w2_removal_sq(state, remove_index, t0, C) / den))


@dataclass(frozen=True)
class Sweep:
    ratios: np.ndarray
    removal_sq: np.ndarray
    prior_sq: float


def relevancy_ratios(state: GramState, t0: float) -> Sweep:
    """All ratios at once from one inverse and one convolution matrix.

    With ``P = Delta^{-1}`` and ``alpha = P y`` the removal bound for index ``i``
    collapses to ``lam^2 (alpha_i^2 + P_ii) (P C P)_ii / P_ii^2``.
    """
    if state.n < 1:
        raise ValueError("need at least one observation")
    C = _state_conv(state, t0)
    P = state.inv
    al = state.alpha
    lam2 = state.h.lam ** 2
    PCP_diag = ((P @ C) * P).sum(1)
    e = np.diag(P)
    num = np.maximum(lam2 * (al ** 2 + e) * PCP_diag / e ** 2, 0.0)
    den = lam2 * (float(al @ C @ al) + float((P * C.T).sum()))
    if not den > 0:
        raise FloatingPointError("prior distance bound is not positive")
    return Sweep(np.sqrt(num / den), num, den)
