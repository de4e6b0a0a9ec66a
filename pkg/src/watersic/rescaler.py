"""Alternating closed-form optimization of diagonal row and column rescalers.

The reconstruction is Ŵ = diag(t) Ŵ₀ diag(γ) and the objective is

    J(t, γ) = (1/an) tr(W Σ_X W^T - 2 B (T Ŵ₀ Γ)^T + T Ŵ₀ Γ Σ_X̂ Γ Ŵ₀^T T)

with B = W Σ_{X,X̂} + Σ_{Δ,X̂}. Each half-step minimizes J exactly over one block.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List

import numpy as np
import scipy.linalg

from .covariance import CovarianceSet
from .errors import DegenerateRow, DimensionMismatch, SingularSystem

DEFAULT_EPS = 1e-6
DEFAULT_MAX_ITERS = 50
DEFAULT_RIDGE_REL = 1e-10


@dataclass
class RescalerPair:
    t: np.ndarray
    gamma: np.ndarray
    loss_history: List[float] = field(default_factory=list)
    iterations: int = 0


def default_ridge(covs: CovarianceSet) -> float:
    return DEFAULT_RIDGE_REL * float(np.mean(np.diag(covs.sigma_xhat)))


def _shapes(t, gamma, w_hat0, w):
    w_hat0 = np.asarray(w_hat0, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    a, n = w_hat0.shape
    if w.shape != (a, n):
        raise DimensionMismatch(f"W is {w.shape}, Ŵ₀ is {w_hat0.shape}")
    if t is not None and np.shape(t) != (a,):
        raise DimensionMismatch(f"t has shape {np.shape(t)}, expected ({a},)")
    if gamma is not None and np.shape(gamma) != (n,):
        raise DimensionMismatch(f"gamma has shape {np.shape(gamma)}, expected ({n},)")
    return w_hat0, w


def rescaler_objective(t, gamma, w_hat0, w, covs: CovarianceSet) -> float:
    w_hat0, w = _shapes(t, gamma, w_hat0, w)
    a, n = w.shape
    w_hat = np.asarray(t, dtype=np.float64)[:, None] * w_hat0 * np.asarray(gamma, dtype=np.float64)
    b = covs.target_cross(w)
    const = np.einsum("ij,ij->", w @ covs.sigma_x, w)
    cross = np.einsum("ij,ij->", b, w_hat)
    quad = np.einsum("ij,ij->", w_hat @ covs.sigma_xhat, w_hat)
    return float(const - 2.0 * cross + quad) / (a * n)


def gamma_step(t, w_hat0, w, covs: CovarianceSet, ridge: float = 0.0) -> np.ndarray:
    """γ = (Σ_X̂ ⊙ Ŵ₀^T T² Ŵ₀ + λI)^{-1} diag(Ŵ₀^T T B)."""
    w_hat0, w = _shapes(t, None, w_hat0, w)
    t = np.asarray(t, dtype=np.float64)
    scaled = t[:, None] * w_hat0
    g = covs.sigma_xhat * (scaled.T @ scaled)
    g[np.diag_indices_from(g)] += ridge
    d = np.einsum("ij,ij->j", scaled, covs.target_cross(w))
    try:
        factor = scipy.linalg.cho_factor(g, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        raise SingularSystem("Γ-step system is not positive definite; use a positive ridge") from None
    return scipy.linalg.cho_solve(factor, d, check_finite=False)


def t_step(gamma, w_hat0, w, covs: CovarianceSet, ridge: float = 0.0) -> np.ndarray:
    """t_i = p_i / (q_i + λ), solving each row's scalar quadratic."""
    w_hat0, w = _shapes(None, gamma, w_hat0, w)
    m = w_hat0 * np.asarray(gamma, dtype=np.float64)
    p = np.einsum("ij,ij->i", covs.target_cross(w), m)
    q = np.einsum("ij,ij->i", m @ covs.sigma_xhat, m) + ridge
    if np.any(q == 0):
        raise DegenerateRow(f"row {int(np.flatnonzero(q == 0)[0])} has q + ridge = 0")
    return p / q


def _normalize(t, gamma):
    s = np.abs(t).sum() / t.size
    if s == 0:
        return t, gamma
    return t / s, gamma * s


def find_optimal_rescalers(
    w_hat0,
    w,
    covs: CovarianceSet,
    gamma_init,
    eps: float = DEFAULT_EPS,
    ridge: float | None = None,
    max_iters: int = DEFAULT_MAX_ITERS,
) -> RescalerPair:
    """Alternate Γ- and T-steps until the relative change of J drops below ``eps``.

    ``loss_history`` holds J at the start and after every half-step and
    renormalization, so monotonicity can be checked per half-step.
    """
    w_hat0, w = _shapes(None, gamma_init, w_hat0, w)
    if ridge is None:
        ridge = default_ridge(covs)
    a = w.shape[0]
    t, gamma = _normalize(np.ones(a), np.array(gamma_init, dtype=np.float64))
    prev = rescaler_objective(t, gamma, w_hat0, w, covs)
    history = [prev]
    it = 0
    for it in range(1, max_iters + 1):
        gamma = gamma_step(t, w_hat0, w, covs, ridge)
        history.append(rescaler_objective(t, gamma, w_hat0, w, covs))
        t = t_step(gamma, w_hat0, w, covs, ridge)
        history.append(rescaler_objective(t, gamma, w_hat0, w, covs))
        t, gamma = _normalize(t, gamma)
        curr = rescaler_objective(t, gamma, w_hat0, w, covs)
        history.append(curr)
        if abs(curr - prev) / (abs(prev) + 1e-12) < eps:
            break
        prev = curr
    return RescalerPair(t, gamma, history, it)
