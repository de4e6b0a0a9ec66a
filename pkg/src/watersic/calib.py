"""Calibration statistics: drift-corrected targets, covariance blends, 1-D search."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from .covariance import CovarianceSet, symmetrize
from .errors import DimensionMismatch, EmptySamples, InvalidBracket
from .matcore import as_matrix, solve_upper_right

__all__ = [
    "CovarianceSet",
    "MixParams",
    "drift_target",
    "mix_drift",
    "mix_weighted",
    "golden_section_bracket",
    "golden_section_min",
    "estimate_covariances",
]

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class MixParams:
    eps_qr: float = 0.0
    eps_aw: float = 0.0

    def __post_init__(self):
        for name in ("eps_qr", "eps_aw"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")


def drift_target(w, covs: CovarianceSet, l_hat) -> np.ndarray:
    """ŷ = (W Σ_{X,X̂} + Σ_{Δ,X̂}) (L̂^T)^{-1}.

    In the collapsed case this is exactly W L̂.
    """
    w = as_matrix(w, "W")
    return solve_upper_right(covs.target_cross(w), l_hat)


def _check_eps(eps, name):
    if not 0.0 <= eps <= 1.0:
        raise ValueError(f"{name}={eps} outside [0, 1]")


def mix_drift(covs: CovarianceSet, eps_qr: float) -> CovarianceSet:
    """Blend Σ_X̂ and Σ_{X,X̂} toward Σ_X; eps_qr=1 falls back to the unquantized statistics."""
    _check_eps(eps_qr, "eps_qr")
    if eps_qr == 0:
        return covs
    if eps_qr == 1:
        return CovarianceSet(covs.sigma_x, covs.sigma_x.copy(), covs.sigma_x.copy(), covs.sigma_delta_xhat)
    k = 1.0 - eps_qr
    return CovarianceSet(
        covs.sigma_x,
        k * covs.sigma_xhat + eps_qr * covs.sigma_x,
        k * covs.sigma_x_xhat + eps_qr * covs.sigma_x,
        covs.sigma_delta_xhat,
    )


def mix_weighted(weighted: CovarianceSet, uniform: CovarianceSet, eps_aw: float) -> CovarianceSet:
    """Entrywise convex blend (1 - eps_aw) · weighted + eps_aw · uniform of all four matrices."""
    _check_eps(eps_aw, "eps_aw")
    if weighted.n != uniform.n:
        raise DimensionMismatch(f"dimensions {weighted.n} and {uniform.n} differ")
    if eps_aw == 0:
        return weighted
    if eps_aw == 1:
        return uniform

    def blend(p, q):
        return (1.0 - eps_aw) * p + eps_aw * q

    pd, qd = weighted.sigma_delta_xhat, uniform.sigma_delta_xhat
    if pd is None and qd is None:
        delta = None
    else:
        if pd is None:
            pd = np.zeros_like(qd)
        if qd is None:
            qd = np.zeros_like(pd)
        if pd.shape != qd.shape:
            raise DimensionMismatch(f"Σ_Δ shapes {pd.shape} and {qd.shape} differ")
        delta = blend(pd, qd)
    return CovarianceSet(
        blend(weighted.sigma_x, uniform.sigma_x),
        blend(weighted.sigma_xhat, uniform.sigma_xhat),
        blend(weighted.sigma_x_xhat, uniform.sigma_x_xhat),
        delta,
    )


def golden_section_bracket(f: Callable[[float], float], lo: float, hi: float, iters: int = 15):
    """Shrink [lo, hi] around a minimum of a unimodal ``f``.

    One new evaluation per iteration; the bracket shrinks by (√5 - 1)/2 each time.
    Returns ``(lo, hi)``.
    """
    if not lo < hi:
        raise InvalidBracket(f"need lo < hi, got [{lo}, {hi}]")
    x1 = hi - INV_PHI * (hi - lo)
    x2 = lo + INV_PHI * (hi - lo)
    f1, f2 = f(x1), f(x2)
    for _ in range(iters):
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - INV_PHI * (hi - lo)
            f1 = f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + INV_PHI * (hi - lo)
            f2 = f(x2)
    return lo, hi


def golden_section_min(
    f: Callable[[float], float], lo: float, hi: float, iters: int = 15
) -> Tuple[float, float]:
    """Golden-section search; returns the final bracket midpoint and f there."""
    lo, hi = golden_section_bracket(f, lo, hi, iters)
    x = 0.5 * (lo + hi)
    return x, f(x)


def estimate_covariances(x_samples, xhat_samples=None, r_delta_samples=None) -> CovarianceSet:
    """Uncentered second moments from token-major sample matrices.

    Args:
        x_samples: (T, n) inputs of the unquantized model.
        xhat_samples: (T, n) inputs of the partially quantized model; defaults to x.
        r_delta_samples: (T, a) residual-stream discrepancies r - r̂, or None.
    """
    x = np.asarray(x_samples, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise EmptySamples("need at least one (T, n) sample row")
    tokens = x.shape[0]
    sigma_x = symmetrize(x.T @ x / tokens)
    if xhat_samples is None:
        if r_delta_samples is None:
            return CovarianceSet.collapsed(sigma_x)
        xhat = x
    else:
        xhat = np.asarray(xhat_samples, dtype=np.float64)
        if xhat.shape != x.shape:
            raise DimensionMismatch(f"x̂ samples {xhat.shape} vs x samples {x.shape}")
    sigma_xhat = symmetrize(xhat.T @ xhat / tokens)
    sigma_x_xhat = x.T @ xhat / tokens
    sigma_delta: Optional[np.ndarray] = None
    if r_delta_samples is not None:
        r = np.asarray(r_delta_samples, dtype=np.float64)
        if r.ndim != 2 or r.shape[0] != tokens:
            raise DimensionMismatch(f"residual samples {r.shape} vs {tokens} tokens")
        sigma_delta = r.T @ xhat / tokens
    return CovarianceSet(sigma_x, sigma_xhat, sigma_x_xhat, sigma_delta)
