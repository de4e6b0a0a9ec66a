"""Rate-distortion oracles for Gaussian weights under a quadratic activation metric.

Rates are in bits per weight; distortions are per-weight mean squared
output errors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DistortionOutOfRange, PreconditionViolated

LATTICE_GAP_BITS = 0.5 * math.log2(2.0 * math.pi * math.e / 12.0)

_BISECT_MAX = 200
_BISECT_RTOL = 1e-13


@dataclass(frozen=True)
class Spectrum:
    lambdas: np.ndarray
    sigma_w2: float = 1.0

    def __post_init__(self):
        lam = np.sort(np.asarray(self.lambdas, dtype=np.float64).ravel())[::-1]
        if lam.size == 0 or np.any(~np.isfinite(lam)) or np.any(lam <= 0):
            raise ValueError("eigenvalues must be finite and strictly positive")
        if not self.sigma_w2 > 0:
            raise ValueError("sigma_w2 must be positive")
        object.__setattr__(self, "lambdas", lam)

    @classmethod
    def from_covariance(cls, sigma, sigma_w2: float = 1.0, floor: float = 0.0) -> "Spectrum":
        """Eigenvalues of a symmetric covariance, discarding those ``<= floor``."""
        lam = np.linalg.eigvalsh(0.5 * (sigma + sigma.T))
        return cls(lam[lam > floor], sigma_w2)

    @property
    def n(self) -> int:
        return self.lambdas.size

    @property
    def variances(self) -> np.ndarray:
        return self.sigma_w2 * self.lambdas

    @property
    def full_energy(self) -> float:
        return float(np.mean(self.variances))


@dataclass(frozen=True)
class WaterLevel:
    tau: float
    rate: float
    distortion: float


def water_level(spec: Spectrum, tau: float) -> WaterLevel:
    """Rate and distortion of reverse waterfilling at level ``tau``."""
    v = spec.variances
    d = float(np.mean(np.minimum(v, tau)))
    r = float(np.mean(0.5 * np.log2(np.maximum(1.0, v / tau))))
    return WaterLevel(float(tau), r, d)


def waterfill_rate(spec: Spectrum, d: float) -> WaterLevel:
    """Solve mean(min(σ²λ_i, τ)) = d for τ by bisection and return (τ, R_WF, D)."""
    v = spec.variances
    if not 0 < d <= spec.full_energy * (1 + 1e-12):
        raise DistortionOutOfRange(f"d={d} outside (0, {spec.full_energy}]")
    lo, hi = min(float(v.min()) * 1e-9, 0.5 * d), float(v.max())
    for _ in range(_BISECT_MAX):
        mid = 0.5 * (lo + hi)
        if np.mean(np.minimum(v, mid)) < d:
            lo = mid
        else:
            hi = mid
        if hi - lo <= _BISECT_RTOL * hi:
            break
    return water_level(spec, 0.5 * (lo + hi))


def highrate_rate(spec: Spectrum, d: float) -> float:
    """½ log₂(σ_W² |Σ|^{1/n} / d), valid for d below every σ_W² λ_i."""
    if not 0 < d < spec.variances.min():
        raise PreconditionViolated(f"d={d} must lie in (0, {spec.variances.min()})")
    log_gm = float(np.mean(np.log(spec.lambdas)))
    return 0.5 * (math.log2(spec.sigma_w2) + log_gm / math.log(2.0) - math.log2(d))


def amgm_excess_bits(values) -> float:
    """½ log₂(arithmetic mean / geometric mean) of positive ``values``."""
    v = np.asarray(values, dtype=np.float64)
    return 0.5 * (math.log2(float(np.mean(v))) - float(np.mean(np.log2(v))))


def predicted_gap_watersic() -> float:
    return LATTICE_GAP_BITS


def predicted_gap_gptq(l) -> float:
    """Lattice gap plus the AM/GM excess of the squared Cholesky diagonal."""
    return LATTICE_GAP_BITS + amgm_excess_bits(np.diag(l) ** 2)


def zsic_distortion_prediction(l, alphas) -> float:
    """High-rate SIC distortion (1/12n) Σ (α_i ℓ_ii)²."""
    cells = np.asarray(alphas, dtype=np.float64) * np.diag(l)
    if cells.size != np.shape(l)[0]:
        raise ValueError("one spacing per column required")
    return float(np.mean(cells**2)) / 12.0
