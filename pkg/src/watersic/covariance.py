"""The calibration covariance bundle consumed by the quantization pipeline."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DimensionMismatch


def symmetrize(m) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    return 0.5 * (m + m.T)


@dataclass(frozen=True)
class CovarianceSet:
    """Second-moment statistics of a layer's inputs.

    Attributes:
        sigma_x: E[x x^T] of the unquantized model's inputs, symmetric (n, n).
        sigma_xhat: E[x̂ x̂^T] of the quantized model's inputs, symmetric (n, n).
        sigma_x_xhat: E[x x̂^T], general (n, n), not symmetrized.
        sigma_delta_xhat: E[(r - r̂) x̂^T] where r is the residual stream the
            layer writes into. Its shape is (a, n) with a the layer's output
            dimension; ``None`` stands for the zero matrix.
    """

    sigma_x: np.ndarray
    sigma_xhat: np.ndarray
    sigma_x_xhat: np.ndarray
    sigma_delta_xhat: Optional[np.ndarray] = None

    def __post_init__(self):
        n = self.sigma_x.shape[0]
        for name in ("sigma_x", "sigma_xhat", "sigma_x_xhat"):
            m = getattr(self, name)
            if m.ndim != 2 or m.shape != (n, n):
                raise DimensionMismatch(f"{name} has shape {m.shape}, expected ({n}, {n})")
            if not np.all(np.isfinite(m)):
                raise ValueError(f"{name} has non-finite entries")
        d = self.sigma_delta_xhat
        if d is not None and (d.ndim != 2 or d.shape[1] != n):
            raise DimensionMismatch(f"sigma_delta_xhat has shape {d.shape}, expected (a, {n})")

    @classmethod
    def create(cls, sigma_x, sigma_xhat=None, sigma_x_xhat=None, sigma_delta_xhat=None):
        """Build a set, filling missing statistics as the no-drift defaults."""
        sx = symmetrize(sigma_x)
        sxh = sx if sigma_xhat is None else symmetrize(sigma_xhat)
        sxx = sx.copy() if sigma_x_xhat is None else np.array(sigma_x_xhat, dtype=np.float64)
        sd = None if sigma_delta_xhat is None else np.array(sigma_delta_xhat, dtype=np.float64)
        return cls(sx, sxh, sxx, sd)

    @classmethod
    def collapsed(cls, sigma_x):
        """Σ_X̂ = Σ_{X,X̂} = Σ_X and Σ_{Δ,X̂} = 0."""
        return cls.create(sigma_x)

    @property
    def n(self) -> int:
        return self.sigma_x.shape[0]

    def delta_term(self, a: int) -> np.ndarray:
        """Σ_{Δ,X̂} as a dense (a, n) array, zeros when absent."""
        if self.sigma_delta_xhat is None:
            return np.zeros((a, self.n))
        if self.sigma_delta_xhat.shape[0] != a:
            raise DimensionMismatch(
                f"sigma_delta_xhat has {self.sigma_delta_xhat.shape[0]} rows, layer has {a}"
            )
        return self.sigma_delta_xhat

    def target_cross(self, w: np.ndarray) -> np.ndarray:
        """W Σ_{X,X̂} + Σ_{Δ,X̂}, the (a, n) cross term shared by every objective."""
        w = np.asarray(w, dtype=np.float64)
        if w.shape[1] != self.n:
            raise DimensionMismatch(f"W has {w.shape[1]} columns, covariances are {self.n}-dim")
        out = w @ self.sigma_x_xhat
        if self.sigma_delta_xhat is not None:
            out = out + self.delta_term(w.shape[0])
        return out

    def is_collapsed(self) -> bool:
        return (
            np.array_equal(self.sigma_xhat, self.sigma_x)
            and np.array_equal(self.sigma_x_xhat, self.sigma_x)
            and (self.sigma_delta_xhat is None or not np.any(self.sigma_delta_xhat))
        )
