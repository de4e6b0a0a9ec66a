"""Successive-interference-cancellation quantizers over scaled integer lattices.

All kernels run the column loop from the last column to the first; every
step is vectorized across rows, so row blocks are independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CodeOverflow, DimensionMismatch, NonPositiveScale

CODE_DTYPE = np.int32
_CODE_LIMIT = 2**31 - 1


def round_half_away(x):
    """Round to nearest integer, ties away from zero."""
    x = np.asarray(x, dtype=np.float64)
    return np.copysign(np.floor(np.abs(x) + 0.5), x)


@dataclass(frozen=True)
class SpacingVector:
    alphas: np.ndarray
    scale_c: float

    def __post_init__(self):
        alphas = np.asarray(self.alphas, dtype=np.float64)
        object.__setattr__(self, "alphas", alphas)
        if alphas.ndim != 1 or not np.all(np.isfinite(alphas)) or np.any(alphas <= 0):
            raise NonPositiveScale("spacings must be a finite positive vector")

    @property
    def n(self) -> int:
        return self.alphas.size

    def cells(self, l) -> np.ndarray:
        """Per-column cell widths α_i ℓ_ii."""
        return self.alphas * np.diag(l)


def plain_watersic_spacing(l, alpha: float) -> SpacingVector:
    """α_i = α |L|^{1/n} / ℓ_ii, so every cell α_i ℓ_ii equals c = α |L|^{1/n}."""
    if alpha <= 0:
        raise NonPositiveScale("alpha must be positive")
    d = np.abs(np.diag(l))
    c = alpha * float(np.exp(np.mean(np.log(d))))
    return SpacingVector(c / d, c)


def uniform_spacing(l, alpha: float) -> SpacingVector:
    """Equal spacing α for all columns (the GPTQ lattice)."""
    if alpha <= 0:
        raise NonPositiveScale("alpha must be positive")
    d = np.abs(np.diag(l))
    c = alpha * float(np.exp(np.mean(np.log(d))))
    return SpacingVector(np.full(d.size, float(alpha)), c)


def spacing_for_scale(l, scale_c: float, mode: str = "watersic") -> SpacingVector:
    """Spacing of density-matched lattices parametrized by the shared constant c.

    ``watersic`` gives α_i = c/ℓ_ii; ``uniform`` gives the constant α = c/|L|^{1/n},
    which has the same point density.
    """
    if scale_c <= 0:
        raise NonPositiveScale("scale_c must be positive")
    d = np.abs(np.diag(l))
    if mode == "watersic":
        return SpacingVector(scale_c / d, scale_c)
    if mode == "uniform":
        gm = float(np.exp(np.mean(np.log(d))))
        return SpacingVector(np.full(d.size, scale_c / gm), scale_c)
    raise ValueError(f"unknown spacing mode {mode!r}")


def _check(y, l, n_alpha):
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 1:
        y = y[None, :]
    l = np.asarray(l, dtype=np.float64)
    if l.ndim != 2 or l.shape[0] != l.shape[1] or l.shape[0] != y.shape[1]:
        raise DimensionMismatch(f"Y is {y.shape}, L is {l.shape}")
    if n_alpha != y.shape[1]:
        raise DimensionMismatch(f"{n_alpha} spacings for {y.shape[1]} columns")
    return y, l


def sic_quantize(y, l, alphas, lmmse: bool = False, block: int = 16):
    """Shared ZSIC loop; returns ``(codes, gains)``.

    With ``lmmse`` each column gets the least-squares gain
    γ_i = z^T y_i / (α_i ℓ_ii ‖z‖²) (zero for an all-zero code column) and the
    interference update uses the gain-corrected reconstruction. Without it
    all gains are one.
    """
    alphas = np.asarray(alphas, dtype=np.float64)
    y, l = _check(y, l, alphas.size)
    y = y.copy()
    a, n = y.shape
    codes = np.zeros((a, n), dtype=CODE_DTYPE)
    gains = np.ones(n)
    # columns are decided in blocks; interference on columns left of the
    # block is applied once per block as a matrix product
    for stop in range(n, 0, -block):
        start = max(0, stop - block)
        for i in range(stop - 1, start - 1, -1):
            step = alphas[i] * l[i, i]
            z = round_half_away(y[:, i] / step)
            if np.any(np.abs(z) > _CODE_LIMIT):
                raise CodeOverflow(f"column {i} needs codes beyond 32 bits")
            g = 1.0
            if lmmse:
                energy = float(z @ z)
                g = float(z @ y[:, i]) / (step * energy) if energy > 0 else 0.0
                gains[i] = g
            codes[:, i] = z
            y[:, start : i + 1] -= np.outer((g * alphas[i]) * z, l[i, start : i + 1])
        if start > 0:
            decided = codes[:, start:stop] * (gains[start:stop] * alphas[start:stop])
            y[:, :start] -= decided @ l[start:stop, :start]
    return codes, gains


def zsic(y, l, spacing: SpacingVector) -> np.ndarray:
    """Integer codes Z with Y ≈ Z A L, computed row-wise by SIC."""
    codes, _ = sic_quantize(y, l, spacing.alphas, lmmse=False)
    return codes


def zsic_lmmse(y, l, scale_c: float):
    """ZSIC with α_i = c/ℓ_ii and per-column LMMSE gains; returns ``(codes, gammas)``."""
    if not scale_c > 0:
        raise NonPositiveScale("scale_c must be positive")
    l = np.asarray(l, dtype=np.float64)
    return sic_quantize(y, l, scale_c / np.diag(l), lmmse=True)


def residual(y, l, codes, alphas) -> np.ndarray:
    """y - z A L for each row."""
    return np.asarray(y, dtype=np.float64) - (np.asarray(codes) * alphas) @ np.asarray(l)


def reconstruct(codes, alphas, gammas=None, row_gains=None) -> np.ndarray:
    """Ŵ[i, j] = t_i z_ij γ_j α_j."""
    codes = np.asarray(codes)
    a, n = codes.shape
    col = np.asarray(alphas, dtype=np.float64)
    if col.shape != (n,):
        raise DimensionMismatch(f"{col.size} spacings for {n} columns")
    if gammas is not None:
        gammas = np.asarray(gammas, dtype=np.float64)
        if gammas.shape != (n,):
            raise DimensionMismatch(f"{gammas.size} gains for {n} columns")
        col = gammas * col
    w_hat = codes * col
    if row_gains is not None:
        t = np.asarray(row_gains, dtype=np.float64)
        if t.shape != (a,):
            raise DimensionMismatch(f"{t.size} row gains for {a} rows")
        w_hat = t[:, None] * w_hat
    return w_hat


def layer_distortion(w, w_hat, sigma_x) -> float:
    """(1/na) tr((W - Ŵ) Σ_X (W - Ŵ)^T)."""
    w = np.asarray(w, dtype=np.float64)
    w_hat = np.asarray(w_hat, dtype=np.float64)
    sigma_x = np.asarray(sigma_x, dtype=np.float64)
    if w.shape != w_hat.shape or sigma_x.shape != (w.shape[1], w.shape[1]):
        raise DimensionMismatch(f"W {w.shape}, Ŵ {w_hat.shape}, Σ {sigma_x.shape}")
    e = w - w_hat
    return float(np.einsum("ij,ij->", e @ sigma_x, e)) / e.size
