"""Dense linear-algebra primitives: Cholesky, triangular solves, damping, dead features.

Matrices are plain ``float64`` numpy arrays. Lower-triangular factors are
ordinary 2-D arrays whose strict upper part is zero.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from .covariance import CovarianceSet
from .errors import AllDead, DimensionMismatch, NotPositiveDefinite

PIVOT_RTOL = 1e-14
DEAD_TAU = 1e-3

WSMX_MAGIC = b"WSMX"
WSMX_VERSION = 1
_WSMX_HEADER = struct.Struct("<4sIBQQ")


def as_matrix(m, name="matrix") -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    return m


def cholesky(h) -> np.ndarray:
    """Lower-triangular L with L L^T = h.

    Raises:
        NotPositiveDefinite: if a pivot is non-positive or below
            ``1e-14 * mean(diag(h))``.
    """
    h = as_matrix(h, "h")
    if h.shape[0] != h.shape[1]:
        raise DimensionMismatch(f"cholesky needs a square matrix, got {h.shape}")
    h = 0.5 * (h + h.T)
    floor = PIVOT_RTOL * abs(float(np.mean(np.diag(h))))
    try:
        l = np.linalg.cholesky(h)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    pivots = np.diag(l) ** 2
    if np.any(pivots <= floor):
        i = int(np.argmin(pivots))
        raise NotPositiveDefinite(f"pivot {i} = {pivots[i]:.3e} below {floor:.3e}")
    return l


def solve_upper_right(m, l) -> np.ndarray:
    """X with X L^T = m, i.e. m (L^T)^{-1}."""
    m = as_matrix(m, "m")
    l = as_matrix(l, "l")
    if l.shape[0] != l.shape[1] or l.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"m is {m.shape}, factor is {l.shape}")
    # X L^T = M  <=>  L X^T = M^T
    return scipy.linalg.solve_triangular(l, m.T, lower=True, check_finite=False).T


def damping_amount(sigma, delta: float) -> float:
    return float(delta) * float(np.mean(np.diag(sigma)))


def damp(covs: CovarianceSet, delta: float) -> CovarianceSet:
    """Add ``delta * mean(diag(Σ_X̂))`` to the diagonals of Σ_X, Σ_X̂ and Σ_{X,X̂}.

    Σ_{Δ,X̂} is left untouched.
    """
    if delta < 0:
        raise ValueError("delta must be non-negative")
    if delta == 0:
        return covs
    eye = damping_amount(covs.sigma_xhat, delta) * np.eye(covs.n)
    return replace(
        covs,
        sigma_x=covs.sigma_x + eye,
        sigma_xhat=covs.sigma_xhat + eye,
        sigma_x_xhat=covs.sigma_x_xhat + eye,
    )


@dataclass(frozen=True)
class FeatureMask:
    live: np.ndarray

    def __post_init__(self):
        live = np.asarray(self.live, dtype=bool)
        object.__setattr__(self, "live", live)
        if live.ndim != 1 or live.size == 0:
            raise DimensionMismatch("mask must be a non-empty 1-D array")
        if not live.any():
            raise AllDead("at least one live feature is required")

    @classmethod
    def all_live(cls, n: int) -> "FeatureMask":
        return cls(np.ones(n, dtype=bool))

    @property
    def dim(self) -> int:
        return self.live.size

    @property
    def live_count(self) -> int:
        return int(self.live.sum())

    @property
    def dead_count(self) -> int:
        return self.dim - self.live_count

    @property
    def live_index(self) -> np.ndarray:
        return np.flatnonzero(self.live)


def detect_dead(sigma_x, tau: float = DEAD_TAU) -> FeatureMask:
    """Mark feature i dead when Σ_ii < tau * median(diag Σ)."""
    diag = np.diag(as_matrix(sigma_x, "sigma_x"))
    if not np.any(diag > 0):
        raise AllDead("no strictly positive diagonal entry")
    live = diag >= tau * np.median(diag)
    if not live.any():
        raise AllDead(f"every feature falls below tau={tau} x median")
    return FeatureMask(live)


def _axes(axis):
    if axis in ("rows", 0):
        return (0,)
    if axis in ("cols", 1):
        return (1,)
    if axis == "both":
        return (0, 1)
    raise ValueError(f"unknown axis selection {axis!r}")


def reduce(m, mask: FeatureMask, axis="cols") -> np.ndarray:
    """Drop the dead rows and/or columns of ``m``.

    ``axis`` is ``"rows"``, ``"cols"`` or ``"both"``; 1-D inputs are indexed directly.
    """
    m = np.asarray(m)
    if m.ndim == 1:
        if m.size != mask.dim:
            raise DimensionMismatch(f"vector has length {m.size}, mask is {mask.dim}")
        return m[mask.live]
    for ax in _axes(axis):
        if m.shape[ax] != mask.dim:
            raise DimensionMismatch(f"axis {ax} has length {m.shape[ax]}, mask is {mask.dim}")
        m = np.compress(mask.live, m, axis=ax)
    return m


def expand(m, mask: FeatureMask, axis="cols", fill=0) -> np.ndarray:
    """Inverse of :func:`reduce`: re-insert dead positions filled with ``fill``."""
    m = np.asarray(m)
    if m.ndim == 1:
        if m.size != mask.live_count:
            raise DimensionMismatch(f"vector has length {m.size}, mask has {mask.live_count} live")
        out = np.full(mask.dim, fill, dtype=m.dtype)
        out[mask.live] = m
        return out
    for ax in _axes(axis):
        if m.shape[ax] != mask.live_count:
            raise DimensionMismatch(
                f"axis {ax} has length {m.shape[ax]}, mask has {mask.live_count} live"
            )
        shape = list(m.shape)
        shape[ax] = mask.dim
        out = np.full(shape, fill, dtype=m.dtype)
        index = [slice(None)] * m.ndim
        index[ax] = mask.live_index
        out[tuple(index)] = m
        m = out
    return m


def reduce_covariances(covs: CovarianceSet, mask: FeatureMask) -> CovarianceSet:
    sd = covs.sigma_delta_xhat
    return CovarianceSet(
        reduce(covs.sigma_x, mask, "both"),
        reduce(covs.sigma_xhat, mask, "both"),
        reduce(covs.sigma_x_xhat, mask, "both"),
        None if sd is None else reduce(sd, mask, "cols"),
    )


def write_wsmx(path, m) -> None:
    """Write a float64 matrix in the WSMX binary format."""
    m = np.ascontiguousarray(as_matrix(m), dtype="<f8")
    with open(path, "wb") as f:
        f.write(_WSMX_HEADER.pack(WSMX_MAGIC, WSMX_VERSION, 0, m.shape[0], m.shape[1]))
        f.write(m.tobytes())


def read_wsmx(path) -> np.ndarray:
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < _WSMX_HEADER.size:
        raise ValueError(f"{path}: file too short for a WSMX header")
    magic, version, dtype, rows, cols = _WSMX_HEADER.unpack_from(blob)
    if magic != WSMX_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}, expected {WSMX_MAGIC!r}")
    if version != WSMX_VERSION:
        raise ValueError(f"{path}: unsupported WSMX version {version}")
    if dtype != 0:
        raise ValueError(f"{path}: unsupported dtype tag {dtype} (only 0 = float64)")
    payload = blob[_WSMX_HEADER.size:]
    if len(payload) != 8 * rows * cols:
        raise ValueError(f"{path}: payload has {len(payload)} bytes, expected {8 * rows * cols}")
    return np.frombuffer(payload, dtype="<f8").reshape(rows, cols).astype(np.float64)
