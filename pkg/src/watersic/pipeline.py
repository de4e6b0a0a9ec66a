"""Full single-layer quantization and the sequential multi-layer driver.

A layer goes through: dead-feature erasure, damping, Cholesky of Σ_X̂,
drift-corrected target, SIC quantization (optionally with LMMSE gains),
rate computation and diagonal rescaler optimization. Everything runs on the
reduced (live) system and is expanded back at the end.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .calib import drift_target
from .covariance import CovarianceSet
from .entropy import SIDE_BITS, effective_rate
from .errors import DimensionMismatch, NonPositiveScale
from .matcore import (
    DEAD_TAU,
    FeatureMask,
    as_matrix,
    cholesky,
    damp,
    detect_dead,
    expand,
    reduce,
    reduce_covariances,
)
from .ratectl import BudgetLedger, RateSearchConfig, allocate_budget, measure_entropy, search_scale_widening
from .rescaler import RescalerPair, find_optimal_rescalers, rescaler_objective
from .zsic import reconstruct, sic_quantize, spacing_for_scale, layer_distortion

log = logging.getLogger(__name__)

DEFAULT_DELTA = 1e-4


@dataclass
class QuantizedLayer:
    codes: np.ndarray
    alphas: np.ndarray
    gammas: np.ndarray
    row_gains: np.ndarray
    mask: FeatureMask
    scale_c: float
    entropy: float
    effective_rate: float
    achieved_distortion: float
    spacing_mode: str = "watersic"
    rescaler: Optional[RescalerPair] = None

    @property
    def shape(self) -> Tuple[int, int]:
        return self.codes.shape

    @property
    def live_codes(self) -> np.ndarray:
        return self.codes[:, self.mask.live]

    @property
    def fused_scales(self) -> np.ndarray:
        """α_j γ_j per column (zero on dead columns)."""
        return self.alphas * self.gammas

    @property
    def total_bits(self) -> float:
        """Entropy-coded live codes plus 16-bit row and column side information."""
        a, n = self.shape
        return self.entropy * a * self.mask.live_count + SIDE_BITS * (a + n)

    @property
    def bits_per_weight(self) -> float:
        a, n = self.shape
        return self.total_bits / (a * n)

    def reconstruct(self) -> np.ndarray:
        return reconstruct(self.codes, self.alphas, self.gammas, self.row_gains)


@dataclass
class PreparedLayer:
    """A layer reduced to its live features, with factor and target ready for SIC."""

    w: np.ndarray
    sigma_x: np.ndarray
    mask: FeatureMask
    w_live: np.ndarray
    covs_live: CovarianceSet
    l_hat: np.ndarray
    y_hat: np.ndarray


def prepare_layer(w, covs: CovarianceSet, delta: float = DEFAULT_DELTA, tau: float = DEAD_TAU) -> PreparedLayer:
    w = as_matrix(w, "W")
    if w.shape[1] != covs.n:
        raise DimensionMismatch(f"W has {w.shape[1]} columns, covariances are {covs.n}-dim")
    mask = detect_dead(covs.sigma_x, tau)
    w_live = reduce(w, mask, "cols")
    covs_live = damp(reduce_covariances(covs, mask), delta)
    l_hat = cholesky(covs_live.sigma_xhat)
    y_hat = drift_target(w_live, covs_live, l_hat)
    return PreparedLayer(w, covs.sigma_x, mask, w_live, covs_live, l_hat, y_hat)


def quantize_prepared(
    prep: PreparedLayer,
    scale_c: float,
    rescaler: bool = True,
    lmmse: bool = True,
    spacing_mode: str = "watersic",
    entropy_mode: str = "joint",
) -> QuantizedLayer:
    if not scale_c > 0:
        raise NonPositiveScale("scale_c must be positive")
    a, n = prep.w.shape
    spacing = spacing_for_scale(prep.l_hat, scale_c, spacing_mode)
    codes, gammas = sic_quantize(prep.y_hat, prep.l_hat, spacing.alphas, lmmse=lmmse)

    h = measure_entropy(codes, entropy_mode)
    rate = effective_rate(h, a, n)

    t = np.ones(a)
    pair = None
    if rescaler:
        w_hat0 = reconstruct(codes, spacing.alphas)
        pair = find_optimal_rescalers(w_hat0, prep.w_live, prep.covs_live, gamma_init=gammas)
        start = rescaler_objective(t, gammas, w_hat0, prep.w_live, prep.covs_live)
        end = rescaler_objective(pair.t, pair.gamma, w_hat0, prep.w_live, prep.covs_live)
        if end <= start:
            t, gammas = pair.t, pair.gamma
        else:
            log.debug("rescaler ended above its starting loss (%g > %g); keeping start", end, start)

    full_codes = expand(codes, prep.mask, "cols")
    alphas = expand(spacing.alphas, prep.mask, fill=0.0)
    full_gammas = expand(np.asarray(gammas, dtype=np.float64), prep.mask, fill=0.0)
    w_hat = reconstruct(full_codes, alphas, full_gammas, t)
    distortion = layer_distortion(prep.w, w_hat, prep.sigma_x)
    return QuantizedLayer(
        codes=full_codes,
        alphas=alphas,
        gammas=full_gammas,
        row_gains=t,
        mask=prep.mask,
        scale_c=float(scale_c),
        entropy=h,
        effective_rate=rate,
        achieved_distortion=distortion,
        spacing_mode=spacing_mode,
        rescaler=pair,
    )


def quantize_layer(
    w,
    covs: CovarianceSet,
    scale_c: float,
    delta: float = DEFAULT_DELTA,
    rescaler: bool = True,
    lmmse: bool = True,
    spacing_mode: str = "watersic",
    tau: float = DEAD_TAU,
    entropy_mode: str = "joint",
) -> QuantizedLayer:
    """Quantize one linear layer at a fixed lattice scale ``scale_c``."""
    prep = prepare_layer(w, covs, delta, tau)
    return quantize_prepared(prep, scale_c, rescaler, lmmse, spacing_mode, entropy_mode)


@dataclass(frozen=True)
class PipelineConfig:
    delta: float = DEFAULT_DELTA
    rescaler: bool = True
    lmmse: bool = True
    spacing_mode: str = "watersic"
    tau: float = DEAD_TAU
    iterations: int = 30
    row_fraction: float = 0.10
    seed: int = 0
    entropy_mode: str = "joint"


def quantize_layer_at_rate(w, covs: CovarianceSet, target_entropy: float, config: PipelineConfig = PipelineConfig()):
    """Search c so the live codes' entropy meets ``target_entropy``, then quantize."""
    prep = prepare_layer(w, covs, config.delta, config.tau)
    search = RateSearchConfig(
        target_rate=target_entropy,
        iterations=config.iterations,
        row_fraction=config.row_fraction,
        seed=config.seed,
        spacing_mode=config.spacing_mode,
        lmmse=config.lmmse,
        entropy=config.entropy_mode,
    )
    c, _ = search_scale_widening(prep.w_live, prep.l_hat, prep.y_hat, search)
    return quantize_prepared(prep, c, config.rescaler, config.lmmse, config.spacing_mode, config.entropy_mode)


def quantize_model(
    layers: Sequence[Tuple[np.ndarray, CovarianceSet]],
    global_rate: float,
    config: PipelineConfig = PipelineConfig(),
    ledger: Optional[BudgetLedger] = None,
) -> List[QuantizedLayer]:
    """Quantize layers in order under one shared bit budget.

    Each layer's per-weight share is the remaining budget spread over the
    remaining parameters; bits a layer does not use (for instance because of
    erased dead features) flow to the layers after it.
    """
    if not layers:
        raise ValueError("need at least one layer")
    sizes = [int(np.shape(w)[0]) * int(np.shape(w)[1]) for w, _ in layers]
    if ledger is None:
        ledger = BudgetLedger.for_layers(global_rate, sizes)
    out = []
    for (w, covs), size in zip(layers, sizes):
        target = allocate_budget(ledger, size)
        a, n = np.shape(w)
        layer = quantize_layer_at_rate(w, covs, target - SIDE_BITS / a - SIDE_BITS / n, config)
        ledger.record(size, layer.total_bits, target)
        log.info("layer %dx%d: target %.4f, spent %.4f bits/weight", a, n, target, layer.bits_per_weight)
        out.append(layer)
    return out


def average_rate(layers: Sequence[QuantizedLayer]) -> float:
    """Parameter-count-weighted bits per weight across layers."""
    bits = sum(q.total_bits for q in layers)
    params = sum(q.shape[0] * q.shape[1] for q in layers)
    return bits / params
