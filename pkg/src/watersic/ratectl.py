"""Rate control: bisection over the lattice scale c and a running multi-layer bit budget."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .entropy import code_entropy, column_entropy
from .errors import BracketMiss, ExhaustedBudget
from .zsic import sic_quantize, spacing_for_scale

BRACKET_LO_REL = 1e-3
BRACKET_HI_REL = 64.0
WIDEN_FACTOR = 4.0
WIDEN_TRIES = 8
# below this many rows the subsampled entropy is too noisy to steer the search
MIN_SEARCH_ROWS = 256


@dataclass(frozen=True)
class RateSearchConfig:
    """Settings for one scale search.

    ``entropy`` selects how rate is measured: ``"joint"`` pools every code
    into one histogram, ``"column"`` averages per-column entropies.
    """

    target_rate: float
    iterations: int = 30
    row_fraction: float = 0.10
    c_bracket: Optional[Tuple[float, float]] = None
    seed: int = 0
    spacing_mode: str = "watersic"
    lmmse: bool = True
    entropy: str = "joint"

    def __post_init__(self):
        if not 0 < self.row_fraction <= 1:
            raise ValueError("row_fraction must lie in (0, 1]")
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if self.c_bracket is not None and not 0 < self.c_bracket[0] < self.c_bracket[1]:
            raise ValueError("c_bracket must satisfy 0 < c_lo < c_hi")
        if self.entropy not in ("joint", "column"):
            raise ValueError(f"unknown entropy mode {self.entropy!r}")


def measure_entropy(codes, mode: str = "joint") -> float:
    return column_entropy(codes) if mode == "column" else code_entropy(codes)


def entropy_at_scale(y_hat, l_hat, c: float, spacing_mode="watersic", lmmse=True, mode="joint") -> float:
    spacing = spacing_for_scale(l_hat, c, spacing_mode)
    codes, _ = sic_quantize(y_hat, l_hat, spacing.alphas, lmmse=lmmse)
    return measure_entropy(codes, mode)


def default_bracket(y_hat) -> Tuple[float, float]:
    rms = float(np.sqrt(np.mean(np.square(y_hat))))
    if rms == 0:
        rms = 1.0
    return BRACKET_LO_REL * rms, BRACKET_HI_REL * rms


def subsample_rows(a: int, fraction: float, seed: int, min_rows: int = MIN_SEARCH_ROWS) -> np.ndarray:
    """Sorted row indices drawn without replacement.

    At least ``min_rows`` rows are kept; all rows when fraction is 1 or the
    floor covers the whole matrix.
    """
    k = max(1, min_rows, int(round(fraction * a)))
    if fraction >= 1 or k >= a:
        return np.arange(a)
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(a, size=k, replace=False))


def search_scale(w, l_hat, y_hat, config: RateSearchConfig) -> Tuple[float, float]:
    """Find c whose entropy is closest to ``config.target_rate``.

    The search bisects log c on a fixed row subsample; the returned entropy
    comes from a final pass over all rows at the chosen c.

    Raises:
        BracketMiss: the target lies outside [H(c_hi), H(c_lo)].
    """
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if w is not None and np.shape(w)[0] != y_hat.shape[0]:
        raise ValueError("W and ŷ must have the same number of rows")
    rows = subsample_rows(y_hat.shape[0], config.row_fraction, config.seed)
    y_sub = y_hat[rows]

    def h(c):
        return entropy_at_scale(y_sub, l_hat, c, config.spacing_mode, config.lmmse, config.entropy)

    def full(c):
        if rows.size == y_hat.shape[0]:
            return h(c)
        return entropy_at_scale(y_hat, l_hat, c, config.spacing_mode, config.lmmse, config.entropy)

    c_lo, c_hi = config.c_bracket or default_bracket(y_hat)
    target = config.target_rate
    h_lo, h_hi = h(c_lo), h(c_hi)
    if h_lo == target:
        return c_lo, full(c_lo)
    if h_hi == target:
        return c_hi, full(c_hi)
    if not h_hi < target < h_lo:
        raise BracketMiss(
            f"target {target} outside [{h_hi:.4f}, {h_lo:.4f}] for c in [{c_lo:.3e}, {c_hi:.3e}]"
        )
    best_c, best_err = (c_lo, abs(h_lo - target)) if abs(h_lo - target) <= abs(h_hi - target) else (c_hi, abs(h_hi - target))
    lo, hi = math.log(c_lo), math.log(c_hi)
    for _ in range(config.iterations):
        mid = 0.5 * (lo + hi)
        c = math.exp(mid)
        hm = h(c)
        if abs(hm - target) < best_err:
            best_c, best_err = c, abs(hm - target)
        if hm > target:
            lo = mid
        else:
            hi = mid
    return best_c, full(best_c)


def search_scale_widening(w, l_hat, y_hat, config: RateSearchConfig) -> Tuple[float, float]:
    """:func:`search_scale` with the default bracket widened ×4 per side on a miss."""
    c_lo, c_hi = config.c_bracket or default_bracket(y_hat)
    for attempt in range(WIDEN_TRIES + 1):
        cfg = RateSearchConfig(**{**config.__dict__, "c_bracket": (c_lo, c_hi)})
        try:
            return search_scale(w, l_hat, y_hat, cfg)
        except BracketMiss:
            if attempt == WIDEN_TRIES:
                raise
            c_lo, c_hi = c_lo / WIDEN_FACTOR, c_hi * WIDEN_FACTOR
    raise AssertionError("unreachable")


@dataclass
class BudgetLedger:
    """Running bit budget over a sequence of layers quantized in order."""

    total_bits: float
    remaining_params: int
    layers_remaining: int
    spent_bits: float = 0.0
    log: List[dict] = field(default_factory=list)

    @classmethod
    def for_layers(cls, global_rate: float, param_counts) -> "BudgetLedger":
        counts = [int(c) for c in param_counts]
        return cls(global_rate * sum(counts), sum(counts), len(counts))

    @property
    def remaining_bits(self) -> float:
        return self.total_bits - self.spent_bits

    def record(self, param_count: int, bits: float, target: float) -> None:
        self.spent_bits += bits
        self.remaining_params -= param_count
        self.layers_remaining -= 1
        self.log.append({"params": param_count, "bits": bits, "target": target})


def allocate_budget(ledger: BudgetLedger, layer_param_count: int) -> float:
    """Per-weight target for the next layer: remaining bits over remaining parameters."""
    if ledger.layers_remaining < 1 or ledger.remaining_params < layer_param_count:
        raise ExhaustedBudget("no layers left in the ledger")
    if ledger.remaining_bits <= 0:
        raise ExhaustedBudget(f"budget exhausted with {ledger.layers_remaining} layers left")
    return ledger.remaining_bits / ledger.remaining_params
