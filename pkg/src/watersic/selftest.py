"""Quick invariant checks runnable from the command line (``watersic selftest``)."""

from __future__ import annotations

from typing import Callable, List, Tuple

import numpy as np

from . import container, entropy, matcore, theory, zsic
from .covariance import CovarianceSet
from .pipeline import quantize_layer
from .rescaler import find_optimal_rescalers


def _random_lower(rng, n):
    l = np.tril(rng.standard_normal((n, n)))
    l[np.diag_indices(n)] = rng.uniform(0.3, 3.0, n)
    return l


def check_cholesky(rng):
    for _ in range(20):
        n = int(rng.integers(1, 12))
        b = rng.standard_normal((n, n + 3))
        h = b @ b.T
        l = matcore.cholesky(h)
        assert np.linalg.norm(l @ l.T - h) <= 1e-10 * np.linalg.norm(h)


def check_fundamental_cell(rng):
    for _ in range(500):
        n = int(rng.integers(1, 8))
        l = _random_lower(rng, n)
        alphas = rng.uniform(0.1, 2.0, n)
        y = rng.normal(0, 5, (1, n))
        codes = zsic.zsic(y, l, zsic.SpacingVector(alphas, 1.0))
        e = zsic.residual(y, l, codes, alphas)[0]
        half = alphas * np.diag(l) / 2
        assert np.all(e >= -half) and np.all(e < half)


def check_shift_covariance(rng):
    for _ in range(200):
        n = int(rng.integers(1, 8))
        l = _random_lower(rng, n)
        sp = zsic.SpacingVector(rng.uniform(0.1, 2.0, n), 1.0)
        y = rng.normal(0, 3, (1, n))
        z0 = rng.integers(-20, 21, (1, n))
        shifted = y + (z0 * sp.alphas) @ l
        assert np.array_equal(zsic.zsic(shifted, l, sp), z0 + zsic.zsic(y, l, sp))


def check_huffman(rng):
    for _ in range(20):
        z = rng.integers(-5, 6, (int(rng.integers(1, 20)), int(rng.integers(1, 20))))
        hist = entropy.SymbolHistogram.from_codes(z)
        table = entropy.build_huffman(hist)
        blob = entropy.encode(z, table)
        assert np.array_equal(entropy.decode(blob, table, *z.shape), z)
        h, mean_len = entropy.entropy_bits(hist), table.mean_length(hist)
        assert h - 1e-12 <= mean_len < h + 1


def check_waterfill(rng):
    wl = theory.waterfill_rate(theory.Spectrum([3.0, 1.0]), 0.5)
    assert abs(wl.tau - 0.5) < 1e-9 and abs(wl.rate - 0.25 * np.log2(12)) < 1e-9
    for _ in range(20):
        spec = theory.Spectrum(rng.uniform(0.1, 5, int(rng.integers(1, 10))))
        d = 0.5 * spec.variances.min()
        assert abs(theory.waterfill_rate(spec, d).rate - theory.highrate_rate(spec, d)) < 1e-10


def check_rescaler(rng):
    w = rng.standard_normal((8, 8))
    b = rng.standard_normal((8, 12))
    covs = CovarianceSet.collapsed(b @ b.T / 12)
    pair = find_optimal_rescalers(np.round(w * 2) / 2, w, covs, np.ones(8), ridge=0.0)
    hist = pair.loss_history
    assert all(x1 <= x0 * (1 + 1e-12) + 1e-15 for x0, x1 in zip(hist, hist[1:]))


def check_container(rng):
    w = rng.standard_normal((16, 12))
    b = rng.standard_normal((12, 30))
    layer = quantize_layer(w, CovarianceSet.collapsed(b @ b.T / 30), 0.2)
    blob = container.encode_container(layer)
    assert blob == container.encode_container(layer)
    assert np.array_equal(container.decode_container(blob).codes, layer.codes)


CHECKS: List[Tuple[str, Callable]] = [
    ("cholesky reconstruction", check_cholesky),
    ("SIC fundamental cell", check_fundamental_cell),
    ("SIC shift covariance", check_shift_covariance),
    ("huffman round trip and length bound", check_huffman),
    ("waterfilling vs high-rate formula", check_waterfill),
    ("rescaler monotone loss", check_rescaler),
    ("container round trip", check_container),
]


def run(seed: int = 0) -> List[Tuple[str, bool, str]]:
    results = []
    for name, fn in CHECKS:
        try:
            fn(np.random.default_rng(seed))
            results.append((name, True, ""))
        except Exception as exc:  # noqa: BLE001 - report every failure, keep going
            results.append((name, False, f"{type(exc).__name__}: {exc}"))
    return results
