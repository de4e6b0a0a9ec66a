import numpy as np
import pytest

from conftest import random_spd
from watersic import pipeline
from watersic.covariance import CovarianceSet
from watersic.errors import DimensionMismatch, NonPositiveScale
from watersic.zsic import layer_distortion


def drifted_covs(rng, n, a=None, noise=0.3):
    x = rng.standard_normal((n, 4 * n))
    xh = x + noise * rng.standard_normal((n, 4 * n))
    resid = None if a is None else 0.05 * rng.standard_normal((a, n))
    return CovarianceSet.create(x @ x.T / (4 * n), xh @ xh.T / (4 * n), x @ xh.T / (4 * n), resid)


def test_layer_fields_consistent(rng):
    w = rng.standard_normal((40, 12))
    layer = pipeline.quantize_layer(w, CovarianceSet.collapsed(random_spd(rng, 12)), 0.3)
    assert layer.codes.dtype == np.int32 and layer.shape == (40, 12)
    np.testing.assert_allclose(layer.reconstruct(), layer.row_gains[:, None] * layer.codes * layer.fused_scales)
    assert layer.effective_rate == pytest.approx(layer.entropy + 16 / 40 + 16 / 12)


def test_distortion_is_measured_on_sigma_x(rng):
    w = rng.standard_normal((30, 10))
    covs = drifted_covs(rng, 10)
    layer = pipeline.quantize_layer(w, covs, 0.2)
    assert layer.achieved_distortion == pytest.approx(layer_distortion(w, layer.reconstruct(), covs.sigma_x))


def test_dead_columns_zeroed(rng):
    n = 10
    sigma = random_spd(rng, n)
    sigma[[2, 7], :] = 0
    sigma[:, [2, 7]] = 0
    w = rng.standard_normal((20, n))
    layer = pipeline.quantize_layer(w, CovarianceSet.collapsed(sigma), 0.2)
    assert layer.mask.live[[2, 7]].tolist() == [False, False]
    assert not layer.codes[:, [2, 7]].any()
    assert not layer.reconstruct()[:, [2, 7]].any()
    assert layer.total_bits == pytest.approx(layer.entropy * 20 * 8 + 16 * 30)


def test_finer_scale_lowers_distortion(rng):
    w = rng.standard_normal((50, 16))
    covs = CovarianceSet.collapsed(random_spd(rng, 16))
    coarse = pipeline.quantize_layer(w, covs, 1.0)
    fine = pipeline.quantize_layer(w, covs, 0.1)
    assert fine.achieved_distortion < coarse.achieved_distortion
    assert fine.entropy > coarse.entropy


def test_rescaler_never_hurts_on_seeds():
    for seed in range(5):
        rng = np.random.default_rng(seed)
        w = rng.standard_normal((64, 32))
        covs = drifted_covs(rng, 32, a=64)
        on = pipeline.quantize_layer(w, covs, 0.5, rescaler=True)
        off = pipeline.quantize_layer(w, covs, 0.5, rescaler=False)
        assert on.achieved_distortion <= off.achieved_distortion
        np.testing.assert_array_equal(on.codes, off.codes)


def test_lmmse_helps_at_coarse_scale(rng):
    w = rng.standard_normal((200, 16))
    covs = CovarianceSet.collapsed(random_spd(rng, 16))
    plain = pipeline.quantize_layer(w, covs, 1.5, lmmse=False, rescaler=False)
    corrected = pipeline.quantize_layer(w, covs, 1.5, lmmse=True, rescaler=False)
    assert corrected.achieved_distortion < plain.achieved_distortion


def test_deterministic(rng):
    w = rng.standard_normal((40, 16))
    covs = drifted_covs(rng, 16, a=40)
    cfg = pipeline.PipelineConfig(seed=3)
    a = pipeline.quantize_layer_at_rate(w, covs, 3.0, cfg)
    b = pipeline.quantize_layer_at_rate(w, covs, 3.0, cfg)
    np.testing.assert_array_equal(a.codes, b.codes)
    np.testing.assert_array_equal(a.row_gains, b.row_gains)


def test_errors(rng):
    covs = CovarianceSet.collapsed(np.eye(4))
    with pytest.raises(DimensionMismatch):
        pipeline.quantize_layer(np.ones((3, 5)), covs, 0.1)
    with pytest.raises(NonPositiveScale):
        pipeline.quantize_layer(np.ones((3, 4)), covs, 0.0)


def test_average_rate(rng):
    covs = CovarianceSet.collapsed(random_spd(rng, 8))
    layers = [pipeline.quantize_layer(rng.standard_normal((a, 8)), covs, 0.3) for a in (10, 30)]
    expected = (layers[0].total_bits + layers[1].total_bits) / (40 * 8)
    assert pipeline.average_rate(layers) == pytest.approx(expected)
