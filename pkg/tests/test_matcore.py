import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_spd
from watersic import matcore
from watersic.covariance import CovarianceSet
from watersic.errors import DimensionMismatch, NotPositiveDefinite


def test_cholesky_identity():
    assert np.array_equal(matcore.cholesky(np.eye(3)), np.eye(3))


def test_cholesky_hand_example():
    l = matcore.cholesky([[4.0, 2.0], [2.0, 5.0]])
    np.testing.assert_allclose(l, [[2.0, 0.0], [1.0, 2.0]], atol=1e-15)
    np.testing.assert_allclose(l @ l.T, [[4.0, 2.0], [2.0, 5.0]])


def test_cholesky_rejects_indefinite():
    with pytest.raises(NotPositiveDefinite):
        matcore.cholesky([[1.0, 2.0], [2.0, 1.0]])


def test_cholesky_rejects_near_singular():
    v = np.array([[1.0], [1.0]])
    with pytest.raises(NotPositiveDefinite):
        matcore.cholesky(v @ v.T)


def test_cholesky_rejects_non_square():
    with pytest.raises(DimensionMismatch):
        matcore.cholesky(np.ones((2, 3)))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 24), st.integers(0, 2**31))
def test_cholesky_reconstructs(n, seed):
    h = random_spd(np.random.default_rng(seed), n)
    l = matcore.cholesky(h)
    assert np.allclose(l, np.tril(l))
    assert np.linalg.norm(l @ l.T - h) <= 1e-10 * np.linalg.norm(h)


def test_solve_upper_right_identity(rng):
    m = rng.standard_normal((3, 4))
    np.testing.assert_allclose(matcore.solve_upper_right(m, np.eye(4)), m)


def test_solve_upper_right_hand_example():
    l = np.array([[2.0, 0.0], [1.0, 2.0]])
    x = matcore.solve_upper_right([[2.0, 3.0]], l)
    # back-substitution against L^T = [[2, 1], [0, 2]]: x2 = 3/2 - x1/2, x1 = 2/2
    np.testing.assert_allclose(x, [[1.0, 1.0]])
    np.testing.assert_allclose(x @ l.T, [[2.0, 3.0]])


def test_solve_upper_right_drift_reduction(rng):
    sigma = random_spd(rng, 6)
    l = matcore.cholesky(sigma)
    w = rng.standard_normal((5, 6))
    np.testing.assert_allclose(matcore.solve_upper_right(w @ sigma, l), w @ l, atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 16), st.integers(1, 8), st.integers(0, 2**31))
def test_solve_upper_right_reconstructs(n, a, seed):
    rng = np.random.default_rng(seed)
    l = matcore.cholesky(random_spd(rng, n))
    m = rng.standard_normal((a, n))
    x = matcore.solve_upper_right(m, l)
    assert np.linalg.norm(x @ l.T - m) <= 1e-10 * max(np.linalg.norm(m), 1e-300)


def test_damp_zero_is_identity(rng):
    covs = CovarianceSet.create(random_spd(rng, 4), random_spd(rng, 4), rng.standard_normal((4, 4)))
    out = matcore.damp(covs, 0.0)
    np.testing.assert_array_equal(out.sigma_x, covs.sigma_x)
    np.testing.assert_array_equal(out.sigma_xhat, covs.sigma_xhat)
    np.testing.assert_array_equal(out.sigma_x_xhat, covs.sigma_x_xhat)


def test_damp_identity():
    out = matcore.damp(CovarianceSet.collapsed(np.eye(4)), 0.1)
    np.testing.assert_allclose(out.sigma_x, 1.1 * np.eye(4))


def test_damp_leaves_residual_term(rng):
    m = rng.standard_normal((3, 4))
    covs = CovarianceSet.create(np.eye(4), sigma_delta_xhat=m)
    np.testing.assert_array_equal(matcore.damp(covs, 0.3).sigma_delta_xhat, m)


def test_damp_shifts_diagonals_by_reference_mean(rng):
    sx, sxh = random_spd(rng, 5), random_spd(rng, 5)
    cross = rng.standard_normal((5, 5))
    covs = CovarianceSet.create(sx, sxh, cross)
    out = matcore.damp(covs, 0.05)
    shift = 0.05 * np.mean(np.diag(sxh))
    for before, after in [(sx, out.sigma_x), (sxh, out.sigma_xhat), (cross, out.sigma_x_xhat)]:
        np.testing.assert_allclose(after - before, shift * np.eye(5), atol=1e-14)


def test_detect_dead_examples():
    m = matcore.detect_dead(np.diag([1.0, 1e-9, 2.0]))
    assert m.live.tolist() == [True, False, True]
    assert matcore.detect_dead(np.eye(4)).dead_count == 0
    assert matcore.detect_dead(np.diag([1e6, 1.0, 1.0, 1e-2])).dead_count == 0


def test_reduce_expand():
    mask = matcore.FeatureMask(np.array([True, False, True]))
    w = np.arange(6.0).reshape(2, 3)
    r = matcore.reduce(w, mask)
    np.testing.assert_array_equal(r, [[0.0, 2.0], [3.0, 5.0]])
    back = matcore.expand(r, mask)
    np.testing.assert_array_equal(back, [[0.0, 0.0, 2.0], [3.0, 0.0, 5.0]])
    all_live = matcore.FeatureMask.all_live(3)
    np.testing.assert_array_equal(matcore.reduce(w, all_live), w)


def test_reduce_both_axes():
    mask = matcore.FeatureMask(np.array([True, False, True]))
    s = np.arange(9.0).reshape(3, 3)
    np.testing.assert_array_equal(matcore.reduce(s, mask, "both"), [[0.0, 2.0], [6.0, 8.0]])


def test_wsmx_round_trip(tmp_path, rng):
    m = rng.standard_normal((3, 7))
    p = tmp_path / "m.wsmx"
    matcore.write_wsmx(p, m)
    raw = p.read_bytes()
    assert raw[:4] == b"WSMX" and len(raw) == 4 + 4 + 1 + 8 + 8 + 8 * 21
    np.testing.assert_array_equal(matcore.read_wsmx(p), m)


def test_wsmx_rejects_garbage(tmp_path):
    p = tmp_path / "bad.wsmx"
    p.write_bytes(b"NOPE" + bytes(30))
    with pytest.raises(ValueError):
        matcore.read_wsmx(p)
