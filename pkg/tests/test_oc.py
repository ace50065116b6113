import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fieldtopo.oc import OcParams, _targets, oc_targets, volume_estimate


def random_instance(rng, n):
    rho = rng.uniform(0.0, 1.0, n)
    s = -rng.uniform(0.0, 3.0, n)
    return rho, s


def reachable_target(rng, rho, move=0.2, margin=0.02):
    # one OC step can only move the volume within the pooled move limits
    lo = np.maximum(0.0, rho - move).mean() + margin
    hi = np.minimum(1.0, rho + move).mean() - margin
    return rng.uniform(lo, hi)


def dense_lambda_sweep(rho, s, target, params=OcParams(), n_lambda=200000):
    """Independent oracle: evaluate the volume on a dense log-lambda grid and
    return the lambda whose volume is closest to the target."""
    lams = np.geomspace(1e-9, 1e9, n_lambda)
    best_lam, best_err = None, np.inf
    for lam in lams:
        v = _targets(rho, s, lam, params, None).mean()
        err = abs(v - target)
        if err < best_err:
            best_lam, best_err = lam, err
    return best_lam


def test_volume_estimate_pools_batches():
    assert volume_estimate([np.array([0.0, 1.0]), np.array([0.5, 0.5, 0.5])]) \
        == pytest.approx(0.5)
    with pytest.raises(ValueError):
        volume_estimate([np.array([])])


def test_two_sample_closed_form():
    # rho = [0.5, 0.5], s~ = [-2, -1], V = 0.5, wide move limit. Unclamped
    # targets 0.5 sqrt(2/lam), 0.5 sqrt(1/lam); mean = 0.5 gives
    # sqrt(lam) = (sqrt(2) + 1) / 2, so rho_hat = [sqrt2, 1] / (sqrt2 + 1).
    rho = np.array([0.5, 0.5])
    s = np.array([-2.0, -1.0])
    params = OcParams(move_limit=1.0, volume_tol=1e-10)
    out, lam = oc_targets(rho, s, 0.5, params)
    sqrt_lam = (np.sqrt(2.0) + 1.0) / 2.0
    assert lam == pytest.approx(sqrt_lam**2, rel=1e-6)
    assert out[0] == pytest.approx(np.sqrt(2.0) / (np.sqrt(2.0) + 1.0), rel=1e-6)
    assert out[1] == pytest.approx(1.0 / (np.sqrt(2.0) + 1.0), rel=1e-6)
    assert out.mean() == pytest.approx(0.5, abs=1e-10)


def test_volume_constraint_met_within_tolerance():
    rng = np.random.default_rng(0)
    for _ in range(50):
        rho, s = random_instance(rng, 200)
        target = reachable_target(rng, rho)
        out, _ = oc_targets(rho, s, target)
        assert abs(out.mean() - target) <= 1e-4


def test_move_limits_and_box_never_violated():
    rng = np.random.default_rng(1)
    for _ in range(50):
        rho, s = random_instance(rng, 300)
        target = reachable_target(rng, rho)
        out, _ = oc_targets(rho, s, target)
        assert np.all(out >= np.maximum(0.0, rho - 0.2) - 1e-15)
        assert np.all(out <= np.minimum(1.0, rho + 0.2) + 1e-15)


def test_lambda_matches_dense_sweep():
    rng = np.random.default_rng(2)
    for _ in range(5):
        rho, s = random_instance(rng, 150)
        target = reachable_target(rng, rho, margin=0.05)
        _, lam = oc_targets(rho, s, target)
        ref = dense_lambda_sweep(rho, s, target, n_lambda=20000)
        assert np.log(lam) == pytest.approx(np.log(ref), abs=5e-3)


def test_frozen_samples_keep_their_density():
    rng = np.random.default_rng(3)
    rho, s = random_instance(rng, 100)
    frozen = np.zeros(100, dtype=bool)
    frozen[:10] = True
    out, _ = oc_targets(rho, s, 0.5, frozen_mask=frozen)
    assert np.array_equal(out[:10], rho[:10])


def test_degenerate_zero_sensitivity_shifts_uniformly():
    rho = np.full(50, 0.6)
    s = np.zeros(50)
    out, lam = oc_targets(rho, s, 0.5)
    assert np.isnan(lam)
    assert out.mean() == pytest.approx(0.5)
    assert np.allclose(out, 0.5)


def test_stronger_sensitivity_gets_more_material():
    rho = np.full(4, 0.5)
    s = np.array([-4.0, -2.0, -1.0, -0.5])
    out, _ = oc_targets(rho, s, 0.5, OcParams(move_limit=1.0))
    assert np.all(np.diff(out) < 0)


def test_multi_batch_pooling_equals_concatenation():
    rng = np.random.default_rng(4)
    rho, s = random_instance(rng, 120)
    pooled, lam_pooled = oc_targets([rho[:50], rho[50:]], [s[:50], s[50:]], 0.4)
    single, lam_single = oc_targets(rho, s, 0.4)
    assert np.array_equal(pooled, single)
    assert lam_pooled == lam_single


def test_unreachable_volume_raises():
    rho = np.full(10, 0.5)
    s = -np.ones(10)
    with pytest.raises(RuntimeError):
        # move limit 0.2 cannot reach volume 0.9 in one update
        oc_targets(rho, s, 0.9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_oc_properties_random(seed):
    rng = np.random.default_rng(seed)
    rho, s = random_instance(rng, 80)
    target = reachable_target(rng, rho)
    out, lam = oc_targets(rho, s, target)
    assert abs(out.mean() - target) <= 1e-4
    assert np.all(out >= np.maximum(0.0, rho - 0.2) - 1e-15)
    assert np.all(out <= np.minimum(1.0, rho + 0.2) + 1e-15)
    assert lam > 0
