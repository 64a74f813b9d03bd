"""Statistic recursion, direct-sum cross-check, and stopping-rule tests.

The geometric closed form used below: with every increment zero and no
prior mass, the statistic after n samples is

    sum_{k=1}^n rho (1-rho)^(k-1) / (1-rho)^n  =  (1-rho)^(-n) - 1,

evaluated independently here with exact exponent arithmetic.
"""

import math

import numpy as np
import pytest

from ccdet.detector import (
    DetectorConfig,
    ShiryaevState,
    direct_log_statistic,
    direct_statistic,
    has_stopped,
    init_state,
    llr_increment,
    prior_log_odds,
    threshold_from_alpha,
    update,
)
from ccdet.sensing import build_matrix, matched_filter


def _chain(zs, rho, pi0=0.0):
    config = DetectorConfig(rho=rho, sigma2=1.0, threshold=10.0, pi0=pi0)
    state = init_state(config)
    for z in zs:
        state = update(state, float(z), rho)
    return state


def test_threshold_from_alpha_values():
    assert threshold_from_alpha(0.5) == 1.0
    assert threshold_from_alpha(0.01) == pytest.approx(99.0, rel=1e-15)
    assert threshold_from_alpha(1e-4) == pytest.approx(9999.0, rel=1e-15)


def test_threshold_from_alpha_rejects_endpoints():
    for alpha in (0.0, 1.0, -0.1, 2.0):
        with pytest.raises(ValueError):
            threshold_from_alpha(alpha)


def test_config_validation():
    with pytest.raises(ValueError):
        DetectorConfig(rho=0.0, sigma2=1.0, threshold=1.0)
    with pytest.raises(ValueError):
        DetectorConfig(rho=0.1, sigma2=0.0, threshold=1.0)
    with pytest.raises(ValueError):
        DetectorConfig(rho=0.1, sigma2=1.0, threshold=0.0)
    with pytest.raises(ValueError):
        DetectorConfig(rho=0.1, sigma2=1.0, threshold=1.0, pi0=1.0)


def test_init_state_prior_odds():
    assert init_state(DetectorConfig(0.1, 1.0, 9.0, pi0=0.0)).log_odds == -math.inf
    assert init_state(DetectorConfig(0.1, 1.0, 9.0, pi0=0.5)).log_odds == pytest.approx(0.0)
    assert init_state(DetectorConfig(0.1, 1.0, 9.0, pi0=0.1)).log_odds == pytest.approx(
        math.log(1.0 / 9.0), rel=1e-15
    )


def test_llr_increment_zero_observation():
    phi = build_matrix("random_ortho_projection", 3, 8, seed=0)
    s = np.arange(1.0, 9.0) / 10.0
    mf = matched_filter(phi, s)
    z = llr_increment(np.zeros(3), mf, sigma2=2.0)
    assert z == pytest.approx(-mf.offset / 2.0, rel=1e-12)


def test_llr_increment_noiseless_post_change():
    # y = Phi s projects to the full captured energy, so z = +offset/sigma2
    phi = build_matrix("random_ortho_projection", 4, 9, seed=1)
    s = np.linspace(0.2, 1.0, 9)
    mf = matched_filter(phi, s)
    z = llr_increment(phi.entries @ s, mf, sigma2=1.0)
    assert z == pytest.approx(mf.offset, rel=1e-9)


def test_llr_increment_shape_mismatch():
    phi = build_matrix("gaussian_ensemble", 3, 8, seed=0)
    mf = matched_filter(phi, np.ones(8))
    with pytest.raises(ValueError):
        llr_increment(np.zeros(4), mf, sigma2=1.0)


def test_llr_increment_mean_is_kl():
    # Post-change mean of z equals the captured energy over 2 sigma^2.
    phi = build_matrix("gaussian_ensemble", 5, 20, seed=3)
    s_values = np.random.default_rng(1).standard_normal(20)
    mf = matched_filter(phi, s_values)
    sigma2 = 1.0
    rng = np.random.default_rng(12)
    n_draws = 200_000
    noise = rng.standard_normal((n_draws, 20))
    # vectorized copy of llr_increment's formula, checked against it on a few rows
    projected = (noise + s_values) @ (phi.entries.T @ mf.weights)
    zs = (projected - mf.offset) / sigma2
    for row in range(5):
        assert zs[row] == pytest.approx(
            llr_increment(phi.entries @ (noise[row] + s_values), mf, sigma2), rel=1e-9
        )
    kl = mf.projected_energy / (2.0 * sigma2)
    se = float(np.std(zs, ddof=1)) / math.sqrt(n_draws)
    assert abs(float(np.mean(zs)) - kl) < 3.0 * se


def test_update_from_zero_statistic():
    # Lambda0 = 0, rho = 0.5, z = 0: Lambda1 = (0 + .5)/.5 = 1
    state = update(ShiryaevState(log_odds=-math.inf, n=0), 0.0, rho=0.5)
    assert state.log_odds == pytest.approx(0.0, abs=1e-15)
    assert state.n == 1


def test_update_tiny_rho_keeps_statistic():
    # Lambda0 = 1, rho -> 0+, z = 0: Lambda1 -> 1
    state = update(ShiryaevState(log_odds=0.0, n=0), 0.0, rho=1e-12)
    assert math.exp(state.log_odds) == pytest.approx(1.0, abs=1e-9)


def test_update_rejects_nonfinite_increment():
    state = ShiryaevState(log_odds=0.0, n=0)
    for bad in (math.nan, math.inf, -math.inf):
        with pytest.raises(ValueError):
            update(state, bad, rho=0.1)
    with pytest.raises(ValueError):
        update(state, 0.0, rho=1.0)


def test_direct_single_increment():
    zs = [0.37]
    value = direct_statistic(zs, DetectorConfig(0.2, 1.0, 5.0, pi0=0.0))
    assert value == pytest.approx(0.2 * math.exp(0.37) / 0.8, rel=1e-12)


def test_direct_zero_increments_closed_form():
    for rho in (0.05, 0.1, 0.3):
        for n in (1, 4, 10, 25):
            value = direct_statistic(np.zeros(n), DetectorConfig(rho, 1.0, 5.0))
            expected = (1.0 - rho) ** (-n) - 1.0
            assert value == pytest.approx(expected, rel=1e-10)
    # one frozen spot value, recomputed at high precision beforehand
    assert direct_statistic(np.zeros(10), DetectorConfig(0.1, 1.0, 5.0)) == pytest.approx(
        1.8679719907924413, rel=1e-12
    )


def test_direct_empty_sequence_is_prior():
    assert direct_log_statistic([], 0.1, 0.0) == -math.inf
    assert direct_log_statistic([], 0.1, 0.5) == pytest.approx(0.0, abs=1e-15)


def test_direct_rejects_nonfinite():
    with pytest.raises(ValueError):
        direct_log_statistic([0.0, math.inf], 0.1)


def test_recursion_matches_direct_sum():
    rng = np.random.default_rng(100)
    for pi0 in (0.0, 0.1, 0.45):
        for trial in range(25):
            rho = float(rng.uniform(0.02, 0.6))
            length = int(rng.integers(1, 120))
            zs = rng.normal(rng.uniform(-1, 1), rng.uniform(0.2, 2.0), size=length)
            chained = _chain(zs, rho, pi0).log_odds
            direct = direct_log_statistic(zs, rho, pi0)
            assert chained == pytest.approx(direct, rel=1e-9, abs=1e-9)


def test_statistic_monotone_in_any_increment():
    rng = np.random.default_rng(3)
    zs = rng.normal(0.0, 1.0, size=30)
    base = direct_log_statistic(zs, 0.1)
    for t in (0, 10, 29):
        bumped = zs.copy()
        bumped[t] += 0.5
        assert direct_log_statistic(bumped, 0.1) > base


def test_orthogonal_observation_shift_is_invisible():
    # Adding a component orthogonal to the filter cannot change increments
    # beyond roundoff, hence not the trajectory either.
    phi = build_matrix("gaussian_ensemble", 4, 12, seed=9)
    s = np.random.default_rng(2).standard_normal(12)
    mf = matched_filter(phi, s)
    rng = np.random.default_rng(5)
    # build a vector orthogonal to the weights in measurement space
    v = rng.standard_normal(4)
    v -= (v @ mf.weights) / (mf.weights @ mf.weights) * mf.weights
    assert abs(v @ mf.weights) < 1e-12
    for _ in range(20):
        y = rng.standard_normal(4)
        z_base = llr_increment(y, mf, 1.0)
        z_shift = llr_increment(y + v, mf, 1.0)
        assert z_shift == pytest.approx(z_base, abs=1e-10)


def test_stopping_time_monotone_in_threshold():
    rng = np.random.default_rng(8)
    zs = rng.normal(0.4, 1.0, size=200)
    rho = 0.1

    def stop_time(threshold):
        config = DetectorConfig(rho, 1.0, threshold)
        state = init_state(config)
        for z in zs:
            state = update(state, float(z), rho)
            if has_stopped(state, threshold):
                return state.n
        return None

    taus = [stop_time(a) for a in (2.0, 20.0, 200.0)]
    assert all(t is not None for t in taus)
    assert taus[0] <= taus[1] <= taus[2]


def test_has_stopped_boundary_inclusive():
    threshold = 99.0
    at_boundary = ShiryaevState(log_odds=math.log(threshold), n=5)
    assert has_stopped(at_boundary, threshold)
    below = ShiryaevState(log_odds=math.log(threshold) - 1e-9, n=5)
    assert not has_stopped(below, threshold)


def test_has_stopped_requires_a_sample():
    # n = 0 never stops, even when the prior already exceeds the level
    assert not has_stopped(ShiryaevState(log_odds=10.0, n=0), 2.0)
    assert has_stopped(ShiryaevState(log_odds=10.0, n=1), 2.0)


def test_stops_at_first_sample_when_prior_exceeds_threshold():
    # pi0 = 0.6 gives prior odds 1.5 >= threshold 1.2; a zero increment
    # still lifts the statistic, so the rule fires at n = 1.
    config = DetectorConfig(rho=0.1, sigma2=1.0, threshold=1.2, pi0=0.6)
    state = update(init_state(config), 0.0, config.rho)
    assert state.n == 1
    assert has_stopped(state, config.threshold)


def test_long_post_change_run_stays_finite_in_log_domain():
    # 300 strongly positive increments overflow the linear scale but the
    # log-domain recursion stays finite and equals the direct sum.
    zs = np.full(300, 12.0)
    chained = _chain(zs, 0.1).log_odds
    assert math.isfinite(chained)
    assert chained > 700.0
    assert chained == pytest.approx(direct_log_statistic(zs, 0.1), rel=1e-12)
    assert direct_statistic(zs, DetectorConfig(0.1, 1.0, 5.0)) == math.inf


def test_prior_log_odds_validation():
    with pytest.raises(ValueError):
        prior_log_odds(1.0)
    with pytest.raises(ValueError):
        prior_log_odds(-0.1)
