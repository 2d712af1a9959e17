# test_analytic.py
import math

import numpy as np
import pytest
from scipy import integrate

import analytic
from config_presets import preset_config
from network_model import ConfigError, NetworkConfig, UnstableNetworkError, derive_constants
from simulator import rayleigh_scale


# --- single class ---------------------------------------------------------

@pytest.mark.parametrize("phi_lambda, expected", [(1.0, 0.5), (2.0, 1.0 / 3.0), (0.5, 2.0 / 3.0)])
def test_single_class_bound(single_class, phi_lambda, expected):
    assert analytic.single_class_bound(single_class(phi_lambda=phi_lambda)) == pytest.approx(expected, rel=1e-12)


def test_bound_tends_to_access_prob_without_interference(single_class):
    config = single_class(phi_lambda=1e-9, access_prob=0.6)
    assert analytic.single_class_bound(config) == pytest.approx(0.6, rel=1e-8)


def test_closure_bound_is_bound_at_unit_access(single_class):
    low = single_class(access_prob=0.3)
    assert analytic.single_class_closure_bound(low) == pytest.approx(analytic.single_class_bound(single_class()))
    assert analytic.single_class_bound(low) < analytic.single_class_closure_bound(low)


def test_single_class_worked_example(single_class):
    config = single_class(arrival_rate=0.25)
    assert analytic.single_class_success(config) == pytest.approx(0.75, rel=1e-12)
    assert analytic.single_class_delay(config) == pytest.approx(1.5, rel=1e-12)


def test_no_traffic_gives_unit_success(single_class):
    assert analytic.single_class_success(single_class()) == 1.0
    assert analytic.single_class_delay(single_class(arrival_rate=1e-9)) == pytest.approx(1.0, rel=1e-6)


def test_unstable_single_class_carries_bound(single_class):
    with pytest.raises(UnstableNetworkError) as err:
        analytic.single_class_delay(single_class(arrival_rate=0.5))
    assert err.value.bound == pytest.approx(0.5)
    assert err.value.violated_class == 0


def test_single_class_analysis_bundle(single_class):
    result = analytic.single_class_analysis(single_class(arrival_rate=0.25))
    assert result.stability_bound == pytest.approx(0.5)
    assert result.closure_bound == pytest.approx(0.5)
    assert result.mean_delay == pytest.approx(1.5)


def _random_single_class(rng, config_factory):
    n = int(rng.integers(1, 4))
    config = config_factory(rng, n, access_prob=float(rng.uniform(0.1, 1.0)))
    bound = analytic.single_class_bound(config)
    return config.with_class(0, arrival_rate=float(rng.uniform(0.0, 0.999)) * bound)


def test_single_class_fixed_point(rng, config_factory):
    for _ in range(100):
        config = _random_single_class(rng, config_factory)
        constants = derive_constants(config)
        phi, lam, a = constants.phi[0], config.lam[0], config.arrival_rate[0]
        ps = analytic.single_class_success(config)
        assert abs(ps - 1.0 / (1.0 + phi * (lam * a / ps + constants.zeta))) < 1e-12


def test_single_class_delay_matches_load_form(rng, config_factory):
    for _ in range(50):
        config = _random_single_class(rng, config_factory)
        p, a = config.access_prob[0], config.arrival_rate[0]
        ps = analytic.single_class_success(config)
        assert analytic.single_class_delay(config) == pytest.approx((1 - a) / (p * ps - a), rel=1e-9)
        assert analytic.single_class_delay(config) >= 1.0


def test_unit_access_minimizes_delay(rng, config_factory):
    for _ in range(50):
        config = config_factory(rng, int(rng.integers(1, 4)))
        config = config.with_class(0, arrival_rate=0.9 * analytic.single_class_bound(config) * rng.uniform())
        best = analytic.single_class_delay(config)
        for p in np.arange(0.1, 1.0, 0.1):
            trial = config.with_class(0, access_prob=float(p))
            if config.arrival_rate[0] < analytic.single_class_bound(trial):
                assert best <= analytic.single_class_delay(trial) * (1 + 1e-12)


# --- multi class ----------------------------------------------------------

def test_symmetric_pair_delay(symmetric_pair):
    metrics = analytic.multi_class_metrics(symmetric_pair)
    assert metrics.mean_delay == pytest.approx([10 / 3, 10 / 3], rel=1e-12)
    assert metrics.success_prob == pytest.approx([0.79, 0.79], rel=1e-12)
    assert metrics.channel_share.sum() == pytest.approx(1.0, abs=1e-12)
    assert metrics.load == pytest.approx([0.7 / 0.79, 0.7 / 0.79])


def test_one_class_reduces_to_single_class(single_class):
    config = single_class(arrival_rate=0.3, phi_lambda=0.8)
    metrics = analytic.multi_class_metrics(config)
    assert metrics.success_prob[0] == pytest.approx(analytic.single_class_success(config), rel=1e-12)
    assert metrics.mean_delay[0] == pytest.approx(analytic.single_class_delay(config), rel=1e-12)


def test_all_zero_arrivals():
    metrics = analytic.multi_class_metrics(preset_config([0.3, 0.2, 0.1], [0.0, 0.0, 0.0]))
    assert metrics.success_prob.tolist() == [1.0, 1.0, 1.0]
    assert metrics.mean_delay.tolist() == [1.0, 1.0, 1.0]
    assert metrics.channel_share.tolist() == [0.0, 0.0, 0.0]


def test_unstable_multi_class_names_class():
    config = preset_config([1.0, 0.1], [0.6, 0.1])
    with pytest.raises(UnstableNetworkError) as err:
        analytic.multi_class_metrics(config)
    assert err.value.violated_class == 0


def test_multi_class_rejects_partial_access(symmetric_pair):
    with pytest.raises(ConfigError, match="access_prob must be 1"):
        analytic.multi_class_metrics(symmetric_pair.with_class(1, access_prob=0.5))


def test_multi_class_fixed_point(rng, stable_config_factory):
    for _ in range(100):
        config = stable_config_factory(rng, int(rng.integers(1, 5)))
        metrics = analytic.multi_class_metrics(config)
        phi = derive_constants(config).phi
        x = config.power_delta()
        ps = metrics.success_prob
        active = float(np.sum(x * config.lam * config.arrival_rate / ps))
        assert np.max(np.abs(ps - 1.0 / (1.0 + phi / x * active))) < 1e-12


def test_delay_formula_consistency(rng, moderate_config_factory):
    for _ in range(50):
        config = moderate_config_factory(rng, int(rng.integers(1, 5)))
        metrics = analytic.multi_class_metrics(config)
        a = config.arrival_rate
        assert metrics.mean_delay * (metrics.success_prob - a) == pytest.approx(1 - a, rel=1e-12)
        assert np.all(metrics.mean_delay >= 1.0)
        assert np.all(metrics.success_prob > a)


def test_power_scale_invariance(rng, moderate_config_factory):
    config = moderate_config_factory(rng, 3)
    base = analytic.multi_class_metrics(config)
    scaled = analytic.multi_class_metrics(config.with_powers(config.power * 1e3))
    assert scaled.success_prob == pytest.approx(base.success_prob, rel=1e-9)
    assert scaled.mean_delay == pytest.approx(base.mean_delay, rel=1e-9)
    assert scaled.channel_share == pytest.approx(base.channel_share, rel=1e-9)


def test_more_traffic_never_helps(rng, moderate_config_factory):
    checked = 0
    while checked < 30:
        config = moderate_config_factory(rng, int(rng.integers(2, 5)))
        k = int(rng.integers(config.n_classes))
        bumped = config.with_class(k, arrival_rate=config.arrival_rate[k] * 1.02)
        try:
            after = analytic.multi_class_metrics(bumped)
        except UnstableNetworkError:
            continue
        before = analytic.multi_class_metrics(config)
        assert np.all(after.success_prob <= before.success_prob + 1e-15)
        assert np.all(after.mean_delay >= before.mean_delay - 1e-12)
        checked += 1


def test_idle_classes_leave_single_class_result():
    config = preset_config([0.3, 0.5, 0.2], [0.0, 0.4, 0.0], powers=[2.0, 1.0, 5.0])
    metrics = analytic.multi_class_metrics(config)
    alone = NetworkConfig(alpha=config.alpha, classes=(config.classes[1],))
    assert metrics.success_prob[1] == pytest.approx(analytic.single_class_success(alone), rel=1e-12)
    assert metrics.mean_delay[1] == pytest.approx(analytic.single_class_delay(alone), rel=1e-12)


# --- channel-share identities --------------------------------------------

def test_channel_share_identities(rng, moderate_config_factory):
    for _ in range(100):
        config = moderate_config_factory(rng, int(rng.integers(2, 5)))
        metrics = analytic.multi_class_metrics(config)
        residuals = analytic.lemma1_residuals(metrics, config)
        assert residuals.sum_residual < 1e-10
        assert residuals.pairwise_residual < 1e-9
        lhs = analytic.physical_identity_lhs(config, metrics)
        assert abs(lhs - analytic.physical_identity_rhs(config.alpha)) < 1e-9


def test_single_class_pairwise_residual_is_zero(single_class):
    config = single_class(arrival_rate=0.2)
    residuals = analytic.lemma1_residuals(analytic.multi_class_metrics(config), config)
    assert residuals.pairwise_residual == 0.0
    assert residuals.sum_residual < 1e-12


def test_residuals_undefined_without_traffic():
    config = preset_config([0.3, 0.2], [0.0, 0.0])
    residuals = analytic.lemma1_residuals(analytic.multi_class_metrics(config), config)
    assert math.isnan(residuals.sum_residual) and math.isnan(residuals.pairwise_residual)


def test_physical_identity_rhs():
    assert analytic.physical_identity_rhs(4.0) == pytest.approx(2 / math.pi, rel=1e-15)
    assert analytic.physical_identity_rhs(1e6) == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(ConfigError):
        analytic.physical_identity_rhs(2.0)


# --- conditional SIR law ----------------------------------------------------

def test_conditional_success_shape(single_class):
    config = single_class(phi_lambda=1.0)
    values = analytic.conditional_success(config, [0.0, 0.1, 0.2, 0.4])
    assert values[0] == 1.0
    assert np.all(np.diff(values) < 0)


@pytest.mark.parametrize(
    "loads, powers, access",
    [
        ([1.0], [1.0], 1.0),
        ([0.5, 0.8], [1.0, 4.0], 0.5),
        ([2.0, 0.3, 0.1], [3.0, 1.0, 0.2], 0.7),
    ],
)
def test_conditional_success_averages_to_closure(loads, powers, access):
    config = preset_config(loads, [0.0] * len(loads), powers=powers)
    config = config.with_class(0, access_prob=access)
    scale = float(rayleigh_scale(config.mean_link_distance[0]))
    # E over the Rayleigh link distance, in units of its scale
    mean, _ = integrate.quad(
        lambda u: float(analytic.conditional_success(config, scale * u)) * u * math.exp(-(u ** 2) / 2),
        0.0,
        np.inf,
    )
    constants = derive_constants(config)
    expected = 1.0 / (1.0 + constants.phi[0] * (config.lam[0] * access + constants.zeta))
    assert mean == pytest.approx(expected, rel=1e-7)


def test_saturated_success_single_class(single_class):
    assert analytic.saturated_success(single_class(phi_lambda=1.0))[0] == pytest.approx(0.5)
