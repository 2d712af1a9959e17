# conftest.py
import numpy as np
import pytest

import stability
from config_presets import link_distance_for_load, preset_config
from network_model import NetworkConfig, TrafficClass, derive_constants


def _log_uniform(rng, low, high, size=None):
    return np.exp(rng.uniform(np.log(low), np.log(high), size=size))


def draw_config(rng, n, alpha=None, access_prob=1.0):
    """
    Random N-class config: λ, P, θ and the φλ load log-uniform over three decades,
    arrival rates a uniform fraction of each class's saturated closure bound.
    """
    alpha = float(rng.uniform(2.5, 6.0)) if alpha is None else alpha
    lam = _log_uniform(rng, 0.1, 100.0, n)
    power = _log_uniform(rng, 0.1, 100.0, n)
    theta = _log_uniform(rng, 0.1, 100.0, n)
    phi_lambda = _log_uniform(rng, 0.01, 10.0, n)
    classes = []
    for k in range(n):
        distance = link_distance_for_load(phi_lambda[k], lam=lam[k], alpha=alpha, theta=theta[k])
        classes.append(
            TrafficClass(
                lam=float(lam[k]),
                power=float(power[k]),
                mean_link_distance=float(distance),
                sir_threshold=float(theta[k]),
                arrival_rate=0.0,
                access_prob=access_prob,
            )
        )
    config = NetworkConfig(alpha=alpha, classes=tuple(classes))
    phi = derive_constants(config).phi
    ceiling = 1.0 / (1.0 + phi * config.lam)
    return config.with_arrivals(rng.uniform(0.0, 1.0, n) * ceiling)


def draw_stable_config(rng, n, alpha=None):
    config = draw_config(rng, n, alpha=alpha)
    while not stability.check_region(config).stable:
        config = config.with_arrivals(config.arrival_rate * 0.5)
    return config


def draw_moderate_config(rng, n, alpha=None):
    """Stable config with parameters within one to two decades and non-trivial traffic."""
    alpha = float(rng.uniform(2.5, 6.0)) if alpha is None else alpha
    while True:
        lam = _log_uniform(rng, 0.1, 10.0, n)
        theta = _log_uniform(rng, 0.1, 10.0, n)
        classes = tuple(
            TrafficClass(
                lam=float(lam[k]),
                power=float(_log_uniform(rng, 0.1, 10.0)),
                mean_link_distance=float(
                    link_distance_for_load(rng.uniform(0.05, 0.4), lam=lam[k], alpha=alpha, theta=theta[k])
                ),
                sir_threshold=float(theta[k]),
                arrival_rate=float(rng.uniform(0.05, 0.6)),
            )
            for k in range(n)
        )
        config = NetworkConfig(alpha=alpha, classes=classes)
        if stability.check_region(config).stable:
            return config


@pytest.fixture
def moderate_config_factory():
    return draw_moderate_config


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def config_factory():
    return draw_config


@pytest.fixture
def stable_config_factory():
    return draw_stable_config


@pytest.fixture
def single_class():
    """φλ = 1, ζ = 0, p = 1, no traffic yet."""

    def build(arrival_rate=0.0, phi_lambda=1.0, access_prob=1.0):
        config = preset_config([phi_lambda], [arrival_rate])
        return config.with_class(0, access_prob=access_prob)

    return build


@pytest.fixture
def symmetric_pair():
    """Two classes with φλ = 0.15 and a = 0.7, equal powers."""
    return preset_config([0.15, 0.15], [0.7, 0.7])


@pytest.fixture
def config_dict():
    return {
        "alpha": 4.0,
        "classes": [
            {
                "lambda": 1.0,
                "power": 1.0,
                "mean_link_distance": 0.5,
                "sir_threshold": 1.0,
                "arrival_rate": 0.2,
                "access_prob": 1.0,
            },
            {
                "lambda": 0.5,
                "power": 2.0,
                "mean_link_distance": 0.3,
                "sir_threshold": 2.0,
                "arrival_rate": 0.1,
                "access_prob": 1.0,
            },
        ],
    }
