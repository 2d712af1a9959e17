# config_presets.py
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from network_model import ConfigError, NetworkConfig, TrafficClass, gamma_product

PRESET_ALPHA = 4.0


def link_distance_for_load(phi_lambda: float, lam: float = 1.0, alpha: float = PRESET_ALPHA, theta: float = 1.0) -> float:
    """R̄ that gives φλ = phi_lambda for the given density, path loss and threshold."""
    return math.sqrt(phi_lambda / (lam * 4.0 * gamma_product(alpha) * theta ** (2.0 / alpha)))


def preset_config(phi_lambdas, arrival_rates, powers=None) -> NetworkConfig:
    """Network with λ = 1, θ = 1, α = 4 and per-class φλ set through the link distance."""
    powers = powers or [1.0] * len(phi_lambdas)
    return NetworkConfig(
        alpha=PRESET_ALPHA,
        classes=tuple(
            TrafficClass(
                lam=1.0,
                power=float(p),
                mean_link_distance=link_distance_for_load(load),
                sir_threshold=1.0,
                arrival_rate=float(a),
                access_prob=1.0,
            )
            for load, a, p in zip(phi_lambdas, arrival_rates, powers)
        ),
    )


@dataclass(frozen=True)
class ExperimentPreset:
    name: str
    description: str
    config: NetworkConfig
    curve_label: str
    curves: tuple[float, ...]
    grid_label: str
    grid: tuple[float, ...]
    reconstruction: bool = False
    simulated: bool = False


def _fig1_grid(points: int = 8) -> tuple[float, ...]:
    # fraction of each curve's stability bound
    return tuple(float(v) for v in np.linspace(0.1, 0.8, points))


PRESETS = {
    "fig1-delay": ExperimentPreset(
        name="fig1-delay",
        description="single-class mean delay vs arrival rate, zeta=0, p=1, analytic curves and simulated points",
        config=preset_config([1.0], [0.0]),
        curve_label="phi_lambda",
        curves=(0.5, 1.0, 2.0),
        grid_label="bound_fraction",
        grid=_fig1_grid(),
        simulated=True,
    ),
    "fig2-weights": ExperimentPreset(
        name="fig2-weights",
        description="optimal delays and power ratio vs weight c2, a1=a2=0.7, phi*lambda=0.15, c1=1",
        config=preset_config([0.15, 0.15], [0.7, 0.7]),
        curve_label="c1",
        curves=(1.0,),
        grid_label="c2",
        grid=tuple(float(v) for v in np.logspace(-2, 2, 41)),
    ),
    "fig3-arrival": ExperimentPreset(
        name="fig3-arrival",
        description="optimal delays and power ratio vs a2 for several c2 (c2 values reconstructed), a1=0.7",
        config=preset_config([0.15, 0.15], [0.7, 0.1]),
        curve_label="c2",
        curves=(0.1, 0.5, 1.0),
        grid_label="a2",
        grid=tuple(float(v) for v in np.linspace(0.025, 0.8, 32)),
        reconstruction=True,
    ),
    "fig4-envelope": ExperimentPreset(
        name="fig4-envelope",
        description="maximum D2D arrival rate vs D1* for several cellular shares, phi*lambda=1, D2*=3",
        config=preset_config([1.0, 1.0], [0.0, 0.0]),
        curve_label="psi2",
        curves=(0.25, 0.5, 0.75),
        grid_label="d1_max",
        grid=tuple(float(v) for v in np.linspace(1.5, 10.0, 35)),
    ),
}

FIG4_D2_MAX = 3.0

# Short names accepted on the command line
PRESET_ALIASES = {
    "fig1": "fig1-delay",
    "delay": "fig1-delay",
    "fig2": "fig2-weights",
    "weights": "fig2-weights",
    "fig3": "fig3-arrival",
    "arrival": "fig3-arrival",
    "fig4": "fig4-envelope",
    "envelope": "fig4-envelope",
}

# Preferred short name per preset, for output file names
REVERSE_PRESET_ALIASES = {}
for _alias, _name in PRESET_ALIASES.items():
    REVERSE_PRESET_ALIASES.setdefault(_name, _alias)


def get_preset(name: str) -> ExperimentPreset:
    key = PRESET_ALIASES.get(name.lower(), name.lower())
    if key not in PRESETS:
        raise ConfigError(f"unknown preset '{name}'; available presets: {', '.join(sorted(PRESETS))}")
    return PRESETS[key]
