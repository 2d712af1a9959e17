# sweep_runner.py
"""
Parameter sweeps and the preset experiments behind the CLI's table outputs.
Every function here returns a pandas DataFrame with a fixed column order.
"""
from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import pandas as pd

import analytic
import simulator
import stability
from config_presets import FIG4_D2_MAX, ExperimentPreset, link_distance_for_load
from network_model import (
    CLASS_FIELDS,
    ConfigError,
    NetworkConfig,
    UnstableNetworkError,
)
from power_optimizer import DelayWeights, arrival_sweep, cell_rate_for_share, max_d2d_rate, optimal_powers

# "alpha" or "classes[<i>].<field>"
PARAMETER_PATTERN = re.compile(r"^(?:(alpha)|classes\[(\d+)\]\.(" + "|".join(CLASS_FIELDS) + r"))$")

# JSON key -> TrafficClass attribute
_CLASS_ATTRS = {"lambda": "lam"}


@dataclass(frozen=True)
class SweepSpec:
    parameter: str
    grid: tuple[float, ...]
    outputs: tuple[str, ...] = ("success_prob", "mean_delay")

    def __post_init__(self):
        object.__setattr__(self, "grid", tuple(float(v) for v in self.grid))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        problems = []
        if not PARAMETER_PATTERN.match(self.parameter):
            problems.append(f"parameter '{self.parameter}' must look like 'alpha' or 'classes[1].arrival_rate'")
        if not self.grid:
            problems.append("grid must contain at least one value")
        unknown = [name for name in self.outputs if name not in METRICS]
        if unknown:
            problems.append(f"unknown outputs {unknown}; available: {', '.join(METRICS)}")
        if not self.outputs:
            problems.append("outputs must name at least one metric")
        if problems:
            raise ConfigError(problems)


def apply_parameter(config: NetworkConfig, parameter: str, value: float) -> NetworkConfig:
    match = PARAMETER_PATTERN.match(parameter)
    if not match:
        raise ConfigError(f"cannot parse parameter path '{parameter}'")
    if match.group(1):
        return NetworkConfig(alpha=float(value), classes=config.classes)
    index, key = int(match.group(2)), match.group(3)
    if index >= config.n_classes:
        raise ConfigError(f"{parameter}: class index out of range for {config.n_classes} classes")
    try:
        return config.with_class(index, **{_CLASS_ATTRS.get(key, key): float(value)})
    except ConfigError as e:
        raise ConfigError([f"classes[{index}].{v}" for v in e.violations]) from None


class SweepPoint:
    """Lazily evaluated analytic results for one grid point."""

    def __init__(self, config: NetworkConfig):
        self.config = config

    @cached_property
    def verdict(self) -> stability.StabilityVerdict:
        return stability.check_region(self.config)

    @cached_property
    def metrics(self):
        if not self.verdict.stable:
            return None
        return analytic.multi_class_metrics(self.config)

    def per_class(self, attr: str) -> np.ndarray:
        if self.metrics is None:
            return np.full(self.config.n_classes, np.nan)
        return getattr(self.metrics, attr)

    def sum_residual(self) -> float:
        if self.metrics is None:
            return math.nan
        return analytic.lemma1_residuals(self.metrics, self.config).sum_residual

    def single_class_delays(self) -> np.ndarray:
        delays = []
        for n in range(self.config.n_classes):
            try:
                delays.append(analytic.single_class_delay(self.config, n))
            except UnstableNetworkError:
                delays.append(math.nan)
        return np.array(delays)


METRICS = {
    "success_prob": lambda pt: pt.per_class("success_prob"),
    "mean_delay": lambda pt: pt.per_class("mean_delay"),
    "load": lambda pt: pt.per_class("load"),
    "channel_share": lambda pt: pt.per_class("channel_share"),
    "stable": lambda pt: pt.verdict.stable,
    "feasible": lambda pt: stability.feasibility_over_powers(pt.config),
    "sum_residual": lambda pt: pt.sum_residual(),
    "single_class_bound": lambda pt: np.array(
        [analytic.single_class_bound(pt.config, n) for n in range(pt.config.n_classes)]
    ),
    "single_class_delay": lambda pt: pt.single_class_delays(),
}


def sweep_columns(spec: SweepSpec, n_classes: int) -> list[str]:
    columns = [spec.parameter]
    for name in spec.outputs:
        if name in ("stable", "feasible", "sum_residual"):
            columns.append(name)
        else:
            columns.extend(f"{name}_{n}" for n in range(n_classes))
    return columns


def run_sweep(config: NetworkConfig, spec: SweepSpec) -> pd.DataFrame:
    # Domain check for every value before any work
    points = [apply_parameter(config, spec.parameter, v) for v in spec.grid]
    logging.info(f"--- SWEEP: {spec.parameter} over {len(points)} values, outputs={list(spec.outputs)} ---")

    rows = []
    for value, point_config in zip(spec.grid, points):
        point = SweepPoint(point_config)
        row = {spec.parameter: value}
        for name in spec.outputs:
            result = METRICS[name](point)
            if np.ndim(result) == 0:
                row[name] = result.item() if isinstance(result, np.generic) else result
            else:
                row.update({f"{name}_{n}": float(v) for n, v in enumerate(result)})
        if "verdict" in point.__dict__ and not point.verdict.stable:
            logging.info(f"--- SWEEP: {spec.parameter}={value} is unstable ({point.verdict.detail}) ---")
        rows.append(row)

    return pd.DataFrame(rows, columns=sweep_columns(spec, config.n_classes))


# ---------------------------------------------------------------------------
# Simulation tables
# ---------------------------------------------------------------------------

COMPARISON_COLUMNS = [
    "class",
    "success_prob_hat",
    "success_prob_ci",
    "mean_delay_hat",
    "mean_delay_ci",
    "drift_estimate",
    "drift_ci",
    "analytic_success_prob",
    "analytic_mean_delay",
    "success_prob_rel_error",
    "mean_delay_rel_error",
]


def analytic_reference(config: NetworkConfig) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form (p_s, D) for a simulated config, NaN where no closed form applies."""
    n = config.n_classes
    nan = np.full(n, np.nan)
    if n == 1:
        try:
            return np.array([analytic.single_class_success(config)]), np.array([analytic.single_class_delay(config)])
        except UnstableNetworkError:
            return nan, nan.copy()
    if np.any(config.access_prob < 1):
        return nan, nan.copy()
    try:
        metrics = analytic.multi_class_metrics(config)
    except UnstableNetworkError:
        return nan, nan.copy()
    return metrics.success_prob, metrics.mean_delay


def simulation_table(result: simulator.SimulationResult, config: NetworkConfig | None = None) -> pd.DataFrame:
    frame = pd.DataFrame(
        {
            "class": np.arange(len(result.success_prob_hat)),
            "success_prob_hat": result.success_prob_hat,
            "success_prob_ci": result.success_prob_ci,
            "mean_delay_hat": result.mean_delay_hat,
            "mean_delay_ci": result.mean_delay_ci,
            "drift_estimate": result.drift_estimate,
            "drift_ci": result.drift_ci,
        }
    )
    if config is None:
        return frame
    success, delay = analytic_reference(config)
    frame["analytic_success_prob"] = success
    frame["analytic_mean_delay"] = delay
    with np.errstate(invalid="ignore", divide="ignore"):
        frame["success_prob_rel_error"] = np.abs(result.success_prob_hat - success) / success
        frame["mean_delay_rel_error"] = np.abs(result.mean_delay_hat - delay) / delay
    return frame[COMPARISON_COLUMNS]


# ---------------------------------------------------------------------------
# Preset experiments
# ---------------------------------------------------------------------------

PRESET_COLUMNS = {
    "fig1-delay": [
        "phi_lambda",
        "bound_fraction",
        "arrival_rate",
        "stability_bound",
        "analytic_delay",
        "analytic_success_prob",
        "sim_delay",
        "sim_delay_ci",
        "sim_success_prob",
        "sim_success_prob_ci",
        "delay_rel_error",
    ],
    "fig2-weights": ["c1", "c2", "delay_0", "delay_1", "power_ratio", "objective"],
    "fig3-arrival": ["c2", "arrival_rate", "delay_0", "delay_1", "power_ratio", "objective", "reconstruction"],
    "fig4-envelope": ["psi2", "d1_max", "d2_max", "cell_arrival_rate", "max_a1", "power_ratio"],
}


@dataclass(frozen=True)
class SimulationBudget:
    slots: int = 20_000
    replications: int = 10
    links: int = 400
    mode: simulator.SimulationMode = simulator.SimulationMode.SPATIAL
    seed: int = 0
    workers: int = 1
    queue_capacity: int = simulator.DEFAULT_QUEUE_CAPACITY


def _fig1_rows(preset: ExperimentPreset, budget: SimulationBudget | None) -> list[dict]:
    base = preset.config
    rows = []
    for phi_lambda in preset.curves:
        curve = base.with_class(0, mean_link_distance=link_distance_for_load(phi_lambda))
        bound = analytic.single_class_bound(curve)
        for fraction in preset.grid:
            a = fraction * bound
            point = curve.with_class(0, arrival_rate=a)
            delay = analytic.single_class_delay(point)
            row = {
                "phi_lambda": phi_lambda,
                "bound_fraction": fraction,
                "arrival_rate": a,
                "stability_bound": bound,
                "analytic_delay": delay,
                "analytic_success_prob": analytic.single_class_success(point),
                "sim_delay": math.nan,
                "sim_delay_ci": math.nan,
                "sim_success_prob": math.nan,
                "sim_success_prob_ci": math.nan,
                "delay_rel_error": math.nan,
            }
            if budget is not None:
                result = simulator.run(
                    simulator.SimulationSpec(
                        config=point,
                        target_links_per_class=budget.links,
                        slots=budget.slots,
                        mode=budget.mode,
                        seed=budget.seed,
                        replications=budget.replications,
                        workers=budget.workers,
                        queue_capacity=budget.queue_capacity,
                    )
                )
                row.update(
                    {
                        "sim_delay": float(result.mean_delay_hat[0]),
                        "sim_delay_ci": float(result.mean_delay_ci[0]),
                        "sim_success_prob": float(result.success_prob_hat[0]),
                        "sim_success_prob_ci": float(result.success_prob_ci[0]),
                        "delay_rel_error": abs(float(result.mean_delay_hat[0]) - delay) / delay,
                    }
                )
                logging.info(f"--- PRESET: phi*lambda={phi_lambda}, a={a:.4f}: D={delay:.4f}, sim={row['sim_delay']:.4f} ---")
            rows.append(row)
    return rows


def _fig2_rows(preset: ExperimentPreset) -> list[dict]:
    rows = []
    for c1 in preset.curves:
        for c2 in preset.grid:
            allocation = optimal_powers(preset.config, DelayWeights((c1, c2)))
            rows.append(
                {
                    "c1": c1,
                    "c2": c2,
                    "delay_0": float(allocation.mean_delay[0]),
                    "delay_1": float(allocation.mean_delay[1]),
                    "power_ratio": allocation.ratio,
                    "objective": allocation.objective,
                }
            )
    return rows


def _fig3_rows(preset: ExperimentPreset) -> list[dict]:
    rows = []
    for c2 in preset.curves:
        for row in arrival_sweep(preset.config, DelayWeights((1.0, c2)), preset.grid):
            rows.append({"c2": c2, **row, "reconstruction": preset.reconstruction})
    return rows


def _fig4_rows(preset: ExperimentPreset) -> list[dict]:
    rows = []
    for psi2 in preset.curves:
        a2 = cell_rate_for_share(preset.config, psi2, FIG4_D2_MAX)
        config = preset.config.with_class(1, arrival_rate=a2)
        for d1_max in preset.grid:
            envelope = max_d2d_rate(config, d2d=0, cell=1, d1_max=d1_max, d2_max=FIG4_D2_MAX)
            rows.append(
                {
                    "psi2": psi2,
                    "d1_max": d1_max,
                    "d2_max": FIG4_D2_MAX,
                    "cell_arrival_rate": a2,
                    "max_a1": envelope.max_a1,
                    "power_ratio": envelope.power_ratio,
                }
            )
    return rows


def run_preset(preset: ExperimentPreset, budget: SimulationBudget | None = None) -> pd.DataFrame:
    """Full data grid behind a preset; `budget` enables the simulated columns of fig1-delay."""
    logging.info(f"--- PRESET: running {preset.name} ({preset.description}) ---")
    if preset.reconstruction:
        logging.warning(f"Preset {preset.name} uses a reconstructed {preset.curve_label} grid {list(preset.curves)}")
    if preset.name == "fig1-delay":
        rows = _fig1_rows(preset, budget if preset.simulated else None)
    elif preset.name == "fig2-weights":
        rows = _fig2_rows(preset)
    elif preset.name == "fig3-arrival":
        rows = _fig3_rows(preset)
    elif preset.name == "fig4-envelope":
        rows = _fig4_rows(preset)
    else:
        raise ConfigError(f"no runner for preset '{preset.name}'")
    return pd.DataFrame(rows, columns=PRESET_COLUMNS[preset.name])


_PLOT_AXES = {
    "fig1-delay": ("arrival_rate", "analytic_delay", "sim_delay"),
    "fig2-weights": ("c2", "delay_0", "delay_1"),
    "fig3-arrival": ("arrival_rate", "delay_0", "delay_1"),
    "fig4-envelope": ("d1_max", "max_a1", None),
}


def gnuplot_stub(preset: ExperimentPreset, csv_name: str) -> str:
    x, y, y2 = _PLOT_AXES[preset.name]
    values = " ".join(f"{v:g}" for v in preset.curves)
    select = f'(abs(column("{preset.curve_label}") - (v + 0)) < 1e-12 ? column("{{col}}") : 1/0)'
    lines = [
        f"# {preset.name}: {preset.description}",
        'set datafile separator ","',
        f'set xlabel "{x}"',
        f'set ylabel "{y}"',
        "set key outside",
        f'plot for [v in "{values}"] "{csv_name}" using "{x}":{select.format(col=y)} with lines title sprintf("{preset.curve_label}=%s", v)'
        + (
            f', \\\n     for [v in "{values}"] "{csv_name}" using "{x}":{select.format(col=y2)} with points title sprintf("{y2} {preset.curve_label}=%s", v)'
            if y2
            else ""
        ),
        "",
    ]
    return "\n".join(lines)
