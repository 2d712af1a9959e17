# power_optimizer.py
"""
Transmit-power allocation for the multi-class network.

Only power ratios matter (there is no noise term), so every allocation returned here is
gauge-fixed with the last class at power 1.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import minimize, minimize_scalar

import analytic
from network_model import (
    AnalysisMode,
    ChannelSaturatedError,
    ConfigError,
    InfeasibleArrivalsError,
    NetworkConfig,
    OptimizationError,
    derive_constants,
    validate_config,
)
from stability import channel_load

NORMALIZATION = "last-class"
DEFAULT_STARTS = 8
PENALTY = 1e12


@dataclass(frozen=True)
class DelayWeights:
    c: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "c", tuple(float(v) for v in self.c))
        bad = [i for i, v in enumerate(self.c) if not (math.isfinite(v) and v > 0)]
        if not self.c or bad:
            raise ConfigError([f"weights[{i}] must be > 0 (got {self.c[i]})" for i in bad] or ["weights must not be empty"])

    @classmethod
    def uniform(cls, n: int) -> "DelayWeights":
        return cls(tuple([1.0] * n))

    def as_array(self) -> np.ndarray:
        return np.array(self.c, dtype=float)


@dataclass(frozen=True, eq=False)
class PowerAllocation:
    powers: np.ndarray
    normalization: str = NORMALIZATION
    objective: float = math.nan
    mean_delay: np.ndarray | None = None

    @property
    def ratio(self) -> float:
        """P_1/P_2 for two-class allocations."""
        return float(self.powers[0] / self.powers[1])

    def to_dict(self) -> dict:
        return {
            "powers": self.powers.tolist(),
            "normalization": self.normalization,
            "objective": self.objective,
            "mean_delay": None if self.mean_delay is None else self.mean_delay.tolist(),
        }


@dataclass(frozen=True)
class RateEnvelope:
    max_a1: float
    power_ratio: float
    psi2_star: float
    powers: tuple[float, float]

    def to_dict(self) -> dict:
        return {
            "max_a1": self.max_a1,
            "power_ratio": self.power_ratio,
            "psi2_star": self.psi2_star,
            "powers": list(self.powers),
        }


def _check_optimizable(config: NetworkConfig, weights: DelayWeights) -> NetworkConfig:
    config = validate_config(config, AnalysisMode.MULTI_CLASS)
    if len(weights.c) != config.n_classes:
        raise ConfigError(f"expected {config.n_classes} weights, got {len(weights.c)}")
    idle = [i for i, c in enumerate(config.classes) if c.arrival_rate == 0]
    if idle:
        raise OptimizationError(
            f"classes {idle} have zero arrival rate; their delay has no finite optimum, remove them first"
        )
    load = channel_load(config)
    if not load < 1.0:
        raise InfeasibleArrivalsError(
            f"no power vector stabilizes these arrival rates: channel load {load:.6g} >= 1", channel_load=load
        )
    return config


def _gauge(powers: np.ndarray) -> np.ndarray:
    return powers / powers[-1]


def _evaluate(config: NetworkConfig, weights: DelayWeights, powers: np.ndarray) -> PowerAllocation:
    metrics = analytic.multi_class_metrics(config.with_powers(powers))
    objective = float(np.dot(weights.as_array(), metrics.mean_delay))
    return PowerAllocation(powers=powers, objective=objective, mean_delay=metrics.mean_delay)


def optimal_powers(config: NetworkConfig, weights: DelayWeights) -> PowerAllocation:
    """Closed-form minimizer of Σ c_n D_n over the power vector."""
    config = _check_optimizable(config, weights)
    phi = derive_constants(config).phi
    lam, a, c = config.lam, config.arrival_rate, weights.as_array()

    odds = a / (1.0 - a)
    load = float(np.sum(phi * lam * odds))
    spread = np.sqrt(c * phi / (lam * a * (1.0 - a))) / float(np.sum(np.sqrt(c * phi * lam * odds)))
    x = phi * odds / (1.0 - load) + spread

    powers = _gauge(x ** (1.0 / config.delta))
    allocation = _evaluate(config, weights, powers)
    logging.info(f"Optimal powers {allocation.powers.tolist()} -> objective {allocation.objective:.6g}")
    return allocation


def _objective_in_log_power(config: NetworkConfig, weights: np.ndarray):
    phi = derive_constants(config).phi
    lam, a = config.lam, config.arrival_rate
    slack = 1.0 - float(np.sum(phi * lam * a))
    delta = config.delta

    def objective(log_powers: np.ndarray) -> float:
        x = np.exp(delta * np.append(log_powers, 0.0))
        success = 1.0 / (1.0 + phi / x * float(np.sum(x * lam * a)) / slack)
        margin = success - a
        if np.any(margin <= 0):
            # graded penalty so the simplex walks back into the stable region
            return PENALTY * (1.0 + float(np.sum(np.maximum(-margin, 0.0))))
        return float(np.dot(weights, (1.0 - a) / margin))

    return objective


def _log_power_scale(config):
    # P_n^δ ∝ φ_n a_n / (1 - a_n) is stable whenever the channel load is below 1
    a = config.arrival_rate
    scale = np.log(derive_constants(config).phi * a / (1.0 - a)) / config.delta
    return scale[:-1] - scale[-1]


def numeric_power_oracle(
    config: NetworkConfig,
    weights: DelayWeights,
    starts: int = DEFAULT_STARTS,
    seed: int = 0,
    max_draws: int = 2000,
) -> PowerAllocation:
    """
    Minimizes Σ c_n D_n numerically (Nelder–Mead in log-power coordinates, last power
    fixed to 1) from several random stable starting points.
    """
    config = _check_optimizable(config, weights)
    n = config.n_classes
    if n == 1:
        return _evaluate(config, weights, np.ones(1))

    objective = _objective_in_log_power(config, weights.as_array())
    rng = np.random.default_rng(seed)

    # --- 1. Draw stable starting points around the per-class log scales ---
    centre = _log_power_scale(config)
    half_width = max(6.0, float(np.ptp(np.append(centre, 0.0))))
    starting_points = [centre] if objective(centre) < PENALTY else []
    draws = 0
    while len(starting_points) < starts and draws < max_draws:
        draws += 1
        candidate = centre + rng.uniform(-half_width, half_width, size=n - 1)
        if objective(candidate) < PENALTY:
            starting_points.append(candidate)
    if not starting_points:
        # walk the graded penalty surface until it reaches the stable region
        walked = minimize(objective, centre, method="Nelder-Mead", options={"maxiter": 2000 * n})
        if not objective(walked.x) < PENALTY:
            raise OptimizationError(f"no stable starting point found in {max_draws} draws")
        starting_points.append(walked.x)
    logging.debug(f"Oracle: {len(starting_points)} starts after {draws} draws (box ±{half_width:.3g})")

    # --- 2. Local searches, restarted once from their own optimum ---
    best_value, best_point, best_converged = math.inf, None, False
    for start in starting_points:
        point = start
        for _ in range(2):
            result = minimize(
                objective,
                point,
                method="Nelder-Mead",
                options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 20000 * n, "maxfev": 40000 * n},
            )
            point = result.x
        value = objective(point)
        # strict "<" keeps the lowest start index on ties
        if value < best_value:
            best_value, best_point, best_converged = value, point, bool(result.success)

    best_powers = _gauge(np.exp(np.append(best_point, 0.0)))
    if not best_value < PENALTY:
        raise OptimizationError("oracle did not reach a stable power vector", best=best_powers)
    if not best_converged:
        raise OptimizationError(f"oracle did not converge (best objective {best_value:.9g})", best=best_powers)
    return _evaluate(config, weights, best_powers)


def _two_class_check(config: NetworkConfig, d2d: int, cell: int):
    config = validate_config(config, AnalysisMode.MULTI_CLASS)
    if config.n_classes != 2 or {d2d, cell} != {0, 1}:
        raise ConfigError("the D2D/cellular rate envelope needs exactly two classes with distinct indices 0 and 1")
    return config


def max_d2d_rate(config: NetworkConfig, d2d: int = 0, cell: int = 1, d1_max: float = 3.0, d2_max: float = 3.0) -> RateEnvelope:
    """
    Largest D2D arrival rate, over all power ratios, such that the network is stable with
    D_d2d <= d1_max and D_cell <= d2_max; the cell class keeps its configured arrival rate.
    """
    config = _two_class_check(config, d2d, cell)
    if not (d1_max > 1 and d2_max > 1):
        raise ConfigError(f"delay limits must exceed 1 slot (got {d1_max}, {d2_max})")

    phi = derive_constants(config).phi
    lam = config.lam
    a2 = config.classes[cell].arrival_rate
    load1, load2 = phi[d2d] * lam[d2d], phi[cell] * lam[cell]

    psi2 = load2 * (d2_max / (d2_max - 1.0)) * (a2 / (1.0 - a2))
    if not psi2 < 1.0:
        raise ChannelSaturatedError(f"cellular class saturates channel (share {psi2:.6g} >= 1)")

    max_a1 = 1.0 / (1.0 + load1 * (d1_max / (d1_max - 1.0)) / (1.0 - psi2))
    ratio = (psi2 / load2 + 1.0 / (d2_max - 1.0)) / ((1.0 - psi2) / load1 + 1.0 / (d1_max - 1.0))

    # ratio = (φ_d2d/φ_cell)(P_cell/P_d2d)^δ, solved for P_d2d with P_cell = 1
    p_d2d = (phi[d2d] / phi[cell] / ratio) ** (1.0 / config.delta)
    powers = np.ones(2)
    powers[d2d] = p_d2d
    powers = _gauge(powers)
    return RateEnvelope(
        max_a1=float(max_a1),
        power_ratio=float(ratio),
        psi2_star=float(psi2),
        powers=(float(powers[0]), float(powers[1])),
    )


def _delays_within(config: NetworkConfig, limits: np.ndarray) -> bool:
    try:
        metrics = analytic.multi_class_metrics(config)
    except ArithmeticError:
        return False
    return bool(np.all(metrics.mean_delay <= limits))


def _max_rate_at_powers(config: NetworkConfig, d2d: int, limits: np.ndarray, iterations: int) -> float:
    if not _delays_within(config.with_class(d2d, arrival_rate=0.0), limits):
        return 0.0
    lo, hi = 0.0, 1.0
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if _delays_within(config.with_class(d2d, arrival_rate=mid), limits):
            lo = mid
        else:
            hi = mid
    return lo


def numeric_rate_search(
    config: NetworkConfig,
    d2d: int = 0,
    cell: int = 1,
    d1_max: float = 3.0,
    d2_max: float = 3.0,
    log_ratio_bounds: tuple[float, float] = (-12.0, 12.0),
    grid_points: int = 121,
    iterations: int = 60,
) -> tuple[float, float]:
    """
    Numeric counterpart of max_d2d_rate: for each P_d2d/P_cell (log scale) the largest
    feasible a_d2d is found by bisection, and the best ratio by a bounded 1-D search.
    Returns (best a_d2d, best P_d2d/P_cell).
    """
    config = _two_class_check(config, d2d, cell)
    limits = np.zeros(2)
    limits[d2d], limits[cell] = d1_max, d2_max

    def rate(log_ratio: float) -> float:
        powers = [1.0, 1.0]
        powers[d2d] = math.exp(log_ratio)
        return _max_rate_at_powers(config.with_powers(powers), d2d, limits, iterations)

    grid = np.linspace(log_ratio_bounds[0], log_ratio_bounds[1], grid_points)
    values = [rate(g) for g in grid]
    k = int(np.argmax(values))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid_points - 1)]
    refined = minimize_scalar(lambda g: -rate(g), bounds=(lo, hi), method="bounded", options={"xatol": 1e-9})

    best_log, best_rate = grid[k], values[k]
    if -refined.fun > best_rate:
        best_log, best_rate = float(refined.x), float(-refined.fun)
    return best_rate, math.exp(best_log)


def arrival_sweep(config: NetworkConfig, weights: DelayWeights, cell_rates: Sequence[float], cell: int = 1) -> list[dict]:
    """Optimal delays and P_0/P_1 along a grid of arrival rates for the cell class."""
    rows = []
    for a2 in cell_rates:
        point = config.with_class(cell, arrival_rate=float(a2))
        try:
            allocation = optimal_powers(point, weights)
        except (InfeasibleArrivalsError, OptimizationError) as e:
            logging.warning(f"Skipping a={a2}: {e}")
            continue
        rows.append(
            {
                "arrival_rate": float(a2),
                "delay_0": float(allocation.mean_delay[0]),
                "delay_1": float(allocation.mean_delay[1]),
                "power_ratio": allocation.ratio,
                "objective": allocation.objective,
            }
        )
    return rows


def cell_rate_for_share(config: NetworkConfig, psi2: float, d2_max: float, cell: int = 1) -> float:
    """Arrival rate a_cell that gives the cell class channel share psi2 at delay d2_max."""
    if not 0 <= psi2 < 1:
        raise ConfigError(f"channel share must be in [0, 1) (got {psi2})")
    phi = derive_constants(config).phi
    odds = psi2 / (phi[cell] * config.lam[cell] * d2_max / (d2_max - 1.0))
    return odds / (1.0 + odds)
