# network_model.py
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
from scipy.special import gamma

# JSON keys, in the order they are written back out
CLASS_FIELDS = (
    "lambda",
    "power",
    "mean_link_distance",
    "sir_threshold",
    "arrival_rate",
    "access_prob",
)
CONFIG_FIELDS = ("alpha", "classes")


class ConfigError(ValueError):
    """Parameter or schema violation. `violations` lists one message per problem."""

    def __init__(self, violations: Sequence[str] | str):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class UnstableNetworkError(ArithmeticError):
    def __init__(self, message: str, violated_class: int | None = None, bound: float | None = None):
        super().__init__(message)
        self.violated_class = violated_class
        self.bound = bound


class InfeasibleArrivalsError(ValueError):
    def __init__(self, message: str, channel_load: float):
        super().__init__(message)
        self.channel_load = channel_load


class ChannelSaturatedError(ValueError):
    pass


class OptimizationError(RuntimeError):
    def __init__(self, message: str, best: Any = None):
        super().__init__(message)
        self.best = best


class PermutationCapError(ValueError):
    pass


class SimulationOverflowError(OverflowError):
    pass


class AnalysisMode(str, Enum):
    SINGLE_CLASS = "single-class"
    MULTI_CLASS = "multi-class"
    SIMULATION = "simulation"


def _positive(value):
    return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value) and value > 0


def _class_violations(cls, prefix):
    problems = []
    for name, attr in (
        ("lambda", "lam"),
        ("power", "power"),
        ("mean_link_distance", "mean_link_distance"),
        ("sir_threshold", "sir_threshold"),
    ):
        value = getattr(cls, attr)
        if not _positive(value):
            problems.append(f"{prefix}{name} must be a finite number > 0 (got {value!r})")
    a = cls.arrival_rate
    if not (isinstance(a, (int, float)) and not isinstance(a, bool) and 0 <= a < 1):
        problems.append(f"{prefix}arrival_rate must be in [0, 1) (got {a!r})")
    p = cls.access_prob
    if not (isinstance(p, (int, float)) and not isinstance(p, bool) and 0 < p <= 1):
        problems.append(f"{prefix}access_prob must be in (0, 1] (got {p!r})")
    return problems


@dataclass(frozen=True)
class TrafficClass:
    """Physical and traffic parameters of one class (λ, P, R̄, θ, a, p)."""

    lam: float
    power: float
    mean_link_distance: float
    sir_threshold: float
    arrival_rate: float = 0.0
    access_prob: float = 1.0

    def __post_init__(self):
        problems = _class_violations(self, "")
        if problems:
            raise ConfigError(problems)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], index: int = 0) -> "TrafficClass":
        prefix = f"classes[{index}]."
        if not isinstance(data, Mapping):
            raise ConfigError(f"classes[{index}] must be an object")
        problems = [f"{prefix}{key}: unknown field" for key in data if key not in CLASS_FIELDS]
        problems += [f"{prefix}{key}: missing field" for key in CLASS_FIELDS if key not in data]
        if problems:
            raise ConfigError(problems)
        try:
            return cls(
                lam=data["lambda"],
                power=data["power"],
                mean_link_distance=data["mean_link_distance"],
                sir_threshold=data["sir_threshold"],
                arrival_rate=data["arrival_rate"],
                access_prob=data["access_prob"],
            )
        except ConfigError as e:
            raise ConfigError([prefix + v for v in e.violations]) from None

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "power": self.power,
            "mean_link_distance": self.mean_link_distance,
            "sir_threshold": self.sir_threshold,
            "arrival_rate": self.arrival_rate,
            "access_prob": self.access_prob,
        }


@dataclass(frozen=True)
class NetworkConfig:
    alpha: float
    classes: tuple[TrafficClass, ...]

    def __post_init__(self):
        # accept any sequence of classes, store a tuple
        object.__setattr__(self, "classes", tuple(self.classes))
        problems = []
        if not (_positive(self.alpha) and self.alpha > 2):
            problems.append(f"alpha must be > 2 (got {self.alpha!r})")
        if len(self.classes) < 1:
            problems.append("classes must contain at least one traffic class")
        for i, cls in enumerate(self.classes):
            if not isinstance(cls, TrafficClass):
                problems.append(f"classes[{i}] is not a TrafficClass")
        if problems:
            raise ConfigError(problems)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "NetworkConfig":
        if not isinstance(data, Mapping):
            raise ConfigError("config must be a JSON object")
        problems = [f"{key}: unknown field" for key in data if key not in CONFIG_FIELDS]
        problems += [f"{key}: missing field" for key in CONFIG_FIELDS if key not in data]
        if problems:
            raise ConfigError(problems)
        raw_classes = data["classes"]
        if not isinstance(raw_classes, list):
            raise ConfigError("classes must be a list")
        classes = []
        for i, raw in enumerate(raw_classes):
            try:
                classes.append(TrafficClass.from_dict(raw, i))
            except ConfigError as e:
                problems.extend(e.violations)
        if problems:
            raise ConfigError(problems)
        return cls(alpha=data["alpha"], classes=tuple(classes))

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "classes": [c.to_dict() for c in self.classes]}

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    @property
    def delta(self) -> float:
        return 2.0 / self.alpha

    # Per-class parameter vectors, index order = class order
    @property
    def lam(self) -> np.ndarray:
        return np.array([c.lam for c in self.classes], dtype=float)

    @property
    def power(self) -> np.ndarray:
        return np.array([c.power for c in self.classes], dtype=float)

    @property
    def mean_link_distance(self) -> np.ndarray:
        return np.array([c.mean_link_distance for c in self.classes], dtype=float)

    @property
    def sir_threshold(self) -> np.ndarray:
        return np.array([c.sir_threshold for c in self.classes], dtype=float)

    @property
    def arrival_rate(self) -> np.ndarray:
        return np.array([c.arrival_rate for c in self.classes], dtype=float)

    @property
    def access_prob(self) -> np.ndarray:
        return np.array([c.access_prob for c in self.classes], dtype=float)

    def power_delta(self) -> np.ndarray:
        """P_n^δ for every class."""
        return self.power ** self.delta

    def with_class(self, index: int, **changes) -> "NetworkConfig":
        classes = list(self.classes)
        classes[index] = replace(classes[index], **changes)
        return replace(self, classes=tuple(classes))

    def with_arrivals(self, rates: Sequence[float]) -> "NetworkConfig":
        if len(rates) != self.n_classes:
            raise ConfigError(f"expected {self.n_classes} arrival rates, got {len(rates)}")
        return replace(
            self,
            classes=tuple(replace(c, arrival_rate=float(a)) for c, a in zip(self.classes, rates)),
        )

    def with_powers(self, powers: Sequence[float]) -> "NetworkConfig":
        if len(powers) != self.n_classes:
            raise ConfigError(f"expected {self.n_classes} powers, got {len(powers)}")
        return replace(
            self,
            classes=tuple(replace(c, power=float(p)) for c, p in zip(self.classes, powers)),
        )


@dataclass(frozen=True, eq=False)
class DerivedConstants:
    delta: float
    phi: np.ndarray
    zeta: float
    analyzed: int = 0
    channel_share: np.ndarray | None = None

    def with_channel_share(self, psi: np.ndarray) -> "DerivedConstants":
        return replace(self, channel_share=np.asarray(psi, dtype=float))


@dataclass(frozen=True, eq=False)
class StationaryMetrics:
    success_prob: np.ndarray
    mean_delay: np.ndarray
    load: np.ndarray
    channel_share: np.ndarray

    def to_dict(self) -> dict:
        return {
            "success_prob": self.success_prob.tolist(),
            "mean_delay": self.mean_delay.tolist(),
            "load": self.load.tolist(),
            "channel_share": self.channel_share.tolist(),
        }


def gamma_product(alpha: float) -> float:
    """Γ(1+δ)·Γ(1−δ) with δ = 2/α."""
    if not alpha > 2:
        raise ConfigError(f"alpha must be > 2 (got {alpha!r})")
    delta = 2.0 / alpha
    return float(gamma(1.0 + delta) * gamma(1.0 - delta))


def gamma_product_reflection(alpha: float) -> float:
    """Same constant through Euler's reflection formula, (2π/α)/sin(2π/α)."""
    if not alpha > 2:
        raise ConfigError(f"alpha must be > 2 (got {alpha!r})")
    x = 2.0 * math.pi / alpha
    return x / math.sin(x)


def contention_constants(alpha: float, mean_link_distance, sir_threshold) -> np.ndarray:
    """φ_n = 4·Γ(1+δ)·Γ(1−δ)·R̄_n²·θ_n^δ."""
    r = np.asarray(mean_link_distance, dtype=float)
    theta = np.asarray(sir_threshold, dtype=float)
    return 4.0 * gamma_product(alpha) * r ** 2 * theta ** (2.0 / alpha)


def derive_constants(config: NetworkConfig, analyzed: int = 0) -> DerivedConstants:
    if not config.alpha > 2:
        raise ConfigError(f"alpha must be > 2 (got {config.alpha!r})")
    if not 0 <= analyzed < config.n_classes:
        raise ConfigError(f"analyzed class index {analyzed} out of range for {config.n_classes} classes")

    delta = config.delta
    phi = contention_constants(config.alpha, config.mean_link_distance, config.sir_threshold)

    # ζ: interference from every other class, weighted by its power relative to the analyzed class
    ratio = (config.power / config.power[analyzed]) ** delta
    terms = ratio * config.lam * config.access_prob
    others = np.ones(config.n_classes, dtype=bool)
    others[analyzed] = False
    zeta = float(terms[others].sum()) if others.any() else 0.0

    return DerivedConstants(delta=delta, phi=phi, zeta=zeta, analyzed=analyzed)


def validate_config(config: NetworkConfig | Mapping[str, Any], mode: AnalysisMode | str) -> NetworkConfig:
    """
    Checks a config for the given analysis mode and returns it as a NetworkConfig.
    Raw mappings (parsed JSON) are accepted and parsed first.
    """
    mode = AnalysisMode(mode)
    if not isinstance(config, NetworkConfig):
        config = NetworkConfig.from_dict(config)

    if mode is AnalysisMode.MULTI_CLASS:
        problems = [
            f"classes[{i}].access_prob must be 1 for multi-class analysis (got {c.access_prob})"
            for i, c in enumerate(config.classes)
            if c.access_prob != 1
        ]
        if problems:
            logging.warning(f"Config rejected for {mode.value} analysis: {problems}")
            raise ConfigError(problems)
    return config


def load_config(path: str | Path) -> NetworkConfig:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"{path}: file not found") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from None

    try:
        config = NetworkConfig.from_dict(raw)
    except ConfigError as e:
        raise ConfigError([f"{path}: {v}" for v in e.violations]) from None
    logging.info(f"Loaded network config from {path} ({config.n_classes} classes, alpha={config.alpha})")
    return config
