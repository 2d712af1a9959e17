# analytic.py
"""
Closed-form results for the slotted-Aloha Poisson network.

Single-class functions analyse one class while every other class transmits dummy
packets (their queues never empty). Multi-class functions assume every access
probability equals 1 and return stationary values only inside the stability region.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from network_model import (
    AnalysisMode,
    ConfigError,
    NetworkConfig,
    StationaryMetrics,
    UnstableNetworkError,
    derive_constants,
    gamma_product,
    validate_config,
)
import stability


@dataclass(frozen=True)
class SingleClassResult:
    stability_bound: float
    closure_bound: float
    success_prob: float
    mean_delay: float


@dataclass(frozen=True)
class Lemma1Residuals:
    sum_residual: float
    pairwise_residual: float


def _single_class_terms(config, analyzed):
    config = validate_config(config, AnalysisMode.SINGLE_CLASS)
    constants = derive_constants(config, analyzed)
    cls = config.classes[analyzed]
    return constants.phi[analyzed], cls.lam, constants.zeta, cls.access_prob, cls.arrival_rate


def single_class_bound(config: NetworkConfig, analyzed: int = 0) -> float:
    """Strict upper bound on a: p / (1 + φ(λp + ζ))."""
    phi, lam, zeta, p, _ = _single_class_terms(config, analyzed)
    return p / (1.0 + phi * (lam * p + zeta))


def single_class_closure_bound(config: NetworkConfig, analyzed: int = 0) -> float:
    """Closure of the stable arrival rates over all access probabilities (reached at p = 1)."""
    phi, lam, zeta, _, _ = _single_class_terms(config, analyzed)
    return 1.0 / (1.0 + phi * (lam + zeta))


def _require_single_class_stable(config, analyzed):
    bound = single_class_bound(config, analyzed)
    a = config.classes[analyzed].arrival_rate
    if not a < bound:
        raise UnstableNetworkError(
            f"class {analyzed}: arrival rate {a} is not below the stability bound {bound:.6g}",
            violated_class=analyzed,
            bound=bound,
        )
    return bound


def single_class_success(config: NetworkConfig, analyzed: int = 0) -> float:
    """Stationary success probability p_s = (1 − φλa) / (1 + φζ)."""
    _require_single_class_stable(config, analyzed)
    phi, lam, zeta, _, a = _single_class_terms(config, analyzed)
    return (1.0 - phi * lam * a) / (1.0 + phi * zeta)


def single_class_delay(config: NetworkConfig, analyzed: int = 0) -> float:
    """Stationary mean delay in slots, D = (1−a)(1+φζ) / (p − (1 + φ(λp+ζ))a)."""
    _require_single_class_stable(config, analyzed)
    phi, lam, zeta, p, a = _single_class_terms(config, analyzed)
    return (1.0 - a) * (1.0 + phi * zeta) / (p - (1.0 + phi * (lam * p + zeta)) * a)


def single_class_analysis(config: NetworkConfig, analyzed: int = 0) -> SingleClassResult:
    return SingleClassResult(
        stability_bound=single_class_bound(config, analyzed),
        closure_bound=single_class_closure_bound(config, analyzed),
        success_prob=single_class_success(config, analyzed),
        mean_delay=single_class_delay(config, analyzed),
    )


def conditional_success(config: NetworkConfig, r, analyzed: int = 0):
    """
    P(SIR > θ | R = r) for a saturated class: every source of every class attempts
    with its own access probability.
    """
    config = validate_config(config, AnalysisMode.SINGLE_CLASS)
    constants = derive_constants(config, analyzed)
    cls = config.classes[analyzed]
    r = np.asarray(r, dtype=float)
    exponent = (
        math.pi
        * gamma_product(config.alpha)
        * cls.sir_threshold ** constants.delta
        * r ** 2
        * (cls.lam * cls.access_prob + constants.zeta)
    )
    return np.exp(-exponent)


def saturated_success(config: NetworkConfig) -> np.ndarray:
    """Per-class success probability when all queues are saturated."""
    config = validate_config(config, AnalysisMode.SIMULATION)
    phi = derive_constants(config).phi
    x = config.power_delta()
    active = float(np.sum(x * config.lam * config.access_prob))
    return 1.0 / (1.0 + phi / x * active)


def _channel_share(phi, lam, a, delay):
    # Ψ_n = φ_n λ_n (D_n/(D_n−1)) (a_n/(1−a_n)); zero for classes without traffic
    psi = np.zeros_like(a)
    busy = a > 0
    psi[busy] = phi[busy] * lam[busy] * (delay[busy] / (delay[busy] - 1.0)) * (a[busy] / (1.0 - a[busy]))
    return psi


def multi_class_metrics(config: NetworkConfig) -> StationaryMetrics:
    config = validate_config(config, AnalysisMode.MULTI_CLASS)
    verdict = stability.check_region(config)
    if not verdict.stable:
        raise UnstableNetworkError(
            f"network is unstable: stability inequality fails for class {verdict.violated_class}",
            violated_class=verdict.violated_class,
        )

    phi = derive_constants(config).phi
    lam, a, x = config.lam, config.arrival_rate, config.power_delta()
    n = config.n_classes

    if not np.any(a > 0):
        ones = np.ones(n)
        return StationaryMetrics(success_prob=ones, mean_delay=ones.copy(), load=np.zeros(n), channel_share=np.zeros(n))

    slack = 1.0 - float(np.sum(phi * lam * a))
    if slack <= 0:
        raise UnstableNetworkError(f"1 - sum(phi*lambda*a) = {slack:.6g} is not positive")
    interference = float(np.sum(x * lam * a)) / slack

    success = 1.0 / (1.0 + phi / x * interference)
    delay = (1.0 - a) / (success - a)
    load = a / success
    psi = _channel_share(phi, lam, a, delay)

    logging.debug(f"Stationary metrics: p_s={success}, D={delay}, psi={psi}")
    return StationaryMetrics(success_prob=success, mean_delay=delay, load=load, channel_share=psi)


def lemma1_residuals(metrics: StationaryMetrics, config: NetworkConfig) -> Lemma1Residuals:
    """
    Residuals of the two channel-share identities: |ΣΨ − 1|, and the spread of
    (φ_n/P_n^δ)(D_n/(D_n−1)/(1−a_n) − 1) across classes relative to its largest value.
    """
    a = config.arrival_rate
    if not np.any(a > 0):
        logging.warning("Channel-share identities need at least one class with traffic; residuals are NaN")
        return Lemma1Residuals(sum_residual=math.nan, pairwise_residual=math.nan)

    phi = derive_constants(config).phi
    delay = metrics.mean_delay
    psi = _channel_share(phi, config.lam, a, delay)
    sum_residual = abs(float(np.sum(psi)) - 1.0)

    if config.n_classes == 1:
        return Lemma1Residuals(sum_residual=sum_residual, pairwise_residual=0.0)

    values = phi / config.power_delta() * (delay / (delay - 1.0) / (1.0 - a) - 1.0)
    scale = float(np.max(np.abs(values)))
    pairwise = float(np.max(values) - np.min(values)) / scale if scale > 0 else 0.0
    return Lemma1Residuals(sum_residual=sum_residual, pairwise_residual=pairwise)


def physical_identity_lhs(config: NetworkConfig, metrics: StationaryMetrics) -> float:
    """Σ 4 λ_n R̄_n² θ_n^δ (D_n/(D_n−1)) (a_n/(1−a_n))."""
    a = config.arrival_rate
    delay = metrics.mean_delay
    busy = a > 0
    terms = (
        4.0
        * config.lam[busy]
        * config.mean_link_distance[busy] ** 2
        * config.sir_threshold[busy] ** config.delta
        * (delay[busy] / (delay[busy] - 1.0))
        * (a[busy] / (1.0 - a[busy]))
    )
    return float(np.sum(terms))


def physical_identity_rhs(alpha: float) -> float:
    """sin(2π/α) / (2π/α)."""
    if not alpha > 2:
        raise ConfigError(f"alpha must be > 2 (got {alpha!r})")
    x = 2.0 * math.pi / alpha
    return math.sin(x) / x
