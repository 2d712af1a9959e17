# stability.py
"""
Stability-region membership tests for the multi-class network (all p_n = 1).

check_region evaluates the per-class inequalities directly; check_permutation_region
searches the union of permutation regions built from dominant networks, in which the
classes are released from saturation one at a time. Both give the same verdict.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np

from network_model import (
    AnalysisMode,
    NetworkConfig,
    PermutationCapError,
    derive_constants,
    validate_config,
)

DEFAULT_PERMUTATION_CAP = 8


class StabilityMethod(str, Enum):
    THEOREM_REGION = "theorem-region"
    PERMUTATION_REGION = "permutation-region"
    COROLLARY_FEASIBILITY = "corollary-feasibility"


@dataclass(frozen=True)
class StabilityVerdict:
    stable: bool
    method: StabilityMethod
    violated_class: int | None = None
    witness_permutation: tuple[int, ...] | None = None
    forms_agree: bool = True
    detail: str = ""

    def to_dict(self) -> dict:
        return {
            "stable": self.stable,
            "method": self.method.value,
            "violated_class": self.violated_class,
            "witness_permutation": list(self.witness_permutation) if self.witness_permutation is not None else None,
            "forms_agree": self.forms_agree,
            "detail": self.detail,
        }


@dataclass(frozen=True)
class DominantStep:
    position: int
    released_class: int
    success_probs: np.ndarray
    holds: bool


@dataclass(frozen=True)
class DominantSequenceReport:
    order: tuple[int, ...]
    steps: tuple[DominantStep, ...]
    final_success_probs: np.ndarray | None

    @property
    def all_hold(self) -> bool:
        return all(step.holds for step in self.steps)


def _region_terms(config):
    phi = derive_constants(config).phi
    return phi, config.lam, config.arrival_rate, config.power_delta()


def check_region(config: NetworkConfig) -> StabilityVerdict:
    config = validate_config(config, AnalysisMode.MULTI_CLASS)
    phi, lam, a, x = _region_terms(config)
    method = StabilityMethod.THEOREM_REGION

    if not np.any(a > 0):
        return StabilityVerdict(stable=True, method=method, detail="no traffic")

    lhs = phi / x * a / (1.0 - a)

    # Form 1: sums over every class
    slack = 1.0 - float(np.sum(phi * lam * a))
    interference = float(np.sum(x * lam * a))
    holds = lhs < slack / interference

    # Form 2: class n isolated, saturated in the denominator
    own_phi = phi * lam * a
    own_x = x * lam * a
    holds_alt = lhs < (slack + own_phi) / (x * lam + interference - own_x)

    forms_agree = bool(np.array_equal(holds, holds_alt))
    if not forms_agree:
        logging.warning(
            f"Stability forms disagree (floating-point tie): including-n={holds.tolist()}, excluding-n={holds_alt.tolist()}"
        )

    if holds.all():
        return StabilityVerdict(stable=True, method=method, forms_agree=forms_agree)

    violated = int(np.argmin(holds))
    return StabilityVerdict(
        stable=False,
        method=method,
        violated_class=violated,
        forms_agree=forms_agree,
        detail=f"class {violated}: {lhs[violated]:.6g} >= {slack / interference:.6g}",
    )


def _step_holds(phi, lam, a, x, released, candidate, saturated):
    done = np.array(released, dtype=int)
    still = np.array(saturated, dtype=int)
    slack = 1.0 - float(np.sum(phi[done] * lam[done] * a[done]))
    if slack <= 0:
        return False
    denom = float(np.sum(x[done] * lam[done] * a[done])) + float(np.sum(x[still] * lam[still]))
    lhs = phi[candidate] / x[candidate] * a[candidate] / (1.0 - a[candidate])
    return bool(lhs < slack / denom)


def check_permutation_region(config: NetworkConfig, cap: int = DEFAULT_PERMUTATION_CAP) -> StabilityVerdict:
    config = validate_config(config, AnalysisMode.MULTI_CLASS)
    n = config.n_classes
    if n > cap:
        raise PermutationCapError(
            f"{n} classes exceeds the permutation search cap of {cap}; use check_region instead"
        )
    phi, lam, a, x = _region_terms(config)
    method = StabilityMethod.PERMUTATION_REGION

    # Depth-first over prefixes in lexicographic order; a failing prefix prunes all its completions
    def search(prefix, remaining):
        if not remaining:
            return tuple(prefix)
        for cls in remaining:
            rest = [c for c in remaining if c != cls]
            if _step_holds(phi, lam, a, x, prefix, cls, remaining):
                found = search(prefix + [cls], rest)
                if found is not None:
                    return found
        return None

    witness = search([], list(range(n)))
    if witness is None:
        return StabilityVerdict(stable=False, method=method, detail="no permutation region contains the arrival rates")
    logging.debug(f"Permutation witness {witness}")
    return StabilityVerdict(stable=True, method=method, witness_permutation=witness)


def dominant_sequence_check(config: NetworkConfig, order) -> DominantSequenceReport:
    """
    Walks the dominant networks for one release order. Step j starts with the classes
    order[:j] released (at steady state) and order[j:] saturated; it reports every
    class's success probability in that network and whether order[j] is stable there.
    """
    config = validate_config(config, AnalysisMode.MULTI_CLASS)
    order = tuple(int(c) for c in order)
    n = config.n_classes
    if sorted(order) != list(range(n)):
        raise ValueError(f"order {order} is not a permutation of 0..{n - 1}")
    phi, lam, a, x = _region_terms(config)

    def success_probs(released):
        done = np.array(released, dtype=int)
        still = np.array([c for c in order if c not in released], dtype=int)
        slack = 1.0 - float(np.sum(phi[done] * lam[done] * a[done]))
        if slack <= 0:
            return None
        numer = float(np.sum(x[done] * lam[done] * a[done])) + float(np.sum(x[still] * lam[still]))
        return 1.0 / (1.0 + phi / x * numer / slack)

    steps = []
    for j, cls in enumerate(order):
        probs = success_probs(order[:j])
        if probs is None:
            steps.append(DominantStep(position=j, released_class=cls, success_probs=np.full(n, np.nan), holds=False))
            continue
        steps.append(DominantStep(position=j, released_class=cls, success_probs=probs, holds=bool(a[cls] < probs[cls])))

    final = success_probs(order) if all(s.holds for s in steps) else None
    return DominantSequenceReport(order=order, steps=tuple(steps), final_success_probs=final)


def channel_load(config: NetworkConfig) -> float:
    """Σ φ_n λ_n a_n/(1−a_n); powers play no part."""
    phi = derive_constants(config).phi
    a = config.arrival_rate
    return float(np.sum(phi * config.lam * a / (1.0 - a)))


def feasibility_over_powers(config: NetworkConfig) -> bool:
    """True iff some power vector makes the arrival rates stable."""
    return channel_load(config) < 1.0


def check_feasibility(config: NetworkConfig) -> StabilityVerdict:
    load = channel_load(config)
    return StabilityVerdict(
        stable=load < 1.0,
        method=StabilityMethod.COROLLARY_FEASIBILITY,
        detail=f"channel load {load:.6g} (must be < 1)",
    )
