# simulator.py
"""
Monte Carlo simulator of the slotted-Aloha queues.

Every source of class n holds an infinite FIFO queue. In each slot: backlogged sources
attempt with probability p_n, attempts succeed if their SIR exceeds θ_n (spatial mode)
or with the mean-field success probability (mean-field mode), successful packets leave,
and then a Bernoulli(a_n) arrival joins each queue. Spatial mode redraws every position,
link distance and fading gain each slot on a square torus.
"""
from __future__ import annotations

import logging
import math
import multiprocessing
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
import pandas as pd
from scipy import stats

from network_model import (
    AnalysisMode,
    ConfigError,
    NetworkConfig,
    SimulationOverflowError,
    derive_constants,
    validate_config,
)

TRAJECTORY_COLUMNS = ["slot", "class", "mean_queue_len", "attempts", "successes"]
DEFAULT_QUEUE_CAPACITY = 4096
# the timestamp ring doubles up to this length; a longer queue raises SimulationOverflowError
MAX_QUEUE_CAPACITY = 1 << 18


class SimulationMode(str, Enum):
    SPATIAL = "spatial"
    MEAN_FIELD = "mean-field"


@dataclass(frozen=True)
class SimulationSpec:
    config: NetworkConfig
    target_links_per_class: int = 400
    slots: int = 20_000
    warmup_fraction: float = 0.2
    mode: SimulationMode = SimulationMode.SPATIAL
    seed: int = 0
    replications: int = 10
    saturated: bool = False
    record_links: bool = False
    trajectory_stride: int = 100
    queue_capacity: int = DEFAULT_QUEUE_CAPACITY
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "mode", SimulationMode(self.mode))
        validate_config(self.config, AnalysisMode.SIMULATION)
        problems = []
        if self.slots < 1000:
            problems.append(f"slots must be >= 1000 (got {self.slots})")
        if self.target_links_per_class < 50:
            problems.append(f"target_links_per_class must be >= 50 (got {self.target_links_per_class})")
        if not 0 <= self.warmup_fraction < 1:
            problems.append(f"warmup_fraction must be in [0, 1) (got {self.warmup_fraction})")
        if self.replications < 1:
            problems.append(f"replications must be >= 1 (got {self.replications})")
        if self.trajectory_stride < 1:
            problems.append(f"trajectory_stride must be >= 1 (got {self.trajectory_stride})")
        if not 1 <= self.queue_capacity <= MAX_QUEUE_CAPACITY:
            problems.append(f"queue_capacity must be in [1, {MAX_QUEUE_CAPACITY}] (got {self.queue_capacity})")
        if self.workers < 1:
            problems.append(f"workers must be >= 1 (got {self.workers})")
        if not 0 <= self.seed < 2 ** 64:
            problems.append(f"seed must be an unsigned 64-bit integer (got {self.seed})")
        if problems:
            raise ConfigError(problems)

    @property
    def warmup_slots(self) -> int:
        return int(self.slots * self.warmup_fraction)

    @property
    def unvalidated_regime(self) -> bool:
        """Multi-class runs with p_n < 1 have no closed form to compare against."""
        return self.config.n_classes > 1 and bool(np.any(self.config.access_prob < 1))


@dataclass(frozen=True, eq=False)
class TorusLayout:
    side: float
    links: np.ndarray
    class_of: np.ndarray


def torus_layout(config: NetworkConfig, target_links_per_class: int) -> TorusLayout:
    """Square torus sized so the densest class has the target number of links."""
    lam = config.lam
    side = math.sqrt(target_links_per_class / float(lam.max()))
    links = np.maximum(1, np.rint(lam * side ** 2)).astype(np.int64)
    class_of = np.repeat(np.arange(config.n_classes), links)
    return TorusLayout(side=side, links=links, class_of=class_of)


@dataclass(frozen=True, eq=False)
class ReplicationResult:
    attempts: np.ndarray
    successes: np.ndarray
    delay_sum: np.ndarray
    delay_count: np.ndarray
    mean_queue: np.ndarray
    attempts_per_slot: np.ndarray
    successes_per_slot: np.ndarray
    drift: np.ndarray
    link_distance_sum: np.ndarray
    link_count: np.ndarray
    arrivals_total: np.ndarray
    departures_total: np.ndarray
    final_queue: np.ndarray
    distance_resamples: int = 0
    link_records: pd.DataFrame | None = None

    @property
    def success_prob(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.attempts > 0, self.successes / np.maximum(self.attempts, 1), np.nan)

    @property
    def mean_delay(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.delay_count > 0, self.delay_sum / np.maximum(self.delay_count, 1), np.nan)

    @property
    def mean_link_distance(self) -> np.ndarray:
        return np.where(self.link_count > 0, self.link_distance_sum / np.maximum(self.link_count, 1), np.nan)


@dataclass(frozen=True, eq=False)
class SimulationResult:
    success_prob_hat: np.ndarray
    success_prob_ci: np.ndarray
    mean_delay_hat: np.ndarray
    mean_delay_ci: np.ndarray
    queue_trajectory: np.ndarray
    trajectory_slots: np.ndarray
    drift_estimate: np.ndarray
    drift_ci: np.ndarray
    drift_replications: np.ndarray
    mean_link_distance_hat: np.ndarray
    no_data: tuple[int, ...] = ()
    ci_omitted: bool = False
    unvalidated_regime: bool = False
    distance_resamples: int = 0
    replications: tuple[ReplicationResult, ...] = field(default=(), repr=False)

    @property
    def growing_classes(self) -> tuple[int, ...]:
        """Classes whose queue drift is positive beyond its confidence interval."""
        lower = self.drift_estimate - np.nan_to_num(self.drift_ci, nan=0.0)
        return tuple(int(j) for j in np.flatnonzero(lower > 0))

    def to_dict(self) -> dict:
        def clean(values):
            return [None if not math.isfinite(v) else float(v) for v in np.asarray(values, dtype=float).ravel()]

        return {
            "success_prob_hat": clean(self.success_prob_hat),
            "success_prob_ci": clean(self.success_prob_ci),
            "mean_delay_hat": clean(self.mean_delay_hat),
            "mean_delay_ci": clean(self.mean_delay_ci),
            "queue_trajectory": [clean(row) for row in self.queue_trajectory],
            "trajectory_slots": [int(s) for s in self.trajectory_slots],
            "drift_estimate": clean(self.drift_estimate),
            "drift_ci": clean(self.drift_ci),
            "drift_replications": [clean(row) for row in self.drift_replications],
            "mean_link_distance_hat": clean(self.mean_link_distance_hat),
            "no_data": list(self.no_data),
            "ci_omitted": self.ci_omitted,
            "unvalidated_regime": self.unvalidated_regime,
            "distance_resamples": self.distance_resamples,
            "growing_classes": list(self.growing_classes),
            "replication_count": len(self.replications),
        }


def rayleigh_scale(mean_link_distance):
    """Rayleigh σ for a given mean, since E[R] = σ·sqrt(π/2)."""
    return np.asarray(mean_link_distance, dtype=float) * math.sqrt(2.0 / math.pi)


def _draw_link_distances(rng, scale, limit):
    r = rng.rayleigh(scale)
    resampled = 0
    too_long = r > limit
    while too_long.any():
        resampled += int(too_long.sum())
        r[too_long] = rng.rayleigh(scale[too_long])
        too_long = r > limit
    return r, resampled


def _path_loss(dist2, alpha):
    """d^(-α) from squared distances, in place."""
    if alpha == 4.0:
        np.multiply(dist2, dist2, out=dist2)
        return np.reciprocal(dist2, out=dist2)
    if alpha == 3.0:
        root = np.sqrt(dist2)
        np.multiply(dist2, root, out=dist2)
        return np.reciprocal(dist2, out=dist2)
    return np.power(dist2, -alpha / 2.0, out=dist2)


def _spatial_success(rng, side, alpha, power, theta, scale):
    """One slot of SIR outcomes for the attempting links (arrays indexed by attempter)."""
    k = len(power)
    tx = rng.uniform(0.0, side, size=(k, 2))
    r, resampled = _draw_link_distances(rng, scale, side / 4.0)
    angle = rng.uniform(0.0, 2.0 * math.pi, size=k)
    rx = np.mod(tx + r[:, None] * np.column_stack((np.cos(angle), np.sin(angle))), side)

    # minimum-image distance from every transmitter (columns) to every receiver (rows);
    # all coordinates lie in [0, side), so |dx| <= side
    dx = np.abs(np.subtract.outer(rx[:, 0], tx[:, 0]))
    dy = np.abs(np.subtract.outer(rx[:, 1], tx[:, 1]))
    np.minimum(dx, side - dx, out=dx)
    np.minimum(dy, side - dy, out=dy)
    dist2 = dx * dx
    dist2 += dy * dy
    # diagonal holds each receiver's own link
    np.fill_diagonal(dist2, r * r)

    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        gain = _path_loss(dist2, alpha)
        gain *= rng.standard_exponential(size=(k, k))
        signal = power * np.diagonal(gain)
        np.fill_diagonal(gain, 0.0)
        interference = gain @ power
        sir = np.where(interference > 0, signal / interference, np.inf)
    return sir > theta, r, resampled


def _mean_field_success(rng, attempting_class, attempting_counts, links, lam, x, phi):
    density = lam * attempting_counts / links
    prob = 1.0 / (1.0 + phi / x * float(np.sum(x * density)))
    return rng.random(len(attempting_class)) < prob[attempting_class]


def _drift(mean_queue):
    half = mean_queue.shape[0] // 2
    tail = mean_queue[half:]
    t = np.arange(half, mean_queue.shape[0], dtype=float)
    slope = np.polyfit(t, tail, 1)[0]
    return np.atleast_1d(slope).astype(float)


def _grow_ring(stamps, head):
    """Doubles every ring, unrolled so each queue starts at column 0; resets `head`."""
    m, cap = stamps.shape
    order = (head[:, None] + np.arange(cap)) % cap
    grown = np.zeros((m, 2 * cap), dtype=stamps.dtype)
    grown[:, :cap] = np.take_along_axis(stamps, order, axis=1)
    head[:] = 0
    return grown


def _run_replication(spec: SimulationSpec, seed_seq: np.random.SeedSequence, index: int) -> ReplicationResult:
    config = spec.config
    rng = np.random.default_rng(seed_seq)
    n = config.n_classes
    layout = torus_layout(config, spec.target_links_per_class)
    cls = layout.class_of
    m = cls.size
    cap = spec.queue_capacity
    warmup = spec.warmup_slots
    spatial = spec.mode is SimulationMode.SPATIAL

    p_src = config.access_prob[cls]
    a_src = config.arrival_rate[cls]
    power_src = config.power[cls]
    theta_src = config.sir_threshold[cls]
    scale_src = rayleigh_scale(config.mean_link_distance)[cls]
    phi = derive_constants(config).phi
    x = config.power_delta()

    queue = np.zeros(m, dtype=np.int64)
    head = np.zeros(m, dtype=np.int64)
    stamps = np.zeros((m, cap), dtype=np.int32) if not spec.saturated else None

    attempts_per_slot = np.zeros((spec.slots, n), dtype=np.int32)
    successes_per_slot = np.zeros((spec.slots, n), dtype=np.int32)
    mean_queue = np.zeros((spec.slots, n))
    delay_sum = np.zeros(n)
    delay_count = np.zeros(n, dtype=np.int64)
    distance_sum = np.zeros(n)
    distance_count = np.zeros(n, dtype=np.int64)
    arrivals_total = np.zeros(n, dtype=np.int64)
    departures_total = np.zeros(n, dtype=np.int64)
    resamples = 0
    records = []

    for t in range(spec.slots):
        # --- 1. Medium access ---
        backlogged = np.ones(m, dtype=bool) if spec.saturated else queue > 0
        attempting = np.flatnonzero(backlogged & (rng.random(m) < p_src))
        att_cls = cls[attempting]
        att_counts = np.bincount(att_cls, minlength=n)

        # --- 2. Transmission outcome ---
        if attempting.size == 0:
            success = np.zeros(0, dtype=bool)
        elif spatial:
            success, r, resampled = _spatial_success(
                rng, layout.side, config.alpha, power_src[attempting], theta_src[attempting], scale_src[attempting]
            )
            resamples += resampled
            if t >= warmup:
                distance_sum += np.bincount(att_cls, weights=r, minlength=n)
                distance_count += att_counts
                if spec.record_links:
                    records.append(np.column_stack((att_cls, r, success)))
        else:
            success = _mean_field_success(rng, att_cls, att_counts, layout.links, config.lam, x, phi)

        departed = attempting[success]
        dep_counts = np.bincount(cls[departed], minlength=n)
        attempts_per_slot[t] = att_counts
        successes_per_slot[t] = dep_counts
        departures_total += dep_counts

        if not spec.saturated:
            # --- 3. Departures (FIFO head of each queue) ---
            if departed.size:
                arrived_at = stamps[departed, head[departed] % cap]
                head[departed] += 1
                queue[departed] -= 1
                if t >= warmup:
                    delay_sum += np.bincount(cls[departed], weights=t - arrived_at + 1, minlength=n)
                    delay_count += dep_counts

            # --- 4. Arrivals, first eligible for service in the next slot ---
            new = np.flatnonzero(rng.random(m) < a_src)
            if new.size:
                if np.any(queue[new] >= cap):
                    if 2 * cap > MAX_QUEUE_CAPACITY:
                        raise SimulationOverflowError(
                            f"replication {index}: a queue exceeded {cap} packets at slot {t}; the configuration is grossly unstable"
                        )
                    stamps = _grow_ring(stamps, head)
                    cap = stamps.shape[1]
                    logging.debug(f"Replication {index}: timestamp ring grown to {cap} at slot {t}")
                stamps[new, (head[new] + queue[new]) % cap] = t + 1
                queue[new] += 1
                arrivals_total += np.bincount(cls[new], minlength=n)

            mean_queue[t] = np.bincount(cls, weights=queue, minlength=n) / layout.links

    link_records = None
    if records:
        stacked = np.vstack(records)
        link_records = pd.DataFrame(
            {"class": stacked[:, 0].astype(int), "distance": stacked[:, 1], "success": stacked[:, 2].astype(bool)}
        )

    measured = slice(warmup, spec.slots)
    result = ReplicationResult(
        attempts=attempts_per_slot[measured].sum(axis=0).astype(np.int64),
        successes=successes_per_slot[measured].sum(axis=0).astype(np.int64),
        delay_sum=delay_sum,
        delay_count=delay_count,
        mean_queue=mean_queue,
        attempts_per_slot=attempts_per_slot,
        successes_per_slot=successes_per_slot,
        drift=_drift(mean_queue),
        link_distance_sum=distance_sum,
        link_count=distance_count,
        arrivals_total=arrivals_total,
        departures_total=departures_total,
        final_queue=np.bincount(cls, weights=queue, minlength=n).astype(np.int64),
        distance_resamples=resamples,
        link_records=link_records,
    )
    logging.info(
        f"--- SIM: replication {index + 1}/{spec.replications} done: p_s={result.success_prob.tolist()}, "
        f"D={result.mean_delay.tolist()}, drift={result.drift.tolist()} ---"
    )
    return result


def _mean_and_halfwidth(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Column-wise mean and Student-t 95% half-width, ignoring NaN replications."""
    n_cols = samples.shape[1]
    mean = np.full(n_cols, np.nan)
    half = np.full(n_cols, np.nan)
    for j in range(n_cols):
        column = samples[:, j]
        column = column[np.isfinite(column)]
        if column.size == 0:
            continue
        mean[j] = column.mean()
        if column.size >= 2:
            half[j] = stats.t.ppf(0.975, column.size - 1) * column.std(ddof=1) / math.sqrt(column.size)
    return mean, half


def estimate_confidence(
    results: Sequence[ReplicationResult],
    stride: int = 100,
    unvalidated_regime: bool = False,
) -> SimulationResult:
    if not results:
        raise ValueError("at least one replication is required")
    ci_omitted = len(results) < 2
    if ci_omitted:
        logging.warning("Fewer than 2 replications: confidence intervals omitted")

    success = np.vstack([r.success_prob for r in results])
    delay = np.vstack([r.mean_delay for r in results])
    drift = np.vstack([r.drift for r in results])
    distance = np.vstack([r.mean_link_distance for r in results])

    success_hat, success_ci = _mean_and_halfwidth(success)
    delay_hat, delay_ci = _mean_and_halfwidth(delay)
    drift_hat, drift_ci = _mean_and_halfwidth(drift)
    distance_hat, _ = _mean_and_halfwidth(distance)

    trajectory = np.mean([r.mean_queue for r in results], axis=0)
    slots = np.arange(0, trajectory.shape[0], stride)
    no_data = tuple(int(j) for j in np.flatnonzero(~np.isfinite(success_hat)))

    return SimulationResult(
        success_prob_hat=success_hat,
        success_prob_ci=success_ci,
        mean_delay_hat=delay_hat,
        mean_delay_ci=delay_ci,
        queue_trajectory=trajectory[slots],
        trajectory_slots=slots,
        drift_estimate=drift_hat,
        drift_ci=drift_ci,
        drift_replications=drift,
        mean_link_distance_hat=distance_hat,
        no_data=no_data,
        ci_omitted=ci_omitted,
        unvalidated_regime=unvalidated_regime,
        distance_resamples=int(sum(r.distance_resamples for r in results)),
        replications=tuple(results),
    )


def _run_all(spec: SimulationSpec) -> SimulationResult:
    if spec.unvalidated_regime:
        logging.warning("Multi-class simulation with access_prob < 1: unvalidated regime, no closed form applies")
    children = np.random.SeedSequence(spec.seed).spawn(spec.replications)
    logging.info(
        f"--- SIM: {spec.mode.value}, {spec.replications} replications x {spec.slots} slots, "
        f"links={torus_layout(spec.config, spec.target_links_per_class).links.tolist()} ---"
    )
    jobs = [(spec, children[k], k) for k in range(spec.replications)]
    processes = min(spec.workers, spec.replications)
    if processes > 1:
        # replications carry their own seed, so the result does not depend on the pool size
        with multiprocessing.Pool(processes=processes) as pool:
            results = pool.starmap(_run_replication, jobs)
    else:
        results = [_run_replication(*job) for job in jobs]
    return estimate_confidence(results, stride=spec.trajectory_stride, unvalidated_regime=spec.unvalidated_regime)


def run(spec: SimulationSpec) -> SimulationResult:
    if spec.mode is SimulationMode.MEAN_FIELD:
        return run_mean_field(spec)
    return _run_all(spec)


def run_mean_field(spec: SimulationSpec) -> SimulationResult:
    """
    Same queue dynamics with each attempt succeeding independently with the closed-form
    probability for the current attempting densities; exact as the window grows.
    """
    if spec.mode is not SimulationMode.MEAN_FIELD:
        raise ConfigError(f"run_mean_field needs mode=mean-field (got {spec.mode.value})")
    return _run_all(spec)


def trajectory_frame(result: ReplicationResult, stride: int = 100) -> pd.DataFrame:
    """Per-slot table thinned to blocks of `stride` slots (queue averaged, counts summed)."""
    slots, n = result.mean_queue.shape
    block = np.arange(slots) // stride
    frames = []
    for j in range(n):
        per_class = pd.DataFrame(
            {
                "block": block,
                "mean_queue_len": result.mean_queue[:, j],
                "attempts": result.attempts_per_slot[:, j].astype(np.int64),
                "successes": result.successes_per_slot[:, j].astype(np.int64),
            }
        ).groupby("block", sort=True).agg(
            mean_queue_len=("mean_queue_len", "mean"), attempts=("attempts", "sum"), successes=("successes", "sum")
        )
        per_class["slot"] = per_class.index * stride
        per_class["class"] = j
        frames.append(per_class)
    frame = pd.concat(frames, ignore_index=True).sort_values(["slot", "class"], kind="mergesort")
    return frame[TRAJECTORY_COLUMNS].reset_index(drop=True)


def binned_conditional_success(records: pd.DataFrame, bins: int = 10, central: float = 0.9) -> pd.DataFrame:
    """
    Empirical P(success | distance) in equal-count distance bins spanning the central
    fraction of the observed distances, with 95% binomial (Clopper-Pearson) intervals.
    """
    tail = (1.0 - central) / 2.0
    lo, hi = records["distance"].quantile([tail, 1.0 - tail])
    inside = records[(records["distance"] >= lo) & (records["distance"] <= hi)]
    edges = np.quantile(inside["distance"], np.linspace(0.0, 1.0, bins + 1))
    rows = []
    for left, right in zip(edges[:-1], edges[1:]):
        chunk = inside[(inside["distance"] >= left) & (inside["distance"] <= right)]
        k, total = int(chunk["success"].sum()), int(len(chunk))
        ci = stats.binomtest(k, total).proportion_ci(confidence_level=0.95)
        rows.append(
            {
                "distance_low": float(left),
                "distance_high": float(right),
                "distance_mean": float(chunk["distance"].mean()),
                "count": total,
                "success_rate": k / total,
                "ci_low": float(ci.low),
                "ci_high": float(ci.high),
            }
        )
    return pd.DataFrame(rows)
