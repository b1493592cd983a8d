"""Outage estimation, interference-nulling arithmetic, complexity and convergence diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .geometry_channel import (
    ChannelSet,
    DomainError,
    ScenarioConfig,
    ScenarioGeometry,
    dbm_to_watts,
    path_loss,
    sample_scenario,
)
from .link_metrics import Design, achievable_rate, signal_terms


@dataclass(frozen=True)
class OutageEstimate:
    threshold: float
    probability: float
    trials: int
    half_width: float
    mode: str = "rate"

    def __post_init__(self):
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError("probability must lie in [0, 1]")

    @property
    def interval(self) -> tuple[float, float]:
        return (max(0.0, self.probability - self.half_width),
                min(1.0, self.probability + self.half_width))


def binomial_half_width(p: float, trials: int, z: float = 1.96) -> float:
    return z * math.sqrt(p * (1.0 - p) / trials)


def trial_seeds(rng: np.random.Generator | int, trials: int) -> list[np.random.SeedSequence]:
    """Independent per-trial seed sequences derived from ``rng``."""
    base = int(rng) if isinstance(rng, (int, np.integer)) else int(rng.integers(2**63))
    return [np.random.SeedSequence([base, t]) for t in range(trials)]


def estimate_outage(
    config: ScenarioConfig,
    design: Design | Callable[[ChannelSet, np.random.Generator], float],
    threshold: float,
    trials: int,
    rng: np.random.Generator | int,
    mode: str = "rate",
) -> OutageEstimate:
    """Fraction of channel draws whose rate (or SINR) falls below ``threshold``.

    ``design`` is either a fixed :class:`Design` evaluated on every draw, or a
    callable ``(channels, rng) -> rate`` that re-optimizes per draw.  In
    ``mode="sinr"`` the threshold is a linear SINR and is converted to the
    equivalent rate ``log2(1 + threshold)``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if mode not in ("rate", "sinr"):
        raise ValueError("mode must be 'rate' or 'sinr'")
    rate_thr = threshold if mode == "rate" else achievable_rate(threshold)
    outages = 0
    for ss in trial_seeds(rng, trials):
        chan_ss, opt_ss = ss.spawn(2)
        channels = sample_scenario(config, np.random.default_rng(chan_ss))
        if isinstance(design, Design):
            beta = signal_terms(channels, design.ports).sinr(np.exp(1j * design.theta))
            rate = achievable_rate(beta)
        else:
            rate = float(design(channels, np.random.default_rng(opt_ss)))
        outages += rate < rate_thr
    p = outages / trials
    return OutageEstimate(threshold, p, trials, binomial_half_width(p, trials), mode)


def rayleigh_config(distance_m: float = 100.0, p_max_dbm: float = 10.0, **overrides) -> ScenarioConfig:
    """Single-antenna, single-port link with one scattered path and no RIS.

    The received SINR is exponentially distributed with mean
    :func:`rayleigh_mean_sinr`.
    """
    base = dict(n_tx=1, num_ports=1, active_ports=1, ris_elements=0, num_interferers=0,
                tx_paths=2, rx_paths=2, rician_factor=0.0, fas_width=0.0,
                p_max_dbm=p_max_dbm, bs_uav_distance_min_m=distance_m,
                bs_uav_distance_max_m=distance_m)
    base.update(overrides)
    return ScenarioConfig(**base)


def rayleigh_mean_sinr(config: ScenarioConfig) -> float:
    pl = path_loss(config.bs_uav_distance_min_m, config.beta0, config.nlos_exponent)
    return dbm_to_watts(config.p_max_dbm) * pl / (config.active_ports * config.noise_power)


def rayleigh_outage(rate_threshold: float, mean_sinr: float) -> float:
    """Closed-form ``P(log2(1 + beta) < R)`` for exponentially distributed ``beta``."""
    return 1.0 - math.exp(-(2.0**rate_threshold - 1.0) / mean_sinr)


# ---------------------------------------------------------------------------
# interference nulling


def los_gains(geometry: ScenarioGeometry, beta0: float, k: int, ris_elements: int = 1) -> tuple[float, float]:
    """(direct LoS amplitude gain of interferer k, cascaded gain through N elements)."""
    if not 0 <= k < geometry.num_interferers:
        raise IndexError(f"interferer index {k} out of range")
    d_bu, d_bi, d_iu = geometry.d_bu_k[k], geometry.d_bi_k[k], geometry.d_iu
    if min(d_bu, d_bi, d_iu) <= 0:
        raise DomainError("distances must be positive")
    return math.sqrt(beta0) / d_bu, ris_elements * beta0 / (d_bi * d_iu)


def nulling_min_elements(d_iu: float, beta0: float) -> int:
    """Smallest N whose cascaded gain can match the direct one when d_BU = d_BI."""
    if d_iu <= 0 or beta0 <= 0:
        raise DomainError("d_iu and beta0 must be positive")
    return max(1, math.ceil(d_iu / math.sqrt(beta0) - 1e-12))


def check_nulling_feasible(geometry: ScenarioGeometry, ris_elements: int, beta0: float, k: int) -> bool:
    direct, cascaded = los_gains(geometry, beta0, k, ris_elements)
    return cascaded >= direct * (1.0 - 1e-12)


@dataclass(frozen=True)
class NullingReport:
    direct: np.ndarray
    cascaded: np.ndarray
    feasible: np.ndarray
    n_min: int

    @property
    def all_feasible(self) -> bool:
        return bool(np.all(self.feasible))


def nulling_report(geometry: ScenarioGeometry, ris_elements: int, beta0: float) -> NullingReport:
    gains = [los_gains(geometry, beta0, k, ris_elements) for k in range(geometry.num_interferers)]
    direct = np.array([g[0] for g in gains])
    cascaded = np.array([g[1] for g in gains])
    return NullingReport(direct, cascaded, cascaded >= direct * (1 - 1e-12),
                         nulling_min_elements(geometry.d_iu, beta0))


# ---------------------------------------------------------------------------
# complexity and convergence


def per_iteration_flops(K: int, N: int, L: int) -> float:
    if min(K, N, L) < 0:
        raise ValueError("K, N and L must be non-negative")
    return 2.0 * math.sqrt(4 + N) * (1 + K + N) * (4 + 16 * K + 8 * N + 20 * K**2 + 8 * K * L + 4 * N**2)


def scaling_exponent(sizes, times) -> float:
    """Least-squares slope of log(time) against log(size)."""
    x, y = np.log(np.asarray(sizes, float)), np.log(np.asarray(times, float))
    return float(np.polyfit(x, y, 1)[0])


@dataclass(frozen=True)
class ConvergenceReport:
    iterations_to_tolerance: int | None
    max_decrease: float
    final_delta: float
    iterations: int

    @property
    def monotone(self) -> bool:
        return self.max_decrease <= 0.0


def convergence_report(trace, tol: float = 1e-3) -> ConvergenceReport:
    """Diagnostics of a per-iteration objective trace (entry 0 is the start)."""
    trace = np.asarray(trace, float)
    if trace.size == 0:
        raise ValueError("trace must be non-empty")
    if trace.size == 1:
        return ConvergenceReport(1, 0.0, 0.0, 0)
    steps = np.diff(trace)
    hits = np.flatnonzero(np.abs(steps) < tol)
    return ConvergenceReport(
        iterations_to_tolerance=int(hits[0]) + 1 if hits.size else None,
        max_decrease=float(max(0.0, -steps.min())),
        final_delta=float(abs(steps[-1])),
        iterations=int(steps.size),
    )
