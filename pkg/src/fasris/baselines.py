"""Comparison schemes and an exhaustive oracle for small instances.

All schemes share the signature ``scheme(channels, params, rng) -> SchemeResult``
so experiments can treat them uniformly (see :data:`SCHEMES`).
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .geometry_channel import ChannelSet, ConfigError, PortLayout
from .link_metrics import Design, achievable_rate, signal_terms
from .sca_core import SCAParams, run_sca

FPA_ANTENNAS = 4


@dataclass(frozen=True)
class SchemeResult:
    scheme: str
    rate: float
    sinr: float
    design: Design
    seconds: float = 0.0
    iterations: int = 0
    rate_history: tuple[float, ...] = ()

    @classmethod
    def from_rate(cls, scheme: str, rate: float, design: Design, **kw) -> "SchemeResult":
        return cls(scheme, float(rate), float(2.0 ** rate - 1.0), design, **kw)


def _random_ports(M: int, m_l: int, rng: np.random.Generator) -> np.ndarray:
    return np.sort(rng.choice(M, size=m_l, replace=False)).astype(float) + 1.0


def random_fas_ris(channels: ChannelSet, params: SCAParams | None = None,
                   rng: np.random.Generator | None = None, draws: int = 100) -> SchemeResult:
    """Random distinct ports and i.i.d. uniform phases, rate averaged over ``draws``."""
    rng = rng if rng is not None else np.random.default_rng()
    t0 = time.perf_counter()
    M, m_l, N = channels.layout.num_ports, channels.active_ports, channels.ris_elements
    rates = np.empty(draws)
    first = None
    for d in range(draws):
        ports = _random_ports(M, m_l, rng)
        theta = rng.uniform(0.0, 2 * np.pi, N)
        beta = signal_terms(channels, ports).sinr(np.exp(1j * theta))
        rates[d] = achievable_rate(beta)
        if first is None:
            first = Design(theta, ports)
    return SchemeResult.from_rate("random", rates.mean(), first,
                                  seconds=time.perf_counter() - t0)


def fpa_ports(layout: PortLayout, count: int = FPA_ANTENNAS) -> np.ndarray:
    """Ports closest to ``count`` half-wavelength-spaced positions centered in the aperture."""
    span = (count - 1) * 0.5
    if layout.normalized_width + 1e-12 < span:
        raise ConfigError(
            f"fas_width {layout.normalized_width} is below the {span} wavelengths "
            f"needed for {count} half-wavelength-spaced antennas")
    y = (np.arange(count) - (count - 1) / 2.0) * 0.5 * layout.wavelength
    ports = np.clip(np.rint(layout.index_of(y)), 1, layout.num_ports)
    if np.any(np.diff(ports) < 1):
        raise ConfigError(
            f"num_ports {layout.num_ports} is too coarse to realize {count} distinct "
            "half-wavelength-spaced antennas")
    return ports


def fpa_baseline(channels: ChannelSet, params: SCAParams | None = None,
                 rng: np.random.Generator | None = None, draws: int = 100) -> SchemeResult:
    """Four fixed half-wavelength-spaced antennas, unoptimized (random) RIS phases."""
    rng = rng if rng is not None else np.random.default_rng()
    t0 = time.perf_counter()
    ports = fpa_ports(channels.layout)
    ch = replace(channels, active_ports=ports.size)
    terms = signal_terms(ch, ports)
    thetas = rng.uniform(0.0, 2 * np.pi, (draws, channels.ris_elements))
    rates = achievable_rate(terms.sinr_batch(np.exp(1j * thetas.T)))
    return SchemeResult.from_rate("fpa", float(np.mean(rates)), Design(thetas[0], ports),
                                  seconds=time.perf_counter() - t0)


def _from_sca(name: str, res, t0: float) -> SchemeResult:
    return SchemeResult(name, res.rate, res.sinr, res.design, time.perf_counter() - t0,
                        res.iterations, tuple(res.rate_history))


def proposed(channels: ChannelSet, params: SCAParams | None = None,
             rng: np.random.Generator | None = None) -> SchemeResult:
    """Joint port and phase design by SCA."""
    t0 = time.perf_counter()
    res = run_sca(channels, params or SCAParams(), rng=rng)
    return _from_sca("proposed", res, t0)


def traditional_as(channels: ChannelSet, params: SCAParams | None = None,
                   rng: np.random.Generator | None = None) -> SchemeResult:
    """Fixed half-wavelength-spaced antennas; only the RIS phases are optimized."""
    t0 = time.perf_counter()
    rng = rng if rng is not None else np.random.default_rng()
    ports = fpa_ports(channels.layout)
    ch = replace(channels, active_ports=ports.size)
    p = replace(params or SCAParams(), optimize_ports=False)
    theta0 = rng.uniform(0.0, 2 * np.pi, channels.ris_elements)
    res = run_sca(ch, p, init=(theta0, ports))
    return _from_sca("traditional-as", res, t0)


def fas_without_ris(channels: ChannelSet, params: SCAParams | None = None,
                    rng: np.random.Generator | None = None) -> SchemeResult:
    """Only the fluid-antenna ports are optimized; the RIS is absent."""
    t0 = time.perf_counter()
    res = run_sca(channels.without_ris(), params or SCAParams(), rng=rng)
    return _from_sca("fas-no-ris", res, t0)


SchemeFn = Callable[..., SchemeResult]

SCHEMES: dict[str, SchemeFn] = {
    "proposed": proposed,
    "random": random_fas_ris,
    "fpa": fpa_baseline,
    "traditional-as": traditional_as,
    "fas-no-ris": fas_without_ris,
}


# ---------------------------------------------------------------------------
# exhaustive search


class OracleBudgetError(RuntimeError):
    def __init__(self, count: int, limit: float):
        self.count = count
        self.limit = limit
        super().__init__(f"exhaustive search needs {count:.3e} evaluations, limit is {limit:.3e}")


def oracle_size(num_ports: int, active_ports: int, ris_elements: int, levels: int) -> int:
    return math.comb(num_ports, active_ports) * levels**ris_elements


def exhaustive_oracle(channels: ChannelSet, levels: int = 8, limit: float = 1e7,
                      chunk: int = 1 << 16) -> SchemeResult:
    """Best design over every port subset and every phase grid ``{2 pi q / levels}``.

    Ties keep the lexicographically first (ports, phase indices) candidate.
    """
    M, m_l, N = channels.layout.num_ports, channels.active_ports, channels.ris_elements
    if levels < 1:
        raise ValueError("levels must be >= 1")
    count = oracle_size(M, m_l, N, levels)
    if count > limit:
        raise OracleBudgetError(count, limit)
    t0 = time.perf_counter()
    grid = np.exp(2j * np.pi * np.arange(levels) / levels)
    best = (-np.inf, None, None)
    n_grid = levels**N
    for combo in itertools.combinations(range(1, M + 1), m_l):
        ports = np.asarray(combo, float)
        terms = signal_terms(channels, ports)
        for lo in range(0, n_grid, chunk):
            idx = np.arange(lo, min(lo + chunk, n_grid))
            # digits of idx in base `levels`, most significant first
            digits = (idx[None, :] // levels ** np.arange(N - 1, -1, -1)[:, None]) % levels
            betas = terms.sinr_batch(grid[digits]) if N else np.full(idx.size, terms.sinr(np.zeros(0)))
            j = int(np.argmax(betas))
            if betas[j] > best[0]:
                best = (float(betas[j]), ports, 2 * np.pi * digits[:, j] / levels)
    beta, ports, theta = best
    return SchemeResult("oracle", achievable_rate(beta), beta,
                        Design(theta, ports), time.perf_counter() - t0, count)


def grid_rate(channels: ChannelSet, design: Design, levels: int) -> float:
    """Rate after snapping the phases of ``design`` to the nearest grid level."""
    step = 2 * np.pi / levels
    theta = np.mod(np.rint(design.theta / step), levels) * step
    return achievable_rate(signal_terms(channels, design.ports).sinr(np.exp(1j * theta)))
