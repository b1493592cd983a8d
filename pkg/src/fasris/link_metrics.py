"""Effective channels through the RIS, received signal, SINR and rate."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry_channel import ChannelSet, DomainError, TransmitPowers


def reflection_matrix(theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float).ravel()
    return np.diag(np.exp(1j * theta))


def effective_channel(H_direct, H_d, theta, G) -> np.ndarray:
    """``H_direct + H_d^H diag(e^{j theta}) G``.

    ``H_d`` is the RIS-to-receiver channel in (N x m_l) form.
    """
    H_direct = np.atleast_2d(np.asarray(H_direct, dtype=complex))
    H_d = np.asarray(H_d, dtype=complex).reshape(-1, H_direct.shape[0])
    G = np.asarray(G, dtype=complex)
    G = G.reshape(H_d.shape[0], -1) if G.size else np.zeros((H_d.shape[0], H_direct.shape[1]))
    theta = np.asarray(theta, dtype=float).ravel()
    if theta.size != H_d.shape[0] or G.shape[1] != H_direct.shape[1]:
        raise DomainError(
            f"shape mismatch: H{H_direct.shape} H_d{H_d.shape} theta({theta.size}) G{G.shape}")
    if theta.size == 0:
        return H_direct.copy()
    return H_direct + (H_d.conj().T * np.exp(1j * theta)[None, :]) @ G


@dataclass(frozen=True)
class EffectiveChannels:
    ell_bs: np.ndarray
    ell_k: tuple[np.ndarray, ...]

    def __post_init__(self):
        ell_bs = np.atleast_2d(np.asarray(self.ell_bs, dtype=complex))
        ell_k = tuple(np.asarray(e, dtype=complex).reshape(ell_bs.shape) for e in self.ell_k)
        if not np.all(np.isfinite(ell_bs)) or not all(np.all(np.isfinite(e)) for e in ell_k):
            raise DomainError("effective channels must be finite")
        object.__setattr__(self, "ell_bs", ell_bs)
        object.__setattr__(self, "ell_k", ell_k)

    @property
    def active_ports(self) -> int:
        return self.ell_bs.shape[0]


@dataclass(frozen=True)
class Design:
    """RIS phases (radians) and active port indices (1-based, ascending)."""

    theta: np.ndarray
    ports: np.ndarray

    def __post_init__(self):
        theta = np.mod(np.asarray(self.theta, dtype=float).ravel(), 2 * np.pi)
        ports = np.asarray(self.ports, dtype=float).ravel()
        if ports.size == 0:
            raise DomainError("at least one active port is required")
        if np.any(np.diff(ports) < 1 - 1e-9):
            raise DomainError("port indices must increase with gaps of at least one")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "ports", ports)

    @property
    def is_integer(self) -> bool:
        return bool(np.all(self.ports == np.round(self.ports)))


def effective_channels(channels: ChannelSet, design: Design) -> EffectiveChannels:
    r = design.ports
    H_d = channels.h_d(r)
    ell_bs = effective_channel(channels.h_bs(r), H_d, design.theta, channels.g_bs)
    ell_k = tuple(effective_channel(H, H_d, design.theta, G)
                  for H, G in zip(channels.h_k(r), channels.g_k))
    return EffectiveChannels(ell_bs, ell_k)


def received_signal(ell_bs, ell_k, powers: TransmitPowers, symbols, noise) -> np.ndarray:
    """``ell_bs p_bs x_bs + sum_k ell_k p_k x_k + n``; ``symbols[0]`` is the desired one."""
    symbols = np.atleast_1d(np.asarray(symbols, dtype=complex))
    y = np.asarray(ell_bs) @ powers.p_bs * symbols[0]
    for k, ell in enumerate(ell_k):
        y = y + np.asarray(ell) @ powers.p_k[k] * symbols[k + 1]
    return y + np.asarray(noise, dtype=complex)


def compute_sinr(ell: EffectiveChannels, powers: TransmitPowers, noise_power: float,
                 active_ports: int | None = None) -> float:
    if not noise_power > 0:
        raise DomainError("noise power must be positive")
    m_l = ell.active_ports if active_ports is None else active_ports
    sig = np.linalg.norm(ell.ell_bs @ powers.p_bs) ** 2
    interf = sum(np.linalg.norm(e @ powers.p_k[k]) ** 2 for k, e in enumerate(ell.ell_k))
    return float(sig / (interf + m_l * noise_power))


def achievable_rate(beta) -> float | np.ndarray:
    beta = np.asarray(beta, dtype=float)
    if np.any(beta < 0):
        raise DomainError("SINR must be non-negative")
    out = np.log2(1.0 + beta)
    return float(out) if out.ndim == 0 else out


def sinr_to_db(beta: float) -> float:
    return 10.0 * np.log10(beta)


# ---------------------------------------------------------------------------
# factored form used by the optimizers


@dataclass(frozen=True)
class SignalTerms:
    """Per-port received amplitudes as affine functions of ``v = e^{j theta}``.

    ``s_bs(v) = a_bs + B_bs v`` and ``s_k(v) = a_k[k] + B_k[k] v`` where
    ``s = ell p`` (an m_l-vector).  Everything is divided by the noise
    amplitude ``sigma`` so that SINR = |s_bs|^2 / (sum |s_k|^2 + m_l).
    Optional ``d*`` arrays hold derivatives of row m with respect to r_m.
    """

    a_bs: np.ndarray
    B_bs: np.ndarray
    a_k: np.ndarray
    B_k: np.ndarray
    da_bs: np.ndarray | None = None
    dB_bs: np.ndarray | None = None
    da_k: np.ndarray | None = None
    dB_k: np.ndarray | None = None

    @property
    def active_ports(self) -> int:
        return self.a_bs.size

    @property
    def ris_elements(self) -> int:
        return self.B_bs.shape[1]

    @property
    def num_interferers(self) -> int:
        return self.a_k.shape[0]

    def s_bs(self, v) -> np.ndarray:
        return self.a_bs + self.B_bs @ v

    def s_k(self, v) -> np.ndarray:
        return self.a_k + self.B_k @ v

    def sinr(self, v) -> float:
        sig = np.sum(np.abs(self.s_bs(v)) ** 2)
        interf = np.sum(np.abs(self.s_k(v)) ** 2) if self.num_interferers else 0.0
        return float(sig / (interf + self.active_ports))

    def sinr_batch(self, V: np.ndarray) -> np.ndarray:
        """SINR for each column of ``V`` (N x P)."""
        S = self.a_bs[:, None] + self.B_bs @ V
        sig = np.sum(np.abs(S) ** 2, axis=0)
        if self.num_interferers:
            Sk = self.a_k[:, :, None] + self.B_k @ V
            interf = np.sum(np.abs(Sk) ** 2, axis=(0, 1))
        else:
            interf = 0.0
        return sig / (interf + self.active_ports)


def signal_terms(channels: ChannelSet, r, jacobian: bool = False) -> SignalTerms:
    layout = channels.layout
    r = np.asarray(r, dtype=float).ravel()
    pw = channels.powers
    sigma = np.sqrt(channels.noise_power)
    K = channels.num_interferers
    gp_bs = channels.g_bs @ pw.p_bs / sigma  # (N,)
    gp_k = np.einsum("kit,kt->ki", channels.g_k, pw.p_k) / sigma if K else np.zeros((0, gp_bs.size))

    if jacobian:
        rows_d, drows_d = channels.ris_link.port_rows(layout, r)  # H_d^H rows, (m_l, N)
        rows_bs, drows_bs = channels.bs_link.port_rows(layout, r)
    else:
        rows_d = channels.ris_link.matrix(layout, r)
        rows_bs = channels.bs_link.matrix(layout, r)
    a_bs = rows_bs @ pw.p_bs / sigma
    B_bs = rows_d * gp_bs[None, :]
    a_k = np.zeros((K, r.size), complex)
    B_k = rows_d[None, :, :] * gp_k[:, None, :]
    da_k = np.zeros((K, r.size), complex)
    for k, link in enumerate(channels.interferer_links):
        if jacobian:
            rk, drk = link.port_rows(layout, r)
            da_k[k] = drk @ pw.p_k[k] / sigma
        else:
            rk = link.matrix(layout, r)
        a_k[k] = rk @ pw.p_k[k] / sigma
    if not jacobian:
        return SignalTerms(a_bs, B_bs, a_k, B_k)
    return SignalTerms(
        a_bs, B_bs, a_k, B_k,
        da_bs=drows_bs @ pw.p_bs / sigma,
        dB_bs=drows_d * gp_bs[None, :],
        da_k=da_k,
        dB_k=drows_d[None, :, :] * gp_k[:, None, :],
    )


def evaluate(channels: ChannelSet, design: Design) -> tuple[float, float]:
    """(SINR, rate) of ``design`` on ``channels``."""
    terms = signal_terms(channels, design.ports)
    beta = terms.sinr(np.exp(1j * design.theta))
    return beta, achievable_rate(beta)
