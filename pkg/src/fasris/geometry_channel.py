"""Scenario geometry, far-field responses and Rician channel synthesis.

Every link that terminates at the fluid antenna is kept in factored form
(receive angles plus the product of path-response and transmit-response
matrices), so the channel rows of the active ports can be regenerated for
any, possibly fractional, port index vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


class DomainError(ValueError):
    """An argument lies outside the domain of a model formula."""


class ConfigError(ValueError):
    """A scenario or experiment configuration is inconsistent.

    ``problems`` lists every violation found, not only the first.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class ScenarioGeometry:
    bs_uav_pos: np.ndarray
    interferer_pos: np.ndarray
    uav_ris_pos: np.ndarray
    uav_pos: np.ndarray

    def __post_init__(self):
        bs = np.asarray(self.bs_uav_pos, dtype=float).reshape(3)
        ints = np.asarray(self.interferer_pos, dtype=float).reshape(-1, 3)
        ris = np.asarray(self.uav_ris_pos, dtype=float).reshape(3)
        uav = np.asarray(self.uav_pos, dtype=float).reshape(3)
        for name, arr in (("bs_uav_pos", bs), ("uav_ris_pos", ris), ("uav_pos", uav)):
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "interferer_pos", ints)
        heights = np.concatenate([[bs[2], ris[2], uav[2]], ints[:, 2]])
        if np.any(heights < 0):
            raise DomainError("all heights must be non-negative")
        dists = np.concatenate([[self.d_bu, self.d_bi, self.d_iu], self.d_bu_k, self.d_bi_k])
        if np.any(dists <= 0):
            raise DomainError("nodes must not coincide")

    @property
    def num_interferers(self) -> int:
        return self.interferer_pos.shape[0]

    @property
    def d_bu(self) -> float:
        return float(np.linalg.norm(self.uav_pos - self.bs_uav_pos))

    @property
    def d_bi(self) -> float:
        return float(np.linalg.norm(self.uav_ris_pos - self.bs_uav_pos))

    @property
    def d_iu(self) -> float:
        return float(np.linalg.norm(self.uav_pos - self.uav_ris_pos))

    @property
    def d_bu_k(self) -> np.ndarray:
        return np.linalg.norm(self.interferer_pos - self.uav_pos, axis=1)

    @property
    def d_bi_k(self) -> np.ndarray:
        return np.linalg.norm(self.interferer_pos - self.uav_ris_pos, axis=1)


@dataclass(frozen=True)
class PortLayout:
    """``M`` ports evenly spread over a linear aperture of ``W`` wavelengths."""

    num_ports: int
    normalized_width: float
    wavelength: float

    def __post_init__(self):
        if self.num_ports < 1:
            raise DomainError("need at least one port")
        if self.wavelength <= 0 or self.normalized_width < 0:
            raise DomainError("wavelength must be positive and width non-negative")

    @property
    def spacing(self) -> float:
        if self.num_ports == 1:
            return 0.0
        return self.normalized_width * self.wavelength / (self.num_ports - 1)

    def coordinates(self, r) -> np.ndarray:
        """y-coordinates (meters) of ports ``r``; fractional indices allowed."""
        r = np.asarray(r, dtype=float)
        if np.any(r < 1 - 1e-9) or np.any(r > self.num_ports + 1e-9):
            raise DomainError(f"port index outside [1, {self.num_ports}]")
        return (2.0 * (r - 1.0) - self.num_ports + 1.0) / 2.0 * self.spacing

    def positions(self, r) -> np.ndarray:
        """(m, 2) array of (x, y) port positions; the array lies on the y-axis."""
        y = np.atleast_1d(self.coordinates(r))
        return np.column_stack([np.zeros_like(y), y])

    def index_of(self, y) -> np.ndarray:
        """Inverse of :meth:`coordinates` (fractional port index of a y-coordinate)."""
        if self.num_ports == 1:
            return np.ones_like(np.asarray(y, dtype=float))
        return np.asarray(y, dtype=float) / self.spacing + (self.num_ports + 1) / 2.0


def port_coordinate(r_m: float, layout: PortLayout) -> float:
    return float(layout.coordinates(r_m))


@dataclass(frozen=True)
class PathAngles:
    elevation: np.ndarray
    azimuth: np.ndarray

    def __post_init__(self):
        el = np.atleast_1d(np.asarray(self.elevation, dtype=float))
        az = np.atleast_1d(np.asarray(self.azimuth, dtype=float))
        if el.shape != az.shape or el.ndim != 1 or el.size < 1:
            raise DomainError("elevation and azimuth must be equal-length 1-D arrays")
        if np.any(el < 0) or np.any(el > np.pi):
            raise DomainError("elevation must lie in [0, pi]")
        if np.any(az < 0) or np.any(az >= 2 * np.pi):
            raise DomainError("azimuth must lie in [0, 2pi)")
        object.__setattr__(self, "elevation", el)
        object.__setattr__(self, "azimuth", az)

    @property
    def count(self) -> int:
        return self.elevation.size

    @classmethod
    def sample(cls, count: int, rng: np.random.Generator) -> "PathAngles":
        return cls(rng.uniform(0.0, np.pi, count), rng.uniform(0.0, 2 * np.pi, count))


@dataclass(frozen=True)
class TransmitPowers:
    p_bs: np.ndarray
    p_k: np.ndarray
    p_max: float

    def __post_init__(self):
        p_bs = np.asarray(self.p_bs, dtype=complex).ravel()
        p_k = np.asarray(self.p_k, dtype=complex).reshape(-1, p_bs.size)
        object.__setattr__(self, "p_bs", p_bs)
        object.__setattr__(self, "p_k", p_k)
        if np.vdot(p_bs, p_bs).real > self.p_max * (1 + 1e-9):
            raise DomainError("transmit vector exceeds the power budget")

    @classmethod
    def uniform(cls, n_tx: int, p_max: float, num_interferers: int,
                interferer_power: float | None = None) -> "TransmitPowers":
        pi = p_max if interferer_power is None else interferer_power
        p_bs = np.full(n_tx, np.sqrt(p_max / n_tx), dtype=complex)
        p_k = np.full((num_interferers, n_tx), np.sqrt(pi / n_tx), dtype=complex)
        return cls(p_bs, p_k, p_max)

    def scaled(self, factor: float) -> "TransmitPowers":
        """Scale every transmit vector (amplitude) by ``factor``."""
        return TransmitPowers(self.p_bs * factor, self.p_k * factor, self.p_max * factor**2)


# ---------------------------------------------------------------------------
# field responses


def _phase_diff(positions: np.ndarray, angles: PathAngles) -> np.ndarray:
    """Propagation differences rho, shape (paths, antennas)."""
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    x, y = positions[:, 0], positions[:, 1]
    el, az = angles.elevation[:, None], angles.azimuth[:, None]
    return x[None, :] * np.sin(el) * np.cos(az) + y[None, :] * np.cos(el)


def receive_field_response(port_pos, angles: PathAngles, wavelength: float) -> np.ndarray:
    if wavelength <= 0:
        raise DomainError("wavelength must be positive")
    port_pos = np.asarray(port_pos, dtype=float).reshape(1, 2)
    return np.exp(1j * 2 * np.pi / wavelength * _phase_diff(port_pos, angles))[:, 0]


def receive_field_matrix(ports, angles: PathAngles, wavelength: float) -> np.ndarray:
    """``F``: column m is the receive response of port m, shape (L_r, m_l)."""
    if wavelength <= 0:
        raise DomainError("wavelength must be positive")
    ports = np.asarray(ports, dtype=float)
    if ports.size == 0:
        raise DomainError("at least one port is required")
    return np.exp(1j * 2 * np.pi / wavelength * _phase_diff(ports.reshape(-1, 2), angles))


def transmit_field_matrix(antenna_positions, angles: PathAngles, wavelength: float) -> np.ndarray:
    """``Lambda``: shape (L_t, N_t)."""
    return receive_field_matrix(antenna_positions, angles, wavelength)


def line_array(count: int, spacing: float) -> np.ndarray:
    """Centered linear array on the y-axis, (count, 2) positions."""
    y = (np.arange(count) - (count - 1) / 2.0) * spacing
    return np.column_stack([np.zeros(count), y])


def planar_array(count: int, spacing: float) -> np.ndarray:
    """Near-square planar grid of ``count`` elements, (count, 2) positions."""
    if count == 0:
        return np.zeros((0, 2))
    cols = int(math.ceil(math.sqrt(count)))
    idx = np.arange(count)
    gx, gy = idx // cols, idx % cols
    rows = int(math.ceil(count / cols))
    x = (gx - (rows - 1) / 2.0) * spacing
    y = (gy - (cols - 1) / 2.0) * spacing
    return np.column_stack([x, y])


# ---------------------------------------------------------------------------
# path responses and channels


def path_loss(distance: float, beta0: float, exponent: float) -> float:
    if distance <= 0:
        raise DomainError("distance must be positive")
    return beta0 / distance**exponent


def sample_path_response(
    L_r: int,
    L_t: int,
    rician_factor: float,
    path_loss: float,
    rng: np.random.Generator,
    nlos_path_loss: float | None = None,
) -> np.ndarray:
    """Diagonal path-response matrix with a deterministic LoS entry at (0, 0).

    The remaining diagonal entries are i.i.d. circularly-symmetric complex
    Gaussian, sharing the NLoS power ``nlos_path_loss / (K + 1)``.
    """
    if L_r < 1 or L_t < 1:
        raise DomainError("path counts must be positive")
    if rician_factor < 0 or path_loss <= 0:
        raise DomainError("need K >= 0 and path_loss > 0")
    nlos_pl = path_loss if nlos_path_loss is None else nlos_path_loss
    psi = np.zeros((L_r, L_t), dtype=complex)
    if math.isinf(rician_factor):
        los_w, nlos_w = 1.0, 0.0
    else:
        los_w = rician_factor / (rician_factor + 1.0)
        nlos_w = 1.0 / (rician_factor + 1.0)
    psi[0, 0] = math.sqrt(path_loss * los_w)
    n_diag = min(L_r, L_t)
    if n_diag > 1:
        var = nlos_pl * nlos_w / (n_diag - 1)
        g = rng.standard_normal((n_diag - 1, 2)) @ np.array([1.0, 1j])
        # always draw so realizations stay aligned across Rician factors
        idx = np.arange(1, n_diag)
        psi[idx, idx] = math.sqrt(var / 2.0) * g
    return psi


def synthesize_channel(F: np.ndarray, Psi: np.ndarray, Lam: np.ndarray) -> np.ndarray:
    """``F^H Psi Lambda``."""
    F, Psi, Lam = np.atleast_2d(F), np.atleast_2d(Psi), np.atleast_2d(Lam)
    if F.shape[0] != Psi.shape[0] or Psi.shape[1] != Lam.shape[0]:
        raise DomainError(f"shape mismatch: F{F.shape} Psi{Psi.shape} Lambda{Lam.shape}")
    return F.conj().T @ Psi @ Lam


@dataclass(frozen=True)
class PortLink:
    """A link received at the fluid antenna, stored in factored form.

    The channel for ports ``r`` is ``F(r)^H @ coupling`` where ``coupling``
    is the path-response times transmit-response product (L_r x n_tx).
    """

    angles: PathAngles
    coupling: np.ndarray
    psi: np.ndarray

    def field(self, layout: PortLayout, r) -> np.ndarray:
        return receive_field_matrix(layout.positions(r), self.angles, layout.wavelength)

    def matrix(self, layout: PortLayout, r) -> np.ndarray:
        return self.field(layout, r).conj().T @ self.coupling

    def port_rows(self, layout: PortLayout, r) -> tuple[np.ndarray, np.ndarray]:
        """Channel rows for ports ``r`` and their derivative w.r.t. each index.

        Row m depends only on ``r[m]``; returns (rows, d rows / d r_m).
        """
        Fc = self.field(layout, r).conj()  # (L_r, m_l)
        k = 2 * np.pi / layout.wavelength
        # d/dr of exp(-j k y cos(el)) with dy/dr = spacing
        dphase = -1j * k * layout.spacing * np.cos(self.angles.elevation)
        rows = Fc.T @ self.coupling
        drows = (Fc * dphase[:, None]).T @ self.coupling
        return rows, drows


@dataclass(frozen=True)
class ScenarioConfig:
    """Physical scenario parameters (SI units unless the name says otherwise)."""

    n_tx: int = 4
    num_ports: int = 20
    active_ports: int = 4
    ris_elements: int = 100
    num_interferers: int = 6
    tx_paths: int = 3
    rx_paths: int = 3
    rician_factor: float = 5.0
    fas_width: float = 2.0
    bandwidth_hz: float = 10e6
    carrier_hz: float = 5e9
    noise_psd_dbm_hz: float = -174.0
    beta0: float = 1e-3
    los_exponent: float = 2.0
    nlos_exponent: float = 2.8
    p_max_dbm: float = 10.0
    interferer_power_dbm: float | None = None
    bs_height_m: float = 10.0
    uav_height_m: float = 50.0
    ris_height_m: float = 50.0
    bs_uav_distance_min_m: float = 50.0
    bs_uav_distance_max_m: float = 200.0
    ris_offset_m: float = 5.0
    cell_radius_m: float = 500.0
    cell_distance_m: float = 1000.0

    def validate(self) -> list[str]:
        errs = []
        for name in ("n_tx", "num_ports", "active_ports", "tx_paths", "rx_paths"):
            if getattr(self, name) < 1:
                errs.append(f"{name} must be >= 1")
        for name in ("ris_elements", "num_interferers"):
            if getattr(self, name) < 0:
                errs.append(f"{name} must be >= 0")
        if self.active_ports > self.num_ports:
            errs.append(f"active_ports ({self.active_ports}) exceeds num_ports ({self.num_ports})")
        for name in ("bandwidth_hz", "carrier_hz", "beta0", "bs_uav_distance_min_m",
                     "ris_offset_m", "cell_radius_m"):
            if not getattr(self, name) > 0:
                errs.append(f"{name} must be positive")
        if self.fas_width < 0:
            errs.append("fas_width must be non-negative")
        if self.num_ports > 1 and self.fas_width == 0:
            errs.append("fas_width must be positive when num_ports > 1")
        if self.rician_factor < 0:
            errs.append("rician_factor must be >= 0")
        if self.bs_uav_distance_max_m < self.bs_uav_distance_min_m:
            errs.append("bs_uav_distance_max_m must be >= bs_uav_distance_min_m")
        dh = abs(self.uav_height_m - self.bs_height_m)
        if self.bs_uav_distance_min_m < dh:
            errs.append("bs_uav_distance_min_m is below the BS-UAV height difference")
        for name in ("bs_height_m", "uav_height_m", "ris_height_m"):
            if getattr(self, name) < 0:
                errs.append(f"{name} must be >= 0")
        return errs

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz

    @property
    def layout(self) -> PortLayout:
        return PortLayout(self.num_ports, self.fas_width, self.wavelength)

    @property
    def noise_power(self) -> float:
        """Noise power in watts: PSD integrated over the bandwidth."""
        return dbm_to_watts(self.noise_psd_dbm_hz + 10 * math.log10(self.bandwidth_hz))

    def powers(self) -> TransmitPowers:
        ip = None if self.interferer_power_dbm is None else dbm_to_watts(self.interferer_power_dbm)
        return TransmitPowers.uniform(self.n_tx, dbm_to_watts(self.p_max_dbm),
                                      self.num_interferers, ip)

    def with_updates(self, **kw) -> "ScenarioConfig":
        return replace(self, **kw)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass(frozen=True)
class ChannelSet:
    """All channels of one realization.

    ``bs_link`` and ``interferer_links`` are the direct links into the
    fluid antenna, ``ris_link`` the RIS-to-UAV link (coupling L_r x N);
    ``g_bs`` (N x N_t) and ``g_k`` (K x N x N_t) are the links into the RIS.
    """

    layout: PortLayout
    geometry: ScenarioGeometry
    powers: TransmitPowers
    noise_power: float
    active_ports: int
    bs_link: PortLink
    interferer_links: tuple[PortLink, ...]
    ris_link: PortLink
    g_bs: np.ndarray
    g_k: np.ndarray

    @property
    def num_interferers(self) -> int:
        return len(self.interferer_links)

    @property
    def ris_elements(self) -> int:
        return self.g_bs.shape[0]

    @property
    def n_tx(self) -> int:
        return self.g_bs.shape[1]

    def h_bs(self, r) -> np.ndarray:
        return self.bs_link.matrix(self.layout, r)

    def h_k(self, r) -> list[np.ndarray]:
        return [link.matrix(self.layout, r) for link in self.interferer_links]

    def h_d(self, r) -> np.ndarray:
        """RIS-to-UAV channel in (N x m_l) form; the model uses its conjugate transpose."""
        return self.ris_link.matrix(self.layout, r).conj().T

    def without_ris(self) -> "ChannelSet":
        n_tx = self.n_tx
        ris = PortLink(self.ris_link.angles, self.ris_link.coupling[:, :0], self.ris_link.psi)
        return replace(self, ris_link=ris, g_bs=np.zeros((0, n_tx), complex),
                       g_k=np.zeros((self.num_interferers, 0, n_tx), complex))

    def with_powers(self, powers: TransmitPowers) -> "ChannelSet":
        return replace(self, powers=powers)


def sample_geometry(config: ScenarioConfig, rng: np.random.Generator) -> ScenarioGeometry:
    bs = np.array([0.0, 0.0, config.bs_height_m])
    d = rng.uniform(config.bs_uav_distance_min_m, config.bs_uav_distance_max_m)
    dh = config.uav_height_m - config.bs_height_m
    horiz = math.sqrt(max(d**2 - dh**2, 0.0))
    phi = rng.uniform(0.0, 2 * np.pi)
    uav = np.array([horiz * math.cos(phi), horiz * math.sin(phi), config.uav_height_m])
    psi = rng.uniform(0.0, 2 * np.pi)
    ris_h = math.sqrt(max(config.ris_offset_m**2 - (config.ris_height_m - config.uav_height_m)**2, 0.0))
    ris = uav + np.array([ris_h * math.cos(psi), ris_h * math.sin(psi),
                          config.ris_height_m - config.uav_height_m])
    K = config.num_interferers
    centers = np.column_stack([
        config.cell_distance_m * np.cos(2 * np.pi * np.arange(K) / max(K, 1)),
        config.cell_distance_m * np.sin(2 * np.pi * np.arange(K) / max(K, 1)),
    ])
    rad = config.cell_radius_m * np.sqrt(rng.uniform(0.0, 1.0, K))
    ang = rng.uniform(0.0, 2 * np.pi, K)
    ints = np.column_stack([
        centers[:, 0] + rad * np.cos(ang),
        centers[:, 1] + rad * np.sin(ang),
        np.full(K, config.bs_height_m),
    ])
    return ScenarioGeometry(bs, ints, ris, uav)


def sample_scenario(config: ScenarioConfig, rng: np.random.Generator,
                    geometry: ScenarioGeometry | None = None) -> ChannelSet:
    """Draw one channel realization for ``config``.

    Direct links into the fluid antenna are Rician (LoS path loss with the
    LoS exponent, scattered paths with the NLoS exponent); every link that
    touches the RIS is LoS-only.
    """
    errs = config.validate()
    if errs:
        raise ConfigError(errs)
    lam = config.wavelength
    geo = geometry if geometry is not None else sample_geometry(config, rng)
    if geo.num_interferers != config.num_interferers:
        raise ConfigError("geometry interferer count does not match num_interferers")
    powers = config.powers()
    bs_ant = line_array(config.n_tx, lam / 2)
    ris_el = planar_array(config.ris_elements, lam / 2)
    Lr, Lt = config.rx_paths, config.tx_paths
    b0 = config.beta0

    def port_link(distance: float, rician: float) -> PortLink:
        rx = PathAngles.sample(Lr, rng)
        tx = PathAngles.sample(Lt, rng)
        psi = sample_path_response(
            Lr, Lt, rician, path_loss(distance, b0, config.los_exponent), rng,
            nlos_path_loss=path_loss(distance, b0, config.nlos_exponent))
        lam_t = transmit_field_matrix(bs_ant, tx, lam)
        return PortLink(rx, psi @ lam_t, psi)

    def ris_rx(distance: float) -> np.ndarray:
        rx = PathAngles.sample(Lr, rng)
        tx = PathAngles.sample(Lt, rng)
        psi = sample_path_response(Lr, Lt, math.inf,
                                   path_loss(distance, b0, config.los_exponent), rng)
        F = receive_field_matrix(ris_el, rx, lam) if config.ris_elements else np.zeros((Lr, 0))
        return synthesize_channel(F, psi, transmit_field_matrix(bs_ant, tx, lam))

    bs_link = port_link(geo.d_bu, config.rician_factor)
    int_links = tuple(port_link(d, config.rician_factor) for d in geo.d_bu_k)
    g_bs = ris_rx(geo.d_bi)
    g_k = np.array([ris_rx(d) for d in geo.d_bi_k]).reshape(
        config.num_interferers, config.ris_elements, config.n_tx)

    rx = PathAngles.sample(Lr, rng)
    tx = PathAngles.sample(Lt, rng)
    psi_ru = sample_path_response(Lr, Lt, math.inf,
                                  path_loss(geo.d_iu, b0, config.los_exponent), rng)
    lam_ru = (transmit_field_matrix(ris_el, tx, lam) if config.ris_elements
              else np.zeros((Lt, 0), complex))
    ris_link = PortLink(rx, psi_ru @ lam_ru, psi_ru)

    return ChannelSet(
        layout=config.layout,
        geometry=geo,
        powers=powers,
        noise_power=config.noise_power,
        active_ports=config.active_ports,
        bs_link=bs_link,
        interferer_links=int_links,
        ris_link=ris_link,
        g_bs=g_bs,
        g_k=g_k,
    )
