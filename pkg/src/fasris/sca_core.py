"""Successive convex approximation for joint RIS phase and port design.

The non-convex SINR maximization is attacked by repeatedly solving a
second-order cone subproblem built around the current expansion point:

* phases enter through the relaxed vector ``v = e^{j theta}``, ``|v_i| <= 1``;
  every received amplitude ``s = ell p`` is affine in ``v`` for fixed ports;
* port indices enter through a first-order model of the port-dependent
  field-response phases, valid inside a trust region;
* the signal power ``||s||^2`` is replaced by its tangent minorant and each
  interferer amplitude is bounded through real/imaginary-part slacks.

Everything is expressed in noise-normalized amplitudes (see
:class:`fasris.link_metrics.SignalTerms`).
"""

from __future__ import annotations

import cmath
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import isotonic_regression

from . import conic_solver as cs
from .geometry_channel import ChannelSet, DomainError, PortLayout
from .link_metrics import Design, SignalTerms, achievable_rate, signal_terms

log = logging.getLogger(__name__)


class InfeasibleError(RuntimeError):
    """No design satisfies the constraints."""


class SCAError(RuntimeError):
    """A subproblem solve failed; carries the outer iteration index."""

    def __init__(self, iteration: int, cause: Exception):
        self.iteration = iteration
        self.cause = cause
        super().__init__(f"SCA iteration {iteration}: {cause}")


# ---------------------------------------------------------------------------
# complex identities


def norm_lower_bound(a, b) -> float:
    """Tangent minorant ``2 Re{b^H a} - ||b||^2 <= ||a||^2``."""
    a, b = np.atleast_1d(a), np.atleast_1d(b)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch {a.shape} vs {b.shape}")
    return float(2 * np.real(np.vdot(b, a)) - np.real(np.vdot(b, b)))


def re_im_identities(a, b) -> tuple[float, float]:
    """Polarization forms of ``Re{a^H b}`` and ``Im{a^H b}``."""
    a, b = np.atleast_1d(a), np.atleast_1d(b)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch {a.shape} vs {b.shape}")
    sq = lambda u: float(np.real(np.vdot(u, u)))
    re = 0.25 * (sq(a + b) - sq(a - b))
    im = 0.25 * (sq(a - 1j * b) - sq(a + 1j * b))
    return re, im


# ---------------------------------------------------------------------------
# expansion point and linear model


@dataclass(frozen=True)
class ExpansionPoint:
    theta: np.ndarray
    ports: np.ndarray
    terms: SignalTerms

    @classmethod
    def at(cls, channels: ChannelSet, theta, ports) -> "ExpansionPoint":
        theta = np.mod(np.asarray(theta, float).ravel(), 2 * np.pi)
        ports = np.asarray(ports, float).ravel()
        return cls(theta, ports, signal_terms(channels, ports, jacobian=True))

    @property
    def v(self) -> np.ndarray:
        return np.exp(1j * self.theta)

    @property
    def u(self) -> np.ndarray:
        """Desired amplitude ``ell_bs p_bs`` at the point (noise-normalized)."""
        return self.terms.s_bs(self.v)

    @property
    def s_k(self) -> np.ndarray:
        return self.terms.s_k(self.v)

    @property
    def signal(self) -> float:
        return float(np.sum(np.abs(self.u) ** 2))

    @property
    def interference(self) -> float:
        return float(np.sum(np.abs(self.s_k) ** 2))

    @property
    def sinr(self) -> float:
        return self.signal / (self.interference + self.terms.active_ports)

    @property
    def scale(self) -> float:
        """Amplitude unit of the subproblem: root interference-plus-noise."""
        return math.sqrt(self.interference + self.terms.active_ports)


@dataclass(frozen=True)
class LinearSignalModel:
    """Affine maps ``z -> s`` with ``z = (Re v, Im v, r)``.

    Exact in ``v`` for ``r = r0``; first-order in ``r`` with the Jacobian
    taken at ``v0``.  When ports are frozen ``z`` has no ``r`` block.
    """

    c_bs: np.ndarray      # (m_l,)
    M_bs: np.ndarray      # (m_l, nz)
    c_k: np.ndarray       # (K, m_l)
    M_k: np.ndarray       # (K, m_l, nz)
    v0: np.ndarray
    r0: np.ndarray
    trust_radius: float
    optimize_ports: bool

    @property
    def n_ris(self) -> int:
        return self.v0.size

    @property
    def n_ports(self) -> int:
        return self.r0.size

    @property
    def nz(self) -> int:
        return self.M_bs.shape[1]

    def z_of(self, v, r=None) -> np.ndarray:
        v = np.asarray(v, complex)
        parts = [v.real, v.imag]
        if self.optimize_ports:
            parts.append(self.r0 if r is None else np.asarray(r, float))
        return np.concatenate(parts)

    def split(self, z) -> tuple[np.ndarray, np.ndarray]:
        N = self.n_ris
        v = z[:N] + 1j * z[N:2 * N]
        r = z[2 * N:2 * N + self.n_ports] if self.optimize_ports else self.r0.copy()
        return v, r

    @property
    def z0(self) -> np.ndarray:
        return self.z_of(self.v0)

    def s_bs(self, z) -> np.ndarray:
        return self.c_bs + self.M_bs @ z

    def s_k(self, z) -> np.ndarray:
        return self.c_k + self.M_k @ z

    def jacobian_r(self) -> tuple[np.ndarray, np.ndarray]:
        """d s_bs / d r (m_l x m_l) and d s_k / d r (K x m_l x m_l)."""
        N = self.n_ris
        if not self.optimize_ports:
            return np.zeros((self.n_ports, 0), complex), np.zeros((self.c_k.shape[0], self.n_ports, 0), complex)
        return self.M_bs[:, 2 * N:], self.M_k[:, :, 2 * N:]


def build_linear_signal_model(point: ExpansionPoint, trust_radius: float = 1.0,
                              optimize_ports: bool = True) -> LinearSignalModel:
    if not trust_radius > 0:
        raise DomainError("trust radius must be positive")
    t = point.terms
    v0, r0 = point.v, point.ports
    m_l, K = t.active_ports, t.num_interferers

    def pack(a, B, da, dB):
        blocks = [B, 1j * B]
        c = a.copy()
        if optimize_ports:
            g = da + dB @ v0
            blocks.append(np.diag(g))
            c = c - g * r0
        return c, np.hstack(blocks)

    c_bs, M_bs = pack(t.a_bs, t.B_bs, t.da_bs, t.dB_bs)
    nz = M_bs.shape[1]
    c_k = np.zeros((K, m_l), complex)
    M_k = np.zeros((K, m_l, nz), complex)
    for k in range(K):
        c_k[k], M_k[k] = pack(t.a_k[k], t.B_k[k], t.da_k[k], t.dB_k[k])
    return LinearSignalModel(c_bs, M_bs, c_k, M_k, v0, r0, float(trust_radius), optimize_ports)


# ---------------------------------------------------------------------------
# convex pieces


@dataclass(frozen=True)
class AffineFunctional:
    """``z -> row @ z + const`` (real)."""

    row: np.ndarray
    const: float

    def __call__(self, z) -> float:
        return float(self.row @ z + self.const)


def signal_power_bound(model: LinearSignalModel, point: ExpansionPoint) -> AffineFunctional:
    """Tangent minorant ``2 Re{u^H s(z)} - ||u||^2`` of the signal power."""
    u = point.u
    M = model.M_bs
    row = 2 * (u.real @ M.real + u.imag @ M.imag)
    const = 2 * float(np.real(np.vdot(u, model.c_bs))) - float(np.real(np.vdot(u, u)))
    return AffineFunctional(row, const)


@dataclass(frozen=True)
class InterferenceBounds:
    """Convex per-port upper bounds on ``+-Re s_{k,m}`` and ``+-Im s_{k,m}``.

    With ``a = conj(s_{k,m}(z)) / sqrt(kappa)`` and ``b = sqrt(kappa)`` the
    polarization identity gives ``Re{a^H b} = 1/4 ||a+b||^2 - 1/4 ||a-b||^2``;
    linearizing the concave part at the expansion amplitude leaves
    ``Re s + |s - s^(n)|^2 / (4 kappa)``, and likewise for the three
    sign/part combinations.  ``kappa`` only trades curvature for scale.
    """

    model: LinearSignalModel
    k: int
    s_n: np.ndarray
    kappa: float = 1.0

    def _parts(self, z):
        s = self.model.s_k(z)[self.k]
        e = 0.25 * np.abs(s - self.s_n) ** 2 / self.kappa
        return s, e

    def rho(self, z):
        s, e = self._parts(z)
        return s.real + e

    def rho_bar(self, z):
        s, e = self._parts(z)
        return -s.real + e

    def omega(self, z):
        s, e = self._parts(z)
        return s.imag + e

    def omega_bar(self, z):
        s, e = self._parts(z)
        return -s.imag + e


def interference_bounds(model: LinearSignalModel, point: ExpansionPoint, k: int,
                        kappa: float | None = None) -> InterferenceBounds:
    """Bounds for interferer ``k``; ``kappa`` defaults to the subproblem scale."""
    K = model.c_k.shape[0]
    if not 0 <= k < K:
        raise IndexError(f"interferer index {k} outside [0, {K})")
    kappa = point.scale if kappa is None else kappa
    return InterferenceBounds(model, k, point.s_k[k].copy(), float(kappa))


# ---------------------------------------------------------------------------
# parameters, subproblem assembly


@dataclass(frozen=True)
class SCAParams:
    eta: float = 0.5
    delta: float = 1e-3
    tol: float = 1e-3
    max_iters: int = 50
    trust_radius: float = 1.0
    gamma_db: float = 0.0
    optimize_ports: bool = True
    safeguard: bool = True
    restoration_iters: int = 5
    penalty: float = 1e3
    curvature: float = 1.0
    integer_iterates: bool = True
    polish_iters: int = 10
    polish_rounds: int = 3
    solver_tol: float = 1e-3
    solver_max_iters: int = 1500

    def validate(self) -> list[str]:
        errs = []
        if not 0 <= self.eta <= 1:
            errs.append("eta must lie in [0, 1]")
        if self.delta < 0:
            errs.append("delta must be >= 0")
        if not self.tol > 0:
            errs.append("tol must be positive")
        if self.max_iters < 1:
            errs.append("max_iters must be >= 1")
        if not self.trust_radius > 0:
            errs.append("trust_radius must be positive")
        if self.restoration_iters < 0 or self.polish_iters < 0 or self.polish_rounds < 0:
            errs.append("iteration counts must be >= 0")
        return errs

    @property
    def gamma(self) -> float:
        return 10.0 ** (self.gamma_db / 10.0)


@dataclass(frozen=True)
class VariableMap:
    n_ris: int
    n_ports: int
    K: int
    m_l: int
    restoration: bool

    @property
    def v(self) -> slice:
        return slice(0, 2 * self.n_ris + self.n_ports)

    @property
    def z(self) -> slice:
        return self.v

    @property
    def varrho(self) -> slice:
        o = self.z.stop
        return slice(o, o + self.K)

    @property
    def varrho_bar(self) -> slice:
        o = self.varrho.stop
        return slice(o, o + self.K)

    def _aux(self, j: int) -> slice:
        o = self.varrho_bar.stop + j * self.K * self.m_l
        return slice(o, o + self.K * self.m_l)

    @property
    def w(self) -> slice:
        return self._aux(0)

    @property
    def w_bar(self) -> slice:
        return self._aux(1)

    @property
    def e(self) -> slice:
        return self._aux(2)

    @property
    def t(self) -> slice:
        o = self._aux(2).stop
        return slice(o, o + (1 if self.K else 0))

    @property
    def viol(self) -> slice:
        o = self.t.stop
        return slice(o, o + (1 if self.restoration else 0))

    @property
    def n(self) -> int:
        return self.viol.stop


@dataclass(frozen=True)
class SubproblemSpec:
    """Assembled cone program; slack and signal quantities are in units of ``scale``."""

    program: cs.ConicProgram
    variables: VariableMap
    model: LinearSignalModel
    signal: AffineFunctional
    objective_row: np.ndarray
    objective_const: float
    scale: float = 1.0

    def objective(self, x) -> float:
        """Maximized objective value at full variable vector ``x``."""
        return float(self.objective_row @ x + self.objective_const)

    def point_vector(self, point: ExpansionPoint) -> np.ndarray:
        """The expansion point lifted to a full, tight variable vector."""
        vm, model = self.variables, self.model
        x = np.zeros(vm.n)
        z0 = model.z0
        x[vm.z] = z0
        if vm.K:
            s = model.s_k(z0) / self.scale
            w = np.abs(s.real)
            wb = np.abs(s.imag)
            x[vm.w] = w.ravel()
            x[vm.w_bar] = wb.ravel()
            x[vm.varrho] = np.linalg.norm(w, axis=1)
            x[vm.varrho_bar] = np.linalg.norm(wb, axis=1)
            x[vm.t] = np.sum(w**2) + np.sum(wb**2)
        return x


class _Rows:
    """Collects ``G x + g in cone`` blocks and emits the standard form."""

    def __init__(self, n: int):
        self.n = n
        self.blocks: list[tuple[str, np.ndarray, np.ndarray]] = []

    def add(self, kind: str, G: np.ndarray, g: np.ndarray) -> None:
        G = np.atleast_2d(G)
        self.blocks.append((kind, G, np.asarray(g, float).ravel()))

    def program(self, c: np.ndarray) -> cs.ConicProgram:
        order = {cs.ZERO: 0, cs.NONNEG: 1, cs.SOC: 2}
        blocks = sorted(self.blocks, key=lambda b: order[b[0]])  # stable
        cones: list[cs.Cone] = []
        for kind, G, _ in blocks:
            if kind != cs.SOC and cones and cones[-1].kind == kind:
                cones[-1] = cs.Cone(kind, cones[-1].dim + G.shape[0])
            else:
                cones.append(cs.Cone(kind, G.shape[0]))
        G = np.vstack([b[1] for b in blocks])
        g = np.concatenate([b[2] for b in blocks])
        return cs.ConicProgram(c, -G, g, tuple(cones))


def _assemble(model: LinearSignalModel, point: ExpansionPoint, params: SCAParams,
              layout_ports: int, restoration: bool) -> SubproblemSpec:
    N, m_l = model.n_ris, model.n_ports
    K = model.c_k.shape[0]
    nr = m_l if model.optimize_ports else 0
    vm = VariableMap(N, nr, K, m_l, restoration)
    n = vm.n
    rows = _Rows(n)
    zi = np.arange(vm.z.start, vm.z.stop)

    def lift(R: np.ndarray) -> np.ndarray:
        """Embed rows over z into the full variable vector."""
        out = np.zeros((R.shape[0], n))
        out[:, zi] = R
        return out

    # |v_i| <= 1
    G = np.zeros((3 * N, n))
    g = np.zeros(3 * N)
    idx = np.arange(N)
    g[3 * idx] = 1.0
    G[3 * idx + 1, idx] = 1.0
    G[3 * idx + 2, N + idx] = 1.0
    for i in range(N):
        rows.add(cs.SOC, G[3 * i:3 * i + 3], g[3 * i:3 * i + 3])

    # port ordering, box and trust region
    if nr:
        r0, D = model.r0, model.trust_radius
        ri = 2 * N + np.arange(nr)
        if nr > 1:
            Gd = np.zeros((nr - 1, n))
            Gd[np.arange(nr - 1), ri[1:]] = 1.0
            Gd[np.arange(nr - 1), ri[:-1]] = -1.0
            rows.add(cs.NONNEG, Gd, -np.ones(nr - 1))
        E = np.zeros((nr, n))
        E[np.arange(nr), ri] = 1.0
        rows.add(cs.NONNEG, E, -np.ones(nr))
        rows.add(cs.NONNEG, -E, np.full(nr, float(layout_ports)))
        rows.add(cs.NONNEG, -E, D + r0)
        rows.add(cs.NONNEG, E, D - r0)

    # work in units where interference-plus-noise at the point equals one
    kappa = point.scale
    f_raw = signal_power_bound(model, point)
    f = AffineFunctional(f_raw.row / kappa**2, f_raw.const / kappa**2)
    noise = m_l / kappa**2
    gamma = params.gamma

    if K:
        s_n = point.s_k / kappa  # (K, m_l)
        root_curv = math.sqrt(params.curvature)
        Mre, Mim = model.M_k.real / kappa, model.M_k.imag / kappa
        cre, cim = model.c_k.real / kappa, model.c_k.imag / kappa
        for k in range(K):
            for m in range(m_l):
                j = k * m_l + m
                iw, iwb, ie = vm.w.start + j, vm.w_bar.start + j, vm.e.start + j
                re_row = lift(Mre[k, m][None, :])[0]
                im_row = lift(Mim[k, m][None, :])[0]
                B = np.zeros((4, n))
                b = np.zeros(4)
                # w - Re s - e >= 0 ; w + Re s - e >= 0 ; likewise for Im
                for q, (iv, sign, R, c0) in enumerate(
                        [(iw, -1, re_row, cre[k, m]), (iw, 1, re_row, cre[k, m]),
                         (iwb, -1, im_row, cim[k, m]), (iwb, 1, im_row, cim[k, m])]):
                    B[q] = sign * R
                    B[q, iv] += 1.0
                    B[q, ie] -= 1.0
                    b[q] = sign * c0
                rows.add(cs.NONNEG, B, b)
                # e >= |s - s_n|^2 / 4  <=>  ||(Re ds, Im ds, e - 1)|| <= e + 1
                C = np.zeros((4, n))
                cvec = np.zeros(4)
                C[0, ie] = 1.0
                cvec[0] = 1.0
                C[1] = root_curv * re_row
                cvec[1] = root_curv * (cre[k, m] - s_n[k, m].real)
                C[2] = root_curv * im_row
                cvec[2] = root_curv * (cim[k, m] - s_n[k, m].imag)
                C[3, ie] = 1.0
                cvec[3] = -1.0
                rows.add(cs.SOC, C, cvec)
        for k in range(K):
            for head, aux in ((vm.varrho, vm.w), (vm.varrho_bar, vm.w_bar)):
                C = np.zeros((1 + m_l, n))
                C[0, head.start + k] = 1.0
                C[1 + np.arange(m_l), aux.start + k * m_l + np.arange(m_l)] = 1.0
                rows.add(cs.SOC, C, np.zeros(1 + m_l))
        # t >= sum varrho^2 + varrho_bar^2
        it = vm.t.start
        C = np.zeros((2 * K + 2, n))
        cvec = np.zeros(2 * K + 2)
        C[0, it] = 1.0
        cvec[0] = 1.0
        C[1 + np.arange(K), vm.varrho.start + np.arange(K)] = 2.0
        C[1 + K + np.arange(K), vm.varrho_bar.start + np.arange(K)] = 2.0
        C[-1, it] = 1.0
        cvec[-1] = -1.0
        rows.add(cs.SOC, C, cvec)

    # SINR requirement  f - gamma (m_l + t) (+ viol) >= 0
    S = np.zeros((1, n))
    S[0, zi] = f.row
    if K:
        S[0, vm.t.start] -= gamma
    const = f.const - gamma * noise
    if restoration:
        S[0, vm.viol.start] = 1.0
        V = np.zeros((1, n))
        V[0, vm.viol.start] = 1.0
        rows.add(cs.NONNEG, V, [0.0])
    rows.add(cs.NONNEG, S, [const])

    # maximize f - beta_n (noise + t) + delta (2 Re{v_n^H v} - ||v_n||^2);
    # interference-plus-noise at the point is one in these units
    beta_n = point.sinr
    obj = np.zeros(n)
    obj[zi] = f.row
    if K:
        obj[vm.t.start] -= beta_n
    obj_const = f.const - beta_n * noise
    v0 = model.v0
    obj[:N] += 2 * params.delta * v0.real
    obj[N:2 * N] += 2 * params.delta * v0.imag
    obj_const -= params.delta * float(np.sum(np.abs(v0) ** 2))
    if restoration:
        obj[vm.viol.start] -= params.penalty
    prog = rows.program(-obj)
    return SubproblemSpec(prog, vm, model, f, obj, obj_const, kappa)


def assemble_subproblem(channels: ChannelSet, point: ExpansionPoint, params: SCAParams,
                        restoration: bool = False) -> SubproblemSpec:
    model = build_linear_signal_model(point, params.trust_radius, params.optimize_ports)
    if model.n_ports != channels.active_ports and params.optimize_ports:
        raise ValueError("expansion point port count does not match the channel set")
    return _assemble(model, point, params, channels.layout.num_ports, restoration)


# ---------------------------------------------------------------------------
# projection


def project_ports(raw_r, num_ports: int, integer: bool) -> np.ndarray:
    r = np.asarray(raw_r, float).ravel()
    m_l = r.size
    if m_l > num_ports:
        raise InfeasibleError(f"cannot place {m_l} ports among {num_ports}")
    if not integer:
        offs = np.arange(m_l)
        q = isotonic_regression(r - offs, increasing=True).x
        q = np.clip(q, 1.0, num_ports - m_l + 1.0)
        return q + offs
    r = np.sort(np.rint(r))
    r[0] = max(r[0], 1.0)
    for m in range(1, m_l):
        if r[m] <= r[m - 1]:
            r[m] = r[m - 1] + 1.0
    if r[-1] > num_ports:
        r[-1] = float(num_ports)
        for m in range(m_l - 2, -1, -1):
            r[m] = min(r[m], r[m + 1] - 1.0)
    return r


def project_solution(raw_v, raw_r, layout: PortLayout, integer: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Map a relaxed solution back to phases in [0, 2pi) and feasible ports."""
    v = np.asarray(raw_v, complex).ravel()
    theta = np.where(np.abs(v) > 0, np.mod(np.angle(v), 2 * np.pi), 0.0)
    theta = np.where(theta >= 2 * np.pi, 0.0, theta)
    return theta, project_ports(raw_r, layout.num_ports, integer)


# ---------------------------------------------------------------------------
# outer loop


@dataclass
class SCAState:
    theta: np.ndarray
    ports: np.ndarray
    sinr: float
    iteration: int = 0
    trust_radius: float = 1.0
    rate_history: list[float] = field(default_factory=list)
    objective_history: list[float] = field(default_factory=list)
    delta_rate: float = math.inf
    accepted: bool = True
    feasible: bool = True
    solver_iters: int = 0
    warm: cs.SolverSolution | None = None

    @property
    def rate(self) -> float:
        return achievable_rate(self.sinr)


@dataclass(frozen=True)
class SCAResult:
    design: Design
    sinr: float
    rate: float
    rate_history: list[float]
    objective_history: list[float]
    iterations: int
    converged: bool
    feasible: bool
    continuous_ports: np.ndarray
    polish_history: list[float] = field(default_factory=list)


def _solver_settings(params: SCAParams) -> cs.SolverSettings:
    return cs.SolverSettings(tol=params.solver_tol, max_iters=params.solver_max_iters)


def _exact_sinr(channels: ChannelSet, theta, ports) -> float:
    return signal_terms(channels, ports).sinr(np.exp(1j * theta))


def _interp(theta0, theta1, r0, r1, eta):
    dth = np.angle(np.exp(1j * (theta1 - theta0)))  # shortest arc
    return np.mod(theta0 + eta * dth, 2 * np.pi), (1 - eta) * r0 + eta * r1


def sca_step(state: SCAState, channels: ChannelSet, params: SCAParams,
             restoration: bool = False) -> SCAState:
    """One solve / project / relax step.  Returns a new state."""
    it = state.iteration + 1
    if params.eta == 0:
        return replace(state, iteration=it, delta_rate=0.0, accepted=True)
    p = replace(params, trust_radius=state.trust_radius)
    point = ExpansionPoint.at(channels, state.theta, state.ports)
    spec = assemble_subproblem(channels, point, p, restoration)
    warm = state.warm if state.warm is not None and state.warm.x.size == spec.program.n else None
    try:
        sol = cs.solve(spec.program, _solver_settings(params), warm_start=warm)
    except cs.SolverError as exc:
        raise SCAError(it, exc) from exc
    if sol.status in ("infeasible", "unbounded"):
        raise SCAError(it, cs.SolverError(f"subproblem reported {sol.status}"))
    v, r = spec.model.split(sol.x[spec.variables.z])
    theta_new, r_new = project_solution(v, r, channels.layout, integer=params.integer_iterates)
    if not params.optimize_ports:
        r_new = state.ports.copy()

    old_rate = state.rate
    eta = params.eta
    tries = 5 if params.safeguard else 1
    best = None
    for _ in range(tries):
        th, rr = _interp(state.theta, theta_new, state.ports, r_new, eta)
        if params.optimize_ports:
            rr = project_ports(rr, channels.layout.num_ports, integer=params.integer_iterates)
        beta = _exact_sinr(channels, th, rr)
        if not params.safeguard or achievable_rate(beta) >= old_rate:
            best = (th, rr, beta)
            break
        eta *= 0.5
    base = dict(iteration=it, solver_iters=state.solver_iters + sol.iterations, warm=sol)
    if best is None:
        return replace(state, delta_rate=0.0, accepted=False,
                       trust_radius=state.trust_radius * 0.5, **base)
    th, rr, beta = best
    new_rate = achievable_rate(beta)
    return replace(
        state, theta=th, ports=rr, sinr=beta, accepted=True,
        delta_rate=abs(new_rate - old_rate),
        rate_history=state.rate_history + [new_rate],
        objective_history=state.objective_history + [beta],
        **base)


def initial_point(channels: ChannelSet, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    theta = rng.uniform(0.0, 2 * np.pi, channels.ris_elements)
    ports = np.linspace(1.0, channels.layout.num_ports, channels.active_ports)
    return theta, ports


def _loop(state: SCAState, channels: ChannelSet, params: SCAParams, max_iters: int,
          restoration: bool = False) -> tuple[SCAState, bool]:
    rejections = 0
    while state.iteration < max_iters:
        state = sca_step(state, channels, params, restoration)
        log.debug("iter %d rate %.6f dR %.2e accepted=%s", state.iteration, state.rate,
                  state.delta_rate, state.accepted)
        if state.accepted:
            rejections = 0
            if state.delta_rate < params.tol:
                return state, True
        else:
            rejections += 1
            if rejections >= 2 or not params.optimize_ports:
                return state, True
    return state, False


def phase_ascent(terms: SignalTerms, theta, sweeps: int = 1) -> tuple[np.ndarray, float]:
    """Exact element-wise SINR ascent over single phases.

    With all other phases fixed the SINR in ``theta_i`` is a ratio
    ``(p0 + Re{p1 e^{j t}}) / (q0 + Re{q1 e^{j t}})`` whose stationary points
    solve ``Im{c e^{j t}} = -Im{p1 conj(q1)}`` with ``c = q0 p1 - p0 q1``.
    The coefficients are tracked through Gram matrices so each element costs
    O(1) plus an O(N) update when its phase changes.
    """
    theta = np.asarray(theta, float).copy()
    v = np.exp(1j * theta)
    B, Bk = terms.B_bs, terms.B_k
    s = terms.s_bs(v)
    GB = B.conj().T @ B
    g = B.conj().T @ s
    S = float(np.vdot(s, s).real)
    if terms.num_interferers:
        sk = terms.s_k(v)
        GQ = np.einsum("kmi,kmj->ij", Bk.conj(), Bk)
        h = np.einsum("kmi,km->i", Bk.conj(), sk)
        Q = float(np.vdot(sk, sk).real) + terms.active_ports
    else:
        GQ = np.zeros_like(GB)
        h = np.zeros_like(g)
        Q = float(terms.active_ports)
    nb, nq = GB.diagonal().real.copy(), GQ.diagonal().real.copy()
    for _ in range(sweeps):
        for i in range(theta.size):
            vi, gi, hi = complex(v[i]), complex(g[i]), complex(h[i])
            p0 = S - 2 * (gi.conjugate() * vi).real + 2 * nb[i]
            p1 = 2 * (gi - nb[i] * vi).conjugate()
            q0 = Q - 2 * (hi.conjugate() * vi).real + 2 * nq[i]
            q1 = 2 * (hi - nq[i] * vi).conjugate()
            c = q0 * p1 - p0 * q1
            best_t, best_e = theta[i], vi
            best = (p0 + (p1 * vi).real) / (q0 + (q1 * vi).real)
            if abs(c) > 1e-300:
                x = min(1.0, max(-1.0, -(p1 * q1.conjugate()).imag / abs(c)))
                phi = cmath.phase(c)
                for t in (math.asin(x) - phi, math.pi - math.asin(x) - phi):
                    e = cmath.exp(1j * t)
                    val = (p0 + (p1 * e).real) / (q0 + (q1 * e).real)
                    if val > best:
                        best, best_t, best_e = val, t, e
            if best_e is not vi:
                dv = best_e - vi
                theta[i] = best_t % (2 * math.pi)
                v[i] = best_e
                g += GB[:, i] * dv
                h += GQ[:, i] * dv
                S = p0 + (p1 * best_e).real
                Q = q0 + (q1 * best_e).real
    return theta, terms.sinr(v)


def refine_ports(channels: ChannelSet, theta, ports, sweeps: int = 1) -> tuple[np.ndarray, np.ndarray, float]:
    """Best-improvement search over single-port relocations.

    Every candidate port set differs from the current one in one port and
    is scored after ``sweeps`` passes of :func:`phase_ascent`; the best
    candidate is taken while it beats the (equally re-tuned) incumbent.
    Returns ``(ports, theta, sinr)``.
    """
    ports = np.asarray(ports, float).copy()
    theta = np.asarray(theta, float).copy()
    M = channels.layout.num_ports
    theta, best = phase_ascent(signal_terms(channels, ports), theta, sweeps)
    while True:
        cand_best = None
        for m in range(ports.size):
            others = np.delete(ports, m)
            for q in range(1, M + 1):
                if q == ports[m] or q in others:
                    continue
                cand = np.sort(np.append(others, float(q)))
                th, beta = phase_ascent(signal_terms(channels, cand), theta, sweeps)
                if beta > best * (1 + 1e-9) and (cand_best is None or beta > cand_best[2]):
                    cand_best = (cand, th, beta)
        if cand_best is None:
            return ports, theta, best
        ports, theta, best = cand_best


def run_sca(channels: ChannelSet, params: SCAParams | None = None,
            init: tuple[np.ndarray, np.ndarray] | None = None,
            rng: np.random.Generator | None = None) -> SCAResult:
    params = params or SCAParams()
    errs = params.validate()
    if errs:
        raise ValueError("; ".join(errs))
    if init is None:
        init = initial_point(channels, rng if rng is not None else np.random.default_rng(0))
    theta0, ports0 = (np.mod(np.asarray(init[0], float), 2 * np.pi), np.asarray(init[1], float))
    if ports0.size != channels.active_ports:
        raise ValueError("initial port vector has the wrong length")
    ports0 = project_ports(ports0, channels.layout.num_ports, integer=False)
    beta0 = _exact_sinr(channels, theta0, ports0)
    state = SCAState(theta0, ports0, beta0, trust_radius=params.trust_radius,
                     rate_history=[achievable_rate(beta0)], objective_history=[beta0])
    nothing_to_do = channels.ris_elements == 0 and not params.optimize_ports

    feasible = True
    if not nothing_to_do and beta0 < params.gamma and params.restoration_iters:
        state, _ = _loop(replace(state), channels, params, params.restoration_iters, restoration=True)
        if state.sinr < params.gamma:
            log.info("SINR target %.2f dB not reached after restoration (%.2f dB)",
                     params.gamma_db, 10 * np.log10(max(state.sinr, 1e-300)))
            feasible = False
        state = replace(state, trust_radius=params.trust_radius)

    converged = True
    if not nothing_to_do:
        state, converged = _loop(state, channels, params, params.max_iters + state.iteration,
                                 restoration=not feasible)
    iterations = state.iteration

    cont_ports = state.ports.copy()
    ports = project_ports(cont_ports, channels.layout.num_ports, integer=True)
    theta = state.theta
    polish: list[float] = []
    beta = _exact_sinr(channels, theta, ports)
    # alternate integer port refinement and phase-only polishing
    for _ in range(params.polish_rounds if params.optimize_ports else 0):
        start = beta
        ports, theta, beta = refine_ports(channels, theta, ports)
        if channels.ris_elements and params.polish_iters:
            pp = replace(params, optimize_ports=False)
            ps = SCAState(theta, ports, beta, trust_radius=params.trust_radius,
                          rate_history=[achievable_rate(beta)], objective_history=[beta])
            ps, _ = _loop(ps, channels, pp, params.polish_iters, restoration=not feasible)
            theta, beta = ps.theta, ps.sinr
            polish.extend(ps.rate_history)
        if achievable_rate(beta) - achievable_rate(start) < params.tol:
            break
    if not feasible and beta >= params.gamma:
        feasible = True
    return SCAResult(
        design=Design(theta, ports),
        sinr=float(beta),
        rate=achievable_rate(beta),
        rate_history=state.rate_history,
        objective_history=state.objective_history,
        iterations=iterations,
        converged=converged,
        feasible=feasible,
        continuous_ports=cont_ports,
        polish_history=polish,
    )
