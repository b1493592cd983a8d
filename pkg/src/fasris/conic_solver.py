"""Second-order cone programs and a first-order ADMM solver.

Problems are held in the standard form

    minimize    c^T x
    subject to  A x + s = b,    s in K

where K is a Cartesian product of zero cones, nonnegative orthants and
second-order cones ``{(t, u) : ||u|| <= t}``.  The solver is an operator
splitting method (ADMM with over-relaxation) on a Ruiz-equilibrated copy
of the problem, with residual-balancing step-size adaptation.  Dual
multipliers are reported in the convention ``c + A^T y = 0, y in K*``,
so the dual objective is ``-b^T y``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
import scipy.linalg

log = logging.getLogger(__name__)

ZERO = "zero"
NONNEG = "nonneg"
SOC = "soc"
_KINDS = (ZERO, NONNEG, SOC)


class SolverError(RuntimeError):
    """Raised when a conic solve cannot produce a usable iterate."""


class Cone(NamedTuple):
    kind: str
    dim: int


def zero_cone(dim: int) -> Cone:
    return Cone(ZERO, dim)


def nonneg_cone(dim: int) -> Cone:
    return Cone(NONNEG, dim)


def soc_cone(dim: int) -> Cone:
    return Cone(SOC, dim)


@dataclass(frozen=True)
class ConicProgram:
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    cones: tuple[Cone, ...]

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).ravel()
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.asarray(self.b, dtype=float).ravel()
        cones = tuple(Cone(str(k), int(d)) for k, d in self.cones)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "cones", cones)
        if not cones:
            raise ValueError("a conic program needs at least one cone")
        for cone in cones:
            if cone.kind not in _KINDS:
                raise ValueError(f"unknown cone kind {cone.kind!r}")
            if cone.dim < 1:
                raise ValueError(f"cone dimension must be positive, got {cone}")
        m = sum(cone.dim for cone in cones)
        if A.shape != (m, c.size):
            raise ValueError(f"A has shape {A.shape}, expected {(m, c.size)}")
        if b.size != m:
            raise ValueError(f"b has length {b.size}, expected {m}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b)) and np.all(np.isfinite(c))):
            raise ValueError("program data must be finite")

    @property
    def n(self) -> int:
        return self.c.size

    @property
    def m(self) -> int:
        return self.b.size


@dataclass
class SolverSettings:
    tol: float = 1e-7
    max_iters: int = 50_000
    rho: float = 0.1
    sigma: float = 1e-6
    alpha: float = 1.5
    scaling_iters: int = 15
    check_every: int = 25
    adaptive_rho: bool = True
    infeasibility_tol: float = 1e-6


@dataclass
class SolverSolution:
    x: np.ndarray
    y: np.ndarray | None = None
    s: np.ndarray | None = None
    status: str = "unknown"
    iterations: int = 0
    primal_residual: float = np.inf
    dual_residual: float = np.inf
    gap: float = np.inf
    objective: float = np.nan
    dual_objective: float = np.nan

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


@dataclass(frozen=True)
class ResidualReport:
    primal: float
    dual: float
    complementarity: float
    gap: float


def soc_project(t: float, x: np.ndarray) -> tuple[float, np.ndarray]:
    """Euclidean projection of ``(t, x)`` onto the second-order cone."""
    x = np.asarray(x, dtype=float)
    nx = float(np.linalg.norm(x))
    if nx <= t:
        return float(t), x.copy()
    if nx <= -t:
        return 0.0, np.zeros_like(x)
    scale = 0.5 * (t + nx)
    return scale, (scale / nx) * x


class _ConeProjector:
    """Vectorised projection onto a product of cones laid out contiguously.

    Rows must be ordered zero cones, then nonnegative cones, then SOCs
    grouped by dimension (see :func:`_canonical_order`).
    """

    def __init__(self, cones: Sequence[Cone]):
        self.m = sum(c.dim for c in cones)
        nz = sum(c.dim for c in cones if c.kind == ZERO)
        nn = sum(c.dim for c in cones if c.kind == NONNEG)
        self.zero = slice(0, nz)
        self.nonneg = slice(nz, nz + nn)
        self.groups: list[tuple[int, int, int]] = []  # (start, count, dim)
        offset = nz + nn
        prev = None
        for cone in cones:
            if cone.kind != SOC:
                continue
            if prev is not None and prev[2] == cone.dim:
                prev[1] += 1
            else:
                prev = [offset, 1, cone.dim]
                self.groups.append(prev)
            offset += cone.dim
        self.groups = [tuple(g) for g in self.groups]
        if offset != self.m:
            raise ValueError("cones are not in canonical order")
        self.soc_start = nz + nn
        dims = [c.dim for c in cones if c.kind == SOC]
        self.soc_dims = np.asarray(dims, dtype=int)
        self.soc_heads = (self.soc_start + np.concatenate([[0], np.cumsum(dims)[:-1]])).astype(int) \
            if dims else np.zeros(0, int)

    def project(self, z: np.ndarray, dual: bool = False) -> np.ndarray:
        out = z.copy()
        if not dual:
            out[self.zero] = 0.0
        np.maximum(out[self.nonneg], 0.0, out=out[self.nonneg])
        if self.soc_dims.size:
            seg = z[self.soc_start:]
            t = z[self.soc_heads]
            sq = seg * seg
            sq[self.soc_heads - self.soc_start] = 0.0
            nu = np.sqrt(np.add.reduceat(sq, self.soc_heads - self.soc_start))
            inside = nu <= t
            polar = nu <= -t
            tn = np.where(inside, t, np.where(polar, 0.0, 0.5 * (t + nu)))
            fac = np.where(inside, 1.0, np.where(polar, 0.0, tn / np.maximum(nu, 1e-300)))
            out[self.soc_start:] = seg * np.repeat(fac, self.soc_dims)
            out[self.soc_heads] = tn
        return out

    def distance(self, z: np.ndarray, dual: bool = False) -> float:
        return float(np.linalg.norm(z - self.project(z, dual=dual)))

    def block_mean(self, v: np.ndarray) -> np.ndarray:
        """Replace entries of each SOC block by the block mean."""
        out = v.copy()
        for start, cnt, dim in self.groups:
            blk = out[start:start + cnt * dim].reshape(cnt, dim)
            blk[:] = blk.mean(axis=1, keepdims=True)
        return out


def _canonical_order(cones: Sequence[Cone]) -> tuple[np.ndarray, tuple[Cone, ...]]:
    """Row permutation putting zero, nonnegative, then SOC rows (by dim) first."""
    offs = np.cumsum([0] + [c.dim for c in cones])
    rank = {ZERO: 0, NONNEG: 1, SOC: 2}
    keyed = sorted(range(len(cones)),
                   key=lambda i: (rank[cones[i].kind], cones[i].dim if cones[i].kind == SOC else 0))
    perm = np.concatenate([np.arange(offs[i], offs[i + 1]) for i in keyed]) if cones else np.zeros(0, int)
    return perm.astype(int), tuple(cones[i] for i in keyed)


def _ruiz(A: np.ndarray, proj: _ConeProjector, iters: int) -> tuple[np.ndarray, np.ndarray]:
    m, n = A.shape
    D = np.ones(n)
    E = np.ones(m)
    As = np.abs(A)
    for _ in range(iters):
        col = np.sqrt(As.max(axis=0)) if m else np.ones(n)
        row = np.sqrt(As.max(axis=1)) if n else np.ones(m)
        col[col < 1e-6] = 1.0
        row[row < 1e-6] = 1.0
        row = proj.block_mean(row)
        As = As / row[:, None] / col[None, :]
        D /= col
        E /= row
    return D, E


def _inf(v: np.ndarray) -> float:
    return float(np.max(np.abs(v))) if v.size else 0.0


def solve(
    prog: ConicProgram,
    settings: SolverSettings | None = None,
    warm_start: SolverSolution | None = None,
) -> SolverSolution:
    """Solve ``prog`` with ADMM.

    ``warm_start`` may carry ``x``, ``s`` and ``y`` from an earlier solve of a
    program with identical dimensions; missing pieces default to zero.
    """
    st = settings or SolverSettings()
    perm, cones = _canonical_order(prog.cones)
    A, b, c = prog.A[perm], prog.b[perm], prog.c
    m, n = A.shape
    proj = _ConeProjector(cones)

    D, E = _ruiz(A, proj, st.scaling_iters)
    As = (E[:, None] * A) * D[None, :]
    bs = E * b
    cs_raw = D * c
    cost_scale = 1.0 / max(_inf(cs_raw), 1e-6) if _inf(cs_raw) > 0 else 1.0
    cs = cost_scale * cs_raw

    # scaled iterates
    x = np.zeros(n)
    s = proj.project(bs)
    y = np.zeros(m)
    if warm_start is not None:
        if warm_start.x is not None and np.size(warm_start.x) == n:
            x = np.asarray(warm_start.x, float) / D
        if warm_start.s is not None and np.size(warm_start.s) == m:
            s = proj.project(E * np.asarray(warm_start.s, float)[perm])
        if warm_start.y is not None and np.size(warm_start.y) == m:
            # reported y is in K*, the iterate lives in the polar cone
            y = -np.asarray(warm_start.y, float)[perm] / E * cost_scale

    eq_mask = np.zeros(m, dtype=bool)
    eq_mask[proj.zero] = True
    AsT = np.ascontiguousarray(As.T)
    rho_base = st.rho

    def rho_vector(base: float) -> np.ndarray:
        r = np.full(m, base)
        r[eq_mask] = base * 1e3
        return r

    def factor(rv: np.ndarray) -> np.ndarray:
        # n is small, so an explicit inverse via Cholesky beats repeated solves
        K = AsT @ (rv[:, None] * As)
        K[np.diag_indices_from(K)] += st.sigma
        L = scipy.linalg.cholesky(K, lower=True, check_finite=False)
        Linv = scipy.linalg.solve_triangular(L, np.eye(n), lower=True, check_finite=False)
        return Linv.T @ Linv

    rho = rho_vector(rho_base)
    fac = factor(rho)
    alpha = st.alpha

    best = None
    best_score = np.inf
    status = "max_iters"
    it = 0
    res = (np.inf, np.inf, np.inf)
    y_prev = y.copy()
    x_prev = x.copy()
    for it in range(1, st.max_iters + 1):
        check = it % st.check_every == 0 or it == st.max_iters
        if check:
            y_prev = y.copy()
            x_prev = x.copy()
        rhs = st.sigma * x - cs + AsT @ (rho * (bs - s) + y)
        xt = fac @ rhs
        st_ = bs - As @ xt
        x = alpha * xt + (1.0 - alpha) * x
        s_rel = alpha * st_ + (1.0 - alpha) * s
        z = s_rel + y / rho
        s_new = proj.project(z)
        y = y + rho * (s_rel - s_new)
        s = s_new
        if not check:
            continue

        xu = D * x
        su = s / E
        lam = -(E * y) / cost_scale
        Ax = A @ xu
        ATl = A.T @ lam
        pobj = float(c @ xu)
        dobj = float(-b @ lam)
        rp = _inf(Ax + su - b) / (1.0 + max(_inf(Ax), _inf(su), _inf(b)))
        rd = _inf(c + ATl) / (1.0 + max(_inf(ATl), _inf(c)))
        gap = abs(pobj - dobj) / (1.0 + max(abs(pobj), abs(dobj)))
        res = (rp, rd, gap)
        score = max(res)
        if score < best_score:
            best_score = score
            best = (xu.copy(), su.copy(), lam.copy(), res, it)
        if rp <= st.tol and rd <= st.tol and gap <= st.tol:
            status = "optimal"
            break

        # infeasibility certificates from the iterate differences
        dy = -(E * (y - y_prev)) / cost_scale
        ndy = _inf(dy)
        if ndy > 1e-12:
            cert = dy / ndy
            if (_inf(A.T @ cert) < st.infeasibility_tol
                    and b @ cert < -st.infeasibility_tol
                    and proj.distance(cert, dual=True) < st.infeasibility_tol):
                status = "infeasible"
                best = (xu, su, cert, res, it)
                break
        dx = D * (x - x_prev)
        ndx = _inf(dx)
        if ndx > 1e-12:
            dxn = dx / ndx
            if (c @ dxn < -st.infeasibility_tol
                    and proj.distance(-(A @ dxn)) < st.infeasibility_tol):
                status = "unbounded"
                best = (dxn, su, lam, res, it)
                break

        if st.adaptive_rho:
            Axs = As @ x
            ATys = As.T @ y
            prs = _inf(Axs + s - bs) / max(_inf(Axs), _inf(s), _inf(bs), 1e-10)
            drs = _inf(cs - ATys) / max(_inf(ATys), _inf(cs), 1e-10)
            if prs > 0 and drs > 0:
                ratio = np.sqrt(prs / drs)
                if ratio > 5.0 or ratio < 0.2:
                    rho_base = float(np.clip(rho_base * ratio, 1e-6, 1e6))
                    rho = rho_vector(rho_base)
                    fac = factor(rho)

    if status == "optimal":
        xu, su, lam = D * x, s / E, -(E * y) / cost_scale
        iters = it
    elif best is not None:
        xu, su, lam, res, iters = best
        if status == "max_iters":
            iters = it
    else:
        xu, su, lam, iters = D * x, s / E, -(E * y) / cost_scale, it
    if not np.all(np.isfinite(xu)):
        raise SolverError("solver produced non-finite iterate")
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.size)
    su, lam = su[inv], lam[inv]
    log.debug("conic solve: status=%s iters=%d res=%s", status, iters, res)
    return SolverSolution(
        x=xu,
        y=lam,
        s=su,
        status=status,
        iterations=iters,
        primal_residual=res[0],
        dual_residual=res[1],
        gap=res[2],
        objective=float(c @ xu),
        dual_objective=float(-b @ lam),
    )


def verify_solution(prog: ConicProgram, sol) -> ResidualReport:
    """Recompute feasibility and optimality residuals of ``sol``.

    ``sol`` needs ``x`` and optionally ``y`` (multipliers in K*).  The
    primal residual is the Euclidean distance of ``b - A x`` to the cone.
    """
    perm, cones = _canonical_order(prog.cones)
    proj = _ConeProjector(cones)
    x = np.asarray(sol.x, dtype=float)
    slack = prog.b - prog.A @ x
    primal = proj.distance(slack[perm])
    y = getattr(sol, "y", None)
    if y is None:
        return ResidualReport(primal=primal, dual=np.nan, complementarity=np.nan, gap=np.nan)
    y = np.asarray(y, dtype=float)
    dual = float(np.linalg.norm(prog.c + prog.A.T @ y)) + proj.distance(y[perm], dual=True)
    comp = abs(float(y @ slack))
    gap = abs(float(prog.c @ x + prog.b @ y))
    return ResidualReport(primal=primal, dual=dual, complementarity=comp, gap=gap)


def dump_program(prog: ConicProgram, path: str | Path) -> None:
    """Write ``prog`` in the plain-text sparse exchange format.

    Layout: ``n m n_cones``; one ``kind dim`` line per cone; the number of
    nonzeros followed by one ``row col value`` triplet per line (0-based);
    one line with ``b``; one line with ``c``.
    """
    rows, cols = np.nonzero(prog.A)
    lines = [f"{prog.n} {prog.m} {len(prog.cones)}"]
    lines += [f"{cone.kind} {cone.dim}" for cone in prog.cones]
    lines.append(str(rows.size))
    lines += [f"{i} {j} {prog.A[i, j]:.17g}" for i, j in zip(rows, cols)]
    lines.append(" ".join(f"{v:.17g}" for v in prog.b))
    lines.append(" ".join(f"{v:.17g}" for v in prog.c))
    Path(path).write_text("\n".join(lines) + "\n")


def load_program(path: str | Path) -> ConicProgram:
    lines = Path(path).read_text().splitlines()
    n, m, ncones = (int(v) for v in lines[0].split())
    cones = []
    for line in lines[1:1 + ncones]:
        kind, dim = line.split()
        cones.append(Cone(kind, int(dim)))
    pos = 1 + ncones
    nnz = int(lines[pos])
    A = np.zeros((m, n))
    for line in lines[pos + 1:pos + 1 + nnz]:
        i, j, v = line.split()
        A[int(i), int(j)] = float(v)
    pos += 1 + nnz
    b = np.array([float(v) for v in lines[pos].split()]) if m else np.zeros(0)
    c = np.array([float(v) for v in lines[pos + 1].split()]) if n else np.zeros(0)
    return ConicProgram(c=c, A=A, b=b, cones=tuple(cones))
