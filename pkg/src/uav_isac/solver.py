"""Log-barrier interior-point solver for the small concave programs used by
the beamforming and trajectory designs.

Problems maximise ``c.z + sum_i w_i log(a_i(z))`` (``w_i > 0``, ``a_i``
affine) over Hermitian PSD matrix variables and real vector variables, subject
to affine (in)equalities and convex quadratic constraints
``||A x + b||^2 + c.z <= d`` on the vector variables.

Newton systems exploit the structure ``blockdiag(log-det Hessians) + low-rank``
so that the cost per step stays small for several 12 x 12 to 16 x 16 Hermitian
variables.  The inverse of each log-det Hessian block is available in closed
form (``E -> X E X``), so only a small capacitance matrix is factorised.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from . import numerics as nx

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
ITERATION_LIMIT = "iteration_limit"
NUMERICAL_FAILURE = "numerical_failure"

DEFAULT_TOL = 1e-7
MU_INIT = 1.0
MU_FACTOR = 0.2
MAX_OUTER = 50
MAX_INNER = 100
ARMIJO_BETA = 0.5
ARMIJO_SIGMA = 0.01
REG_INIT = 1e-10
REG_MAX = 1e-4
NEWTON_TOL = 1e-10
# centring before the last barrier step only needs to be rough
NEWTON_TOL_INTERMEDIATE = 1e-5


class SolverError(RuntimeError):
    pass


@dataclass
class Affine:
    """``sum(tr(C X)) + sum(g . x) + const`` over named variables.

    ``terms`` maps a PSD variable name to a Hermitian coefficient matrix and a
    vector variable name to a real coefficient vector.
    """

    terms: dict = field(default_factory=dict)
    const: float = 0.0

    def __post_init__(self):
        self.terms = {k: np.asarray(v) for k, v in self.terms.items()}
        self.const = float(self.const)

    def __add__(self, other: "Affine") -> "Affine":
        terms = dict(self.terms)
        for k, v in other.terms.items():
            terms[k] = terms[k] + v if k in terms else v
        return Affine(terms, self.const + other.const)

    def __neg__(self) -> "Affine":
        return Affine({k: -v for k, v in self.terms.items()}, -self.const)

    def __sub__(self, other: "Affine") -> "Affine":
        return self + (-other)

    def scale(self, a: float) -> "Affine":
        return Affine({k: a * v for k, v in self.terms.items()}, a * self.const)


@dataclass
class SolveReport:
    status: str
    objective: float = float("nan")
    iterations: int = 0
    kkt_residual: float = float("inf")
    wall_time: float = 0.0
    trace: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


class ConvexProblem:
    """Builder for a maximisation problem handed to :func:`solve`."""

    def __init__(self):
        self.psd_vars: list[tuple[str, int]] = []
        self.vector_vars: list[tuple[str, int]] = []
        self.objective = Affine()
        self.log_terms: list[tuple[Affine, float]] = []
        self.inequalities: list[Affine] = []  # aff <= 0
        self.equalities: list[Affine] = []  # aff == 0
        self.quadratics: list[tuple] = []  # (var, A, b, Affine, d)
        self.feasible_start: dict | None = None

    # -- declaration ------------------------------------------------------
    def add_psd(self, name: str, dim: int) -> str:
        self._check_new(name)
        self.psd_vars.append((name, int(dim)))
        return name

    def add_vector(self, name: str, dim: int) -> str:
        self._check_new(name)
        self.vector_vars.append((name, int(dim)))
        return name

    def _check_new(self, name):
        if any(n == name for n, _ in self.psd_vars + self.vector_vars):
            raise ValueError(f"variable {name!r} declared twice")

    # -- objective --------------------------------------------------------
    def add_linear_objective(self, aff: Affine) -> None:
        self.objective = self.objective + aff

    def add_log_objective(self, aff: Affine, weight: float = 1.0) -> None:
        if weight <= 0:
            raise ValueError("log terms need a positive weight to keep the objective concave")
        self.log_terms.append((aff, float(weight)))

    # -- constraints ------------------------------------------------------
    def add_le(self, lhs: Affine, rhs: float = 0.0) -> None:
        self.inequalities.append(lhs - Affine(const=rhs))

    def add_ge(self, lhs: Affine, rhs: float = 0.0) -> None:
        self.inequalities.append(Affine(const=rhs) - lhs)

    def add_eq(self, lhs: Affine, rhs: float = 0.0) -> None:
        self.equalities.append(lhs - Affine(const=rhs))

    def add_quadratic(self, var: str, A, b, d: float, lin: Affine | None = None) -> None:
        """``||A x_var + b||^2 + lin(z) <= d``."""
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.asarray(b, dtype=float).reshape(-1)
        self.quadratics.append((var, A, b, lin or Affine(), float(d)))

    def add_norm(self, var: str, A, b, radius: float) -> None:
        """``||A x_var + b|| <= radius`` (handled as its squared form)."""
        self.add_quadratic(var, A, b, float(radius) ** 2)


# ---------------------------------------------------------------------------
# compiled form


@dataclass
class _Compiled:
    blocks: list  # (name, offset, M)
    vecs: list  # (name, offset, dim)
    n_p: int
    n_v: int
    c: np.ndarray
    c0: float
    L: np.ndarray
    l0: np.ndarray
    wl: np.ndarray
    F: np.ndarray
    f: np.ndarray
    E: np.ndarray
    e: np.ndarray
    QA: np.ndarray  # (nq, r, n_v)
    Qb: np.ndarray  # (nq, r)
    Qc: np.ndarray  # (nq, n)
    Qd: np.ndarray  # (nq,)

    @property
    def n(self):
        return self.n_p + self.n_v

    @property
    def n_constraints(self):
        return len(self.f) + len(self.Qd) + sum(M for _, _, M in self.blocks)


def _compile(p: ConvexProblem) -> _Compiled:
    blocks, vecs, off = [], [], 0
    for name, M in p.psd_vars:
        blocks.append((name, off, M))
        off += M * M
    n_p = off
    for name, dim in p.vector_vars:
        vecs.append((name, off, dim))
        off += dim
    n = off
    slots = {name: (o, M, True) for name, o, M in blocks}
    slots.update({name: (o, d, False) for name, o, d in vecs})

    def row(aff: Affine) -> np.ndarray:
        g = np.zeros(n)
        for name, coef in aff.terms.items():
            o, dim, is_psd = slots[name]
            if is_psd:
                g[o:o + dim * dim] += nx.trace_coefficients(coef)
            else:
                g[o:o + dim] += np.asarray(coef, dtype=float)
        return g

    def stack(affs):
        if not affs:
            return np.zeros((0, n)), np.zeros(0)
        return np.array([row(a) for a in affs]), np.array([a.const for a in affs])

    c = row(p.objective)
    L, l0 = stack([a for a, _ in p.log_terms])
    wl = np.array([w for _, w in p.log_terms])
    F, fneg = stack(p.inequalities)
    E, eneg = stack(p.equalities)

    nq = len(p.quadratics)
    n_v = n - n_p
    r = max((A.shape[0] for _, A, _, _, _ in p.quadratics), default=1)
    QA = np.zeros((nq, r, n_v))
    Qb = np.zeros((nq, r))
    Qc = np.zeros((nq, n))
    Qd = np.zeros(nq)
    for i, (var, A, b, lin, d) in enumerate(p.quadratics):
        o, dim, is_psd = slots[var]
        if is_psd:
            raise ValueError("quadratic constraints apply to vector variables only")
        QA[i, :A.shape[0], o - n_p:o - n_p + dim] = A
        Qb[i, :len(b)] = b
        Qc[i] = row(lin)
        Qd[i] = d - lin.const
    return _Compiled(blocks, vecs, n_p, n_v, c, p.objective.const, L, l0, wl,
                     F, -fneg, E, -eneg, QA, Qb, Qc, Qd)


# ---------------------------------------------------------------------------
# barrier machinery


class _Barrier:
    """Evaluates ``phi_t(z) = -t * objective(z) + barrier(z)`` and solves the
    Newton systems for it."""

    def __init__(self, cp: _Compiled):
        self.cp = cp
        groups: dict[int, list] = {}
        for name, o, M in cp.blocks:
            groups.setdefault(M, []).append(o)
        self.groups = [(M, np.array(offs)) for M, offs in groups.items()]

    def _mats(self, z):
        out = []
        for M, offs in self.groups:
            idx = offs[:, None] + np.arange(M * M)[None, :]
            out.append(nx.batched_hermitian_from_params(z[idx], M))
        return out

    def objective(self, z) -> float:
        cp = self.cp
        val = cp.c @ z + cp.c0
        if len(cp.wl):
            val += cp.wl @ np.log(cp.L @ z + cp.l0)
        return float(val)

    def value(self, z, t) -> float:
        """``phi_t(z)``; ``inf`` outside the domain."""
        cp = self.cp
        if len(cp.wl):
            u = cp.L @ z + cp.l0
            if np.any(u <= 0):
                return np.inf
            obj = cp.c @ z + cp.wl @ np.log(u)
        else:
            obj = cp.c @ z
        s = cp.f - cp.F @ z
        if np.any(s <= 0):
            return np.inf
        val = -t * obj - np.sum(np.log(s))
        if len(cp.Qd):
            sq = self._quad_slack(z)
            if np.any(sq <= 0):
                return np.inf
            val -= np.sum(np.log(sq))
        for X in self._mats(z):
            try:
                Lc = np.linalg.cholesky(X)
            except np.linalg.LinAlgError:
                return np.inf
            d = np.real(np.diagonal(Lc, axis1=-2, axis2=-1))
            if np.any(d <= 0) or not np.all(np.isfinite(d)):
                return np.inf
            val -= 2.0 * np.sum(np.log(d))
        return float(val)

    def _quad_slack(self, z):
        cp = self.cp
        v = z[cp.n_p:]
        res = cp.QA @ v + cp.Qb
        return cp.Qd - np.einsum("ij,ij->i", res, res) - cp.Qc @ z

    def max_linear_step(self, z, dz) -> float:
        cp = self.cp
        amax = np.inf
        Fd = cp.F @ dz
        pos = Fd > 0
        if np.any(pos):
            s = cp.f - cp.F @ z
            amax = min(amax, np.min(s[pos] / Fd[pos]))
        if len(cp.wl):
            Ld = cp.L @ dz
            neg = Ld < 0
            if np.any(neg):
                u = cp.L @ z + cp.l0
                amax = min(amax, np.min(u[neg] / -Ld[neg]))
        return amax

    def newton(self, z, t, reg):
        """Return (gradient, Newton step) for phi_t at z."""
        cp = self.cp
        n_p, n = cp.n_p, cp.n
        cols, weights = [], []
        grad = -t * cp.c.copy()
        if len(cp.wl):
            u = cp.L @ z + cp.l0
            grad -= t * (cp.wl / u) @ cp.L
            cols.append(cp.L)
            weights.append(t * cp.wl / u**2)
        s = cp.f - cp.F @ z
        if len(s):
            grad += (1.0 / s) @ cp.F
            cols.append(cp.F)
            weights.append(1.0 / s**2)
        Qv = np.zeros((cp.n_v, cp.n_v))
        if len(cp.Qd):
            v = z[n_p:]
            res = cp.QA @ v + cp.Qb
            sq = cp.Qd - np.einsum("ij,ij->i", res, res) - cp.Qc @ z
            gam = cp.Qc.copy()
            gam[:, n_p:] += 2.0 * np.einsum("ijk,ij->ik", cp.QA, res)
            grad += (1.0 / sq) @ gam
            cols.append(gam)
            weights.append(1.0 / sq**2)
            Qv += 2.0 * np.einsum("i,ijk,ijl->kl", 1.0 / sq, cp.QA, cp.QA)
        U = np.concatenate(cols, axis=0).T if cols else np.zeros((n, 0))
        S = np.concatenate(weights) if weights else np.zeros(0)

        # log-det blocks: gradient and closed-form inverse Hessian blocks
        Dinv = []
        for (M, offs), X in zip(self.groups, self._mats(z)):
            Y = np.linalg.inv(X)
            Y = 0.5 * (Y + np.conj(np.swapaxes(Y, -1, -2)))
            gY = nx.batched_trace_coefficients(Y)
            for o, g in zip(offs, gY):
                grad[o:o + M * M] -= g
            Dinv.append((M, offs, X))

        solve = _StructuredSolve(cp, Dinv, U, S, Qv, reg)
        rhs = -grad
        if len(cp.e):
            # equality-constrained step: H dz + E^T lam = -grad, E dz = 0
            HiEt = solve(cp.E.T)
            Hig = solve(rhs)
            Kmat = cp.E @ HiEt
            lam = np.linalg.lstsq(Kmat, cp.E @ Hig, rcond=None)[0]
            dz = Hig - HiEt @ lam
        else:
            dz = solve(rhs)
        return grad, dz


class _SpdFactor:
    """Solver for a symmetric matrix that is positive definite in exact
    arithmetic.  Near the end of the barrier schedule a Schur complement can
    lose definiteness to cancellation; its eigenvalues are then floored at a
    tiny fraction of the largest one."""

    def __init__(self, A):
        try:
            self.L = np.linalg.cholesky(A)
            self.eig = None
        except np.linalg.LinAlgError:
            w, V = np.linalg.eigh(A)
            if not np.all(np.isfinite(w)) or w[-1] <= 0:
                raise
            self.eig = (np.maximum(w, 1e-13 * w[-1]), V)

    def half_solve(self, B):
        """``Z`` with ``Z^T Z = B^T A^-1 B``."""
        if self.eig is None:
            return solve_triangular(self.L, B, lower=True)
        w, V = self.eig
        return (V.T @ B) / np.sqrt(w)[:, None]

    def solve(self, b):
        if self.eig is None:
            return np.linalg.solve(self.L.T, np.linalg.solve(self.L, b))
        w, V = self.eig
        return V @ ((V.T @ b) / (w if b.ndim == 1 else w[:, None]))


class _StructuredSolve:
    """Applies ``H^{-1}`` for ``H = blockdiag(D_p, Q_v) + U diag(S) U^T``."""

    def __init__(self, cp, Dinv, U, S, Qv, reg):
        self.n_p = cp.n_p
        self.n = cp.n
        n_p = cp.n_p
        self.Dinv = Dinv
        if n_p == 0:
            H = Qv + (U * S) @ U.T + reg * np.eye(cp.n)
            self.chol = np.linalg.cholesky(H)
            return
        Up, Uv = U[:n_p], U[n_p:]
        DiUp = self._dinv(Up)
        Kmat = Up.T @ DiUp
        r = len(S)
        # symmetric capacitance I + S^1/2 K S^1/2 (positive definite, >= I)
        self.rs = np.sqrt(S)
        cap = np.eye(r) + self.rs[:, None] * Kmat * self.rs[None, :]
        self.M1 = _SpdFactor(0.5 * (cap + cap.T))
        self.DiUp = DiUp
        self.S = S
        self.Up = Up
        if cp.n_v and len(S) == 0:
            self.HppInvHpv = np.zeros((n_p, cp.n_v))
            self.Hvp = np.zeros((cp.n_v, n_p))
            self.chol = _SpdFactor(Qv + reg * np.eye(cp.n_v))
        elif cp.n_v:
            # Schur complement on the vector block
            self.HppInvHpv = DiUp @ self._cap_solve(Uv.T)
            self.Hvp = (Uv * S) @ Up.T
            # Hvv - Hvp Hpp^-1 Hpv = Qv + Uv (S^-1 + K)^-1 Uv^T, formed as a
            # Gram matrix so that it stays positive semidefinite in floating point
            Z = self.M1.half_solve(self.rs[:, None] * Uv.T)
            schur = Qv + Z.T @ Z + reg * np.eye(cp.n_v)
            self.chol = _SpdFactor(0.5 * (schur + schur.T))

    def _dinv(self, B):
        out = np.empty_like(B)
        vec = B.ndim == 1
        B2 = B[:, None] if vec else B
        out2 = out[:, None] if vec else out
        for M, offs, X in self.Dinv:
            idx = offs[:, None] + np.arange(M * M)[None, :]
            out2[idx] = nx.apply_inverse_logdet_hessian(X, B2[idx])
        return out

    def _cap_solve(self, t):
        """``(S^-1 + K)^-1 t`` through the symmetric capacitance."""
        rs = self.rs if t.ndim == 1 else self.rs[:, None]
        return rs * self.M1.solve(rs * t)

    def _hpp_solve(self, b):
        Dib = self._dinv(b)
        if len(self.S) == 0:
            return Dib
        t = self.Up.T @ Dib
        return Dib - self.DiUp @ self._cap_solve(t)

    def __call__(self, rhs):
        rhs = np.asarray(rhs, dtype=float)
        if self.n_p == 0:
            y = np.linalg.solve(self.chol, rhs)
            return np.linalg.solve(self.chol.T, y)
        bp, bv = rhs[:self.n_p], rhs[self.n_p:]
        yp = self._hpp_solve(bp)
        if self.n == self.n_p:
            return yp
        w = bv - self.Hvp @ yp
        dv = self.chol.solve(w)
        dp = yp - self.HppInvHpv @ dv
        return np.concatenate([dp, dv], axis=0)


def _newton_with_reg(bar, z, t):
    reg = REG_INIT
    while True:
        try:
            grad, dz = bar.newton(z, t, reg)
            if np.all(np.isfinite(dz)):
                return grad, dz
        except np.linalg.LinAlgError:
            pass
        reg *= 10.0
        if reg > REG_MAX:
            raise SolverError("Newton system singular beyond regularisation")


def _centre(bar: _Barrier, z, t, max_inner=MAX_INNER, newton_tol=NEWTON_TOL):
    """Minimise phi_t from z by damped Newton; returns (z, steps, converged)."""
    phi = bar.value(z, t)
    for k in range(max_inner):
        grad, dz = _newton_with_reg(bar, z, t)
        lam2 = -grad @ dz
        if lam2 / 2.0 <= newton_tol:
            return z, k, True
        alpha = min(1.0, 0.99 * bar.max_linear_step(z, dz))
        slope = grad @ dz
        while True:
            znew = z + alpha * dz
            phinew = bar.value(znew, t)
            if phinew <= phi + ARMIJO_SIGMA * alpha * slope:
                break
            alpha *= ARMIJO_BETA
            if alpha < 1e-14:
                # no progress possible at this precision
                return z, k, lam2 / 2.0 <= 1e-6
        z, phi = znew, phinew
    return z, max_inner, False


def _barrier_loop(cp: _Compiled, z, tol, trace, stop=None):
    bar = _Barrier(cp)
    m = max(cp.n_constraints, 1)
    t = 1.0 / MU_INIT
    total = 0
    for outer in range(MAX_OUTER):
        final = m / t < tol
        z, steps, converged = _centre(bar, z, t,
                                      newton_tol=NEWTON_TOL if final else NEWTON_TOL_INTERMEDIATE)
        total += steps
        trace.append(bar.objective(z))
        gap = m / t
        if stop is not None:
            verdict = stop(z, gap)
            if verdict is not None:
                return z, verdict, total, gap
        if gap < tol:
            return z, OPTIMAL, total, gap
        t /= MU_FACTOR
    return z, ITERATION_LIMIT, total, m / t


def _strictly_feasible(cp: _Compiled, z) -> bool:
    bar = _Barrier(cp)
    if len(cp.e) and np.max(np.abs(cp.E @ z - cp.e), initial=0.0) > 1e-9 * (1 + np.abs(cp.e).max()):
        return False
    return np.isfinite(bar.value(z, 0.0)) and (
        not len(cp.wl) or np.all(cp.L @ z + cp.l0 > 0))


def _start_vector(cp: _Compiled, start: dict | None) -> np.ndarray:
    z = np.zeros(cp.n)
    if start:
        for name, o, M in cp.blocks:
            if name in start:
                z[o:o + M * M] = nx.params_from_hermitian(nx.hermitian(start[name]))
        for name, o, d in cp.vecs:
            if name in start:
                z[o:o + d] = np.asarray(start[name], dtype=float).reshape(-1)
    return z


def _phase1(cp: _Compiled, z0: np.ndarray, tol: float):
    """Find a strictly feasible point.  Returns (z, status, iterations)."""
    n = cp.n
    iota = np.zeros(n)
    for _, o, M in cp.blocks:
        iota[o:o + M] = 1.0  # identity in parameter coordinates

    if len(cp.e):
        z0 = z0 + np.linalg.lstsq(cp.E, cp.e - cp.E @ z0, rcond=None)[0]

    # violations at z0
    viol = [0.0]
    if len(cp.f):
        viol.append(np.max(cp.F @ z0 - cp.f))
    if len(cp.wl):
        viol.append(np.max(-(cp.L @ z0 + cp.l0)))
    if len(cp.Qd):
        res = cp.QA @ z0[cp.n_p:] + cp.Qb
        viol.append(np.max(np.einsum("ij,ij->i", res, res) + cp.Qc @ z0 - cp.Qd))
    for _, o, M in cp.blocks:
        viol.append(-nx.min_eigenvalue(nx.hermitian_from_params(z0[o:o + M * M], M)))
    s0 = max(viol) + 1.0
    bound = 1e6 * (1.0 + np.abs(z0).max())

    # variables (z', s) with X = X' - s I
    def ext(G):
        return np.column_stack([G, -(G @ iota)]) if G.size else np.zeros((0, n + 1))

    F = [ext(cp.F)]
    f = [cp.f]
    F[0][:, -1] -= 1.0
    if len(cp.wl):
        Lx = ext(-cp.L)
        Lx[:, -1] -= 1.0
        F.append(Lx)
        f.append(cp.l0)
    srow = np.zeros((1, n + 1)); srow[0, -1] = -1.0  # s >= -1
    F.append(srow); f.append(np.array([1.0]))
    trow = np.zeros((1, n + 1)); trow[0, :n] = iota  # trace bound on X'
    if cp.blocks:
        F.append(trow); f.append(np.array([bound]))
    # quadratics, plus a norm bound on the vector block; s is the last vector entry
    nq = len(cp.Qd)
    nv1 = cp.n_v + 1
    r = max(cp.QA.shape[1], cp.n_v, 1)
    QA = np.zeros((nq + 1, r, nv1))
    QA[:nq, :cp.QA.shape[1], :cp.n_v] = cp.QA
    QA[nq, :cp.n_v, :cp.n_v] = np.eye(cp.n_v)
    Qb = np.zeros((nq + 1, r))
    Qb[:nq, :cp.Qb.shape[1]] = cp.Qb
    Qc = np.zeros((nq + 1, n + 1))
    Qc[:nq] = ext(cp.Qc)
    Qc[:nq, -1] -= 1.0
    Qd = np.concatenate([cp.Qd, [bound ** 2]])
    cobj = np.zeros(n + 1); cobj[-1] = -1.0
    ph = _Compiled(
        blocks=cp.blocks, vecs=cp.vecs + [("__s", n, 1)], n_p=cp.n_p, n_v=nv1,
        c=cobj, c0=0.0, L=np.zeros((0, n + 1)), l0=np.zeros(0), wl=np.zeros(0),
        F=np.concatenate(F), f=np.concatenate(f), E=ext(cp.E), e=cp.e,
        QA=QA, Qb=Qb, Qc=Qc, Qd=Qd,
    )
    zp = np.concatenate([z0 + s0 * iota, [s0]])

    def stop(zc, gap):
        s = zc[-1]
        # a negative slack already certifies strict feasibility; once the gap is
        # below it the margin cannot grow by more than a factor of two
        if s < 0 and (s < -1e-3 or gap < tol or gap < -s):
            return OPTIMAL
        if s - gap > 0:
            return INFEASIBLE
        return None

    try:
        zp, status, its, gap = _barrier_loop(ph, zp, tol, [], stop)
    except SolverError:
        return None, NUMERICAL_FAILURE, 0
    s = zp[-1]
    if status == OPTIMAL and s < 0:
        return zp[:-1] - s * iota, OPTIMAL, its
    if status in (OPTIMAL, INFEASIBLE):
        return None, INFEASIBLE, its
    return None, status, its


def _unpack(cp: _Compiled, z) -> dict:
    out = {}
    for name, o, M in cp.blocks:
        out[name] = nx.hermitian_from_params(z[o:o + M * M], M)
    for name, o, d in cp.vecs:
        out[name] = z[o:o + d].copy()
    return out


def phase1_feasible_point(p: ConvexProblem, tol: float = DEFAULT_TOL):
    """Return ``(values, report)``; ``values`` is ``None`` unless a strictly
    feasible point was found."""
    t0 = time.perf_counter()
    cp = _compile(p)
    z0 = _start_vector(cp, p.feasible_start)
    if _strictly_feasible(cp, z0):
        return _unpack(cp, z0), SolveReport(OPTIMAL, _Barrier(cp).objective(z0), 0, 0.0,
                                            time.perf_counter() - t0)
    z, status, its = _phase1(cp, z0, tol)
    rep = SolveReport(status, iterations=its, wall_time=time.perf_counter() - t0)
    if z is None:
        return None, rep
    rep.objective = _Barrier(cp).objective(z)
    rep.kkt_residual = 0.0
    return _unpack(cp, z), rep


def solve(p: ConvexProblem, tol: float = DEFAULT_TOL):
    """Maximise ``p``.  Returns ``(values, report)``; ``values`` maps variable
    names to Hermitian matrices / real vectors and is ``None`` when the solve
    did not produce a point."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    t0 = time.perf_counter()
    cp = _compile(p)
    z = _start_vector(cp, p.feasible_start)
    its = 0
    if not _strictly_feasible(cp, z):
        z, status, its = _phase1(cp, z, tol)
        if z is None:
            return None, SolveReport(status, iterations=its, wall_time=time.perf_counter() - t0)
    trace: list = []
    try:
        z, status, k, gap = _barrier_loop(cp, z, tol, trace)
    except SolverError:
        return None, SolveReport(NUMERICAL_FAILURE, iterations=its,
                                 wall_time=time.perf_counter() - t0)
    rep = SolveReport(status, _Barrier(cp).objective(z), its + k, gap,
                      time.perf_counter() - t0, trace)
    log.debug("solve: %s obj=%.6g its=%d gap=%.2e", status, rep.objective, rep.iterations, gap)
    return _unpack(cp, z), rep


def dump_problem(p: ConvexProblem) -> str:
    """Text dump of the compiled problem, for capturing fixtures."""
    cp = _compile(p)

    def arr(a):
        return np.asarray(a).tolist()

    return json.dumps({
        "psd_vars": p.psd_vars, "vector_vars": p.vector_vars,
        "c": arr(cp.c), "c0": cp.c0, "log_rows": arr(cp.L), "log_const": arr(cp.l0),
        "log_weights": arr(cp.wl), "ineq_rows": arr(cp.F), "ineq_rhs": arr(cp.f),
        "eq_rows": arr(cp.E), "eq_rhs": arr(cp.e), "quad_A": arr(cp.QA),
        "quad_b": arr(cp.Qb), "quad_c": arr(cp.Qc), "quad_d": arr(cp.Qd),
    })
