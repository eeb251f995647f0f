"""Quasi-stationary designs: beamforming at a fixed UAV location by SCA over a
semidefinite relaxation, rank-one recovery, the 2D location search, and the
sensing-only max-min benchmark.

Inside the convex subproblems every covariance is normalised by the power
budget (``W = P_max * W~``) and channels are whitened by the user's noise
(``h~ = h / sigma``).  This keeps all solver quantities of order one; the
returned matrices are in watts again.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import solver as sv
from .channel import (BeamformerSet, RateReport, rates_from_channels, slant_distance,
                      steering_vector, user_channels)
from .feasibility import fp4_covariance, grid_nodes
from .numerics import hermitian, is_psd
from .scenario import Scenario

log = logging.getLogger(__name__)

LOG2E = 1.0 / math.log(2.0)
SCA_TOL = 1e-4
SCA_MAX_ITER = 50
# a step may lose this much to solver tolerance before SCA stops early
SCA_SLACK = 1e-9


class InfeasibleError(RuntimeError):
    """The sensing constraints cannot be met at the requested location."""


class DegenerateDirectionError(RuntimeError):
    pass


@dataclass
class ScaCoefficients:
    a: np.ndarray  # (K,) bits
    B: np.ndarray  # (K, M, M) per watt


@dataclass
class StaticSolution:
    location: tuple
    beams: BeamformerSet
    objective: float
    rates: RateReport | None
    status: str = sv.OPTIMAL
    bound_trace: list = field(default_factory=list)
    objective_trace: list = field(default_factory=list)
    # (FP4)-style grid data kept for reporting by solve_p1 / solve_p9
    grid_values: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return self.status != sv.INFEASIBLE

    def to_json(self) -> dict:
        return {
            "status": self.status,
            "location": list(self.location),
            "objective": self.objective,
            "beams": self.beams.to_json(),
            "rates": self.rates.to_json() if self.rates else None,
            "bound_trace": list(self.bound_trace),
            "objective_trace": list(self.objective_trace),
        }


# --- SCA pieces ---------------------------------------------------------------


def sca_coefficients(W_local: np.ndarray, R_local: np.ndarray, q, scenario: Scenario,
                     channels: np.ndarray | None = None) -> ScaCoefficients:
    """Linearise each user's interference-plus-noise log term at the local
    point ``(W_local (K, M, M), R_local)``."""
    Hc = user_channels(q, scenario) if channels is None else channels
    G = W_local.sum(axis=0) + R_local
    K = Hc.shape[0]
    a = np.empty(K)
    B = np.empty((K,) + G.shape, dtype=complex)
    for k in range(K):
        h = Hc[k]
        interf = np.real(np.vdot(h, (G - W_local[k]) @ h))
        den = max(interf, 0.0) + scenario.users[k].noise_power
        a[k] = math.log2(den)
        B[k] = LOG2E * np.outer(h, h.conj()) / den
    return ScaCoefficients(a, B)


def sca_bound(W: np.ndarray, R: np.ndarray, coeffs: ScaCoefficients, W_local, R_local,
              q, scenario: Scenario, channels=None) -> np.ndarray:
    """Per-user concave lower bound on the rate at ``(W, R)``."""
    Hc = user_channels(q, scenario) if channels is None else channels
    G = W.sum(axis=0) + R
    Gl = W_local.sum(axis=0) + R_local
    out = np.empty(Hc.shape[0])
    for k, h in enumerate(Hc):
        total = np.real(np.vdot(h, G @ h)) + scenario.users[k].noise_power
        diff = (G - W[k]) - (Gl - W_local[k])
        out[k] = math.log2(total) - coeffs.a[k] - np.real(np.trace(coeffs.B[k] @ diff))
    return out


def _sensing_rows(q, scenario: Scenario):
    """Steering vectors towards every sensing point and the gain each needs."""
    pts = scenario.sensing.array
    A = steering_vector(q, pts, scenario.uav)
    need = slant_distance(q, pts, scenario.uav.altitude) ** 2 * scenario.gamma
    return A, need


def _central_start(q, scenario: Scenario, K: int, M: int):
    """Strictly feasible normalised point for the SDR constraints."""
    W0 = np.stack([np.eye(M) * 0.05 / (K * M)] * K)
    if scenario.gamma == 0:
        return W0 * 2.0, None
    C = fp4_covariance(q, scenario)
    if C is None:
        return None, None
    R0 = 0.9 * C / scenario.uav.max_power + 0.01 * np.eye(M) / M
    return W0, R0


def solve_sdr_subproblem(coeffs: ScaCoefficients, q, scenario: Scenario,
                         tol: float = sv.DEFAULT_TOL, start=None, channels=None):
    """One convex step: maximise the SCA lower bound over relaxed covariances.

    Returns ``(W (K, M, M), R (M, M), value, report)`` with matrices in watts;
    ``value`` is the bound up to the constant contributed by the local point.  Raises
    :class:`InfeasibleError` when the sensing constraints cannot be met.
    """
    uav = scenario.uav
    M, P = uav.num_antennas, uav.max_power
    K = scenario.num_users
    if P == 0:
        W = np.zeros((K, M, M), complex)
        R = np.zeros((M, M), complex)
        if scenario.gamma > 0:
            raise InfeasibleError("zero power budget cannot meet a positive gain threshold")
        return W, R, 0.0, sv.SolveReport(sv.OPTIMAL, 0.0, 0, 0.0)
    Hc = user_channels(q, scenario) if channels is None else channels
    noise = scenario.noise_powers
    sensing = scenario.gamma > 0

    p = sv.ConvexProblem()
    wn = [p.add_psd(f"W{k}", M) for k in range(K)]
    rn = p.add_psd("R", M) if sensing else None
    shared = [*wn] + ([rn] if rn else [])
    eye = np.eye(M)
    p.add_le(sv.Affine({n: eye for n in shared}), 1.0)
    if sensing:
        A, need = _sensing_rows(q, scenario)
        for a, g in zip(A, need):
            aa = np.outer(a, a.conj())
            p.add_ge(sv.Affine({n: aa for n in shared}), g / P)
    const = 0.0
    for k in range(K):
        alpha = scenario.users[k].weight
        if alpha == 0:
            continue
        ht = Hc[k] / math.sqrt(noise[k])
        hh = P * np.outer(ht, ht.conj())
        # log2(sigma^2 (P h~^H G~ h~ + 1)) - a_k - tr(B_k (sum_{i!=k} W_i + R - local))
        p.add_log_objective(sv.Affine({n: hh for n in shared}, 1.0), alpha * LOG2E)
        Bk = P * coeffs.B[k]
        p.add_linear_objective(sv.Affine({n: -alpha * Bk for n in shared if n != wn[k]}))
        const += alpha * (math.log2(noise[k]) - coeffs.a[k])
    if start is not None:
        W0, R0 = start
        st = {n: W0[k] for k, n in enumerate(wn)}
        if sensing and R0 is not None:
            st[rn] = R0
        p.feasible_start = st
    vals, rep = sv.solve(p, tol)
    if vals is None:
        if rep.status == sv.INFEASIBLE:
            raise InfeasibleError(f"sensing constraints infeasible at {tuple(q)}")
        raise sv.SolverError(f"SDR subproblem failed: {rep.status}")
    W = np.stack([hermitian(vals[n]) for n in wn]) * P
    R = hermitian(vals[rn]) * P if sensing else np.zeros((M, M), complex)
    return W, R, rep.objective + const, rep


def rank_one_reconstruct(W: np.ndarray, R: np.ndarray, q, scenario: Scenario,
                         channels=None) -> BeamformerSet:
    """Rank-one beams with the same received signal powers and the same total
    transmit covariance as the relaxed solution."""
    Hc = user_channels(q, scenario) if channels is None else channels
    K, M = W.shape[0], W.shape[1]
    P = scenario.uav.max_power
    beams = np.zeros((K, M), complex)
    for k in range(K):
        h = Hc[k]
        trW = float(np.real(np.trace(W[k])))
        if trW < 1e-10 * max(P, 1e-300) or trW <= 0:
            continue
        Wh = W[k] @ h
        g = float(np.real(np.vdot(h, Wh)))
        if g < 1e-14 * trW * float(np.real(np.vdot(h, h))):
            raise DegenerateDirectionError(f"user {k}: relaxed beam is orthogonal to its channel")
        beams[k] = Wh / math.sqrt(g)
    total = W.sum(axis=0) + R
    Rbar = total - beams.T @ beams.conj()
    return BeamformerSet(beams, hermitian(Rbar))


def _initial_local_point(q, scenario: Scenario, Hc, init: BeamformerSet | None):
    K, M = Hc.shape
    P = scenario.uav.max_power
    if init is not None:
        return init.info_covariances, init.sensing_cov.copy()
    W = np.empty((K, M, M), complex)
    for k, h in enumerate(Hc):
        W[k] = (P / (2 * K)) * np.outer(h, h.conj()) / np.real(np.vdot(h, h))
    R = np.zeros((M, M), complex)
    if scenario.gamma > 0:
        C = fp4_covariance(q, scenario)
        if C is not None:
            R = 0.5 * P * C / max(np.real(np.trace(C)), 1e-300)
    return W, R


def solve_fixed_location(q, scenario: Scenario, init: BeamformerSet | None = None,
                         tol: float = sv.DEFAULT_TOL, sca_tol: float = SCA_TOL,
                         max_iter: int = SCA_MAX_ITER) -> StaticSolution:
    """SCA over the relaxed problem at a fixed location.

    Only steps that do not lower the true weighted sum rate are kept, so the
    recorded objective trace is non-decreasing.
    """
    q = tuple(float(v) for v in q)
    K, M = scenario.num_users, scenario.uav.num_antennas
    Hc = user_channels(q, scenario)
    if scenario.uav.max_power == 0:
        beams = BeamformerSet.zeros(K, M)
        status = sv.INFEASIBLE if scenario.gamma > 0 else sv.OPTIMAL
        rep = rates_from_channels(Hc, beams, scenario.noise_powers, scenario.weights)
        return StaticSolution(q, beams, 0.0 if status == sv.OPTIMAL else -np.inf,
                              rep, status, [0.0], [0.0])
    start = _central_start(q, scenario, K, M)
    if start[0] is None:
        return StaticSolution(q, BeamformerSet.zeros(K, M), -np.inf, None, sv.INFEASIBLE)

    Wl, Rl = _initial_local_point(q, scenario, Hc, init)
    best = None
    if init is not None and _meets_constraints(q, init, scenario):
        rep = rates_from_channels(Hc, init, scenario.noise_powers, scenario.weights)
        best = (init, rep)
    bounds, objs = [], []
    if best is not None:
        objs.append(best[1].weighted_sum)
    for it in range(max_iter):
        coeffs = sca_coefficients(Wl, Rl, q, scenario, Hc)
        try:
            W, R, _, _ = solve_sdr_subproblem(coeffs, q, scenario, tol, start, Hc)
        except InfeasibleError:
            return StaticSolution(q, BeamformerSet.zeros(K, M), -np.inf, None, sv.INFEASIBLE)
        beams = rank_one_reconstruct(W, R, q, scenario, Hc)
        rep = rates_from_channels(Hc, beams, scenario.noise_powers, scenario.weights)
        bounds.append(float(scenario.weights @ sca_bound(W, R, coeffs, Wl, Rl, q, scenario, Hc)))
        if best is not None and rep.weighted_sum < best[1].weighted_sum - SCA_SLACK:
            log.debug("SCA step lowered the objective at %s; stopping", q)
            break
        gain = np.inf if best is None else rep.weighted_sum - best[1].weighted_sum
        if best is None or rep.weighted_sum >= best[1].weighted_sum:
            best = (beams, rep)
            objs.append(rep.weighted_sum)
        Wl, Rl = beams.info_covariances, beams.sensing_cov
        if gain < sca_tol:
            break
    beams, rep = best
    return StaticSolution(q, beams, rep.weighted_sum, rep, sv.OPTIMAL, bounds, objs)


def _meets_constraints(q, beams: BeamformerSet, scenario: Scenario, atol: float = 1e-7) -> bool:
    if not beams.is_valid(scenario.uav.max_power):
        return False
    if scenario.gamma == 0:
        return True
    A, need = _sensing_rows(q, scenario)
    G = beams.total_covariance
    gains = np.real(np.einsum("jm,mn,jn->j", A.conj(), G, A))
    return bool(np.all(gains >= need - atol))


def sensing_violation(q, beams: BeamformerSet, scenario: Scenario) -> float:
    """Largest shortfall (W) of the beampattern gain below its requirement."""
    if scenario.gamma == 0:
        return 0.0
    A, need = _sensing_rows(q, scenario)
    G = beams.total_covariance
    gains = np.real(np.einsum("jm,mn,jn->j", A.conj(), G, A))
    return float(max(0.0, np.max(need - gains)))


# --- 2D search ------------------------------------------------------------------


def _argmax_lex(values: dict, rel_tol: float = 1e-6):
    """Best location; near-ties go to the lexicographically smallest one."""
    finite = {k: v for k, v in values.items() if np.isfinite(v)}
    if not finite:
        return None
    top = max(finite.values())
    cands = [k for k, v in finite.items() if v >= top - rel_tol * max(1.0, abs(top))]
    return min(cands)


def solve_p1(scenario: Scenario, resolution: float, tol: float = sv.DEFAULT_TOL,
             nodes=None, progress=None, init: dict | None = None,
             solutions: dict | None = None) -> StaticSolution:
    """Weighted sum rate maximisation over a grid of hovering locations.

    ``init`` maps ``(x, y)`` to warm-start beams; ``solutions``, when given,
    is filled with every node's design (handy for warm-starting a sweep)."""
    nodes = grid_nodes(scenario, resolution) if nodes is None else np.asarray(nodes, float)
    sols = {}
    values = {}
    for i, q in enumerate(nodes):
        key = (float(q[0]), float(q[1]))
        b0 = None if init is None else init.get(key)
        s = solve_fixed_location(key, scenario, init=b0, tol=tol)
        if solutions is not None:
            solutions[key] = s
        values[key] = s.objective if s.feasible else -np.inf
        if s.feasible:
            sols[key] = s
        if progress:
            progress(i + 1, len(nodes))
    best = _argmax_lex(values)
    if best is None:
        K, M = scenario.num_users, scenario.uav.num_antennas
        return StaticSolution((float("nan"), float("nan")), BeamformerSet.zeros(K, M), -np.inf,
                              None, sv.INFEASIBLE, grid_values=values)
    out = sols[best]
    out.grid_values = values
    return out


# --- sensing-only benchmark -------------------------------------------------------


def solve_sensing_max_min(q, scenario: Scenario, tol: float = sv.DEFAULT_TOL):
    """Max-min normalised beampattern gain at a fixed location.

    Returns ``(t, R)`` where ``t = min_j a_j^H R a_j / d_j^2`` (W/m^2) at the
    optimum and ``R`` is the sensing covariance in watts.
    """
    uav = scenario.uav
    M, P, H = uav.num_antennas, uav.max_power, uav.altitude
    if P == 0:
        return 0.0, np.zeros((M, M), complex)
    A, _ = _sensing_rows(q, scenario)
    d2 = slant_distance(q, scenario.sensing.array, H) ** 2
    p = sv.ConvexProblem()
    p.add_psd("R", M)
    p.add_vector("t", 1)
    p.add_le(sv.Affine({"R": np.eye(M)}), 1.0)
    for a, dd in zip(A, d2):
        # a^H R~ a >= t~ d^2 / H^2, with t~ = t H^2 / P
        p.add_ge(sv.Affine({"R": np.outer(a, a.conj()), "t": np.array([-dd / H**2])}), 0.0)
    p.add_linear_objective(sv.Affine({"t": np.array([1.0])}))
    gmin = np.min(1.0 / d2) * H**2
    p.feasible_start = {"R": np.eye(M) / M * 0.99, "t": np.array([0.5 * gmin])}
    vals, rep = sv.solve(p, tol)
    if vals is None:
        raise sv.SolverError(f"sensing-only subproblem failed: {rep.status}")
    R = hermitian(vals["R"]) * P
    gains = np.real(np.einsum("jm,mn,jn->j", A.conj(), R, A))
    return float(np.min(gains / d2)), R


def solve_p9(scenario: Scenario, resolution: float, tol: float = sv.DEFAULT_TOL,
             nodes=None) -> StaticSolution:
    """Sensing-only hovering design; ``objective`` is the max-min value
    ``min_j gain_j / d_j^2`` in W/m^2."""
    nodes = grid_nodes(scenario, resolution) if nodes is None else np.asarray(nodes, float)
    K, M = scenario.num_users, scenario.uav.num_antennas
    values, covs = {}, {}
    for q in nodes:
        key = (float(q[0]), float(q[1]))
        t, R = solve_sensing_max_min(key, scenario, tol)
        values[key] = t
        covs[key] = R
    best = _argmax_lex(values)
    beams = BeamformerSet(np.zeros((K, M), complex), covs[best])
    rep = rates_from_channels(user_channels(best, scenario), beams, scenario.noise_powers,
                              scenario.weights)
    return StaticSolution(best, beams, values[best], rep, sv.OPTIMAL, grid_values=values)


def is_valid_solution(sol: StaticSolution, scenario: Scenario, atol: float = 1e-7) -> bool:
    return (sol.feasible and is_psd(sol.beams.sensing_cov)
            and _meets_constraints(sol.location, sol.beams, scenario, atol))
