"""Mobile designs: alternating per-slot beamforming and trust-region
trajectory steps, the sensing-only trajectory, and the straight-flight and
fly-hover-fly benchmarks.

The trajectory step linearises each user's rate and each sensing gain in the
horizontal position.  Both depend on the position through the slant distance
only, via ``x -> a(x)^H X a(x)`` written with magnitudes and phases of the
entries of ``X`` (see :func:`phase_gain_and_gradient`).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import solver as sv
from .channel import BeamformerSet, rates_from_channels, slant_distance, steering_vector, user_channels
from .feasibility import build_reachability, initial_trajectory_from_path, scan_feasible_set
from .scenario import MissionPlan, Scenario, Trajectory
from .static_design import (StaticSolution, sensing_violation, solve_fixed_location,
                            solve_sensing_max_min)

log = logging.getLogger(__name__)

LOG2E = 1.0 / math.log(2.0)
SENSING_ATOL = 1e-7  # W, allowed shortfall of a true gain after a trajectory step
MAX_TRUST_STEPS = 200


class SlotInfeasibleError(RuntimeError):
    def __init__(self, slot: int, position):
        super().__init__(f"slot {slot}: sensing requirement cannot be met at {tuple(position)}")
        self.slot = slot
        self.position = tuple(position)


class MissionInfeasibleError(RuntimeError):
    pass


@dataclass
class TrustRegionConfig:
    initial_radius: float | None = None  # defaults to the mission's max displacement
    radius_floor: float = 0.1
    outer_tolerance: float = 1e-3
    max_outer: int = 30

    def __post_init__(self):
        if self.initial_radius is not None and not self.initial_radius > 0:
            raise ValueError("initial_radius must be positive")
        if not (self.radius_floor > 0 and self.outer_tolerance > 0 and self.max_outer >= 1):
            raise ValueError("trust-region settings must be positive")
        if self.initial_radius is not None and self.radius_floor >= self.initial_radius:
            raise ValueError("radius_floor must be below initial_radius")

    def radius0(self, mission: MissionPlan) -> float:
        return self.initial_radius if self.initial_radius is not None else mission.max_displacement


@dataclass
class LinearizationCoefficients:
    c: np.ndarray  # (N, K) bps/Hz
    d_grad: np.ndarray  # (N, K, 2) bps/Hz per m
    h_val: np.ndarray  # (N, J) W
    i_grad: np.ndarray  # (N, J, 2) W per m
    e: np.ndarray  # (N, K) total received power over beta, in W m^2 units of the trace form
    f: np.ndarray  # (N, K) same without the user's own signal


@dataclass
class MobileSolution:
    trajectory: Trajectory
    beams: list
    avg_weighted_sum_rate: float
    trace: list = field(default_factory=list)
    per_slot_rates: np.ndarray | None = None
    status: str = sv.OPTIMAL
    converged: bool = True
    label: str = "isac"

    def to_json(self) -> dict:
        return {
            "label": self.label,
            "status": self.status,
            "converged": self.converged,
            "avg_weighted_sum_rate": self.avg_weighted_sum_rate,
            "trajectory": self.trajectory.positions.tolist(),
            "trace": list(self.trace),
            "per_slot_rates": None if self.per_slot_rates is None else self.per_slot_rates.tolist(),
            "beams": [b.to_json() for b in self.beams],
        }


# --- phase-form gains and their gradients -----------------------------------------


def phase_gain_and_gradient(X: np.ndarray, q, p, uav):
    """``a(q, p)^H X a(q, p)`` and its gradient in ``q`` for a stack of Hermitian
    matrices ``X`` (L, M, M).

    With ``phi = angle(X[a, b]) + 2 pi (d/lambda) (b - a) H / dist``, the value is
    ``tr X + 2 sum_{a<b} |X[a, b]| cos(phi)`` and the gradient is
    ``4 pi (d/lambda) H / dist^3 * sum_{a<b} |X[a, b]| (b - a) sin(phi) * (q - p)``.
    """
    X = np.asarray(X)
    M = X.shape[-1]
    q = np.asarray(q, float)
    p = np.asarray(p, float)
    H = uav.altitude
    dist = float(np.sqrt(np.sum((q - p) ** 2) + H * H))
    a_idx, b_idx = np.triu_indices(M, 1)
    off = X[..., a_idx, b_idx]
    lag = (b_idx - a_idx).astype(float)
    kappa = 2.0 * math.pi * uav.antenna_spacing_ratio
    phi = np.angle(off) + kappa * lag * H / dist
    mag = np.abs(off)
    val = np.real(np.trace(X, axis1=-2, axis2=-1)) + 2.0 * np.sum(mag * np.cos(phi), axis=-1)
    coef = 2.0 * kappa * H / dist**3 * np.sum(mag * lag * np.sin(phi), axis=-1)
    grad = np.multiply.outer(coef, q - p)
    return val, grad


def linearize_rate(q, beams: BeamformerSet, scenario: Scenario):
    """Value ``c`` and gradient ``d`` of each user's rate at ``q``.

    Returns ``(c (K,), d_grad (K, 2), e (K,), f (K,))``.  The noise enters the
    trace form as ``sigma^2 / beta * dist^2``, whose gradient is
    ``2 sigma^2 / beta * (q - u)``.
    """
    uav = scenario.uav
    q = np.asarray(q, float)
    K = scenario.num_users
    W = beams.info_covariances
    Xs = np.concatenate([W, beams.sensing_cov[None]], axis=0)
    c = np.empty(K)
    d = np.empty((K, 2))
    e = np.empty(K)
    f = np.empty(K)
    for k, user in enumerate(scenario.users):
        u = np.asarray(user.position, float)
        vals, grads = phase_gain_and_gradient(Xs, q, u, uav)
        dist2 = float(np.sum((q - u) ** 2) + uav.altitude**2)
        nscale = user.noise_power / uav.channel_gain_ref
        noise_val = nscale * dist2
        noise_grad = 2.0 * nscale * (q - u)
        e[k] = vals.sum() + noise_val
        f[k] = e[k] - vals[k]
        ge = grads.sum(axis=0) + noise_grad
        gf = ge - grads[k]
        c[k] = math.log2(e[k]) - math.log2(f[k])
        d[k] = LOG2E * (ge / e[k] - gf / f[k])
    return c, d, e, f


def linearize_sensing(q, beams: BeamformerSet, m, scenario: Scenario):
    """Beampattern gain towards ``m`` and its gradient in ``q``."""
    G = beams.total_covariance
    val, grad = phase_gain_and_gradient(G[None], q, m, scenario.uav)
    return float(val[0]), grad[0]


def linearize_trajectory(traj: Trajectory, beams: list, scenario: Scenario) -> LinearizationCoefficients:
    N = len(traj)
    K = scenario.num_users
    pts = scenario.sensing.array
    J = len(pts)
    c = np.empty((N, K))
    d = np.empty((N, K, 2))
    e = np.empty((N, K))
    f = np.empty((N, K))
    h = np.empty((N, J))
    i_grad = np.empty((N, J, 2))
    for n, q in enumerate(traj.positions):
        c[n], d[n], e[n], f[n] = linearize_rate(q, beams[n], scenario)
        G = beams[n].total_covariance
        for j, m in enumerate(pts):
            val, grad = phase_gain_and_gradient(G[None], q, m, scenario.uav)
            h[n, j] = val[0]
            i_grad[n, j] = grad[0]
    return LinearizationCoefficients(c, d, h, i_grad, e, f)


# --- true objectives ---------------------------------------------------------------


def slot_rates(traj: Trajectory, beams: list, scenario: Scenario) -> np.ndarray:
    """(N, K) per-slot, per-user rates."""
    out = []
    for q, b in zip(traj.positions, beams):
        rep = rates_from_channels(user_channels(q, scenario), b, scenario.noise_powers,
                                  scenario.weights)
        out.append(rep.per_user_rate)
    return np.array(out)


def average_weighted_sum_rate(traj: Trajectory, beams: list, scenario: Scenario) -> float:
    return float(np.mean(slot_rates(traj, beams, scenario) @ scenario.weights))


def max_sensing_violation(traj: Trajectory, beams: list, scenario: Scenario) -> float:
    return max(sensing_violation(q, b, scenario) for q, b in zip(traj.positions, beams))


# --- per-slot beamforming ------------------------------------------------------------


def solve_p6(traj: Trajectory, scenario: Scenario, init: list | None = None,
             tol: float = sv.DEFAULT_TOL) -> list[StaticSolution]:
    """Independent fixed-location designs for every slot.  Slots that share a
    position and warm start share one computation."""
    out = []
    cache: dict = {}
    for n, q in enumerate(traj.positions):
        b0 = None if init is None else init[n]
        key = (float(q[0]), float(q[1]),
               None if b0 is None else (b0.info_beams.tobytes(), b0.sensing_cov.tobytes()))
        sol = cache.get(key)
        if sol is None:
            sol = solve_fixed_location(q, scenario, init=b0, tol=tol)
            if not sol.feasible:
                raise SlotInfeasibleError(n + 1, q)
            cache[key] = sol
        out.append(sol)
    return out


# --- trajectory step -----------------------------------------------------------------


def _free_slot_selectors(N: int):
    nf = N - 2
    sel = []
    for n in range(N):
        A = np.zeros((2, 2 * nf))
        if 0 < n < N - 1:
            A[:, 2 * (n - 1):2 * n] = np.eye(2)
        sel.append(A)
    return sel


def solve_p8l(local: Trajectory, coeffs: LinearizationCoefficients, radius: float,
              scenario: Scenario, tol: float = sv.DEFAULT_TOL) -> Trajectory | None:
    """Maximise the linearised weighted sum rate over a trust region.

    Positions are optimised as offsets from the local trajectory in units of
    the slot displacement.  Returns ``None`` when the convex step fails (for
    example when the local point leaves no strictly feasible room).
    """
    mission = scenario.mission
    N = len(local)
    if N <= 2 or radius <= 0:
        return local
    V = mission.max_displacement
    qs = local.positions
    sel = _free_slot_selectors(N)
    nf = N - 2
    g = np.zeros(2 * nf)
    for n in range(1, N - 1):
        g[2 * (n - 1):2 * n] = V * (scenario.weights @ coeffs.d_grad[n])
    scale = max(float(np.max(np.abs(g))), 1e-300)
    if np.max(np.abs(g)) == 0:
        return local
    p = sv.ConvexProblem()
    p.add_vector("dq", 2 * nf)
    p.add_linear_objective(sv.Affine({"dq": g / scale}))
    for n in range(1, N - 1):
        p.add_norm("dq", sel[n], np.zeros(2), radius / V)
    for n in range(N - 1):
        A = sel[n + 1] - sel[n]
        p.add_norm("dq", A, (qs[n + 1] - qs[n]) / V, 1.0)
    gam = scenario.gamma
    if gam > 0:
        H = scenario.uav.altitude
        pts = scenario.sensing.array
        for n in range(1, N - 1):
            for j, m in enumerate(pts):
                # gam ||q - m||^2 - i . (q - q_l) <= h - gam H^2, scaled by gam V^2
                lin = sv.Affine({"dq": -(sel[n].T @ coeffs.i_grad[n, j]) / (gam * V)})
                p.add_quadratic("dq", sel[n], (qs[n] - m) / V,
                                (coeffs.h_val[n, j] - gam * H * H) / (gam * V * V), lin)
    p.feasible_start = {"dq": np.zeros(2 * nf)}
    try:
        vals, rep = sv.solve(p, tol)
    except sv.SolverError:
        return None
    if vals is None:
        return None
    dq = vals["dq"].reshape(nf, 2) * V
    pos = qs.copy()
    pos[1:-1] += dq
    return Trajectory(pos)


def _feasible_steps(traj: Trajectory, mission: MissionPlan) -> bool:
    return bool(np.all(traj.steps <= mission.max_displacement * (1 + 1e-9)))


def optimize_trajectory(traj: Trajectory, beams: list, trc: TrustRegionConfig,
                        scenario: Scenario, tol: float = sv.DEFAULT_TOL):
    """Trust-region loop with beams fixed.  Returns ``(trajectory, objective,
    steps)`` where ``objective`` is the summed weighted rate over slots."""
    mission = scenario.mission
    radius = trc.radius0(mission)
    obj = float(np.sum(slot_rates(traj, beams, scenario) @ scenario.weights))
    accepted = 0
    for _ in range(MAX_TRUST_STEPS):
        if radius < trc.radius_floor:
            break
        coeffs = linearize_trajectory(traj, beams, scenario)
        cand = solve_p8l(traj, coeffs, radius, scenario, tol)
        ok = False
        if cand is not None and _feasible_steps(cand, mission):
            new = float(np.sum(slot_rates(cand, beams, scenario) @ scenario.weights))
            viol = max_sensing_violation(cand, beams, scenario)
            ok = new > obj and viol <= SENSING_ATOL
        if ok:
            traj, obj = cand, new
            accepted += 1
        else:
            radius /= 2.0
    return traj, obj, accepted


# --- Algorithm 1 ------------------------------------------------------------------------


def initial_trajectory(scenario: Scenario, resolution: float = 25.0) -> Trajectory:
    """Feasible starting trajectory from the reachability witness path."""
    mission = scenario.mission
    fs = scan_feasible_set(scenario, resolution)
    reach = build_reachability(fs, mission, scenario)
    if not reach.feasible:
        raise MissionInfeasibleError(reach.reason)
    return initial_trajectory_from_path(reach.path, mission, scenario.sensing.centroid)


def solve_p2(scenario: Scenario, trc: TrustRegionConfig | None = None,
             init: Trajectory | None = None, init_beams: list | None = None,
             tol: float = sv.DEFAULT_TOL, progress=None, label: str = "isac") -> MobileSolution:
    """Alternate per-slot beamforming and trust-region trajectory steps until
    the average weighted sum rate improves by less than the outer tolerance."""
    if scenario.mission is None:
        raise ValueError("scenario has no mission plan")
    trc = trc or TrustRegionConfig()
    mission = scenario.mission
    traj = init if init is not None else initial_trajectory(scenario)
    if not traj.satisfies(mission):
        raise ValueError("initial trajectory violates the flight constraints")
    sols = solve_p6(traj, scenario, init_beams, tol)
    beams = [s.beams for s in sols]
    obj = average_weighted_sum_rate(traj, beams, scenario)
    trace = [obj]
    converged = False
    N = len(traj)
    for outer in range(trc.max_outer):
        if N > 2:
            traj, _, _ = optimize_trajectory(traj, beams, trc, scenario, tol)
        sols = solve_p6(traj, scenario, beams, tol)
        beams = [s.beams for s in sols]
        new = average_weighted_sum_rate(traj, beams, scenario)
        trace.append(new)
        if progress:
            progress(outer + 1, new)
        log.info("outer %d: %.6f bps/Hz", outer + 1, new)
        gain = new - obj
        obj = new
        if gain < trc.outer_tolerance:
            converged = True
            break
    return MobileSolution(traj, beams, obj, trace, slot_rates(traj, beams, scenario),
                          sv.OPTIMAL, converged, label)


def evaluate_fixed_trajectory(traj: Trajectory, scenario: Scenario, label: str,
                              tol: float = sv.DEFAULT_TOL) -> MobileSolution:
    """Beamforming only, on a given trajectory (SF / FHF benchmarks)."""
    sols = solve_p6(traj, scenario, None, tol)
    beams = [s.beams for s in sols]
    obj = average_weighted_sum_rate(traj, beams, scenario)
    return MobileSolution(traj, beams, obj, [obj], slot_rates(traj, beams, scenario),
                          sv.OPTIMAL, True, label)


# --- benchmark trajectories ----------------------------------------------------------------


def sf_trajectory(mission: MissionPlan) -> Trajectory:
    """Constant-speed straight line from the initial to the final position."""
    a = np.asarray(mission.initial_position, float)
    b = np.asarray(mission.final_position, float)
    N = mission.num_slots
    if np.linalg.norm(b - a) > mission.max_displacement * (N - 1) * (1 + 1e-12):
        raise ValueError("straight flight exceeds the displacement budget")
    s = np.arange(N) / (N - 1)
    pos = a[None] + s[:, None] * (b - a)[None]
    pos[-1] = b
    return Trajectory(pos)


def _leg(a: np.ndarray, b: np.ndarray, vmax: float) -> np.ndarray:
    """Positions after each max-speed step from ``a`` to ``b`` (``b`` last)."""
    dist = float(np.linalg.norm(b - a))
    n = int(math.ceil(dist / vmax - 1e-12)) if dist > 0 else 0
    if n == 0:
        return np.zeros((0, 2))
    u = (b - a) / dist
    steps = np.minimum(np.arange(1, n + 1) * vmax, dist)
    pts = a[None] + steps[:, None] * u[None]
    pts[-1] = b
    return pts


def fhf_trajectory(mission: MissionPlan, hover) -> Trajectory:
    """Fly to ``hover`` at full speed, hover, then fly to the final position at
    full speed."""
    a = np.asarray(mission.initial_position, float)
    b = np.asarray(mission.final_position, float)
    h = np.asarray(hover, float)
    vmax = mission.max_displacement
    leg1 = _leg(a, h, vmax)
    leg2 = _leg(h, b, vmax)
    N = mission.num_slots
    dwell = N - 1 - len(leg1) - len(leg2)
    if dwell < 0:
        raise ValueError("hover point cannot be visited within the mission")
    pos = [a[None], leg1, np.repeat(h[None], dwell, axis=0), leg2]
    out = np.concatenate(pos, axis=0)
    if len(leg1) == 0:
        # the hover point is the start itself; it already occupies slot 1
        pass
    return Trajectory(out)


def fhf_hover_slots(mission: MissionPlan, hover) -> int:
    """Number of slots spent at the hover point (arrival and departure
    included)."""
    traj = fhf_trajectory(mission, hover)
    return int(np.sum(np.all(np.isclose(traj.positions, np.asarray(hover, float)[None]), axis=1)))


# --- sensing-only trajectory ---------------------------------------------------------------


def _slot_sensing_values(traj: Trajectory, covs: list, scenario: Scenario) -> np.ndarray:
    """(N,) minimum over sensing points of gain / dist^2."""
    pts = scenario.sensing.array
    H = scenario.uav.altitude
    out = []
    for q, R in zip(traj.positions, covs):
        A = steering_vector(q, pts, scenario.uav)
        g = np.real(np.einsum("jm,mn,jn->j", A.conj(), R, A))
        out.append(np.min(g / slant_distance(q, pts, H) ** 2))
    return np.array(out)


def _sensing_step(traj: Trajectory, covs: list, radius: float, scenario: Scenario,
                  tol: float) -> Trajectory | None:
    """Trust-region step on the linearised per-slot max-min ratio."""
    mission = scenario.mission
    uav = scenario.uav
    N = len(traj)
    nf = N - 2
    V = mission.max_displacement
    H, P = uav.altitude, uav.max_power
    qs = traj.positions
    pts = scenario.sensing.array
    sel = _free_slot_selectors(N)
    p = sv.ConvexProblem()
    p.add_vector("dq", 2 * nf)
    p.add_vector("t", nf)
    p.add_linear_objective(sv.Affine({"t": np.ones(nf)}))
    t0 = np.empty(nf)
    for n in range(1, N - 1):
        q = qs[n]
        vals = []
        for m in pts:
            g, gg = phase_gain_and_gradient(covs[n][None], q, m, uav)
            D = float(np.sum((q - m) ** 2) + H * H)
            ratio = g[0] / D
            grad = (gg[0] * D - g[0] * 2.0 * (q - m)) / D**2
            # t~_n <= (ratio + grad . dq) * H^2 / P, in displacement units
            et = np.zeros(nf)
            et[n - 1] = 1.0
            p.add_le(sv.Affine({"t": et, "dq": -(sel[n].T @ grad) * V * H * H / P},
                               -ratio * H * H / P))
            vals.append(ratio * H * H / P)
        t0[n - 1] = min(vals) - 1.0
        p.add_norm("dq", sel[n], np.zeros(2), radius / V)
    for n in range(N - 1):
        p.add_norm("dq", sel[n + 1] - sel[n], (qs[n + 1] - qs[n]) / V, 1.0)
    p.feasible_start = {"dq": np.zeros(2 * nf), "t": t0}
    try:
        vals, rep = sv.solve(p, tol)
    except sv.SolverError:
        return None
    if vals is None:
        return None
    pos = qs.copy()
    pos[1:-1] += vals["dq"].reshape(nf, 2) * V
    return Trajectory(pos)


def solve_p10(scenario: Scenario, trc: TrustRegionConfig | None = None,
              init: Trajectory | None = None, tol: float = sv.DEFAULT_TOL) -> MobileSolution:
    """Sensing-only trajectory.  The objective is the slot average of the
    minimum of ``gain / dist^2`` over the sensing points (W/m^2), reported in
    ``avg_weighted_sum_rate`` for uniformity; the trace is relative to it."""
    if scenario.mission is None:
        raise ValueError("scenario has no mission plan")
    trc = trc or TrustRegionConfig()
    mission = scenario.mission
    traj = init if init is not None else sf_trajectory(mission)
    K, M = scenario.num_users, scenario.uav.num_antennas

    def covariances(tr):
        return [solve_sensing_max_min(q, scenario, tol)[1] for q in tr.positions]

    covs = covariances(traj)
    obj = float(np.mean(_slot_sensing_values(traj, covs, scenario)))
    trace = [obj]
    converged = scenario.uav.max_power == 0 or len(traj) <= 2
    for outer in range(0 if converged else trc.max_outer):
        radius = trc.radius0(mission)
        cur = obj
        for _ in range(MAX_TRUST_STEPS):
            if radius < trc.radius_floor:
                break
            cand = _sensing_step(traj, covs, radius, scenario, tol)
            if cand is not None and _feasible_steps(cand, mission):
                new = float(np.mean(_slot_sensing_values(cand, covs, scenario)))
                if new > cur:
                    traj, cur = cand, new
                    continue
            radius /= 2.0
        fresh = covariances(traj)
        # keep the old covariance where the re-solve lands below it (solver tolerance)
        v_old = _slot_sensing_values(traj, covs, scenario)
        v_new = _slot_sensing_values(traj, fresh, scenario)
        covs = [R1 if a >= b else R0 for R0, R1, a, b in zip(covs, fresh, v_new, v_old)]
        new = float(np.mean(np.maximum(v_old, v_new)))
        trace.append(new)
        gain = (new - obj) / max(abs(obj), 1e-300)
        obj = new
        if gain < trc.outer_tolerance:
            converged = True
            break
    beams = [BeamformerSet(np.zeros((K, M), complex), R) for R in covs]
    return MobileSolution(traj, beams, obj, trace, slot_rates(traj, beams, scenario),
                          sv.OPTIMAL, converged, "sensing-only")
