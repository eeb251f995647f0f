"""Where can the UAV hover while still meeting every sensing requirement, and
can it get from the start point to the end point through such locations?

Per-location feasibility is a small semidefinite feasibility problem in the
sensing covariance alone (information beams only add transmit power, which a
covariance can carry equally well).  The 2D scan turns it into a grid of
feasible nodes; reachability is then a graph problem with edges no longer than
one slot's displacement.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import cKDTree

from . import solver as sv
from .channel import slant_distance, steering_vector
from .numerics import hermitian
from .scenario import MissionPlan, Scenario, Trajectory

log = logging.getLogger(__name__)

DEFAULT_RESOLUTION = 25.0


def _requirements(q, scenario: Scenario) -> np.ndarray:
    d2 = slant_distance(q, scenario.sensing.array, scenario.uav.altitude) ** 2
    return d2 * scenario.gamma


def fp4_covariance(q, scenario: Scenario, tol: float = sv.DEFAULT_TOL):
    """A sensing covariance (W) meeting every gain requirement at ``q`` with
    ``trace <= P_max``, or ``None`` when none exists.

    The isotropic covariance ``(P/M) I`` radiates ``P`` in every direction and
    settles most cases; no covariance can exceed ``M P`` in any direction,
    which settles the hopeless ones.  Everything in between is handed to the
    solver's phase I.
    """
    uav = scenario.uav
    M, P = uav.num_antennas, uav.max_power
    need = _requirements(q, scenario)
    if scenario.gamma == 0:
        return np.eye(M, dtype=complex) * (P / M)
    if P == 0 or np.max(need) > M * P:
        return None
    if np.max(need) < P:
        return np.eye(M, dtype=complex) * (P / M)
    A = steering_vector(q, scenario.sensing.array, uav)
    p = sv.ConvexProblem()
    p.add_psd("R", M)
    p.add_le(sv.Affine({"R": np.eye(M)}), 1.0)
    for a, g in zip(A, need):
        p.add_ge(sv.Affine({"R": np.outer(a, a.conj())}), g / P)
    p.feasible_start = {"R": np.eye(M) / (2 * M)}
    try:
        vals, rep = sv.phase1_feasible_point(p, tol)
    except sv.SolverError as exc:
        log.warning("feasibility check at %s indeterminate (%s); treating as infeasible", q, exc)
        return None
    if vals is None:
        if rep.status != sv.INFEASIBLE:
            log.warning("feasibility check at %s ended with %s; treating as infeasible",
                        q, rep.status)
        return None
    return hermitian(vals["R"]) * P


def check_location_feasible(q, scenario: Scenario) -> bool:
    return fp4_covariance(q, scenario) is not None


@dataclass
class FeasibleSet:
    grid_resolution: float
    nodes: np.ndarray  # every grid node, lexicographic (x, y) order
    mask: np.ndarray  # True where the node is feasible
    component: np.ndarray | None = None  # filled by build_reachability

    @property
    def locations(self) -> np.ndarray:
        return self.nodes[self.mask]

    def to_csv(self) -> str:
        rows = ["x,y,feasible"]
        rows += [f"{x:.6g},{y:.6g},{int(m)}" for (x, y), m in zip(self.nodes, self.mask)]
        return "\n".join(rows) + "\n"


def grid_nodes(scenario: Scenario, resolution: float) -> np.ndarray:
    """Nodes of the search-area grid, ordered lexicographically by (x, y)."""
    if resolution <= 0:
        raise ValueError("grid resolution must be positive")
    (x0, x1), (y0, y1) = scenario.search_area
    xs = np.arange(x0, x1 + 1e-9, resolution)
    ys = np.arange(y0, y1 + 1e-9, resolution)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    return np.column_stack([X.ravel(), Y.ravel()])


def scan_feasible_set(scenario: Scenario, resolution: float = DEFAULT_RESOLUTION) -> FeasibleSet:
    nodes = grid_nodes(scenario, resolution)
    mask = np.array([check_location_feasible(q, scenario) for q in nodes], dtype=bool)
    return FeasibleSet(float(resolution), nodes, mask)


@dataclass
class Reachability:
    feasible: bool
    reason: str
    nodes: np.ndarray  # graph nodes; 0 = start, 1 = end, then feasible grid nodes
    edges: np.ndarray  # (E, 2) index pairs
    component: np.ndarray  # indices reachable from the start node
    path: np.ndarray | None = None  # witness positions from start to end
    path_length: float = math.inf
    budget: float = 0.0
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "feasible": self.feasible,
            "reason": self.reason,
            "path": None if self.path is None else self.path.tolist(),
            "path_length_m": None if not math.isfinite(self.path_length) else self.path_length,
            "budget_m": self.budget,
            "component_size": int(len(self.component)),
        }


def _dfs_component(n: int, edges: np.ndarray, source: int) -> np.ndarray:
    adj = [[] for _ in range(n)]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    seen = np.zeros(n, dtype=bool)
    seen[source] = True
    stack = [source]
    while stack:
        v = stack.pop()
        for w in adj[v]:
            if not seen[w]:
                seen[w] = True
                stack.append(w)
    return np.flatnonzero(seen)


def build_reachability(fs: FeasibleSet, mission: MissionPlan,
                       scenario: Scenario | None = None) -> Reachability:
    """Graph verdict: the end point must be in the start point's component and
    the shortest path must fit in the mission's displacement budget.

    The endpoints are always graph nodes.  When ``scenario`` is given, an
    endpoint that fails the per-location check makes the verdict infeasible
    at once.
    """
    vmax = mission.max_displacement
    budget = vmax * (mission.num_slots - 1)
    start = np.asarray(mission.initial_position, float)
    end = np.asarray(mission.final_position, float)
    nodes = np.vstack([start, end, fs.locations])
    n = len(nodes)
    tree = cKDTree(nodes)
    # tiny slack so that grid spacings equal to the limit still count
    edges = tree.query_pairs(vmax * (1 + 1e-12), output_type="ndarray")
    edges = edges.reshape(-1, 2)
    comp = _dfs_component(n, edges, 0)
    fs.component = nodes[comp]
    out = Reachability(False, "", nodes, edges, comp, budget=budget)
    if scenario is not None:
        for name, pt in (("initial", start), ("final", end)):
            if not check_location_feasible(pt, scenario):
                out.reason = f"sensing requirement cannot be met at the {name} position"
                return out
    if 1 not in set(comp.tolist()):
        out.reason = "final position is not reachable from the initial position"
        return out
    w = np.linalg.norm(nodes[edges[:, 0]] - nodes[edges[:, 1]], axis=1)
    # zero-length edges (coincident nodes) must survive the sparse format
    w = np.maximum(w, 1e-12)
    g = csr_matrix((np.concatenate([w, w]),
                    (np.concatenate([edges[:, 0], edges[:, 1]]),
                     np.concatenate([edges[:, 1], edges[:, 0]]))), shape=(n, n))
    dist, pred = dijkstra(g, directed=False, indices=0, return_predecessors=True)
    length = float(dist[1])
    idx = [1]
    while idx[-1] != 0:
        idx.append(int(pred[idx[-1]]))
    out.path = nodes[idx[::-1]]
    out.path_length = length
    if length > budget * (1 + 1e-12):
        out.reason = f"shortest path {length:.1f} m exceeds the budget {budget:.1f} m"
        return out
    out.feasible = True
    out.reason = "reachable"
    return out


def _greedy_hops(path: np.ndarray, vmax: float, i0: int, i1: int) -> list[int]:
    """Indices visited when hopping along ``path[i0..i1]`` to the farthest
    node within reach each time."""
    out = [i0]
    i = i0
    while i < i1:
        j = i + 1
        while j + 1 <= i1 and np.linalg.norm(path[j + 1] - path[i]) <= vmax + 1e-9:
            j += 1
        out.append(j)
        i = j
    return out


def initial_trajectory_from_path(path, mission: MissionPlan, dwell_target=None) -> Trajectory:
    """Turn a witness path into an N-slot trajectory.

    Hops greedily along the path nodes and spends spare slots hovering at the
    path node closest to ``dwell_target`` (e.g. the sensing-area centroid).
    When greedy hopping needs too many slots, falls back to equal arc-length
    spacing along the path.
    """
    path = np.asarray(path, dtype=float)
    N = mission.num_slots
    vmax = mission.max_displacement
    if np.any(np.linalg.norm(np.diff(path, axis=0), axis=1) > vmax + 1e-9):
        raise ValueError("path has an edge longer than one slot's displacement")
    if len(path) == 1:
        return Trajectory(np.repeat(path, N, axis=0))
    c = 0
    if dwell_target is not None:
        c = int(np.argmin(np.linalg.norm(path - np.asarray(dwell_target, float), axis=1)))
    hops = _greedy_hops(path, vmax, 0, c)[:-1] + _greedy_hops(path, vmax, c, len(path) - 1)
    if len(hops) > N:
        hops = _greedy_hops(path, vmax, 0, len(path) - 1)
        c = hops[0]
    if len(hops) <= N:
        pos = hops.index(c)
        seq = hops[:pos] + [c] * (N - len(hops) + 1) + hops[pos + 1:]
        return Trajectory(path[seq])
    seg = np.linalg.norm(np.diff(path, axis=0), axis=1)
    total = seg.sum()
    if total > vmax * (N - 1) * (1 + 1e-12):
        raise ValueError(f"path length {total:.1f} m cannot be flown in {N} slots")
    log.info("greedy hopping needs %d slots; spacing the path evenly instead", len(hops))
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    s = np.linspace(0.0, total, N)
    pts = np.column_stack([np.interp(s, cum, path[:, 0]), np.interp(s, cum, path[:, 1])])
    pts[0], pts[-1] = path[0], path[-1]
    return Trajectory(pts)
