"""Command-line entry point.

    uav-isac feasibility   [--scenario F] [--gamma-dbm G] [--resolution R] --out DIR
    uav-isac solve-static  [--scenario F] [--gamma-dbm G] [--resolution R] [--area ...] --out DIR
    uav-isac solve-mobile  [--scenario F] [--gamma-dbm G] [--benchmark B] [--maps 1,6,12] --out DIR
    uav-isac sweep         [--scenario F] --gamma-list 0,-70,... | --antennas-list 4,8,12 --out DIR

Exit codes: 0 success, 2 infeasible, 1 error.  Every run writes
``manifest.json`` listing the files it produced and a hash of the resolved
configuration.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import solver as sv
from .channel import beampattern_map, dumps_json
from .feasibility import build_reachability, scan_feasible_set
from .mobile_design import (MissionInfeasibleError, MobileSolution, SlotInfeasibleError,
                            TrustRegionConfig, evaluate_fixed_trajectory, fhf_trajectory,
                            sf_trajectory, solve_p10, solve_p2)
from .scenario import (Scenario, ScenarioError, configure_logging, default_scenario,
                       default_scenario_path, load_scenario)
from .static_design import StaticSolution, solve_p1, solve_p9

log = logging.getLogger(__name__)

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2
BENCHMARKS = ("isac", "sf", "fhf", "comm-only", "sensing-only")
MOBILE_CURVES = ("isac", "sf", "fhf", "comm-only")


class Infeasible(Exception):
    pass


# --- experiment description ----------------------------------------------------------


@dataclass
class ExperimentSpec:
    mode: str
    scenario_path: str | None = None
    gamma_dbm: float | str | None = None  # None keeps the scenario's threshold; "off" drops it
    antennas: int | None = None
    resolution: float = 25.0
    area: tuple | None = None
    benchmark: str = "isac"
    out: str = "out"
    jobs: int = 1
    tol: float = sv.DEFAULT_TOL
    trust: dict = field(default_factory=dict)
    maps: tuple = ()
    map_resolution: float = 25.0
    gamma_list: tuple = ()  # entries are dBm values or None for no sensing
    antennas_list: tuple = ()
    mobile: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("feasibility", "solve-static", "solve-mobile", "sweep"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "sweep" and bool(self.gamma_list) == bool(self.antennas_list):
            raise ValueError("a sweep needs exactly one non-empty axis (gamma list or antennas list)")
        if self.benchmark not in BENCHMARKS:
            raise ValueError(f"unknown benchmark {self.benchmark!r}")

    def config(self) -> dict:
        d = dict(self.__dict__)
        d.pop("out")
        d.pop("jobs")
        return d


def _scenario(spec: ExperimentSpec) -> Scenario:
    sc = load_scenario(spec.scenario_path) if spec.scenario_path else default_scenario()
    if spec.gamma_dbm == "off":
        sc = sc.with_gamma(0.0)
    elif spec.gamma_dbm is not None:
        sc = sc.with_gamma_dbm(spec.gamma_dbm)
    if spec.antennas is not None:
        sc = sc.with_antennas(spec.antennas)
    if spec.area is not None:
        x0, x1, y0, y1 = spec.area
        sc = Scenario(sc.users, sc.sensing, sc.uav, sc.mission, ((x0, x1), (y0, y1)), sc.name)
    return sc


def _trust(spec: ExperimentSpec) -> TrustRegionConfig:
    return TrustRegionConfig(**spec.trust)


def config_hash(spec: ExperimentSpec) -> str:
    """Hash of the run configuration and the raw scenario file text."""
    path = Path(spec.scenario_path) if spec.scenario_path else default_scenario_path()
    try:
        text = path.read_text()
    except OSError:
        text = ""
    blob = json.dumps({"spec": spec.config(), "scenario": text}, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


# --- output helpers --------------------------------------------------------------------


class Writer:
    """Collects output files for the manifest."""

    def __init__(self, out: str):
        self.dir = Path(out)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []

    def text(self, name: str, content: str) -> None:
        (self.dir / name).write_text(content)
        if name not in self.files:
            self.files.append(name)

    def json(self, name: str, obj) -> None:
        self.text(name, dumps_json(obj) + "\n")

    def manifest(self, spec: ExperimentSpec, status: str, code: int) -> None:
        self.json("manifest.json", {
            "mode": spec.mode,
            "status": status,
            "exit_code": code,
            "config_hash": config_hash(spec),
            "config": spec.config(),
            "files": sorted(self.files),
        })


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([f"{v:.10g}" if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def emit_figure_data(w: Writer, solution, kind: str, scenario: Scenario | None = None,
                     slots=(), resolution: float = 25.0, prefix: str = "") -> list[str]:
    """Write the data behind one figure kind; returns the file names."""
    names = []
    if kind == "trajectory":
        names.append(f"{prefix}trajectory.csv")
        w.text(names[-1], solution.trajectory.to_csv())
    elif kind == "rate-trace":
        names.append(f"{prefix}rate_trace.csv")
        w.text(names[-1], _csv(["outer_iteration", "avg_sum_rate"], enumerate(solution.trace)))
    elif kind == "beampattern-map":
        if isinstance(solution, StaticSolution):
            bm = beampattern_map(solution.location, solution.beams, scenario, resolution)
            names.append(f"{prefix}map.csv")
            w.text(names[-1], bm.to_csv())
            w.json(f"{prefix}map_rates.json", {"uav_position": bm.uav_position,
                                               "user_rates": bm.user_rates})
            names.append(f"{prefix}map_rates.json")
        else:
            N = len(solution.trajectory)
            for n in slots:
                if not 1 <= n <= N:
                    raise ValueError(f"slot {n} outside 1..{N}")
                q = solution.trajectory.positions[n - 1]
                bm = beampattern_map(q, solution.beams[n - 1], scenario, resolution)
                names.append(f"{prefix}map_slot{n:02d}.csv")
                w.text(names[-1], bm.to_csv())
                names.append(f"{prefix}map_slot{n:02d}_rates.json")
                w.json(names[-1], {"slot": n, "uav_position": bm.uav_position,
                                   "user_rates": bm.user_rates})
    elif kind == "sweep-curve":
        header, rows, name = solution
        names.append(name)
        w.text(name, _csv(header, rows))
    else:
        raise ValueError(f"unknown figure kind {kind!r}")
    return names


# --- modes ------------------------------------------------------------------------------


def run_feasibility(spec: ExperimentSpec, w: Writer) -> int:
    sc = _scenario(spec)
    fs = scan_feasible_set(sc, spec.resolution)
    w.text("feasible_set.csv", fs.to_csv())
    if sc.mission is None:
        verdict = {"feasible": bool(fs.mask.any()), "reason": "no mission plan; grid scan only",
                   "num_feasible": int(fs.mask.sum())}
        w.json("feasibility.json", verdict)
        return EXIT_OK if verdict["feasible"] else EXIT_INFEASIBLE
    reach = build_reachability(fs, sc.mission, sc)
    out = reach.to_json()
    out["num_feasible"] = int(fs.mask.sum())
    w.json("feasibility.json", out)
    return EXIT_OK if reach.feasible else EXIT_INFEASIBLE


def run_static(spec: ExperimentSpec, w: Writer) -> int:
    sc = _scenario(spec)
    if spec.benchmark == "sensing-only":
        sol = solve_p9(sc, spec.resolution, spec.tol)
    else:
        if spec.benchmark == "comm-only":
            sc = sc.with_gamma(0.0)
        sol = solve_p1(sc, spec.resolution, spec.tol)
    if not sol.feasible:
        w.json("static_solution.json", {"status": sol.status, "location": None})
        return EXIT_INFEASIBLE
    w.json("static_solution.json", sol.to_json())
    w.text("static_grid.csv", _csv(["x", "y", "objective"],
                                   [(x, y, v) for (x, y), v in sorted(sol.grid_values.items())]))
    if spec.maps:
        emit_figure_data(w, sol, "beampattern-map", sc, resolution=spec.map_resolution)
    return EXIT_OK


def _mobile_solution(sc: Scenario, benchmark: str, trc: TrustRegionConfig, tol: float,
                     resolution: float, hover=None) -> MobileSolution:
    if sc.mission is None:
        raise ScenarioError("scenario has no mission section")
    if benchmark == "sensing-only":
        return solve_p10(sc, trc, tol=tol)
    if benchmark == "sf":
        return evaluate_fixed_trajectory(sf_trajectory(sc.mission), sc, "sf", tol)
    if benchmark == "fhf":
        if hover is None:
            p1 = solve_p1(sc, resolution, tol)
            if not p1.feasible:
                raise MissionInfeasibleError("no feasible hovering location")
            hover = p1.location
        return evaluate_fixed_trajectory(fhf_trajectory(sc.mission, hover), sc, "fhf", tol)
    if benchmark == "comm-only":
        return solve_p2(sc.with_gamma(0.0), trc, tol=tol, label="comm-only")
    return solve_p2(sc, trc, tol=tol)


def run_mobile(spec: ExperimentSpec, w: Writer) -> int:
    sc = _scenario(spec)
    sol = _mobile_solution(sc, spec.benchmark, _trust(spec), spec.tol, spec.resolution)
    w.json("mobile_solution.json", sol.to_json())
    emit_figure_data(w, sol, "trajectory")
    emit_figure_data(w, sol, "rate-trace")
    if spec.maps:
        emit_figure_data(w, sol, "beampattern-map", sc, spec.maps, spec.map_resolution)
    return EXIT_OK


# --- sweeps ------------------------------------------------------------------------------


def _label(g) -> str:
    return "off" if g is None else f"{g:g}"


def _gamma_value(g) -> float:
    """Sweep-axis value written to the CSV; no sensing is written as 0."""
    return 0.0 if g is None else float(g)


def static_gamma_sweep(sc: Scenario, gammas, resolution: float, tol: float = sv.DEFAULT_TOL,
                       progress=None) -> dict:
    """solve_p1 at every threshold.  Thresholds are visited from the strictest
    down, each node warm-started with its design at the previous (stricter)
    threshold; that design stays feasible, so node values cannot drop as the
    threshold relaxes."""
    order = sorted(gammas, key=lambda g: -math.inf if g is None else g, reverse=True)
    init: dict | None = None
    out = {}
    for g in order:
        s = sc.with_gamma(0.0) if g is None else sc.with_gamma_dbm(g)
        nodes_sol: dict = {}
        init_b = None if init is None else {k: v.beams for k, v in init.items() if v.feasible}
        sol = solve_p1(s, resolution, tol, init=init_b, solutions=nodes_sol)
        init = nodes_sol
        out[g] = sol
        if progress:
            progress(g, sol)
    return out


def mobile_point(sc: Scenario, hover, trc: TrustRegionConfig, tol: float) -> dict:
    """All mobile curves at one threshold.  The proposed design starts from the
    better benchmark and the communication-only design from the proposed one."""
    res = {}
    res["sf"] = evaluate_fixed_trajectory(sf_trajectory(sc.mission), sc, "sf", tol)
    if hover is not None:
        res["fhf"] = evaluate_fixed_trajectory(fhf_trajectory(sc.mission, hover), sc, "fhf", tol)
    start = max(res.values(), key=lambda s: s.avg_weighted_sum_rate)
    res["isac"] = solve_p2(sc, trc, init=start.trajectory, init_beams=start.beams, tol=tol)
    isac = res["isac"]
    res["comm-only"] = solve_p2(sc.with_gamma(0.0), trc, init=isac.trajectory,
                                init_beams=isac.beams, tol=tol, label="comm-only")
    return res


def _mobile_job(args):
    sc, hover, trust, tol = args
    return mobile_point(sc, hover, TrustRegionConfig(**trust), tol)


def run_sweep(spec: ExperimentSpec, w: Writer) -> int:
    base = _scenario(spec)
    if spec.gamma_list:
        static = static_gamma_sweep(base, spec.gamma_list, spec.resolution, spec.tol)
        points = list(spec.gamma_list)
        scen = {g: (base.with_gamma(0.0) if g is None else base.with_gamma_dbm(g)) for g in points}
        axis, axis_val = "gamma_dbm", _gamma_value
    else:
        points = list(spec.antennas_list)
        scen = {m: base.with_antennas(m) for m in points}
        static = {m: solve_p1(scen[m], spec.resolution, spec.tol) for m in points}
        axis, axis_val = "num_antennas", float
    centroid = base.sensing.centroid
    rows = []
    for p in points:
        s = static[p]
        ok = s.feasible
        loc = s.location if ok else (math.nan, math.nan)
        dist = float(np.linalg.norm(np.asarray(loc) - centroid)) if ok else math.nan
        rows.append((axis_val(p), s.objective if ok else math.nan, loc[0], loc[1], dist))
        w.json(f"static_{axis}_{_label(p)}.json", s.to_json())
    emit_figure_data(w, ([axis, "avg_sum_rate", "x", "y", "centroid_distance_m"], rows,
                         "sweep_static.csv"), "sweep-curve")
    if not any(static[p].feasible for p in points):
        return EXIT_INFEASIBLE
    if spec.mobile:
        if base.mission is None:
            raise ScenarioError("mobile sweep needs a mission section")
        jobs = [(scen[p], static[p].location if static[p].feasible else None, spec.trust, spec.tol)
                for p in points]
        if spec.jobs > 1:
            with ProcessPoolExecutor(max_workers=spec.jobs) as ex:
                results = list(ex.map(_mobile_job, jobs))
        else:
            results = [_mobile_job(j) for j in jobs]
        for name in MOBILE_CURVES:
            crow = [(axis_val(p), r[name].avg_weighted_sum_rate)
                    for p, r in zip(points, results) if name in r]
            emit_figure_data(w, ([axis, "avg_sum_rate"], crow, f"sweep_{name}.csv"), "sweep-curve")
        for p, r in zip(points, results):
            for name, sol in r.items():
                w.json(f"mobile_{axis}_{_label(p)}_{name}.json", sol.to_json())
    return EXIT_OK


def run(spec: ExperimentSpec) -> int:
    w = Writer(spec.out)
    modes = {"feasibility": run_feasibility, "solve-static": run_static,
             "solve-mobile": run_mobile, "sweep": run_sweep}
    try:
        code = modes[spec.mode](spec, w)
        status = "ok" if code == EXIT_OK else "infeasible"
    except (MissionInfeasibleError, SlotInfeasibleError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        code, status = EXIT_INFEASIBLE, "infeasible"
    except Exception as exc:  # reported with the raising module
        print(f"error in {type(exc).__module__}: {exc}", file=sys.stderr)
        log.debug("traceback", exc_info=True)
        code, status = EXIT_ERROR, "error"
    try:
        w.manifest(spec, status, code)
    except Exception as exc:
        print(f"error writing manifest: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return code


# --- argument parsing ------------------------------------------------------------------------


def _gamma_arg(s: str):
    """``off``, ``none`` and ``0`` mean no sensing requirement."""
    t = s.strip().lower()
    if t in ("off", "none", "0", "-inf"):
        return "off"
    return float(t)


def _gamma_item(s: str):
    g = _gamma_arg(s)
    return None if g == "off" else g


def _list(conv):
    def parse(s: str):
        return tuple(conv(v) for v in s.split(",") if v.strip())
    return parse


def _area(s: str):
    v = tuple(float(x) for x in s.split(","))
    if len(v) != 4 or v[0] >= v[1] or v[2] >= v[3]:
        raise argparse.ArgumentTypeError("area must be x0,x1,y0,y1 with x0<x1 and y0<y1")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="uav-isac", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="mode", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", help="YAML scenario file (default: bundled scenario)")
    common.add_argument("--gamma-dbm", type=_gamma_arg,
                        help="sensing threshold in dBm; 'off' or 0 for none")
    common.add_argument("--antennas", type=int)
    common.add_argument("--resolution", type=float, default=25.0, help="grid spacing (m)")
    common.add_argument("--area", type=_area, help="search window x0,x1,y0,y1 (m)")
    common.add_argument("--out", default="out")
    common.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    common.add_argument("--tol", type=float, default=sv.DEFAULT_TOL)
    common.add_argument("--seed", type=int, default=0)
    for name in ("feasibility", "solve-static", "solve-mobile", "sweep"):
        sp = sub.add_parser(name, parents=[common])
        if name != "feasibility":
            sp.add_argument("--benchmark", choices=BENCHMARKS, default="isac")
            sp.add_argument("--maps", type=_list(int), default=(),
                            help="slots (comma separated) for beampattern maps; any value for static")
            sp.add_argument("--map-resolution", type=float, default=25.0)
            sp.add_argument("--initial-radius", type=float)
            sp.add_argument("--radius-floor", type=float)
            sp.add_argument("--outer-tolerance", type=float)
            sp.add_argument("--max-outer", type=int)
        if name == "sweep":
            sp.add_argument("--gamma-list", type=_list(_gamma_item), default=())
            sp.add_argument("--antennas-list", type=_list(int), default=())
            sp.add_argument("--mobile", action="store_true", help="also run the mobile curves")
    return ap


def spec_from_args(ns: argparse.Namespace) -> ExperimentSpec:
    trust = {}
    for key in ("initial_radius", "radius_floor", "outer_tolerance", "max_outer"):
        v = getattr(ns, key, None)
        if v is not None:
            trust[key] = v
    return ExperimentSpec(
        mode=ns.mode, scenario_path=ns.scenario,
        gamma_dbm=ns.gamma_dbm,
        antennas=ns.antennas, resolution=ns.resolution, area=ns.area,
        benchmark=getattr(ns, "benchmark", "isac"), out=ns.out, jobs=max(1, ns.jobs), tol=ns.tol,
        trust=trust, maps=tuple(getattr(ns, "maps", ())),
        map_resolution=getattr(ns, "map_resolution", 25.0),
        gamma_list=tuple(getattr(ns, "gamma_list", ())),
        antennas_list=tuple(getattr(ns, "antennas_list", ())),
        mobile=getattr(ns, "mobile", False), seed=ns.seed)


def main(argv=None) -> int:
    configure_logging()
    ap = build_parser()
    ns = ap.parse_args(argv)
    try:
        spec = spec_from_args(ns)
        TrustRegionConfig(**spec.trust)
    except ValueError as exc:
        ap.error(str(exc))
    return run(spec)


if __name__ == "__main__":
    sys.exit(main())
