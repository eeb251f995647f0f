"""World description: users, sensing grid, UAV radio/flight parameters.

Everything is stored in SI units (W, m, s) and linear power ratios.  Configs
are YAML; powers may be given either in dBm or W, gains in dB or linear.
"""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

log = logging.getLogger(__name__)

DEFAULT_AREA = ((0.0, 1000.0), (0.0, 1000.0))


class ScenarioError(ValueError):
    """Invalid scenario configuration; the message names the offending field."""


def dbm_to_watts(p_dbm: float) -> float:
    return 10.0 ** ((p_dbm - 30.0) / 10.0)


def watts_to_dbm(p_w: float) -> float:
    return 10.0 * math.log10(p_w) + 30.0


def db_to_linear(g_db: float) -> float:
    return 10.0 ** (g_db / 10.0)


def linear_to_db(g: float) -> float:
    return 10.0 * math.log10(g)


Position = tuple  # (x, y) in metres


def _pos(value, name) -> Position:
    try:
        x, y = (float(v) for v in value)
    except (TypeError, ValueError):
        raise ScenarioError(f"{name}: expected a pair of coordinates, got {value!r}") from None
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ScenarioError(f"{name}: coordinates must be finite")
    return (x, y)


@dataclass(frozen=True)
class User:
    position: Position
    weight: float = 1.0
    noise_power: float = 1e-14

    def __post_init__(self):
        if self.weight < 0:
            raise ScenarioError(f"user.weight must be >= 0, got {self.weight}")
        if not self.noise_power > 0:
            raise ScenarioError(f"user.noise_power must be > 0, got {self.noise_power}")


@dataclass(frozen=True)
class SensingGrid:
    points: tuple
    gain_threshold: float = 0.0

    def __post_init__(self):
        if len(self.points) == 0:
            raise ScenarioError("sensing.points must not be empty")
        if not self.gain_threshold >= 0:
            raise ScenarioError(f"sensing.gain_threshold must be >= 0, got {self.gain_threshold}")

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.points, dtype=float)

    @property
    def centroid(self) -> np.ndarray:
        return self.array.mean(axis=0)


@dataclass(frozen=True)
class UavConfig:
    num_antennas: int = 12
    antenna_spacing_ratio: float = 0.5
    altitude: float = 100.0
    max_power: float = 0.5
    channel_gain_ref: float = 1e-6

    def __post_init__(self):
        if int(self.num_antennas) != self.num_antennas or self.num_antennas < 1:
            raise ScenarioError(f"uav.num_antennas must be an integer >= 1, got {self.num_antennas}")
        for name in ("antenna_spacing_ratio", "altitude", "channel_gain_ref"):
            if not getattr(self, name) > 0:
                raise ScenarioError(f"uav.{name} must be > 0, got {getattr(self, name)}")
        # zero power is allowed so that degenerate budgets can be studied
        if not self.max_power >= 0:
            raise ScenarioError(f"uav.max_power must be >= 0, got {self.max_power}")


@dataclass(frozen=True)
class MissionPlan:
    num_slots: int
    slot_duration: float
    initial_position: Position
    final_position: Position
    max_speed: float

    def __post_init__(self):
        if int(self.num_slots) != self.num_slots or self.num_slots < 2:
            raise ScenarioError(f"mission.num_slots must be an integer >= 2, got {self.num_slots}")
        if not self.slot_duration > 0:
            raise ScenarioError(f"mission.slot_duration must be > 0, got {self.slot_duration}")
        if not self.max_speed > 0:
            raise ScenarioError(f"mission.max_speed must be > 0, got {self.max_speed}")

    @property
    def max_displacement(self) -> float:
        return self.max_speed * self.slot_duration


@dataclass(frozen=True)
class Scenario:
    users: tuple
    sensing: SensingGrid
    uav: UavConfig
    mission: MissionPlan | None = None
    search_area: tuple = DEFAULT_AREA
    name: str = "scenario"

    def __post_init__(self):
        if len(self.users) == 0:
            raise ScenarioError("users: at least one user is required")
        (x0, x1), (y0, y1) = self.search_area
        if not (x1 > x0 and y1 > y0):
            raise ScenarioError("search_area: bounds must be increasing")
        pts = [u.position for u in self.users] + list(self.sensing.points)
        margin = 0.1 * max(x1 - x0, y1 - y0)
        for x, y in pts:
            if not (x0 - margin <= x <= x1 + margin and y0 - margin <= y <= y1 + margin):
                log.warning("point (%g, %g) lies outside the search area", x, y)
                break

    @property
    def num_users(self) -> int:
        return len(self.users)

    @property
    def user_positions(self) -> np.ndarray:
        return np.array([u.position for u in self.users], dtype=float)

    @property
    def weights(self) -> np.ndarray:
        return np.array([u.weight for u in self.users], dtype=float)

    @property
    def noise_powers(self) -> np.ndarray:
        return np.array([u.noise_power for u in self.users], dtype=float)

    @property
    def gamma(self) -> float:
        return self.sensing.gain_threshold

    def with_gamma(self, gain_threshold: float) -> "Scenario":
        return replace(self, sensing=replace(self.sensing, gain_threshold=float(gain_threshold)))

    def with_gamma_dbm(self, gamma_dbm: float | None) -> "Scenario":
        """``None`` means no sensing requirement (communication only)."""
        return self.with_gamma(0.0 if gamma_dbm is None else dbm_to_watts(gamma_dbm))

    def with_antennas(self, M: int) -> "Scenario":
        return replace(self, uav=replace(self.uav, num_antennas=int(M)))

    def with_max_power(self, p: float) -> "Scenario":
        return replace(self, uav=replace(self.uav, max_power=float(p)))

    def with_users(self, users) -> "Scenario":
        return replace(self, users=tuple(users))

    def with_mission(self, mission: MissionPlan | None) -> "Scenario":
        return replace(self, mission=mission)


# --- config ingestion -------------------------------------------------------


def _power(d: dict, key: str, section: str, default=None) -> float:
    """Read ``<key>_dbm`` or ``<key>_w`` from a mapping."""
    if f"{key}_dbm" in d and f"{key}_w" in d:
        raise ScenarioError(f"{section}.{key}: give either {key}_dbm or {key}_w, not both")
    if f"{key}_dbm" in d:
        return dbm_to_watts(_num(d[f"{key}_dbm"], f"{section}.{key}_dbm"))
    if f"{key}_w" in d:
        return _num(d[f"{key}_w"], f"{section}.{key}_w")
    if default is None:
        raise ScenarioError(f"{section}.{key}: missing ({key}_dbm or {key}_w)")
    return default


def _num(v, name) -> float:
    try:
        out = float(v)
    except (TypeError, ValueError):
        raise ScenarioError(f"{name}: expected a number, got {v!r}") from None
    if not math.isfinite(out):
        raise ScenarioError(f"{name}: must be finite")
    return out


def _int(v, name) -> int:
    out = _num(v, name)
    if out != int(out):
        raise ScenarioError(f"{name}: expected an integer, got {v!r}")
    return int(out)


def _sensing_points(d: dict) -> tuple:
    if "points" in d:
        return tuple(_pos(p, f"sensing.points[{i}]") for i, p in enumerate(d["points"]))
    if "grid" in d:
        g = d["grid"]
        xs = [_num(v, "sensing.grid.x") for v in g.get("x", [])]
        ys = [_num(v, "sensing.grid.y") for v in g.get("y", [])]
        return tuple((x, y) for y in ys for x in xs)
    raise ScenarioError("sensing: need 'points' or 'grid'")


def scenario_from_dict(cfg: dict, name: str = "scenario") -> Scenario:
    if not isinstance(cfg, dict):
        raise ScenarioError("top level: expected a mapping")
    uav_cfg = cfg.get("uav") or {}
    if "channel_gain_ref_db" in uav_cfg:
        beta = db_to_linear(_num(uav_cfg["channel_gain_ref_db"], "uav.channel_gain_ref_db"))
    else:
        beta = _num(uav_cfg.get("channel_gain_ref", 1e-6), "uav.channel_gain_ref")
    uav = UavConfig(
        num_antennas=_int(uav_cfg.get("num_antennas", 12), "uav.num_antennas"),
        antenna_spacing_ratio=_num(uav_cfg.get("antenna_spacing_ratio", 0.5), "uav.antenna_spacing_ratio"),
        altitude=_num(uav_cfg.get("altitude", 100.0), "uav.altitude"),
        max_power=_power(uav_cfg, "max_power", "uav"),
        channel_gain_ref=beta,
    )

    default_noise = _power(cfg, "noise_power", "top level", default=1e-14)
    users_cfg = cfg.get("users")
    if not users_cfg:
        raise ScenarioError("users: at least one user is required")
    users = []
    for i, u in enumerate(users_cfg):
        if not isinstance(u, dict):
            u = {"position": u}
        users.append(User(
            position=_pos(u.get("position"), f"users[{i}].position"),
            weight=_num(u.get("weight", 1.0), f"users[{i}].weight"),
            noise_power=_power(u, "noise_power", f"users[{i}]", default=default_noise),
        ))

    s_cfg = cfg.get("sensing")
    if not s_cfg:
        raise ScenarioError("sensing: section is required")
    sensing = SensingGrid(_sensing_points(s_cfg), _power(s_cfg, "gain_threshold", "sensing", default=0.0))

    mission = None
    m_cfg = cfg.get("mission")
    if m_cfg:
        mission = MissionPlan(
            num_slots=_int(m_cfg.get("num_slots"), "mission.num_slots"),
            slot_duration=_num(m_cfg.get("slot_duration"), "mission.slot_duration"),
            initial_position=_pos(m_cfg.get("initial_position"), "mission.initial_position"),
            final_position=_pos(m_cfg.get("final_position"), "mission.final_position"),
            max_speed=_num(m_cfg.get("max_speed"), "mission.max_speed"),
        )

    area = DEFAULT_AREA
    if "search_area" in cfg:
        a = cfg["search_area"]
        try:
            area = ((_num(a["x"][0], "search_area.x"), _num(a["x"][1], "search_area.x")),
                    (_num(a["y"][0], "search_area.y"), _num(a["y"][1], "search_area.y")))
        except (KeyError, IndexError, TypeError):
            raise ScenarioError("search_area: expected {x: [min, max], y: [min, max]}") from None
    return Scenario(tuple(users), sensing, uav, mission, area, cfg.get("name", name))


def load_scenario(path) -> Scenario:
    path = Path(path)
    text = path.read_text()
    try:
        cfg = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ScenarioError(f"{path}: parse error{where}: {exc}") from None
    return scenario_from_dict(cfg, name=path.stem)


def default_scenario_path() -> Path:
    return Path(str(resources.files("uav_isac") / "data" / "default_scenario.yaml"))


def default_scenario() -> Scenario:
    return load_scenario(default_scenario_path())


def configure_logging() -> None:
    level = os.environ.get("ISAC_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


@dataclass(frozen=True)
class Trajectory:
    """Horizontal UAV positions, one row per time slot."""

    positions: np.ndarray

    def __post_init__(self):
        arr = np.array(self.positions, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2 or len(arr) < 1:
            raise ValueError(f"trajectory positions must have shape (N, 2), got {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "positions", arr)

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def steps(self) -> np.ndarray:
        return np.linalg.norm(np.diff(self.positions, axis=0), axis=1)

    def satisfies(self, mission: MissionPlan, atol: float = 1e-9) -> bool:
        p = self.positions
        return (len(p) == mission.num_slots
                and np.allclose(p[0], mission.initial_position, atol=1e-9, rtol=0)
                and np.allclose(p[-1], mission.final_position, atol=1e-9, rtol=0)
                and bool(np.all(self.steps <= mission.max_displacement + atol)))

    def to_csv(self) -> str:
        lines = ["n,x,y"] + [f"{n + 1},{x:.9g},{y:.9g}" for n, (x, y) in enumerate(self.positions)]
        return "\n".join(lines) + "\n"
