"""Episode configuration: joints, rates, curriculum regions and reward weights.

Configs round-trip through JSON.  ``load_config`` validates the document
against :data:`CONFIG_SCHEMA` before building the dataclasses.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import jsonschema
import numpy as np
from scipy.optimize import linprog

from .control import ControllerGains, PlantParams
from .jbtg import PAPER_LIMITS, JointLimits

CONFIG_DIR_ENV = "JBRL_CONFIG_DIR"


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_point = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}

LIMITS_SCHEMA = {
    "type": "object",
    "properties": {"p_min": _num, "p_max": _num, "v_max": _pos, "a_max": _pos,
                   "j_max": _pos, "v_min": {"type": ["number", "null"]}},
    "required": ["p_min", "p_max", "v_max", "a_max", "j_max"],
    "additionalProperties": False,
}

_sine = {"type": "object", "properties": {
    "amplitude": _nonneg, "seed": {"type": "integer", "minimum": 0},
    "n_terms": {"type": "integer", "minimum": 1}, "f_lo": _nonneg, "f_hi": _nonneg},
    "additionalProperties": False}
_tanh = {"type": "object", "properties": {"amplitude": _nonneg, "gain": _num},
         "additionalProperties": False}
PLANT_SCHEMA = {"type": "object", "properties": {
    "A": _pos, "f1": _tanh, "f2": _tanh, "d1": _sine, "d2": _sine},
    "additionalProperties": False}
GAINS_SCHEMA = {"type": "object",
                "properties": {f"k{i}": _pos for i in range(1, 9)},
                "additionalProperties": False}

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "joints": {"type": "array", "minItems": 1, "items": {
            "type": "object",
            "properties": {"limits": LIMITS_SCHEMA, "plant": PLANT_SCHEMA,
                           "gains": GAINS_SCHEMA, "direction": _point},
            "required": ["limits", "direction"],
            "additionalProperties": False}},
        "held_joints": {"type": "integer", "minimum": 0},
        "held_plant": PLANT_SCHEMA,
        "home": _point,
        "rates": {"type": "object", "properties": {
            "agent": _pos, "planner": _pos, "controller": _pos},
            "additionalProperties": False},
        "regions": {"type": "array", "minItems": 1,
                    "items": {"type": "array", "minItems": 1, "items": _point}},
        "level": {"type": "integer", "minimum": 0},
        "max_steps": {"type": "integer", "minimum": 1},
        "success_distance": _pos,
        "success_speed": _pos,
        "seed": {"type": "integer", "minimum": 0},
        "reward": {"type": "object", "properties": {
            "w_force": _nonneg, "w_dist": _nonneg, "w_vel": _nonneg, "r_reach": _pos},
            "additionalProperties": False},
        "zone_resolution": _pos,
    },
    "additionalProperties": False,
}


@dataclass(frozen=True)
class Rates:
    agent: float = 20.0
    planner: float = 1000.0
    controller: float = 2000.0

    def __post_init__(self):
        for outer, inner in ((self.agent, self.planner), (self.planner, self.controller)):
            ratio = inner / outer
            if ratio < 1 or abs(ratio - round(ratio)) > 1e-9:
                raise ConfigError(f"rates must nest evenly: {self}")

    @property
    def dt(self) -> float:
        return 1.0 / self.agent

    @property
    def planner_samples(self) -> int:
        return int(round(self.planner / self.agent))

    @property
    def controller_steps(self) -> int:
        return int(round(self.controller / self.agent))


@dataclass(frozen=True)
class RewardWeights:
    w_force: float = 1e-3
    w_dist: float = 1.0
    w_vel: float = 0.1
    r_reach: float = 100.0

    def __post_init__(self):
        if min(self.w_force, self.w_dist, self.w_vel) < 0 or not self.r_reach > 0:
            raise ConfigError(f"invalid reward weights {self}")


@dataclass(frozen=True)
class JointConfig:
    limits: JointLimits
    direction: tuple[float, float]
    plant: PlantParams = PlantParams()
    gains: ControllerGains = ControllerGains()

    def __post_init__(self):
        n = math.hypot(*self.direction)
        if abs(n - 1.0) > 1e-9:
            raise ConfigError(f"joint direction {self.direction} is not a unit vector")


Polygon = tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class EpisodeConfig:
    joints: tuple[JointConfig, ...]
    home: tuple[float, float] = (0.0, 0.0)
    held_joints: int = 4
    held_plant: PlantParams = PlantParams()
    rates: Rates = Rates()
    regions: tuple[Polygon, ...] = ()
    level: int = 0
    max_steps: int = 300
    success_distance: float = 0.05
    success_speed: float = 0.1
    seed: int = 0
    reward: RewardWeights = RewardWeights()
    zone_resolution: float = 5e-4

    def __post_init__(self):
        if not self.joints:
            raise ConfigError("at least one active joint is required")
        if not self.regions:
            raise ConfigError("at least one target region is required")
        if not 0 <= self.level < len(self.regions):
            raise ConfigError(f"level {self.level} outside the {len(self.regions)} regions")
        if not (self.success_distance > 0 and self.success_speed > 0):
            raise ConfigError("success thresholds must be positive")
        for j in self.joints:
            if self.zone_resolution >= j.limits.p_max - j.limits.p_min:
                raise ConfigError("zone resolution is coarser than the joint range")
        for k, poly in enumerate(self.regions):
            if len(poly) == 2 or (len(poly) >= 3 and polygon_area(poly) <= 0.0):
                raise ConfigError(f"region {k} is neither a point nor a polygon with area")
            for v in poly:
                if not in_workspace(self, v):
                    raise ConfigError(f"region {k} vertex {v} lies outside the tip workspace")

    @property
    def directions(self) -> np.ndarray:
        """(2, n) matrix of joint unit directions."""
        return np.array([j.direction for j in self.joints], dtype=float).T

    @property
    def p_min(self) -> np.ndarray:
        return np.array([j.limits.p_min for j in self.joints])

    @property
    def p_max(self) -> np.ndarray:
        return np.array([j.limits.p_max for j in self.joints])

    def with_level(self, level: int) -> "EpisodeConfig":
        return replace(self, level=level)

    def to_dict(self) -> dict:
        d = {
            "joints": [{"limits": j.limits.to_dict(), "direction": list(j.direction),
                        "plant": j.plant.to_dict(), "gains": asdict(j.gains)}
                       for j in self.joints],
            "home": list(self.home), "held_joints": self.held_joints,
            "held_plant": self.held_plant.to_dict(), "rates": asdict(self.rates),
            "regions": [[list(v) for v in poly] for poly in self.regions],
            "level": self.level, "max_steps": self.max_steps,
            "success_distance": self.success_distance, "success_speed": self.success_speed,
            "seed": self.seed, "reward": asdict(self.reward),
            "zone_resolution": self.zone_resolution,
        }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EpisodeConfig":
        try:
            jsonschema.validate(d, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"{path}: {exc.message}") from None
        try:
            joints = tuple(JointConfig(JointLimits.from_dict(j["limits"]),
                                       tuple(j["direction"]),
                                       PlantParams.from_dict(j.get("plant", {})),
                                       ControllerGains(**j.get("gains", {})))
                           for j in d["joints"])
            kw = {k: d[k] for k in ("held_joints", "level", "max_steps", "success_distance",
                                    "success_speed", "seed", "zone_resolution") if k in d}
            if "home" in d:
                kw["home"] = tuple(d["home"])
            if "held_plant" in d:
                kw["held_plant"] = PlantParams.from_dict(d["held_plant"])
            if "rates" in d:
                kw["rates"] = Rates(**d["rates"])
            if "reward" in d:
                kw["reward"] = RewardWeights(**d["reward"])
            kw["regions"] = tuple(tuple(tuple(v) for v in poly) for poly in d.get("regions", ()))
            return cls(joints=joints, **kw)
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from None


def polygon_area(poly: Polygon) -> float:
    """Absolute shoelace area."""
    s = 0.0
    for (x0, y0), (x1, y1) in zip(poly, poly[1:] + poly[:1]):
        s += x0 * y1 - x1 * y0
    return abs(s) / 2.0


def point_in_polygon(pt: tuple[float, float], poly: Polygon) -> bool:
    """Even-odd ray casting test; single-vertex regions match only that point."""
    if len(poly) == 1:
        return tuple(pt) == tuple(poly[0])
    x, y = pt
    inside = False
    for (x0, y0), (x1, y1) in zip(poly, poly[1:] + poly[:1]):
        if (y0 > y) != (y1 > y):
            xc = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
            if x < xc:
                inside = not inside
    return inside


def in_workspace(cfg: EpisodeConfig, pt) -> bool:
    """Whether some in-limits joint configuration puts the tip at ``pt``."""
    U = np.array([j.direction for j in cfg.joints], dtype=float).T
    span = [(0.0, j.limits.p_max - j.limits.p_min) for j in cfg.joints]
    rhs = np.asarray(pt, dtype=float) - np.asarray(cfg.home, dtype=float)
    res = linprog(np.zeros(U.shape[1]), A_eq=U, b_eq=rhs, bounds=span, method="highs")
    return res.status == 0


def _square(c, half) -> Polygon:
    x, y = c
    return ((x - half, y - half), (x + half, y - half), (x + half, y + half), (x - half, y + half))


def default_config(seed: int = 0, disturbed: bool = True) -> EpisodeConfig:
    """Three prismatic joints in a plane with the default limits, four held joints.

    Curriculum regions are nested squares around the workspace centre.
    """
    dirs = ((1.0, 0.0), (0.0, 1.0), (0.8, 0.6))
    joints = tuple(JointConfig(PAPER_LIMITS, d,
                               PlantParams.disturbed(seed=i) if disturbed else PlantParams())
                   for i, d in enumerate(dirs))
    span = PAPER_LIMITS.p_max - PAPER_LIMITS.p_min
    centre = (span / 2 * 1.8, span / 2 * 1.6)
    regions = tuple(_square(centre, h) for h in (0.05, 0.1, 0.15))
    held = PlantParams.disturbed(seed=10) if disturbed else PlantParams()
    return EpisodeConfig(joints=joints, held_plant=held, regions=regions, seed=seed)


def load_config(path: str | os.PathLike | None) -> EpisodeConfig:
    """Read a JSON config.  Relative names are resolved against ``$JBRL_CONFIG_DIR``
    when not found as given; ``None`` returns :func:`default_config`."""
    if path is None:
        return default_config()
    p = Path(path)
    if not p.exists() and not p.is_absolute() and os.environ.get(CONFIG_DIR_ENV):
        p = Path(os.environ[CONFIG_DIR_ENV]) / p
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: malformed JSON ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{p}: top level must be an object")
    return EpisodeConfig.from_dict(doc)


def load_limits(path: str | os.PathLike | None) -> JointLimits:
    """Joint limits from a JSON file: either a bare limits object or a full
    episode config (first joint)."""
    if path is None:
        return PAPER_LIMITS
    p = Path(path)
    if not p.exists() and not p.is_absolute() and os.environ.get(CONFIG_DIR_ENV):
        p = Path(os.environ[CONFIG_DIR_ENV]) / p
    try:
        doc = json.loads(p.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: malformed JSON ({exc.msg})") from None
    if isinstance(doc, dict) and "joints" in doc:
        return EpisodeConfig.from_dict(doc).joints[0].limits
    try:
        jsonschema.validate(doc, LIMITS_SCHEMA)
        return JointLimits.from_dict(doc)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"limits: {exc.message}") from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
