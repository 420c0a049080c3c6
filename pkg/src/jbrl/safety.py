"""Kinematically safe velocity ranges and action masking.

For every agent step the admissible command interval is the intersection of

* what the trajectory generator can reach from the current speed within one
  step (velocity, acceleration and jerk bounds), and
* a position-limit zone: the largest speed from which the joint can still
  brake to rest before hitting ``p_min``/``p_max``.  Braking distances are
  precomputed once per set of limits into a :class:`SafeZoneTable`.

The normalised policy output in ``[-1, 1]`` is then mapped affinely onto the
interval.
"""

from __future__ import annotations

import bisect
import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .jbtg import (JointLimits, Trajectory, limit_constants, plan_step,
                   ramp_time)

_POS_TOL = 1e-9
_V_EPS = 1e-12
TABLE_FORMAT = 1


class SafetyFault(RuntimeError):
    """State outside the joint limits; a previous step was not safe."""


@dataclass(frozen=True)
class VelocityRange:
    v_lo: float
    v_hi: float
    fallback: bool = False

    def __post_init__(self):
        if not self.v_lo <= self.v_hi:
            raise ValueError(f"empty velocity range [{self.v_lo}, {self.v_hi}]")

    @property
    def mid(self) -> float:
        return (self.v_lo + self.v_hi) / 2.0

    def __contains__(self, v: float) -> bool:
        return self.v_lo <= v <= self.v_hi


@dataclass(frozen=True)
class BrakingResult:
    distance: float
    duration: float
    trajectory: Trajectory | None = field(default=None, repr=False, compare=False)


def _extreme_plans(p0: float, v0: float, limits: JointLimits, dt: float):
    return (plan_step(p0, v0, limits.v_max, limits, dt),
            plan_step(p0, v0, limits.v_min, limits, dt))


def reachable_range(p0: float, v0: float, limits: JointLimits, dt: float) -> VelocityRange:
    """Speeds the planner can end the next step at, starting from ``v0``."""
    hi, lo = _extreme_plans(p0, v0, limits, dt)
    return VelocityRange(lo.achieved_v2, hi.achieved_v2)


def braking_profile(v: float, limits: JointLimits) -> BrakingResult:
    """Single uninterrupted brake from ``v`` to rest at maximal deceleration."""
    if abs(v) <= _V_EPS:
        return BrakingResult(0.0, 0.0)
    duration = ramp_time(v, limits)
    traj = plan_step(0.0, v, 0.0, limits, duration + 1.0)
    return BrakingResult(abs(traj.displacement), duration, traj)


def stepped_braking_distance(v: float, limits: JointLimits, dt: float) -> float:
    """Worst-case travel towards the limit ahead when moving at ``v``.

    Braking is executed as a chain of agent steps, each ending at zero
    acceleration, which covers more ground than one uninterrupted brake.
    At every link of the chain the furthest point reached by reversing as
    hard as possible is also covered, since a reversal starts with a gentler
    deceleration than a pulse that just stops.
    """
    if abs(v) <= _V_EPS:
        return 0.0
    sigma = 1.0 if v > 0 else -1.0
    reverse_to = limits.v_min if sigma > 0 else limits.v_max
    travelled = 0.0
    worst = 0.0
    while sigma * v > _V_EPS:
        rev = plan_step(0.0, v, reverse_to, limits, dt)
        lo, hi = rev.position_extent()
        worst = max(worst, travelled + (hi if sigma > 0 else -lo))
        brake = plan_step(0.0, v, 0.0, limits, dt)
        travelled += sigma * brake.displacement
        v = brake.achieved_v2
    return max(worst, travelled)


@dataclass(frozen=True)
class SafeZoneTable:
    """Distance-to-limit -> largest safe speed, for both limits.

    ``upper_caps`` holds ``(distance to p_max, max positive speed)`` pairs and
    ``lower_caps`` ``(distance to p_min, max negative speed magnitude)``
    pairs, both sorted by distance.  Lookups round the distance down to the
    previous entry, so a cap is never overestimated.
    """

    limits: JointLimits
    resolution: float
    upper_caps: tuple[tuple[float, float], ...]
    lower_caps: tuple[tuple[float, float], ...]
    v_step: float = 1e-3
    step_dt: float | None = None
    _keys: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self._keys["upper"] = [d for d, _ in self.upper_caps]
        self._keys["lower"] = [d for d, _ in self.lower_caps]

    def cap(self, direction: str, distance: float) -> float:
        caps = self.upper_caps if direction == "upper" else self.lower_caps
        i = bisect.bisect_right(self._keys[direction], distance) - 1
        return caps[i][1] if i >= 0 else 0.0

    def header(self) -> dict:
        return {"format": TABLE_FORMAT, "limits": self.limits.to_dict(),
                "resolution": self.resolution, "v_step": self.v_step,
                "step_dt": self.step_dt, "limits_hash": self.fingerprint()}

    def fingerprint(self) -> str:
        return table_fingerprint(self.limits, self.resolution, self.v_step, self.step_dt)


def table_fingerprint(limits: JointLimits, resolution: float, v_step: float,
                      step_dt: float | None) -> str:
    blob = json.dumps({"format": TABLE_FORMAT, "limits": limits.to_dict(),
                       "resolution": resolution, "v_step": v_step, "step_dt": step_dt},
                      sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _speed_grid(v_top: float, v_step: float) -> list[float]:
    n = int(math.floor(v_top / v_step + 1e-9))
    grid = [k * v_step for k in range(n + 1)]
    if v_top - grid[-1] > 1e-12:
        grid.append(v_top)
    else:
        grid[-1] = v_top
    return grid


def _caps(limits: JointLimits, sigma: float, resolution: float, v_step: float,
          step_dt: float | None) -> tuple[tuple[float, float], ...]:
    v_top = limits.v_max if sigma > 0 else -limits.v_min
    speeds = _speed_grid(v_top, v_step)
    dists = []
    for s in speeds:
        if step_dt is None:
            d = braking_profile(sigma * s, limits).distance
        else:
            d = stepped_braking_distance(sigma * s, limits, step_dt)
        # a larger distance for a faster speed is always the safe direction
        dists.append(max(d, dists[-1]) if dists else d)
    span = limits.p_max - limits.p_min
    entries = []
    i = 0
    while i * resolution < min(dists[-1], span + resolution):
        D = i * resolution
        k = bisect.bisect_right(dists, D) - 1
        entries.append((D, speeds[k]))
        i += 1
    if dists[-1] <= span:
        entries.append((dists[-1], v_top))
    return tuple(entries)


def build_zone_table(limits: JointLimits, resolution: float = 5e-4, v_step: float = 1e-3,
                     step_dt: float | None = None) -> SafeZoneTable:
    """Precompute safe-speed caps as a function of the distance to each limit.

    With ``step_dt=None`` the braking distance of a speed is that of one
    uninterrupted brake (:func:`braking_profile`).  Passing the agent step
    duration uses :func:`stepped_braking_distance` instead, which is what a
    step-by-step controlled joint can actually guarantee.
    """
    if not resolution > 0:
        raise ValueError("resolution must be positive")
    if not v_step > 0:
        raise ValueError("v_step must be positive")
    return SafeZoneTable(limits, resolution,
                         _caps(limits, 1.0, resolution, v_step, step_dt),
                         _caps(limits, -1.0, resolution, v_step, step_dt),
                         v_step, step_dt)


def zone_bounds(table: SafeZoneTable, p: float) -> VelocityRange:
    lim = table.limits
    if not (lim.p_min - _POS_TOL <= p <= lim.p_max + _POS_TOL):
        raise SafetyFault(f"position {p!r} outside [{lim.p_min}, {lim.p_max}]")
    p = min(max(p, lim.p_min), lim.p_max)
    return VelocityRange(-table.cap("lower", p - lim.p_min), table.cap("upper", lim.p_max - p))


def final_range(p0: float, v0: float, limits: JointLimits, table: SafeZoneTable,
                dt: float) -> VelocityRange:
    """Safe command interval for the next step.

    Zone caps are looked up at the positions the two extreme plans would end
    at.  If the intersection is empty the range collapses to the speed of a
    maximal brake towards rest and is flagged as a fallback.
    """
    zone_bounds(table, p0)  # faults if the joint is already outside its limits
    hi_plan, lo_plan = _extreme_plans(p0, v0, limits, dt)
    p_plus = min(max(hi_plan.end.p, limits.p_min), limits.p_max)
    p_minus = min(max(lo_plan.end.p, limits.p_min), limits.p_max)
    v_hi = min(hi_plan.achieved_v2, table.cap("upper", limits.p_max - p_plus))
    v_lo = max(lo_plan.achieved_v2, -table.cap("lower", p_minus - limits.p_min))
    if v_lo > v_hi:
        brake = plan_step(p0, v0, 0.0, limits, dt).achieved_v2
        return VelocityRange(brake, brake, fallback=True)
    return VelocityRange(v_lo, v_hi)


def mask_action(vbar: float, rng: VelocityRange) -> float:
    """Map a normalised action in ``[-1, 1]`` linearly onto ``rng``."""
    if not -1.0 <= vbar <= 1.0:
        if math.isnan(vbar):
            raise ValueError("action is NaN")
        warnings.warn(f"action {vbar} outside [-1, 1]; clamped", RuntimeWarning, stacklevel=2)
        vbar = min(max(vbar, -1.0), 1.0)
    # same map as v_lo + (1+vbar)/2*(v_hi-v_lo), exact at -1, 0 and +1
    v = ((1.0 - vbar) * rng.v_lo + (1.0 + vbar) * rng.v_hi) / 2.0
    return min(max(v, rng.v_lo), rng.v_hi)


@dataclass
class RolloutReport:
    steps: int = 0
    p_lo: float = math.inf
    p_hi: float = -math.inf
    position_violations: int = 0
    range_violations: int = 0
    fallbacks: int = 0
    final_p: float = 0.0
    final_v: float = 0.0

    @property
    def violations(self) -> int:
        return self.position_violations + self.range_violations


def safety_rollout(limits: JointLimits, table: SafeZoneTable, dt: float,
                   policy: float | Callable[[float, float, np.random.Generator], float],
                   steps: int, p0: float, v0: float = 0.0, seed: int = 0) -> RolloutReport:
    """Run the commanded (planned) motion of one joint under ``policy``.

    ``policy`` is either a constant normalised action or a callable
    ``(p, v, rng) -> action``.  Position extremes are taken over the whole
    planned trajectory of each step, not just its endpoints.
    """
    rng = np.random.default_rng(seed)
    rep = RolloutReport()
    p, v = p0, v0
    for _ in range(steps):
        r = final_range(p, v, limits, table, dt)
        a = policy if not callable(policy) else policy(p, v, rng)
        cmd = mask_action(a, r)
        traj = plan_step(p, v, cmd, limits, dt)
        lo, hi = traj.position_extent()
        rep.p_lo, rep.p_hi = min(rep.p_lo, lo), max(rep.p_hi, hi)
        if lo < limits.p_min - _POS_TOL or hi > limits.p_max + _POS_TOL:
            rep.position_violations += 1
        if cmd not in r:
            rep.range_violations += 1
        rep.fallbacks += r.fallback
        p, v = traj.end.p, traj.achieved_v2
        rep.steps += 1
    rep.final_p, rep.final_v = p, v
    return rep


__all__ = ["SafetyFault", "VelocityRange", "BrakingResult", "SafeZoneTable",
           "reachable_range", "braking_profile", "stepped_braking_distance",
           "build_zone_table", "zone_bounds", "final_range", "mask_action",
           "safety_rollout", "RolloutReport", "table_fingerprint", "limit_constants"]
