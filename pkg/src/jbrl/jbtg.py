"""Jerk-bounded trajectory generation between velocity waypoints.

A step of duration ``dt`` takes a joint from velocity ``v1`` to ``v2`` using
linked quintic polynomial segments.  Each waypoint is reached with zero
acceleration, so consecutive steps chain with C2 continuity.

Speed ramps come in two shapes:

* MSAP (sustained acceleration pulse): ramp acceleration up to ``a_max``,
  hold it, ramp it back down.  Used when both the time and the requested
  speed change allow a full ``a_max`` pulse.
* MAP (acceleration pulse): a single pulse with a reduced peak ``a_peak``,
  optionally followed by a velocity cruise.

Ramp timing follows the sine-ramp template (``dt_max = pi*a_max/(2*j_max)``).
Each ramp is realised by the quintic that satisfies the five boundary
conditions of the coefficient system with the ramp displacement chosen so
that jerk vanishes at both ends.  Its acceleration is monotone over the ramp,
so it never overshoots the acceleration cap, and its peak jerk is
``1.5*a/T``, i.e. ``3/pi`` (about 95.5%) of ``j_max``.
"""

from __future__ import annotations

import bisect
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

# Fraction of a*T^2 a ramp travels beyond the linear term v1*T, for a ramp of
# acceleration from a1 to a2 (zero jerk at both ends): T^2*(a1/2 + 0.15*(a2-a1)).
_RAMP_SHAPE = 0.15

_V_EPS = 1e-12        # speed changes below this are treated as none
_T_EPS = 1e-12        # pieces shorter than this are dropped
_DT_DEGENERATE = 1e-4  # steps shorter than this are a pure cruise
_BOUND_TOL = 1e-9


class DomainError(ValueError):
    """Raised when an operation is called outside its valid input domain."""


class ConditioningWarning(RuntimeWarning):
    """Quintic solve over a very short interval."""


@dataclass(frozen=True)
class JointLimits:
    """Kinematic bounds of a single joint.

    Velocity bounds default to the symmetric ``[-v_max, v_max]``;
    acceleration and jerk bounds are always symmetric.
    """

    p_min: float
    p_max: float
    v_max: float
    a_max: float
    j_max: float
    v_min: float | None = None

    def __post_init__(self):
        if not self.p_min < self.p_max:
            raise DomainError(f"p_min ({self.p_min}) must be below p_max ({self.p_max})")
        for name in ("v_max", "a_max", "j_max"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")
        if self.v_min is None:
            object.__setattr__(self, "v_min", -self.v_max)
        elif not self.v_min < 0:
            raise DomainError("v_min must be negative")

    def to_dict(self) -> dict:
        return {"p_min": self.p_min, "p_max": self.p_max, "v_min": self.v_min,
                "v_max": self.v_max, "a_max": self.a_max, "j_max": self.j_max}

    @classmethod
    def from_dict(cls, d: dict) -> "JointLimits":
        return cls(p_min=float(d["p_min"]), p_max=float(d["p_max"]),
                   v_max=float(d["v_max"]), a_max=float(d["a_max"]),
                   j_max=float(d["j_max"]),
                   v_min=None if d.get("v_min") is None else float(d["v_min"]))


# Values used in the reaching experiments: x in [0.14, 0.50] m.
PAPER_LIMITS = JointLimits(p_min=0.14, p_max=0.50, v_max=0.15, a_max=1.0, j_max=100.0)


@dataclass(frozen=True)
class LimitConstants:
    dt_max: float   # time to ramp acceleration from 0 to a_max
    dv_ramp: float  # speed gained during one such ramp
    dv_min: float   # speed change of a complete a_max pulse


def limit_constants(limits: JointLimits) -> LimitConstants:
    dt_max = math.pi * limits.a_max / (2.0 * limits.j_max)
    dv_ramp = limits.a_max * dt_max / 2.0
    return LimitConstants(dt_max=dt_max, dv_ramp=dv_ramp, dv_min=2.0 * dv_ramp)


class PeakPulse(NamedTuple):
    dt_peak: float  # half-duration of the pulse
    a_peak: float


def _a_peak(dt_peak: float, j_max: float) -> float:
    return 2.0 * j_max * dt_peak / math.pi


def _dt_peak(dv: float, j_max: float) -> float:
    return math.sqrt(math.pi * dv / (2.0 * j_max))


def peak_pulse(dv: float, limits: JointLimits) -> PeakPulse:
    """Reduced-peak acceleration pulse producing the speed change ``dv``.

    Valid for ``0 < dv <= dv_min``; larger changes need a sustained pulse.
    """
    c = limit_constants(limits)
    if not 0.0 < dv <= c.dv_min * (1.0 + 1e-12):
        raise DomainError(f"dv={dv} outside (0, dv_min={c.dv_min}]")
    dt_peak = _dt_peak(dv, limits.j_max)
    return PeakPulse(dt_peak, _a_peak(dt_peak, limits.j_max))


def ramp_time(dv: float, limits: JointLimits) -> float:
    """Shortest duration of a speed ramp of size ``dv`` (either sign)."""
    dv = abs(dv)
    if dv <= _V_EPS:
        return 0.0
    c = limit_constants(limits)
    if dv >= c.dv_min:
        return 2.0 * c.dt_max + (dv - c.dv_min) / limits.a_max
    return 2.0 * _dt_peak(dv, limits.j_max)


# ---------------------------------------------------------------------------
# Quintic segments


def quintic_system(dt: float) -> np.ndarray:
    """Coefficient matrix mapping (b1..b5) to (d, v1, a1, v2, a2)."""
    return np.array([
        [dt, dt**2, dt**3, dt**4, dt**5],
        [1.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 2.0, 0.0, 0.0, 0.0],
        [1.0, 2 * dt, 3 * dt**2, 4 * dt**3, 5 * dt**4],
        [0.0, 2.0, 6 * dt, 12 * dt**2, 20 * dt**3],
    ])


def _solve_reduced(T: float, r0: float, r1: float, r2: float) -> tuple[float, float, float]:
    # Closed-form elimination of the last three rows once b1, b2 are known.
    # r0, r1, r2 are the displacement, velocity and acceleration left over
    # after the b1/b2 terms.
    T2 = T * T
    b3 = (20.0 * r0 - 8.0 * r1 * T + r2 * T2) / (2.0 * T2 * T)
    b4 = (-30.0 * r0 + 14.0 * r1 * T - 2.0 * r2 * T2) / (2.0 * T2 * T2)
    b5 = (12.0 * r0 - 6.0 * r1 * T + r2 * T2) / (2.0 * T2 * T2 * T)
    return b3, b4, b5


def solve_quintic(d: float, v1: float, a1: float, v2: float, a2: float,
                  dt: float) -> tuple[float, float, float, float, float]:
    """Coefficients ``(b1, ..., b5)`` of the quintic meeting the boundary data.

    ``d`` is the displacement over ``[0, dt]``; the constant term ``b0`` is the
    absolute start position and is supplied by the caller.
    """
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt}")
    if dt < 1e-6:
        warnings.warn(f"quintic solve over dt={dt:g} s is ill-conditioned",
                      ConditioningWarning, stacklevel=2)
    b1 = v1
    b2 = a1 / 2.0
    r0 = d - v1 * dt - b2 * dt * dt
    r1 = v2 - v1 - a1 * dt
    r2 = a2 - a1
    return (b1, b2) + _solve_reduced(dt, r0, r1, r2)


def quintic_residual(coeffs: Sequence[float], d: float, v1: float, a1: float,
                     v2: float, a2: float, dt: float) -> float:
    """Infinity-norm residual of the 5x5 coefficient system."""
    lhs = quintic_system(dt) @ np.asarray(coeffs, dtype=float)
    return float(np.max(np.abs(lhs - np.array([d, v1, a1, v2, a2]))))


@dataclass(frozen=True)
class ControlPoint:
    t: float
    p: float
    v: float
    a: float
    j: float


@dataclass(frozen=True)
class QuinticSegment:
    t0: float
    dt: float
    b: tuple[float, float, float, float, float, float]

    def __post_init__(self):
        if not self.dt > 0:
            raise DomainError("segment duration must be positive")

    def state(self, t: float) -> tuple[float, float, float, float]:
        """Position, velocity, acceleration and jerk at local time ``t``."""
        b0, b1, b2, b3, b4, b5 = self.b
        p = b0 + t * (b1 + t * (b2 + t * (b3 + t * (b4 + t * b5))))
        v = b1 + t * (2 * b2 + t * (3 * b3 + t * (4 * b4 + t * 5 * b5)))
        a = 2 * b2 + t * (6 * b3 + t * (12 * b4 + t * 20 * b5))
        j = 6 * b3 + t * (24 * b4 + t * 60 * b5)
        return p, v, a, j


def eval_segment(seg: QuinticSegment, t: float) -> ControlPoint:
    """Evaluate ``seg`` at local time ``t`` in ``[0, seg.dt]``."""
    if t < -1e-12 or t > seg.dt + 1e-12:
        raise DomainError(f"t={t} outside segment [0, {seg.dt}]")
    t = min(max(t, 0.0), seg.dt)
    return ControlPoint(seg.t0 + t, *seg.state(t))


# ---------------------------------------------------------------------------
# Ramp pieces
#
# A piece is one quintic: duration T, acceleration moving from a1 to a2 with
# zero end jerk.  Velocity gain and displacement follow analytically, which
# keeps tiny pieces well conditioned.


class _Piece(NamedTuple):
    T: float
    a1: float
    a2: float


def _pulse(a_peak: float, t_ramp: float, t_hold: float = 0.0) -> list[_Piece]:
    pieces = [_Piece(t_ramp, 0.0, a_peak)]
    if t_hold > 0.0:
        pieces.append(_Piece(t_hold, a_peak, a_peak))
    pieces.append(_Piece(t_ramp, a_peak, 0.0))
    return pieces


class Ramp(NamedTuple):
    """Control points of a speed ramp plus what it achieved."""

    points: tuple[ControlPoint, ...]
    achieved_v2: float
    cruise: float   # trailing velocity cruise needed to fill dt
    pieces: tuple   # internal: piece list the points were derived from


def _points(p0: float, v1: float, pieces: Sequence[_Piece]) -> tuple[ControlPoint, ...]:
    t, p, v = 0.0, p0, v1
    pts = [ControlPoint(t, p, v, 0.0, 0.0)]
    for pc in pieces:
        p += v * pc.T + pc.T * pc.T * (pc.a1 / 2.0 + _RAMP_SHAPE * (pc.a2 - pc.a1))
        v += 0.5 * (pc.a1 + pc.a2) * pc.T
        t += pc.T
        pts.append(ControlPoint(t, p, v, pc.a2, 0.0))
    return tuple(pts)


def _msap_pieces(v1: float, v2: float, limits: JointLimits, dt: float):
    c = limit_constants(limits)
    a = limits.a_max
    va = v1 + c.dv_ramp
    vb = v2 - c.dv_ramp
    t2 = (vb - va) / a
    if 2.0 * c.dt_max + t2 - dt > 0.0:
        t2 = max(dt - 2.0 * c.dt_max, 0.0)
        v2 = v1 + c.dv_min + a * t2
    pieces = _pulse(a, c.dt_max, t2)
    return pieces, v2, max(dt - 2.0 * c.dt_max - t2, 0.0)


def msap(p0: float, v1: float, v2: float, limits: JointLimits, dt: float) -> Ramp:
    """Sustained acceleration pulse from ``v1`` up to ``v2``.

    If the full ramp does not fit into ``dt`` the final speed is reduced to
    what ``dt`` allows; ``achieved_v2`` reports it.
    """
    c = limit_constants(limits)
    if not (dt >= 2.0 * c.dt_max and v2 - v1 >= c.dv_min):
        raise DomainError("sustained pulse needs dt >= 2*dt_max and v2 - v1 >= dv_min")
    pieces, achieved, cruise = _msap_pieces(v1, v2, limits, dt)
    return Ramp(_points(p0, v1, pieces), achieved, cruise, tuple(pieces))


def _map_pieces(v1: float, v2: float, limits: JointLimits, dt: float):
    c = limit_constants(limits)
    j = limits.j_max
    dv = v2 - v1
    dt_min = 2.0 * c.dt_max
    if dv < c.dv_min and dt < dt_min:
        dt_peak = dt / 2.0
        a_peak = _a_peak(dt_peak, j)
        if dv < a_peak * dt_peak:
            dt_peak = _dt_peak(dv, j)
            a_peak = _a_peak(dt_peak, j)
        else:
            v2 = v1 + a_peak * dt_peak
    elif dt < dt_min:
        dt_peak = dt / 2.0
        a_peak = _a_peak(dt_peak, j)
        v2 = v1 + a_peak * dt_peak
    elif dv < c.dv_min:
        dt_peak = _dt_peak(dv, j)
        a_peak = _a_peak(dt_peak, j)
    else:
        raise DomainError("speed change and time allow a sustained pulse; use msap")
    return _pulse(a_peak, dt_peak), v2, max(dt - 2.0 * dt_peak, 0.0)


def map_pulse(p0: float, v1: float, v2: float, limits: JointLimits, dt: float) -> Ramp:
    """Reduced-peak acceleration pulse from ``v1`` up to ``v2``.

    Three control points; ``cruise`` is the velocity cruise that fills the
    rest of ``dt``.
    """
    if not v2 > v1:
        raise DomainError("map_pulse needs v2 > v1 (cruises are handled by plan_step)")
    pieces, achieved, cruise = _map_pieces(v1, v2, limits, dt)
    return Ramp(_points(p0, v1, pieces), achieved, cruise, tuple(pieces))


def _ramp_pieces(v1: float, v2: float, limits: JointLimits, dt: float):
    """Increasing ramp v1 -> v2 within dt: MSAP on ties, MAP otherwise."""
    c = limit_constants(limits)
    if dt >= 2.0 * c.dt_max and v2 - v1 >= c.dv_min:
        return _msap_pieces(v1, v2, limits, dt)
    return _map_pieces(v1, v2, limits, dt)


# ---------------------------------------------------------------------------
# Trajectories


@dataclass(frozen=True)
class Trajectory:
    segments: tuple[QuinticSegment, ...]
    achieved_v2: float
    requested_v2: float
    case: str = ""
    control_points: tuple[ControlPoint, ...] = field(default=(), repr=False)
    _starts: tuple[float, ...] = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        if not self.segments:
            raise DomainError("trajectory needs at least one segment")
        object.__setattr__(self, "_starts", tuple(s.t0 for s in self.segments))

    @property
    def duration(self) -> float:
        last = self.segments[-1]
        return last.t0 + last.dt

    @property
    def start(self) -> ControlPoint:
        return eval_segment(self.segments[0], 0.0)

    @property
    def end(self) -> ControlPoint:
        last = self.segments[-1]
        return eval_segment(last, last.dt)

    @property
    def displacement(self) -> float:
        return self.end.p - self.segments[0].b[0]

    def at(self, t: float) -> ControlPoint:
        i = max(bisect.bisect_right(self._starts, t) - 1, 0)
        seg = self.segments[i]
        tl = min(max(t - seg.t0, 0.0), seg.dt)
        return ControlPoint(t, *seg.state(tl))

    def sample_arrays(self, times: np.ndarray) -> dict[str, np.ndarray]:
        """Vectorised evaluation at absolute ``times``."""
        times = np.asarray(times, dtype=float)
        idx = np.clip(np.searchsorted(self._starts, times, side="right") - 1, 0,
                      len(self.segments) - 1)
        out = {k: np.empty_like(times) for k in ("p", "v", "a", "j")}
        for i, seg in enumerate(self.segments):
            m = idx == i
            if not m.any():
                continue
            t = np.clip(times[m] - seg.t0, 0.0, seg.dt)
            p, v, a, j = seg.state(t)
            out["p"][m], out["v"][m], out["a"][m], out["j"][m] = p, v, a, j
        out["t"] = times
        return out

    def position_extent(self) -> tuple[float, float]:
        """Exact minimum and maximum position over the trajectory."""
        lo = hi = self.segments[0].b[0]
        for seg in self.segments:
            p_end, v_end, _, _ = seg.state(seg.dt)
            lo, hi = min(lo, p_end), max(hi, p_end)
            if seg.b[1] * v_end < 0.0:
                for t in _real_roots_in(_velocity_poly(seg), seg.dt):
                    p = seg.state(t)[0]
                    lo, hi = min(lo, p), max(hi, p)
        return lo, hi


def _velocity_poly(seg: QuinticSegment) -> list[float]:
    b = seg.b
    return [5 * b[5], 4 * b[4], 3 * b[3], 2 * b[2], b[1]]


def _real_roots_in(poly: Sequence[float], T: float) -> list[float]:
    # strip leading zeros so np.roots sees the true degree
    poly = list(poly)
    while poly and abs(poly[0]) < 1e-300:
        poly.pop(0)
    if len(poly) < 2:
        return []
    r = np.roots(poly)
    return [float(x.real) for x in r if abs(x.imag) <= 1e-9 * max(1.0, abs(x)) and 0.0 <= x.real <= T]


def _build(p0: float, v1: float, pieces: Sequence[_Piece], cruise: float, sign: float,
           achieved: float, requested: float, case: str) -> Trajectory:
    """Turn normalised pieces (plus trailing cruise) into a Trajectory.

    Pieces are planned for an increasing speed; ``sign`` = -1 mirrors the
    whole profile (velocity, acceleration, jerk) about the start position.
    """
    pieces = [pc for pc in pieces if pc.T > _T_EPS]
    if cruise > _T_EPS or not pieces:
        pieces.append(_Piece(max(cruise, 0.0), 0.0, 0.0))
    pts = _points(0.0, v1, pieces)
    segs = []
    for pc, cp in zip(pieces, pts):
        T = pc.T
        da = pc.a2 - pc.a1
        # residual displacement / velocity / acceleration after b1, b2 terms
        b3, b4, b5 = _solve_reduced(T, _RAMP_SHAPE * da * T * T, 0.5 * da * T, da)
        b = (cp.p, cp.v, pc.a1 / 2.0, b3, b4, b5)
        segs.append(QuinticSegment(cp.t, T, tuple(sign * x for x in b)))
    segs = [QuinticSegment(s.t0, s.dt, (p0 + s.b[0],) + s.b[1:]) for s in segs]
    points = tuple(ControlPoint(cp.t, p0 + sign * cp.p, sign * cp.v, sign * cp.a, 0.0)
                   for cp in pts)
    return Trajectory(tuple(segs), sign * achieved, requested, case, points)


def _cruise(p0: float, v: float, dt: float, requested: float, case: str) -> Trajectory:
    return _build(p0, v, [], dt, 1.0, v, requested, case)


def _check_velocity(v: float, limits: JointLimits, name: str):
    if not (limits.v_min - _BOUND_TOL <= v <= limits.v_max + _BOUND_TOL) or math.isnan(v):
        raise DomainError(f"{name}={v} outside [{limits.v_min}, {limits.v_max}]")


def _normalise(v1: float, v2: float, limits: JointLimits):
    """Map the step onto an increasing-speed problem (reflect if decreasing)."""
    if v2 >= v1:
        return 1.0, v1, v2, limits.v_max
    return -1.0, -v1, -v2, -limits.v_min


def plan_step(p0: float, v1: float, v2: float, limits: JointLimits, dt: float) -> Trajectory:
    """Plan one step of duration ``dt`` from speed ``v1`` towards ``v2``.

    The step starts and ends at zero acceleration.  When ``v2`` cannot be
    reached within ``dt`` the trajectory ends at the closest reachable speed,
    reported as ``achieved_v2``.  Decreasing ramps are planned as the mirror
    image of the increasing ramp between the negated speeds.
    """
    _check_velocity(v1, limits, "v1")
    _check_velocity(v2, limits, "v2")
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt}")
    v1 = min(max(v1, limits.v_min), limits.v_max)
    v2 = min(max(v2, limits.v_min), limits.v_max)

    if dt < _DT_DEGENERATE:
        return _cruise(p0, v1, dt, v2, "degenerate")
    sign, u1, u2, cap = _normalise(v1, v2, limits)
    if u2 - u1 <= _V_EPS:
        return _cruise(p0, v1, dt, v2, "3" if u2 >= cap - _V_EPS else "4")

    if u2 >= cap - _V_EPS:
        case = "1"
    else:
        need = ramp_time(u2 - u1, limits)
        if need <= dt:
            case = "2.1"
        else:
            # No time to reach v2, let alone a detour through a higher peak:
            # the dt_limit comparison always selects the reduced-peak branch,
            # which degenerates to the reduced ramp towards v2.
            c = limit_constants(limits)
            case = "2.2b" if cap - u2 > c.dv_min else "2.3b"
    pieces, achieved, cruise = _ramp_pieces(u1, u2, limits, dt)
    return _build(p0, u1, pieces, cruise, sign, achieved, v2, case)


def _through_peak_time(vp: float, u1: float, u2: float, limits: JointLimits) -> float:
    return ramp_time(vp - u1, limits) + ramp_time(vp - u2, limits)


def solve_v_peak(u1: float, u2: float, lo: float, hi: float, dt: float,
                 limits: JointLimits, tol: float = 1e-9) -> float:
    """Largest peak speed in ``[lo, hi]`` whose up/down ramps fit in ``dt``.

    Bisection on the (monotone) total ramp time; the result never overshoots
    ``dt`` and is within ``tol`` seconds of it.
    """
    if _through_peak_time(hi, u1, u2, limits) <= dt:
        return hi
    while True:
        mid = 0.5 * (lo + hi)
        if _through_peak_time(mid, u1, u2, limits) <= dt:
            lo = mid
        else:
            hi = mid
        if dt - _through_peak_time(lo, u1, u2, limits) <= tol or hi - lo <= 1e-15:
            return lo


def plan_max_displacement(p0: float, v1: float, v2: float, limits: JointLimits,
                          dt: float) -> Trajectory:
    """Plan ``v1 -> v2`` over ``dt`` covering as much distance as possible.

    Spare time is spent on a detour through a peak speed ``v_peak`` towards
    the velocity bound (``v_max`` when ``v2 >= 0``, ``v_min`` otherwise):
    ramps ``v1 -> v_peak -> v2`` plus, if ``v_peak`` reaches the bound, a
    cruise there.  Falls back to :func:`plan_step` when ``v2`` itself is out
    of reach.
    """
    _check_velocity(v1, limits, "v1")
    _check_velocity(v2, limits, "v2")
    if v2 >= 0.0:
        sign, u1, u2, cap = 1.0, v1, v2, limits.v_max
    else:
        sign, u1, u2, cap = -1.0, -v1, -v2, -limits.v_min
    base = max(u1, u2)
    if dt < _DT_DEGENERATE or _through_peak_time(base, u1, u2, limits) > dt:
        return plan_step(p0, v1, v2, limits, dt)
    c = limit_constants(limits)
    full = _through_peak_time(cap, u1, u2, limits)
    if cap - u2 > c.dv_min:
        v_limit = u2 + c.dv_min
        dt_limit = _through_peak_time(v_limit, u1, u2, limits)
        if dt > dt_limit:
            if dt >= full:
                case, vp = "2.2a-i", cap
            else:
                case, vp = "2.2a-ii", solve_v_peak(u1, u2, v_limit, cap, dt, limits)
        else:
            case, vp = "2.2b", solve_v_peak(u1, u2, base, v_limit, dt, limits)
    else:
        if dt >= full:
            case, vp = "2.3a", cap
        else:
            case, vp = "2.3b", solve_v_peak(u1, u2, base, cap, dt, limits)
    if u1 == u2:
        case = "4/" + case

    up, _, _ = _ramp_pieces(u1, vp, limits, dt) if vp - u1 > _V_EPS else ([], vp, 0.0)
    down, _, _ = _ramp_pieces(u2, vp, limits, dt) if vp - u2 > _V_EPS else ([], vp, 0.0)
    down = [_Piece(pc.T, -pc.a2, -pc.a1) for pc in reversed(down)]
    hold = dt - _through_peak_time(vp, u1, u2, limits)
    pieces = list(up)
    if hold > _T_EPS:
        pieces.append(_Piece(hold, 0.0, 0.0))
    pieces += down
    return _build(p0, u1, pieces, 0.0, sign, u2, v2, case)


def concatenate(trajs: Sequence[Trajectory], case: str = "chain") -> Trajectory:
    """Join consecutive steps into one trajectory on a common time axis."""
    if not trajs:
        raise DomainError("nothing to concatenate")
    segs, points, offset = [], [], 0.0
    for tr in trajs:
        segs.extend(QuinticSegment(s.t0 + offset, s.dt, s.b) for s in tr.segments)
        points.extend(ControlPoint(c.t + offset, c.p, c.v, c.a, c.j) for c in tr.control_points)
        offset += tr.duration
    return Trajectory(tuple(segs), trajs[-1].achieved_v2, trajs[-1].requested_v2, case,
                      tuple(points))


def reaching_profile(p0: float, p1: float, limits: JointLimits, dt: float = 0.05,
                     duration: float = 15.0, gain: float = 2.0) -> Trajectory:
    """Point-to-point motion built from consecutive steps.

    Each step commands ``gain * (p1 - p)`` clipped to the velocity bounds,
    so the joint approaches ``p1`` and settles there.
    """
    steps, p, v = [], p0, 0.0
    for _ in range(int(round(duration / dt))):
        cmd = min(max(gain * (p1 - p), limits.v_min), limits.v_max)
        tr = plan_step(p, v, cmd, limits, dt)
        steps.append(tr)
        p, v = tr.end.p, tr.achieved_v2
    return concatenate(steps, case="reach")


# ---------------------------------------------------------------------------
# Sampling and validation


def sample_trajectory(traj: Trajectory, rate: float) -> list[ControlPoint]:
    """Samples at uniform ``1/rate`` spacing over the trajectory, end included."""
    if not rate > 0:
        raise DomainError("rate must be positive")
    T = traj.duration
    n = int(math.floor(T * rate + 1e-6))
    times = [k / rate for k in range(n + 1)]
    if T - times[-1] > 1e-12:
        times.append(T)
    else:
        times[-1] = min(times[-1], T)
    return [traj.at(t) for t in times]


@dataclass
class ValidationReport:
    max_abs_v: float = 0.0
    max_abs_a: float = 0.0
    max_abs_j: float = 0.0
    p_lo: float = math.inf
    p_hi: float = -math.inf
    max_gap_p: float = 0.0
    max_gap_v: float = 0.0
    max_gap_a: float = 0.0
    start_a: float = 0.0
    end_a: float = 0.0
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def summary(self) -> dict:
        return {k: v for k, v in self.__dict__.items()}


def _check_report(rep: ValidationReport, limits: JointLimits, rtol: float,
                  continuity_tol: float, check_continuity: bool):
    if rep.max_abs_v > max(limits.v_max, -limits.v_min) * (1 + rtol):
        rep.violations.append(f"velocity {rep.max_abs_v:.9g} exceeds bound")
    if rep.max_abs_a > limits.a_max * (1 + rtol):
        rep.violations.append(f"acceleration {rep.max_abs_a:.9g} exceeds {limits.a_max}")
    if rep.max_abs_j > limits.j_max * (1 + rtol):
        rep.violations.append(f"jerk {rep.max_abs_j:.9g} exceeds {limits.j_max}")
    if rep.p_lo < limits.p_min - continuity_tol or rep.p_hi > limits.p_max + continuity_tol:
        rep.violations.append(f"position range [{rep.p_lo:.9g}, {rep.p_hi:.9g}] leaves limits")
    if check_continuity:
        for name in ("p", "v", "a"):
            gap = getattr(rep, f"max_gap_{name}")
            if gap > continuity_tol:
                rep.violations.append(f"{name} discontinuity {gap:.3g} at a junction")
        if abs(rep.start_a) > continuity_tol or abs(rep.end_a) > continuity_tol:
            rep.violations.append("trajectory does not start and end at zero acceleration")


def validate_trajectory(traj: Trajectory, limits: JointLimits, rtol: float = 1e-6,
                        continuity_tol: float = 1e-9) -> ValidationReport:
    """Exact extrema of each segment checked against ``limits``."""
    rep = ValidationReport()
    prev = None
    for seg in traj.segments:
        b = seg.b
        T = seg.dt
        # candidate times: ends plus interior critical points of each derivative
        cands_j = [0.0, T] + _real_roots_in([120 * b[5], 24 * b[4]], T)
        cands_a = [0.0, T] + _real_roots_in([60 * b[5], 24 * b[4], 6 * b[3]], T)
        cands_v = [0.0, T] + _real_roots_in([20 * b[5], 12 * b[4], 6 * b[3], 2 * b[2]], T)
        cands_p = [0.0, T] + _real_roots_in(_velocity_poly(seg), T)
        rep.max_abs_j = max([rep.max_abs_j] + [abs(seg.state(t)[3]) for t in cands_j])
        rep.max_abs_a = max([rep.max_abs_a] + [abs(seg.state(t)[2]) for t in cands_a])
        rep.max_abs_v = max([rep.max_abs_v] + [abs(seg.state(t)[1]) for t in cands_v])
        ps = [seg.state(t)[0] for t in cands_p]
        rep.p_lo, rep.p_hi = min([rep.p_lo] + ps), max([rep.p_hi] + ps)
        if prev is not None:
            pe = prev.state(prev.dt)
            ps0 = seg.state(0.0)
            rep.max_gap_p = max(rep.max_gap_p, abs(pe[0] - ps0[0]))
            rep.max_gap_v = max(rep.max_gap_v, abs(pe[1] - ps0[1]))
            rep.max_gap_a = max(rep.max_gap_a, abs(pe[2] - ps0[2]))
        prev = seg
    rep.start_a = traj.segments[0].state(0.0)[2]
    rep.end_a = traj.end.a
    _check_report(rep, limits, rtol, continuity_tol, check_continuity=True)
    return rep


def validate_samples(samples: Sequence[ControlPoint], limits: JointLimits,
                     rtol: float = 1e-6, tol: float = 1e-9) -> ValidationReport:
    """Report built from sampled values only (e.g. a trajectory read from CSV)."""
    rep = ValidationReport()
    if samples:
        rep.max_abs_v = max(abs(s.v) for s in samples)
        rep.max_abs_a = max(abs(s.a) for s in samples)
        rep.max_abs_j = max(abs(s.j) for s in samples)
        rep.p_lo = min(s.p for s in samples)
        rep.p_hi = max(s.p for s in samples)
        rep.start_a = samples[0].a
        rep.end_a = samples[-1].a
    _check_report(rep, limits, rtol, tol, check_continuity=False)
    return rep
