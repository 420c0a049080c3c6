"""Multirate reaching environment.

One agent step (default 0.05 s) runs, for every active joint:

1. safe command interval from the *commanded* joint state,
2. mapping of the normalised action into that interval,
3. a jerk-bounded plan over the step, sampled at the planner rate,
4. closed-loop tracking at the controller rate (planner samples are
   linearly interpolated in between).

Held joints are regulated around a fixed reference by the same controller
and only show up in the diagnostics.

Flattened state vector layout (``n`` active joints)::

    f[0..n)  p[0..n)  p_dot[0..n)  x[0..2)  x_dot[0..2)  target[0..2)  delta_p

``f`` is the controller output of the last controller period, ``p`` and
``p_dot`` are actual plant states, ``x``/``x_dot`` the planar tip.
"""

from __future__ import annotations

import functools
import json
import sys
from dataclasses import dataclass, field
from typing import IO, Callable, Sequence

import numpy as np
from scipy.optimize import lsq_linear

from .config import EpisodeConfig, RewardWeights, point_in_polygon
from .control import ControllerGains, LoopParams, SimulationFault, run_loop
from .jbtg import JointLimits, plan_step
from .safety import (SafeZoneTable, SafetyFault, VelocityRange, build_zone_table,
                     final_range, mask_action)

PROTOCOL_VERSION = "jbrl-protocol/1"


def state_layout(n: int) -> list[str]:
    names = [f"f{i}" for i in range(n)] + [f"p{i}" for i in range(n)]
    names += [f"p_dot{i}" for i in range(n)]
    return names + ["x", "y", "x_dot", "y_dot", "target_x", "target_y", "delta_p"]


@dataclass(frozen=True)
class EnvState:
    f_t: np.ndarray
    p_t: np.ndarray
    p_dot_t: np.ndarray
    x_t: np.ndarray
    x_dot_t: np.ndarray
    target: np.ndarray
    delta_p: float

    def vector(self) -> np.ndarray:
        return np.concatenate([self.f_t, self.p_t, self.p_dot_t, self.x_t, self.x_dot_t,
                               self.target, [self.delta_p]])


@dataclass
class StepResult:
    state: EnvState
    reward: float
    done: bool
    cause: str | None
    diagnostics: dict = field(default_factory=dict)


def forward_kinematics(cfg: EpisodeConfig, p, p_dot=None) -> tuple[np.ndarray, np.ndarray]:
    """Planar tip position and velocity of the prismatic chain."""
    U = cfg.directions
    x = np.asarray(cfg.home, dtype=float) + U @ (np.asarray(p, dtype=float) - cfg.p_min)
    xd = U @ np.asarray(p_dot, dtype=float) if p_dot is not None else np.zeros(2)
    return x, xd


def reward(delta_p: float, x_dot, u, reached: bool, weights: RewardWeights) -> float:
    """Force, distance and velocity penalties plus the reaching bonus."""
    return (-weights.w_force * float(np.linalg.norm(u)) - weights.w_dist * delta_p
            - weights.w_vel * float(np.linalg.norm(x_dot))
            + (weights.r_reach if reached else 0.0))


@functools.lru_cache(maxsize=16)
def zone_table_for(limits: JointLimits, resolution: float, step_dt: float) -> SafeZoneTable:
    """Step-aware zone table, cached per limits."""
    return build_zone_table(limits, resolution, step_dt=step_dt)


def sample_target(cfg: EpisodeConfig, rng: np.random.Generator) -> np.ndarray:
    poly = cfg.regions[cfg.level]
    if len(poly) == 1:
        return np.array(poly[0], dtype=float)
    pts = np.asarray(poly, dtype=float)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    while True:
        cand = rng.uniform(lo, hi)
        if point_in_polygon(tuple(cand), poly):
            return cand


class ReachingEnv:
    """Step/reset state machine.  Not safe for interleaved callers."""

    def __init__(self, cfg: EpisodeConfig):
        self.cfg = cfg
        self.n = len(cfg.joints)
        self.limits = [j.limits for j in cfg.joints]
        self.tables = [zone_table_for(L, cfg.zone_resolution, cfg.rates.dt) for L in self.limits]
        held_gains = [ControllerGains()] * cfg.held_joints
        self._lp = LoopParams.build([j.gains for j in cfg.joints] + held_gains,
                                    [j.plant for j in cfg.joints]
                                    + [cfg.held_plant] * cfg.held_joints)
        self.m_plan = cfg.rates.planner_samples
        self.m_ctrl = cfg.rates.controller_steps
        self._t_plan = np.arange(self.m_plan + 1) / cfg.rates.planner
        self._t_ctrl = np.arange(self.m_ctrl) / cfg.rates.controller
        self.done = True
        self.steps = 0

    # -- episode -------------------------------------------------------

    def reset(self, seed: int | None = None) -> EnvState:
        seed = self.cfg.seed if seed is None else seed
        rng = np.random.default_rng(seed)
        n, h = self.n, self.cfg.held_joints
        p0 = rng.uniform(self.cfg.p_min, self.cfg.p_max)
        self.target = sample_target(self.cfg, rng)
        self.p_cmd = p0.copy()
        self.v_cmd = np.zeros(n)
        self.chi = np.zeros((n + h, 2))
        self.chi[:n, 0] = p0
        self.phi = np.zeros((n + h, 2))
        self.u = np.zeros(n)
        self.steps = 0
        self.done = False
        self.cause = None
        self.seed = seed
        self._ranges = self._next_ranges()
        return self.state()

    def state(self) -> EnvState:
        p, pd = self.chi[:self.n, 0].copy(), self.chi[:self.n, 1].copy()
        x, xd = forward_kinematics(self.cfg, p, pd)
        return EnvState(self.u.copy(), p, pd, x, xd, self.target.copy(),
                        float(np.linalg.norm(x - self.target)))

    def action_ranges(self) -> list[VelocityRange]:
        """Safe command intervals the next action is mapped into."""
        return list(self._ranges)

    def _next_ranges(self) -> list[VelocityRange]:
        return [final_range(float(self.p_cmd[i]), float(self.v_cmd[i]), self.limits[i],
                            self.tables[i], self.cfg.rates.dt) for i in range(self.n)]

    def step(self, action: Sequence[float]) -> StepResult:
        if self.done:
            raise RuntimeError("episode finished")
        action = np.asarray(action, dtype=float).reshape(-1)
        if action.shape != (self.n,):
            raise ValueError(f"expected {self.n} actions, got {action.size}")
        if not np.all(np.isfinite(action)):
            raise ValueError("action contains non-finite values")
        cfg, n = self.cfg, self.n
        dt = cfg.rates.dt
        ranges = self._ranges
        diag = {"v_lo": [r.v_lo for r in ranges], "v_hi": [r.v_hi for r in ranges],
                "fallback": [r.fallback for r in ranges], "v_start": self.v_cmd.tolist()}
        xr = np.empty((n + cfg.held_joints, self.m_ctrl))
        xrd = np.zeros_like(xr)
        cmds, achieved, peaks = [], [], []
        for i in range(n):
            v = mask_action(float(action[i]), ranges[i])
            traj = plan_step(float(self.p_cmd[i]), float(self.v_cmd[i]), v, self.limits[i], dt)
            s = traj.sample_arrays(self._t_plan)
            xr[i] = np.interp(self._t_ctrl, self._t_plan, s["p"])
            xrd[i] = np.interp(self._t_ctrl, self._t_plan, s["v"])
            cmds.append(v)
            achieved.append(traj.achieved_v2)
            peaks.append([float(np.abs(s[k]).max()) for k in ("v", "a", "j")])
            self.p_cmd[i] = traj.end.p
            self.v_cmd[i] = traj.achieved_v2
        xr[n:] = 0.0
        diag.update(v_cmd=cmds, achieved_v2=achieved, profile_peaks=peaks,
                    planner_samples=self.m_plan, controller_steps=self.m_ctrl)
        t0 = self.steps * dt
        self.steps += 1
        cause = None
        try:
            log = run_loop(self.chi, self.phi, xr, xrd, t0, 1.0 / cfg.rates.controller,
                           self._lp, log=True)
        except SimulationFault as exc:
            diag["fault"] = str(exc)
            cause = "fault"
            log = None
        if log is not None:
            self.u = log[:n, -1, 7].copy()
            diag["max_e1"] = np.abs(log[:n, :, 5]).max(axis=1).tolist()
            diag["held_max_e1"] = float(np.abs(log[n:, :, 5]).max()) if cfg.held_joints else 0.0
            diag["tracking_margin"] = (self.chi[:n, 0] - self.p_cmd).tolist()
        st = self.state()
        reached = (cause is None and st.delta_p < cfg.success_distance
                   and float(np.linalg.norm(st.x_dot_t)) < cfg.success_speed)
        r = reward(st.delta_p, st.x_dot_t, st.f_t, reached, cfg.reward)
        if cause is None:
            try:
                self._ranges = self._next_ranges()
            except SafetyFault as exc:
                diag["fault"] = str(exc)
                cause = "fault"
        if cause is None:
            if reached:
                cause = "reached"
            elif self.steps >= cfg.max_steps:
                cause = "timeout"
        self.done = cause is not None
        self.cause = cause
        return StepResult(st, r, self.done, cause, diag)


# ---------------------------------------------------------------------------
# scripted policies


class ProportionalPolicy:
    """Drive the joints towards a configuration that places the tip on target.

    Joint targets come from a bounded least-squares inverse of the linear
    kinematics, lightly regularised towards mid-range.  The desired speed is
    ``gain * (q_target - p)``; the action is the inverse of the interval map.
    """

    def __init__(self, cfg: EpisodeConfig, gain: float = 2.0, reg: float = 1e-3):
        self.cfg = cfg
        self.gain = gain
        self.reg = reg
        self._cache: dict[tuple[float, float], np.ndarray] = {}

    def joint_target(self, target) -> np.ndarray:
        key = (float(target[0]), float(target[1]))
        if key not in self._cache:
            cfg = self.cfg
            U = cfg.directions
            n = U.shape[1]
            span = cfg.p_max - cfg.p_min
            A = np.vstack([U, self.reg * np.eye(n)])
            b = np.concatenate([np.asarray(key) - np.asarray(cfg.home), self.reg * span / 2])
            sol = lsq_linear(A, b, bounds=(np.zeros(n), span))
            self._cache[key] = cfg.p_min + sol.x
        return self._cache[key]

    def __call__(self, state_vec: Sequence[float], ranges: Sequence[tuple[float, float]]) -> list[float]:
        n = len(self.cfg.joints)
        s = np.asarray(state_vec, dtype=float)
        p = s[n:2 * n]
        target = s[3 * n + 4:3 * n + 6]
        q = self.joint_target(target)
        out = []
        for i, (lo, hi) in enumerate(ranges):
            v_max = self.cfg.joints[i].limits.v_max
            v = min(max(self.gain * (q[i] - p[i]), -v_max), v_max)
            out.append(0.0 if hi - lo <= 1e-15 else min(max(2 * (v - lo) / (hi - lo) - 1, -1.0), 1.0))
        return out


def constant_policy(value: float) -> Callable:
    def policy(state_vec, ranges):
        return [value] * len(ranges)
    return policy


def make_policy(name: str, cfg: EpisodeConfig, rng: np.random.Generator | None = None) -> Callable:
    if name == "max":
        return constant_policy(1.0)
    if name == "min":
        return constant_policy(-1.0)
    if name == "zero":
        return constant_policy(0.0)
    if name == "proportional":
        return ProportionalPolicy(cfg)
    if name == "random":
        rng = rng or np.random.default_rng(0)
        return lambda s, r: rng.uniform(-1.0, 1.0, len(r)).tolist()
    raise ValueError(f"unknown policy {name!r}")


@dataclass
class EpisodeRecord:
    seed: int
    rows: list[dict]
    cause: str | None
    steps: int
    position_violations: int = 0
    range_violations: int = 0
    fallbacks: int = 0

    @property
    def reached(self) -> bool:
        return self.cause == "reached"


def run_episode(env: ReachingEnv, policy: Callable, seed: int, max_steps: int | None = None,
                record: bool = True) -> EpisodeRecord:
    """Roll out one episode; ``max_steps`` overrides the configured limit."""
    cfg = env.cfg
    st = env.reset(seed)
    if max_steps is not None:
        env.cfg = _with_steps(cfg, max_steps)
    try:
        rows = []
        rec = EpisodeRecord(seed, rows, None, 0)
        while not env.done:
            ranges = [(r.v_lo, r.v_hi) for r in env.action_ranges()]
            a = policy(st.vector(), ranges)
            res = env.step(a)
            st = res.state
            d = res.diagnostics
            rec.fallbacks += sum(d["fallback"])
            for i, L in enumerate(env.limits):
                if not (L.p_min - 1e-9 <= env.p_cmd[i] <= L.p_max + 1e-9):
                    rec.position_violations += 1
                if not d["v_lo"][i] <= d["v_cmd"][i] <= d["v_hi"][i]:
                    rec.range_violations += 1
            if record:
                rows.append({"step": env.steps, "state": st.vector(), "action": list(a),
                             "reward": res.reward, "done": res.done, "cause": res.cause or "",
                             **d})
        rec.cause, rec.steps = env.cause, env.steps
        return rec
    finally:
        env.cfg = cfg


def _with_steps(cfg: EpisodeConfig, steps: int) -> EpisodeConfig:
    from dataclasses import replace
    return replace(cfg, max_steps=steps)


# ---------------------------------------------------------------------------
# line protocol


def _response(**kw) -> dict:
    return {"version": PROTOCOL_VERSION, **kw}


def _jsonable(d: dict) -> dict:
    return {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in d.items()}


def handle_request(env: ReachingEnv, line: str) -> dict:
    """Process one protocol request and return the response object."""
    try:
        req = json.loads(line)
    except json.JSONDecodeError as exc:
        return _response(ok=False, error=f"malformed request: {exc.msg}")
    if not isinstance(req, dict) or "cmd" not in req:
        return _response(ok=False, error="request must be an object with a 'cmd' field")
    cmd = req["cmd"]
    if cmd == "info":
        return _response(ok=True, state_layout=state_layout(env.n),
                         state_dim=len(state_layout(env.n)), n_actions=env.n)
    if cmd == "reset":
        seed = req.get("seed", env.cfg.seed)
        if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
            return _response(ok=False, error="seed must be a non-negative integer")
        st = env.reset(seed)
        return _response(ok=True, state=st.vector().tolist(),
                         ranges=[[r.v_lo, r.v_hi] for r in env.action_ranges()])
    if cmd == "step":
        if env.done:
            return _response(ok=False, error="episode finished")
        act = req.get("action")
        if (not isinstance(act, list) or len(act) != env.n
                or not all(isinstance(a, (int, float)) and not isinstance(a, bool) for a in act)):
            return _response(ok=False, error=f"action must be a list of {env.n} numbers")
        try:
            res = env.step(act)
        except ValueError as exc:
            return _response(ok=False, error=str(exc))
        return _response(ok=True, state=res.state.vector().tolist(), reward=res.reward,
                         done=res.done, cause=res.cause,
                         ranges=[[r.v_lo, r.v_hi] for r in env.action_ranges()],
                         diagnostics=_jsonable(res.diagnostics))
    return _response(ok=False, error=f"unknown cmd {cmd!r}")


def serve(cfg: EpisodeConfig, instream: IO[str] = sys.stdin, outstream: IO[str] = sys.stdout) -> None:
    """JSON-lines session: one request per input line, one response per output line."""
    env = ReachingEnv(cfg)
    for line in instream:
        if not line.strip():
            continue
        outstream.write(json.dumps(handle_request(env, line)) + "\n")
        outstream.flush()
