"""Command-line front end.

Exit codes: 0 ok, 2 config or input error, 3 I/O error, 4 simulation fault,
5 safety violation detected.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, load_config, load_limits
from .control import (ControllerState, PlantParams, PlantState,
                      SimulationFault, track_trajectory)
from .env import (ReachingEnv, make_policy, run_episode, serve, state_layout,
                  zone_table_for)
from .io import (StaleTableError, open_out, read_trajectory_csv, read_zone_csv,
                 round_samples, write_episode_rows, write_tracking_csv,
                 write_trajectory_csv, write_zone_csv)
from .jbtg import (DomainError, plan_step, reaching_profile, sample_trajectory,
                   validate_samples, validate_trajectory)
from .safety import braking_profile, build_zone_table, safety_rollout

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_FAULT, EXIT_SAFETY = 0, 2, 3, 4, 5


class CliError(Exception):
    def __init__(self, msg: str, code: int):
        super().__init__(msg)
        self.code = code


def _emit(obj: dict) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def _report_dict(rep) -> dict:
    d = rep.summary()
    d["ok"] = rep.ok
    return d


def _write(path, writer, *args) -> None:
    try:
        with open_out(path) as fh:
            writer(fh, *args)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc.strerror}", EXIT_IO) from None


def cmd_plan(args) -> int:
    limits = load_limits(args.config)
    p0 = args.p0 if args.p0 is not None else (limits.p_min + limits.p_max) / 2
    try:
        traj = plan_step(p0, args.v1, args.v2, limits, args.dt)
    except DomainError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from None
    samples = round_samples(sample_trajectory(traj, args.rate))
    if args.out:
        _write(args.out, write_trajectory_csv, samples)
    exact = validate_trajectory(traj, limits)
    _emit({"achieved_v2": traj.achieved_v2, "requested_v2": args.v2, "case": traj.case,
           "segments": len(traj.segments), "displacement": traj.displacement,
           "max_abs_a": exact.max_abs_a, "max_abs_j": exact.max_abs_j,
           "samples": len(samples), "report": _report_dict(validate_samples(samples, limits))})
    return EXIT_OK


def cmd_zone(args) -> int:
    limits = load_limits(args.config)
    if args.resolution >= limits.p_max - limits.p_min or not args.resolution > 0:
        raise CliError(f"resolution {args.resolution} must be positive and finer than the "
                       "joint range", EXIT_CONFIG)
    table = build_zone_table(limits, args.resolution, step_dt=args.step_dt)
    _write(args.out, write_zone_csv, table)
    _emit({"entries": len(table.upper_caps) + len(table.lower_caps),
           "full_speed_braking_distance": braking_profile(limits.v_max, limits).distance,
           "step_dt": args.step_dt, "limits_hash": table.fingerprint(), "out": str(args.out)})
    return EXIT_OK


def _load_zone(path, limits, resolution, step_dt):
    """Zone table from ``path`` if it is current, otherwise rebuilt (and rewritten)."""
    built = zone_table_for(limits, resolution, step_dt)
    if path is None:
        return built
    p = Path(path)
    if p.exists():
        try:
            with open(p) as fh:
                table = read_zone_csv(fh, limits)
            if table.fingerprint() == built.fingerprint():
                return table
        except (StaleTableError, ValueError, KeyError):
            pass
        print(f"zone table {p} is stale; regenerating", file=sys.stderr)
    _write(p, write_zone_csv, built)
    return built


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    if args.policy == "protocol":
        serve(cfg)
        return EXIT_OK
    seeds = [args.seed + k for k in range(args.episodes)]
    if args.kinematic:
        return _simulate_kinematic(args, cfg, seeds)
    env = ReachingEnv(cfg)
    if args.zone:
        env.tables = [_load_zone(args.zone, L, cfg.zone_resolution, cfg.rates.dt)
                      for L in env.limits]
    fh = None
    if args.out:
        try:
            fh = open_out(args.out)
        except OSError as exc:
            raise CliError(f"cannot write {args.out}: {exc.strerror}", EXIT_IO) from None
    summary = {"episodes": 0, "reached": 0, "steps": 0, "position_violations": 0,
               "range_violations": 0, "fallbacks": 0, "causes": {}}
    try:
        for k, seed in enumerate(seeds):
            rng = np.random.default_rng(seed)
            policy = make_policy(args.policy, cfg, rng)
            rec = run_episode(env, policy, seed, max_steps=args.steps, record=fh is not None)
            if fh is not None:
                write_episode_rows(fh, env.n, state_layout(env.n), seed, rec.rows, header=k == 0)
            summary["episodes"] += 1
            summary["reached"] += rec.reached
            summary["steps"] += rec.steps
            summary["position_violations"] += rec.position_violations
            summary["range_violations"] += rec.range_violations
            summary["fallbacks"] += rec.fallbacks
            summary["causes"][rec.cause] = summary["causes"].get(rec.cause, 0) + 1
            if rec.cause == "fault":
                fault = rec.rows[-1].get("fault", "") if rec.rows else ""
                _emit(summary)
                raise CliError(f"simulation fault in episode seed {seed} at step {rec.steps}: "
                               f"{fault}", EXIT_FAULT)
    finally:
        if fh is not None:
            fh.close()
    _emit(summary)
    if summary["position_violations"] or summary["range_violations"]:
        return EXIT_SAFETY
    return EXIT_OK


def _simulate_kinematic(args, cfg, seeds) -> int:
    """Planning-only rollout per joint, for long adversarial runs."""
    if args.policy not in ("max", "min", "zero", "random"):
        raise CliError("--kinematic supports the max, min, zero and random policies", EXIT_CONFIG)
    const = {"max": 1.0, "min": -1.0, "zero": 0.0}
    steps = args.steps or cfg.max_steps
    out = {"episodes": 0, "steps": 0, "position_violations": 0, "range_violations": 0,
           "fallbacks": 0, "p_lo": [], "p_hi": []}
    for seed in seeds:
        rng = np.random.default_rng(seed)
        for i, j in enumerate(cfg.joints):
            L = j.limits
            table = zone_table_for(L, cfg.zone_resolution, cfg.rates.dt)
            policy = const.get(args.policy) if args.policy != "random" else \
                (lambda p, v, g: float(g.uniform(-1.0, 1.0)))
            rep = safety_rollout(L, table, cfg.rates.dt, policy, steps,
                                 float(rng.uniform(L.p_min, L.p_max)), seed=seed * 1000 + i)
            out["steps"] += rep.steps
            out["position_violations"] += rep.position_violations
            out["range_violations"] += rep.range_violations
            out["fallbacks"] += rep.fallbacks
            out["p_lo"].append(rep.p_lo)
            out["p_hi"].append(rep.p_hi)
        out["episodes"] += 1
    out["p_lo"], out["p_hi"] = min(out["p_lo"]), max(out["p_hi"])
    _emit(out)
    return EXIT_SAFETY if out["position_violations"] or out["range_violations"] else EXIT_OK


def cmd_track(args) -> int:
    cfg = load_config(args.config)
    joint = cfg.joints[0]
    L = joint.limits
    p0 = args.p0 if args.p0 is not None else L.p_min + 0.02
    p1 = args.p1 if args.p1 is not None else L.p_max - 0.02
    if not (L.p_min <= p0 <= L.p_max and L.p_min <= p1 <= L.p_max):
        raise CliError("start and goal must lie within the joint limits", EXIT_CONFIG)
    traj = reaching_profile(p0, p1, L, cfg.rates.dt, args.duration)
    plant = PlantParams() if args.nominal else joint.plant
    try:
        log = track_trajectory(traj, PlantState(p0, 0.0), ControllerState(), joint.gains, plant,
                               rate=cfg.rates.controller, ref_rate=cfg.rates.planner)
    except SimulationFault as exc:
        raise CliError(str(exc), EXIT_FAULT) from None
    if args.out:
        _write(args.out, write_tracking_csv, log.data)
    _emit({"samples": len(log), "max_abs_e1": float(np.abs(log.e1).max()),
           "max_abs_e2": float(np.abs(log.e2).max()), "max_phi1": float(log.phi1.max()),
           "max_phi2": float(log.phi2.max()), "final_chi1": log.final_state.chi1})
    return EXIT_OK


def cmd_check(args) -> int:
    limits = load_limits(args.config)
    try:
        with open(args.csv) as fh:
            samples = read_trajectory_csv(fh)
    except OSError as exc:
        raise CliError(f"cannot read {args.csv}: {exc.strerror}", EXIT_IO) from None
    except ValueError as exc:
        raise CliError(f"{args.csv}: {exc}", EXIT_CONFIG) from None
    rep = validate_samples(samples, limits)
    _emit({"samples": len(samples), "report": _report_dict(rep)})
    return EXIT_OK if rep.ok else EXIT_SAFETY


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config (resolved against $JBRL_CONFIG_DIR "
                                         "when not found as given)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help="output file")

    ap = argparse.ArgumentParser(prog="jbrl", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--version", action="version", version=f"jbrl {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", parents=[common], help="plan one step and write t,p,v,a,j CSV")
    p.add_argument("--v1", type=float, required=True)
    p.add_argument("--v2", type=float, required=True)
    p.add_argument("--dt", type=float, default=0.05)
    p.add_argument("--p0", type=float)
    p.add_argument("--rate", type=float, default=1000.0, help="sample rate in Hz")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("zone", parents=[common], help="build a safe velocity zone table")
    p.add_argument("--resolution", type=float, default=5e-4)
    p.add_argument("--step-dt", type=float, default=None,
                   help="agent step for the step-aware table (default: single brake)")
    p.set_defaults(func=cmd_zone)

    p = sub.add_parser("simulate", parents=[common], help="run reaching episodes")
    p.add_argument("--policy", default="proportional",
                   choices=["max", "min", "zero", "proportional", "random", "protocol"])
    p.add_argument("--episodes", type=int, default=1)
    p.add_argument("--steps", type=int, default=None, help="override max steps per episode")
    p.add_argument("--zone", help="zone table CSV to reuse (regenerated when stale)")
    p.add_argument("--kinematic", action="store_true",
                   help="planning only, no controller (fast adversarial runs)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("track", parents=[common], help="track one reaching profile")
    p.add_argument("--p0", type=float)
    p.add_argument("--p1", type=float)
    p.add_argument("--duration", type=float, default=15.0)
    p.add_argument("--nominal", action="store_true", help="disable disturbances")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("check", parents=[common], help="validate a trajectory CSV")
    p.add_argument("csv")
    p.set_defaults(func=cmd_check)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"jbrl {args.command}: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"jbrl {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationFault as exc:
        print(f"jbrl {args.command}: simulation fault at step {exc.index}: {exc}", file=sys.stderr)
        return EXIT_FAULT


if __name__ == "__main__":
    sys.exit(main())
