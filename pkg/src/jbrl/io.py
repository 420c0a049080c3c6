"""CSV readers and writers for trajectories, zone tables and logs."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import IO, Iterable, Sequence

import numpy as np

from .control import LOG_FIELDS
from .jbtg import ControlPoint, JointLimits
from .safety import SafeZoneTable, table_fingerprint

TRAJ_FIELDS = ("t", "p", "v", "a", "j")


def fmt(x: float) -> str:
    return f"{x:.9g}"


def write_trajectory_csv(fh: IO[str], samples: Iterable[ControlPoint]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(TRAJ_FIELDS)
    for s in samples:
        w.writerow([fmt(s.t), fmt(s.p), fmt(s.v), fmt(s.a), fmt(s.j)])


def read_trajectory_csv(fh: IO[str]) -> list[ControlPoint]:
    r = csv.reader(fh)
    header = next(r, None)
    if header is None or tuple(h.strip() for h in header) != TRAJ_FIELDS:
        raise ValueError(f"expected header {','.join(TRAJ_FIELDS)}, got {header}")
    out = []
    for lineno, row in enumerate(r, start=2):
        if not row:
            continue
        if len(row) != 5:
            raise ValueError(f"line {lineno}: expected 5 columns, got {len(row)}")
        try:
            out.append(ControlPoint(*(float(x) for x in row)))
        except ValueError:
            raise ValueError(f"line {lineno}: non-numeric value") from None
    return out


def round_samples(samples: Sequence[ControlPoint]) -> list[ControlPoint]:
    """Samples as they will read back from :func:`write_trajectory_csv`."""
    return [ControlPoint(*(float(fmt(x)) for x in (s.t, s.p, s.v, s.a, s.j))) for s in samples]


def write_zone_csv(fh: IO[str], table: SafeZoneTable) -> None:
    fh.write("# " + json.dumps(table.header(), sort_keys=True) + "\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(("direction", "distance_m", "v_cap_mps"))
    for name, caps in (("upper", table.upper_caps), ("lower", table.lower_caps)):
        for d, v in caps:
            w.writerow((name, repr(d), repr(v)))


class StaleTableError(ValueError):
    """Zone table header does not match the requested limits or settings."""


def read_zone_csv(fh: IO[str], limits: JointLimits | None = None) -> SafeZoneTable:
    first = fh.readline()
    if not first.startswith("# "):
        raise ValueError("zone table is missing its JSON header")
    header = json.loads(first[2:])
    lim = JointLimits.from_dict(header["limits"])
    expect = table_fingerprint(lim, header["resolution"], header["v_step"], header["step_dt"])
    if header.get("limits_hash") != expect:
        raise StaleTableError("zone table header hash does not match its contents")
    if limits is not None and lim != limits:
        raise StaleTableError("zone table was built for different joint limits")
    r = csv.reader(fh)
    next(r)
    caps: dict[str, list] = {"upper": [], "lower": []}
    for row in r:
        if row:
            caps[row[0]].append((float(row[1]), float(row[2])))
    return SafeZoneTable(lim, header["resolution"], tuple(caps["upper"]), tuple(caps["lower"]),
                         header["v_step"], header["step_dt"])


def write_tracking_csv(fh: IO[str], data: np.ndarray) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(LOG_FIELDS)
    for row in data:
        w.writerow([repr(float(x)) for x in row])


def episode_columns(n: int, state_names: Sequence[str]) -> list[str]:
    cols = ["episode_seed", "step"] + list(state_names)
    for key in ("action", "v_lo", "v_hi", "v_cmd", "achieved_v2", "max_e1"):
        cols += [f"{key}{i}" for i in range(n)]
    return cols + ["held_max_e1", "fallback", "reward", "done", "cause"]


def write_episode_rows(fh: IO[str], n: int, state_names: Sequence[str], seed: int,
                       rows: Iterable[dict], header: bool = True) -> None:
    w = csv.writer(fh, lineterminator="\n")
    if header:
        w.writerow(episode_columns(n, state_names))
    for r in rows:
        out = [seed, r["step"]] + [repr(float(x)) for x in r["state"]]
        for key in ("action", "v_lo", "v_hi", "v_cmd", "achieved_v2", "max_e1"):
            vals = r.get(key, [float("nan")] * n)
            out += [repr(float(x)) for x in vals]
        out += [repr(float(r.get("held_max_e1", float("nan")))), int(any(r["fallback"])),
                repr(float(r["reward"])), int(r["done"]), r["cause"]]
        w.writerow(out)


def open_out(path: str | Path | None, mode: str = "w"):
    """Open ``path`` for writing, creating parent directories."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    return open(p, mode, newline="")
