import json
import os

import pytest

from jbrl.cli import main
from jbrl.config import default_config
from jbrl.jbtg import PAPER_LIMITS


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def summary(out):
    return json.loads(out)


def test_plan_reduced_target(tmp_path, capsys):
    csv = tmp_path / "plan.csv"
    code, out, _ = run(capsys, "plan", "--v1", "0", "--v2", "0.15", "--dt", "0.05",
                       "--out", str(csv))
    assert code == 0
    s = summary(out)
    assert s["achieved_v2"] == pytest.approx(0.034292, abs=1e-6)
    assert s["samples"] == 51 and s["report"]["ok"]
    assert s["max_abs_j"] <= PAPER_LIMITS.j_max
    lines = csv.read_text().splitlines()
    assert lines[0] == "t,p,v,a,j" and len(lines) == 52


def test_plan_cruise(capsys):
    code, out, _ = run(capsys, "plan", "--v1", "0.1", "--v2", "0.1", "--dt", "0.05")
    s = summary(out)
    assert code == 0 and s["segments"] == 1 and s["max_abs_j"] == 0.0


def test_plan_domain_error(capsys):
    code, _, err = run(capsys, "plan", "--v1", "0.5", "--v2", "0.0")
    assert code == 2 and err


def test_malformed_config(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{ nope")
    for cmd in (["plan", "--v1", "0", "--v2", "0.1"], ["simulate"], ["zone"]):
        code, _, err = run(capsys, *cmd, "--config", str(bad))
        assert code == 2 and "malformed" in err
    bad.write_text(json.dumps({"p_min": 0.5, "p_max": 0.1, "v_max": 1, "a_max": 1, "j_max": 1}))
    code, _, _ = run(capsys, "zone", "--config", str(bad))
    assert code == 2


def test_config_dir_env(tmp_path, capsys, monkeypatch):
    (tmp_path / "lim.json").write_text(json.dumps(PAPER_LIMITS.to_dict()))
    monkeypatch.setenv("JBRL_CONFIG_DIR", str(tmp_path))
    monkeypatch.chdir(tmp_path.parent)
    code, out, _ = run(capsys, "plan", "--v1", "0", "--v2", "0.15", "--config", "lim.json")
    assert code == 0
    code, _, _ = run(capsys, "plan", "--v1", "0", "--v2", "0.15", "--config", "missing.json")
    assert code == 2


def test_zone_summary_and_rerun(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    code, out, _ = run(capsys, "zone", "--out", str(a))
    assert code == 0
    assert summary(out)["full_speed_braking_distance"] == pytest.approx(1.2428e-2, abs=1e-6)
    run(capsys, "zone", "--out", str(b))
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().startswith("# ")


def test_zone_errors(tmp_path, capsys):
    code, _, _ = run(capsys, "zone", "--resolution", "0.5", "--out", str(tmp_path / "z.csv"))
    assert code == 2
    blocker = tmp_path / "file"
    blocker.write_text("")
    code, _, err = run(capsys, "zone", "--out", str(blocker / "z.csv"))
    assert code == 3 and "cannot write" in err
    if os.geteuid() != 0:
        ro = tmp_path / "ro"
        ro.mkdir()
        ro.chmod(0o500)
        code, _, _ = run(capsys, "zone", "--out", str(ro / "z.csv"))
        assert code == 3


def test_simulate_max_is_safe(tmp_path, capsys):
    log = tmp_path / "ep.csv"
    code, out, _ = run(capsys, "simulate", "--policy", "max", "--steps", "200",
                       "--out", str(log))
    s = summary(out)
    assert code == 0 and s["position_violations"] == 0 and s["range_violations"] == 0
    header = log.read_text().splitlines()[0].split(",")
    assert {"v_lo0", "v_hi0", "v_cmd0", "max_e10"} <= set(header)


def test_simulate_kinematic_long(capsys):
    code, out, _ = run(capsys, "simulate", "--policy", "max", "--kinematic", "--steps", "100000")
    s = summary(out)
    assert code == 0 and s["position_violations"] == 0
    assert s["p_hi"] <= PAPER_LIMITS.p_max


def test_simulate_zero_holds(tmp_path, capsys):
    log = tmp_path / "z.csv"
    code, _, _ = run(capsys, "simulate", "--policy", "zero", "--steps", "30", "--out", str(log))
    assert code == 0
    rows = log.read_text().splitlines()
    cols = rows[0].split(",")
    idx = [cols.index(f"v_cmd{i}") for i in range(3)]
    for line in rows[1:]:
        vals = line.split(",")
        assert all(abs(float(vals[i])) < 1e-12 for i in idx)


def test_simulate_proportional_reaches(capsys):
    code, out, _ = run(capsys, "simulate", "--policy", "proportional", "--episodes", "3")
    s = summary(out)
    assert code == 0 and s["reached"] == 3


def test_simulate_zone_reuse_and_stale(tmp_path, capsys):
    z = tmp_path / "zone.csv"
    run(capsys, "simulate", "--policy", "zero", "--steps", "2", "--zone", str(z))
    first = z.read_bytes()
    code, _, err = run(capsys, "simulate", "--policy", "zero", "--steps", "2", "--zone", str(z))
    assert code == 0 and "stale" not in err
    z.write_text(first.decode().replace('"v_max": 0.15', '"v_max": 0.2'))
    code, _, err = run(capsys, "simulate", "--policy", "zero", "--steps", "2", "--zone", str(z))
    assert code == 0 and "stale" in err
    assert z.read_bytes() == first


def test_simulate_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        run(capsys, "simulate", "--policy", "random", "--steps", "40", "--episodes", "2",
            "--seed", "9", "--out", str(p))
    assert a.read_bytes() == b.read_bytes()


def test_simulate_fault_exit(tmp_path, capsys):
    d = default_config().to_dict()
    for j in d["joints"]:
        j["gains"] = {"k1": 1e9, "k5": 1e9}
    cfg = tmp_path / "wild.json"
    cfg.write_text(json.dumps(d))
    code, _, err = run(capsys, "simulate", "--policy", "max", "--config", str(cfg))
    assert code == 4 and "step" in err


def test_track(tmp_path, capsys):
    log = tmp_path / "track.csv"
    code, out, _ = run(capsys, "track", "--duration", "3", "--nominal", "--out", str(log))
    s = summary(out)
    assert code == 0 and s["samples"] == 6000 and s["max_abs_e1"] < 1e-4
    assert log.read_text().splitlines()[0].startswith("t,x_r")
    code, _, _ = run(capsys, "track", "--p0", "0.9")
    assert code == 2


def test_check_round_trip(tmp_path, capsys):
    csv = tmp_path / "p.csv"
    _, out, _ = run(capsys, "plan", "--v1", "-0.05", "--v2", "0.12", "--out", str(csv))
    code, out2, _ = run(capsys, "check", str(csv))
    assert code == 0
    assert summary(out2)["report"] == summary(out)["report"]
    csv.write_text(csv.read_text().replace("\n0.05,", "\n0.05,").rstrip() + "\n0.051,9,9,9,9999\n")
    code, out3, _ = run(capsys, "check", str(csv))
    assert code == 5 and not summary(out3)["report"]["ok"]
    code, _, _ = run(capsys, "check", str(tmp_path / "absent.csv"))
    assert code == 3
