import csv
import json
import math
import subprocess
import sys
from pathlib import Path

import pytest

from qladder import cli

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg), encoding="utf-8")
    return p


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def base(kind, M=4, **extra):
    cfg = {
        "geometry": {"M": M},
        "couplings": {"J_a": 4, "J_e": {"uniform": [4, 4.5]}, "omega": {"uniform": [0.5, 1.5]}},
        "kind": kind,
        "seed": 3,
    }
    cfg.update(extra)
    return cfg


# ---------------------------------------------------------------------------
# validation and exit codes
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.json")))
def test_shipped_configs_validate(name, capsys):
    assert cli.main(["validate", str(CONFIGS / name)]) == cli.EXIT_OK
    assert "config ok" in capsys.readouterr().out


@pytest.mark.parametrize(
    "mutate,pointer",
    [
        (lambda c: c["geometry"].update(bogus=1), "/geometry"),
        (lambda c: c.update(extra=True), ""),
        (lambda c: c["geometry"].update(M=11), "/geometry/M"),
        (lambda c: c.update(kind="movie"), "/kind"),
        (lambda c: c["couplings"].pop("J_e"), "/couplings"),
        (lambda c: c["couplings"].update(J_e={"uniform": [3, 1]}), "/couplings/J_e"),
        (lambda c: c.update(options={"q": 3}), "/options/q"),
        (lambda c: c.update(options={"q": "largest", "bins": 1}), "/options/bins"),
        (lambda c: c["geometry"].update(local_dim=3), "/geometry/local_dim"),
        (lambda c: c.update(seed=-1), "/seed"),
    ],
)
def test_config_errors_exit_2(tmp_path, capsys, mutate, pointer):
    cfg = base("spectrum")
    mutate(cfg)
    assert cli.main(["validate", str(write(tmp_path, cfg))]) == cli.EXIT_CONFIG
    err = capsys.readouterr().err
    assert f"config error at {pointer or '/'}" in err


def test_unreadable_and_malformed(tmp_path, capsys):
    assert cli.main(["run", str(tmp_path / "missing.json")]) == cli.EXIT_CONFIG
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    assert cli.main(["run", str(bad)]) == cli.EXIT_CONFIG
    assert "invalid JSON" in capsys.readouterr().err


def test_semantic_errors(tmp_path, capsys):
    cfg = base("quench", options={"initial": {"fock": "10|10|10|1x"}, "times": {"stop_ns": 10, "step_ns": 1}})
    assert cli.main(["validate", str(write(tmp_path, cfg))]) == cli.EXIT_CONFIG
    assert "/options/initial" in capsys.readouterr().err
    cfg = base("quench", options={"initial": "Pi", "times": {"stop_ns": 10, "step_ns": 1}, "subsystems": [[4, 5]]})
    assert cli.main(["validate", str(write(tmp_path, cfg))]) == cli.EXIT_CONFIG
    cfg = base("spectrum", model="experimental")
    cfg["geometry"]["local_dim"] = 3
    assert cli.main(["validate", str(write(tmp_path, cfg))]) == cli.EXIT_CONFIG
    assert "/kind" in capsys.readouterr().err


def test_bad_thread_env(tmp_path, monkeypatch):
    monkeypatch.setenv("SCAR_THREADS", "many")
    cfg = base("scars", output=str(tmp_path / "o"))
    assert cli.main(["run", str(write(tmp_path, cfg))]) == cli.EXIT_CONFIG


def test_numerical_failure_exit_3(tmp_path, capsys):
    cfg = base(
        "quench",
        options={
            "initial": "Pi",
            "times": {"stop_ns": 100, "step_ns": 50},
            "evolution": {"krylov_dim": 2, "tol": 1e-300, "method": "krylov"},
        },
        output=str(tmp_path / "o"),
    )
    assert cli.main(["run", str(write(tmp_path, cfg))]) == cli.EXIT_NUMERIC
    assert "numerical failure" in capsys.readouterr().err


def test_sector_cap_exit_3(tmp_path, capsys, monkeypatch):
    monkeypatch.setattr(cli.SP, "DEFAULT_CAP", 10)
    monkeypatch.setattr(cli.SP.diagonalize_sector, "__defaults__", (None, True, None, 10))
    cfg = base("spectrum", options={"q": 0}, output=str(tmp_path / "o"))
    assert cli.main(["run", str(write(tmp_path, cfg))]) == cli.EXIT_NUMERIC
    assert "charge" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# every kind runs and writes its files
# ---------------------------------------------------------------------------


def test_quench_outputs(tmp_path):
    cfg = base("quench", M=3, options={"initial": "Pi", "times": {"stop_ns": 100, "step_ns": 10}})
    cfg["couplings"] = {"J_a": -6, "J_e": -2}
    out = tmp_path / "q"
    assert cli.main(["run", str(write(tmp_path, cfg)), "--out", str(out), "--serial"]) == 0
    rows = read_csv(out / "quench.csv")
    assert list(rows[0]) == ["realization", "t_ns", "imbalance", "loschmidt", "sqrtF_rungs_1_2", "S_rungs_1_2"]
    assert len(rows) == 11 and float(rows[0]["loschmidt"]) == 1.0
    # period 1/(2|J_a|) = 83.3 ns: fidelity near 1 only around the revival
    f = {float(r["t_ns"]): float(r["loschmidt"]) for r in rows}
    assert f[80.0] > 0.9 and f[40.0] < 0.1
    raw = (out / "quench.csv").read_bytes()
    assert raw.count(b"\r\n") == 12
    m = json.loads((out / "manifest.json").read_text())
    assert m["engine"] == "qladder" and m["version"] == cli.engine_version()
    assert m["outputs"] == ["quench.csv"] and m["mode"] == "serial" and m["wall_time_s"] > 0
    assert m["config"]["options"]["evolution"]["krylov_dim"] == 30


def test_spectrum_outputs(tmp_path):
    cfg = base("spectrum", M=6, realizations=2, output=str(tmp_path / "s"))
    assert cli.main(["run", str(write(tmp_path, cfg)), "--serial"]) == 0
    rows = read_csv(tmp_path / "s" / "rstats.csv")
    assert [int(r["realization"]) for r in rows] == [0, 1]
    assert all(0.3 < float(r["mean_r"]) < 0.7 for r in rows)
    hist = read_csv(tmp_path / "s" / "spacing_histogram.csv")
    assert len(hist) == 40 and float(hist[0]["wigner_surmise"]) > 0
    m = json.loads((tmp_path / "s" / "manifest.json").read_text())
    assert set(m["summary"]) >= {"ensemble_mean_r", "chi2", "dof", "p_value", "mode"}
    assert len(m["realizations"]) == 2 and "sub_seeds" in m["realizations"][0]


def test_scars_outputs(tmp_path):
    cfg = base("scars", M=5, realizations=2, options={"overlaps_with": ["Pi", "phi_L"]}, output=str(tmp_path / "sc"))
    assert cli.main(["run", str(write(tmp_path, cfg))]) == 0
    rows = read_csv(tmp_path / "sc" / "scars.csv")
    assert len(rows) == 2 * (6 + 4)
    assert max(float(r["residual"]) for r in rows) < 1e-10
    fam1 = [r for r in rows if r["family"] == "1" and r["realization"] == "0"]
    assert sum(float(r["overlap_Pi"]) for r in fam1) == pytest.approx(1.0, abs=1e-12)
    assert all(float(r["overlap_phi_L"]) < 1e-20 for r in fam1)


def test_range2_scars(tmp_path):
    cfg = json.loads((CONFIGS / "range2.json").read_text())
    cfg["geometry"]["M"] = 4
    cfg["output"] = str(tmp_path / "r2")
    assert cli.main(["run", str(write(tmp_path, cfg))]) == 0
    rows = read_csv(tmp_path / "r2" / "scars.csv")
    assert [r["family"] for r in rows] == ["I", "I_T", "I_S", "I2_T", "I2_S"]
    for r in rows:
        assert float(r["residual"]) < 1e-10
        assert abs(float(r["energy"]) - float(r["expected_energy"])) < 1e-10


def test_entanglement_outputs(tmp_path):
    cfg = base("entanglement", M=4, output=str(tmp_path / "e"))
    assert cli.main(["run", str(write(tmp_path, cfg))]) == 0
    rows = read_csv(tmp_path / "e" / "entropy.csv")
    assert len(rows) == math.comb(8, 4)
    assert {int(r["q"]) for r in rows} == {-4, -2, 0, 2, 4}
    assert all(float(r["entropy"]) >= 0 for r in rows)


def test_sweep_outputs(tmp_path):
    cfg = base("sweep", M=4, options={"delta1": [0, 4]}, output=str(tmp_path / "w"))
    assert cli.main(["run", str(write(tmp_path, cfg))]) == 0
    rows = read_csv(tmp_path / "w" / "revival.csv")
    assert [float(r["delta1"]) for r in rows] == [0.0, 4.0]
    T = 1e3 / 8
    assert all(T / 2 <= float(r["t_peak_ns"]) <= 1.5 * T for r in rows)
    assert float(rows[1]["fidelity"]) > float(rows[0]["fidelity"])


def test_experimental_quench(tmp_path):
    cfg = {
        "geometry": {"M": 3, "local_dim": 3},
        "model": "experimental",
        "couplings": {"J_a": -6, "J_e": -2},
        "perturbations": {},
        "kind": "quench",
        "options": {"initial": "Pi", "times": {"stop_ns": 50, "step_ns": 5}},
        "output": str(tmp_path / "x"),
    }
    assert cli.main(["run", str(write(tmp_path, cfg))]) == 0
    m = json.loads((tmp_path / "x" / "manifest.json").read_text())
    assert m["realizations"][0]["J_x"] == [0.19, 0.10, 0.30, 0.34]
    assert m["config"]["perturbations"]["eta"] == -175.0


# ---------------------------------------------------------------------------
# determinism
# ---------------------------------------------------------------------------


def test_byte_identical_reruns_and_manifest_rerun(tmp_path):
    cfg = base("scars", M=4, realizations=3, options={"overlaps_with": ["phi_J"]})
    p = write(tmp_path, cfg)
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert cli.main(["run", str(p), "--serial", "--out", str(a)]) == 0
    assert cli.main(["run", str(p), "--serial", "--out", str(b)]) == 0
    assert (a / "scars.csv").read_bytes() == (b / "scars.csv").read_bytes()
    # the manifest alone reproduces the run
    assert cli.main(["run", str(a / "manifest.json"), "--serial", "--out", str(c)]) == 0
    assert (a / "scars.csv").read_bytes() == (c / "scars.csv").read_bytes()


def test_seed_override_changes_draws(tmp_path):
    cfg = base("scars", M=3)
    p = write(tmp_path, cfg)
    assert cli.main(["run", str(p), "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["run", str(p), "--out", str(tmp_path / "b"), "--seed-override", "99"]) == 0
    ma = json.loads((tmp_path / "a" / "manifest.json").read_text())
    mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert mb["seed"] == 99 and ma["realizations"][0]["J_e"] != mb["realizations"][0]["J_e"]


def test_pool_matches_serial(tmp_path):
    cfg = base("spectrum", M=5, realizations=3)
    p = write(tmp_path, cfg)
    assert cli.main(["run", str(p), "--serial", "--out", str(tmp_path / "s")]) == 0
    assert cli.main(["run", str(p), "--threads", "2", "--out", str(tmp_path / "p")]) == 0
    assert (tmp_path / "s" / "rstats.csv").read_bytes() == (tmp_path / "p" / "rstats.csv").read_bytes()
    assert json.loads((tmp_path / "p" / "manifest.json").read_text())["mode"] == "pool:2"


def test_console_script(tmp_path):
    r = subprocess.run([sys.executable, "-m", "qladder.cli", "validate", str(CONFIGS / "scars.json")], capture_output=True, text=True)
    assert r.returncode == 0 and "config ok" in r.stdout
    r = subprocess.run([sys.executable, "-m", "qladder.cli", "validate", str(tmp_path / "nope.json")], capture_output=True, text=True)
    assert r.returncode == 2
