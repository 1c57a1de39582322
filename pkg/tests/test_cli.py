import csv
import json
import subprocess
import sys

import pytest

from plasma2d import __version__
from plasma2d.cli import main
from plasma2d.io import config_hash, csv_text, read_csv_rows


def run(tmp_path, *args, out="out"):
    d = tmp_path / out
    return main([*args, "--out", str(d)]), d


def data_rows(path):
    return [r for r in csv.reader(l for l in path.read_text().splitlines() if not l.startswith("#"))]


def test_version_flag():
    res = subprocess.run([sys.executable, "-m", "plasma2d", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip() == __version__


def test_unknown_subcommand_exits_2():
    with pytest.raises(SystemExit) as e:
        main(["nonsense"])
    assert e.value.code == 2


def test_energy_check_points_file(tmp_path):
    pts = tmp_path / "pts.csv"
    pts.write_text("sign,x,y\n+1,0.25,0.5\n-1,0.75,0.5\n")
    code, d = run(tmp_path, "energy-check", "--points", str(pts))
    assert code == 0
    res = json.loads((d / "energy_check.json").read_text())
    r = res["results"][0]
    assert r["passes"] and abs(r["field_quad"] - 1.3862943611198906) < 1e-3
    man = json.loads((d / "manifest.json").read_text())
    assert man["outputs"] == ["energy_check.json"] and man["version"] == __version__
    assert res["meta"]["config_hash"] == man["config_hash"]
    assert (d / "timing_energy-check.json").exists()


def test_energy_check_usage_errors(tmp_path, capsys):
    assert run(tmp_path, "energy-check")[0] == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("sign,x,y\n+1,0.5,0.5\n-1,0.5,0.5\n")
    assert run(tmp_path, "energy-check", "--points", str(bad))[0] == 2
    assert "error" in capsys.readouterr().err


def test_sample_outputs_and_determinism(tmp_path):
    args = ["sample", "--N", "3", "--beta", "1.0", "--n-samples", "20", "--burn-in", "100",
            "--thin", "10", "--seed", "4"]
    c1, d1 = run(tmp_path, *args, out="a")
    c2, d2 = run(tmp_path, *args, "--workers", "2", out="b")
    assert c1 == c2 == 0
    assert (d1 / "trace.csv").read_text() == (d2 / "trace.csv").read_text()
    rows = data_rows(d1 / "trace.csv")
    assert rows[0] == ["step", "W_N", "tv_plus_k4", "tv_minus_k4"] and len(rows) == 21
    acc = json.loads((d1 / "acceptance.json").read_text())["acceptance"]
    assert set(acc) == {"single", "dipole", "resample"}


def test_sample_rejects_unstable_beta(tmp_path, capsys):
    assert run(tmp_path, "sample", "--beta", "2.5")[0] == 2
    assert "β < 2" in capsys.readouterr().err


def test_zn_prints_and_appends_ledger(tmp_path, capsys):
    code, d = run(tmp_path, "zn", "--N", "1", "--beta", "0.5", "--n-samples", "20000")
    assert code == 0
    printed = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert abs(printed["log_Z"] - 0.2145) < 0.02
    run(tmp_path, "zn", "--N", "1", "--beta", "0.0", "--n-samples", "100")
    rows = read_csv_rows(d / "zn_ledger.csv")
    assert len(rows) == 2 and float(rows[1]["log_Z"]) == 0.0


def test_zn_direct_regime_error(tmp_path):
    assert run(tmp_path, "zn", "--N", "2", "--beta", "1.5", "--method", "direct")[0] == 2


def test_zn_dipole_mode(tmp_path, capsys):
    code, d = run(tmp_path, "zn", "--N", "1", "--beta", "1.0", "--n-samples", "20000", "--dipole", "1")
    assert code == 0
    assert json.loads((d / "zn.json").read_text())["estimate"]["quantity"] == "dipole_integral"


def test_digraph_enumeration_table(tmp_path):
    code, d = run(tmp_path, "digraph", "--enumerate", "1", "--M", "4,5")
    assert code == 0
    rows = data_rows(d / "digraph_counts.csv")
    assert rows[0] == ["M", "K", "exact", "bound", "ratio"]
    assert rows[1][:3] == ["4", "1", "48"] and float(rows[1][4]) == 0.5
    assert rows[2][:3] == ["4", "2", "3"]


def test_digraph_enumeration_budget(tmp_path, capsys):
    assert run(tmp_path, "digraph", "--enumerate", "1", "--M", "11")[0] == 2
    assert "enumeration budget exceeded" in capsys.readouterr().err


def test_digraph_sweep(tmp_path):
    code, d = run(tmp_path, "digraph", "--M", "5,9", "--n-configs", "50")
    assert code == 0
    rows = data_rows(d / "digraph_sweep.csv")[1:]
    assert len(rows) == 50 and all(r[-1] == "0" for r in rows)


def test_profile_iid(tmp_path):
    code, d = run(tmp_path, "profile", "--N", "16", "--iid", "1", "--n-samples", "20",
                  "--n-tags", "4", "--R", "1,2")
    assert code == 0
    rows = data_rows(d / "profile.csv")
    assert len(rows) == 3 and rows[1][0] == "1.0"


def test_gmc_and_tail_pipeline(tmp_path):
    code, d = run(tmp_path, "gmc", "--beta", "0.7", "--grid-n", "8", "--n-draws", "200", "--k", "1,2")
    assert code == 0
    code, d2 = run(tmp_path, "tail", "--table", str(d / "moments.csv"), "--x", "3,5", out="t")
    assert code == 0
    rows = data_rows(d2 / "tail.csv")
    assert rows[0] == ["x", "k_star", "log_prob_bound"] and len(rows) == 3


def test_gmc_beta_range(tmp_path, capsys):
    assert run(tmp_path, "gmc", "--beta", "1.5")[0] == 2
    assert "β² < 2" in capsys.readouterr().err


def test_tail_synthetic_example(tmp_path):
    code, d = run(tmp_path, "tail", "--synthetic", "klogk", "--x", "2.718281828459045")
    assert code == 0
    x, k, b = data_rows(d / "tail.csv")[1]
    assert k == "3" and abs(float(b) + 2.704163133) < 1e-8


def test_tail_usage_errors(tmp_path):
    assert run(tmp_path, "tail")[0] == 2
    assert run(tmp_path, "tail", "--synthetic", "klogk", "--x", "-1")[0] == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("k,log_moment\n1,0.5\n")
    assert run(tmp_path, "tail", "--table", str(bad))[0] == 2


def test_ini_config_and_flag_override(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[common]\nseed = 7\n\n[tail]\nsynthetic = klogk\nk_max = 4\nx = 2,3\n")
    code, d = run(tmp_path, "tail", "--config", str(ini), "--x", "5")
    assert code == 0
    man = json.loads((d / "manifest.json").read_text())
    assert man["config"]["seed"] == 7 and man["config"]["k_max"] == 4 and man["config"]["x"] == "5"
    ini.write_text("[tail]\nbogus = 1\n")
    assert run(tmp_path, "tail", "--config", str(ini))[0] == 2


def test_manifest_replay_reproduces_outputs(tmp_path):
    code, d = run(tmp_path, "zn", "--N", "2", "--beta", "0.8", "--n-samples", "5000", "--seed", "3")
    assert code == 0
    first = json.loads((d / "zn.json").read_text())
    code, d2 = run(tmp_path, "zn", "--config", str(d / "manifest.json"), out="replay")
    assert code == 0
    assert json.loads((d2 / "zn.json").read_text()) == first
    assert run(tmp_path, "tail", "--config", str(d / "manifest.json"))[0] == 2


def test_config_hash_ignores_location_and_workers():
    a = {"seed": 1, "N": 2, "out": "x", "workers": 1}
    assert config_hash(a) == config_hash({**a, "out": "y", "workers": 8})
    assert config_hash(a) != config_hash({**a, "seed": 2})


def test_csv_text_meta_lines():
    text = csv_text(["a"], [[0.1]], {"seed": 3})
    assert text.splitlines() == ["# seed=3", "a", "0.1"]
