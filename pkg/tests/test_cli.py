import json
import math

import pytest

from collision_chords import cli
from collision_chords.flow import StepFailure
from collision_chords.tables import read_table


def run(tmp_path, *args, name="run"):
    out = tmp_path / name
    code = cli.main([*args, "--out", str(out)])
    return code, out


def test_config_file_and_overrides(tmp_path):
    cfg = tmp_path / "c.txt"
    cfg.write_text("# collision locus\nc = -3.0   # deep\ngrid = 2x4\n\nwith_action = no\n")
    code, out = run(tmp_path, "chords", "--config", str(cfg), "--set", "max_order=3")
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["params"]["c"] == -3.0 and manifest["config"]["params"]["max_order"] == 3


def test_unknown_key(tmp_path, capsys):
    code, _ = run(tmp_path, "toy", "--set", "colour=red")
    assert code == 2 and "colour" in capsys.readouterr().err


def test_invalid_jacobi_constant(tmp_path, capsys):
    code, _ = run(tmp_path, "chords", "--set", "c=-1.4")
    assert code == 2 and "-3/2" in capsys.readouterr().err


def test_bad_tolerance(tmp_path):
    assert run(tmp_path, "flow", "--set", "tol_rel=0")[0] == 2


def test_io_error_names_path(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    code = cli.main(["toy", "--out", str(blocker / "sub")])
    assert code == 5 and str(blocker / "sub") in capsys.readouterr().err


def test_env_default_output_root(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.ENV_OUT, str(tmp_path / "root"))
    assert cli.main(["specseq", "--seed", "3"]) == 0
    assert (tmp_path / "root" / "specseq-seed3" / "manifest.json").exists()


def test_specseq_sample_complex(tmp_path):
    code, out = run(tmp_path, "specseq")
    assert code == 0
    assert "E_inf: 0" in (out / "summary.txt").read_text()


def test_resonant_chord_table_kepler(tmp_path):
    code, out = run(tmp_path, "chords", "--set", "c=-2", "--set", "grid=64x64", "--set", "max_order=16",
                    "--set", "with_action=false")
    assert code == 0
    _, rows = read_table(out / "chords.csv")
    periods = {r["period"] for r in rows if math.hypot(float(r["u1"]), float(r["u2"])) > 0}
    assert periods == {"8"}


def test_resonant_chord_table_printed_law(tmp_path):
    c = -(2 ** (2 / 3))
    code, out = run(tmp_path, "chords", "--set", f"c={c!r}", "--set", "law=printed", "--set", "grid=64x64",
                    "--set", "max_order=16", "--set", "with_action=false")
    assert code == 0
    _, rows = read_table(out / "chords.csv")
    assert {r["period"] for r in rows if math.hypot(float(r["u1"]), float(r["u2"])) > 0} == {"8"}


def test_partial_results(tmp_path):
    code, out = run(tmp_path, "chords", "--set", "map_mode=numeric", "--set", "grid=1x2",
                    "--set", "max_time=0.05", "--set", "max_order=1")
    assert code == 4
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"].startswith("partial") and len(manifest["items"]) == 3


def test_numerical_failure(tmp_path, monkeypatch):
    def boom(cfg, out):
        raise StepFailure("step size underflow")

    monkeypatch.setitem(cli.RUNNERS, "flow", boom)
    code, out = run(tmp_path, "flow")
    assert code == 3
    assert "numerical failure" in json.loads((out / "manifest.json").read_text())["status"]


@pytest.mark.parametrize("mode, extra", [
    ("regularize", ["--set", "n_points=20"]),
    ("flow", ["--set", "duration=2"]),
    ("return-map", ["--set", "n_points=3"]),
    ("toy", []),
    ("indices", ["--set", "t_max=12", "--set", "n_arcs=10"]),
])
def test_modes_write_round_trippable_tables(tmp_path, mode, extra):
    code, out = run(tmp_path, mode, *extra)
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["checksums"]
    for name in manifest["checksums"]:
        if name.endswith(".csv"):
            header, rows = read_table(out / name)
            assert header and all(None not in r.values() for r in rows)


def test_threads_do_not_change_results(tmp_path):
    args = ["return-map", "--set", "n_points=4", "--seed", "5"]
    _, a = run(tmp_path, *args, "--threads", "1", name="a")
    _, b = run(tmp_path, *args, "--threads", "2", name="b")
    ma = json.loads((a / "manifest.json").read_text())
    mb = json.loads((b / "manifest.json").read_text())
    assert ma["checksums"] == mb["checksums"]


def test_determinism(tmp_path):
    args = ["indices", "--set", "t_max=10", "--set", "n_arcs=10", "--seed", "9"]
    _, a = run(tmp_path, *args, name="a")
    _, b = run(tmp_path, *args, name="b")
    assert json.loads((a / "manifest.json").read_text())["checksums"] == \
        json.loads((b / "manifest.json").read_text())["checksums"]


def test_verify_subset(tmp_path, capsys):
    code, out = run(tmp_path, "verify", "--set", "quick=yes", "--set", "criteria=5 6 7 10")
    text = capsys.readouterr().out
    assert code == 0
    assert text.count("[PASS]") == 4
    _, rows = read_table(out / "verify.csv")
    assert [r["criterion"] for r in rows] == ["5", "6", "7", "10"]


def test_verify_reports_failures(tmp_path, capsys):
    code, _ = run(tmp_path, "verify", "--set", "quick=yes", "--set", "criteria=4")
    assert code == 1 and "[FAIL] criterion  4" in capsys.readouterr().out
