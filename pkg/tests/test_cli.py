import csv
import subprocess
import sys

import pytest

from snlab.cli import main, parse_config_text, sweep_points
from snlab.errors import ConfigError

SPHERICAL = """\
[grid]
n = 64
L = 60

[evolution]
dt = 0.1
t_end = 2.0
output_every = 2
checkpoint_every = 3

[initial]
source = gaussian
sigma = 4
a = 20
v = 0.2
"""


def _write(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_stationary_spherical(tmp_path):
    cfg = _write(tmp_path, "[grid]\nn = 64\nL = 100\n")
    out = tmp_path / "out"
    assert main(["stationary-spherical", "--config", cfg, "--output", str(out)]) == 0
    rows = _rows(out / "summary.csv")
    assert rows[0][:3] == ["label", "E", "J2"]
    assert float(rows[1][1]) < 0 and float(rows[1][5]) < 1e-8
    assert (out / "state.txt").exists() and (out / "config.resolved").exists()


def test_evolve_resume_is_byte_identical(tmp_path):
    cfg = _write(tmp_path, SPHERICAL)
    full, split = tmp_path / "full", tmp_path / "split"
    assert main(["evolve-spherical", "--config", cfg, "--output", str(full)]) == 0
    assert main(["evolve-spherical", "--config", cfg, "--output", str(split), "--stop-after", "7"]) == 0
    assert not (split / "final.txt").exists()
    assert main(["evolve-spherical", "--config", cfg, "--resume", str(split)]) == 0
    for name in ("diagnostics.csv", "final.txt"):
        assert (full / name).read_bytes() == (split / name).read_bytes()


def test_evolve_planar_runs(tmp_path):
    text = """\
[grid]
n = 20
L = 30

[evolution]
dt = 0.05
t_end = 0.5

[initial]
source = gaussian2d
sigma = 3
"""
    out = tmp_path / "planar"
    assert main(["evolve-planar", "--config", _write(tmp_path, text), "--output", str(out)]) == 0
    rows = _rows(out / "diagnostics.csv")
    assert len(rows) == 3 and float(rows[-1][0]) == pytest.approx(0.5)


def test_unknown_key_exits_2(tmp_path, capsys):
    cfg = _write(tmp_path, SPHERICAL + "bogus = 1\n")
    assert main(["evolve-spherical", "--config", cfg, "--output", str(tmp_path / "x")]) == 2
    err = capsys.readouterr().err
    assert "bogus" in err and "line" in err


def test_bad_values_exit_2(tmp_path):
    bad = SPHERICAL.replace("dt = 0.1", "dt = -0.1")
    assert main(["evolve-spherical", "--config", _write(tmp_path, bad), "--output", str(tmp_path / "x")]) == 2
    missing = SPHERICAL.replace("dt = 0.1\n", "")
    assert main(["evolve-spherical", "--config", _write(tmp_path, missing), "--output", str(tmp_path / "y")]) == 2


def test_missing_config_exits_4(tmp_path):
    assert main(["evolve-spherical", "--config", str(tmp_path / "nope.cfg")]) == 4


def test_resume_without_checkpoint_exits_4(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["evolve-spherical", "--config", _write(tmp_path, SPHERICAL), "--resume", str(empty)]) == 4


def test_nonconvergence_exits_3(tmp_path):
    cfg = _write(tmp_path, "[grid]\nn = 64\n\n[stationary]\nmax_outer = 1\n")
    out = tmp_path / "nc"
    assert main(["stationary-spherical", "--config", cfg, "--output", str(out)]) == 3
    assert (out / "error.txt").exists()


SWEEP = """\
[grid]
n = 48
L = 80

[evolution]
dt = 0.1
t_end = 1.0

[initial]
sigma = 5
a = 30

[sweep]
v_list = -0.2, 0.2
sigma_list = 4, 6
"""


def test_sweep_points_product():
    cfg = parse_config_text(SWEEP, "sweep-gaussian")
    assert sweep_points(cfg) == [(v, 30.0, s) for s in (4.0, 6.0) for v in (-0.2, 0.2)]


def test_sweep_serial_and_parallel_agree(tmp_path):
    cfg = _write(tmp_path, SWEEP)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["sweep-gaussian", "--config", cfg, "--output", str(a), "--serial"]) == 0
    assert main(["sweep-gaussian", "--config", cfg, "--output", str(b), "--workers", "2"]) == 0
    rows = _rows(a / "summary.csv")
    assert len(rows) == 1 + 4
    assert (a / "summary.csv").read_bytes() == (b / "summary.csv").read_bytes()


def test_analyze(tmp_path):
    cfg = _write(tmp_path, SPHERICAL)
    run = tmp_path / "run"
    assert main(["evolve-spherical", "--config", cfg, "--output", str(run)]) == 0
    an = _write(tmp_path, f"[analyze]\ninput = {run}\n", "an.cfg")
    out = tmp_path / "an"
    assert main(["analyze", "--config", an, "--output", str(out)]) == 0
    names = [r[0] for r in _rows(out / "analysis.csv")]
    assert "p_final" in names and "probe_phase_slope" in names


def test_parse_errors_name_the_line():
    with pytest.raises(ConfigError) as exc:
        parse_config_text("[grid]\nn = many\n", "stationary-spherical")
    assert "line 2" in str(exc.value)
    with pytest.raises(ConfigError):
        parse_config_text("[sweep]\nv_list = 1\n", "stationary-spherical")


def test_module_entry_point(tmp_path):
    cmd = [sys.executable, "-m", "snlab", "analyze", "--config", str(tmp_path / "missing.cfg")]
    assert subprocess.run(cmd, capture_output=True).returncode == 4
    cmd = [sys.executable, "-m", "snlab", "evolve-spherical"]
    assert subprocess.run(cmd, capture_output=True).returncode == 2
