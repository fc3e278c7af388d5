from __future__ import annotations

import json
import shutil
from pathlib import Path

import pytest

from parasig import cli
from parasig.experiments import (
    ConfigError,
    load_config,
    parse_config,
    parse_number,
    poly_from_expr,
    run_experiment,
)
from parasig.poly import PolySpec

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

MINIMAL = """\
[experiment]
kind = classify
task = spatial_dimension
seed = 1

[problem]
trials = 3
"""


def test_parse_number_forms():
    assert parse_number("1/64") == 1 / 64
    assert parse_number("0.5") == 0.5
    assert parse_number("4h", h=1 / 64) == 4 / 64
    assert parse_number("h", h=0.1) == 0.1
    with pytest.raises(ValueError):
        parse_number("4h")


def test_missing_experiment_section():
    with pytest.raises(ConfigError, match=r"<string>:1: missing \[experiment\]"):
        parse_config("[grid]\nn = 2\n")


def test_bad_kind_reports_line():
    text = "# comment\n[experiment]\nname = x\nkind = nonsense\n"
    with pytest.raises(ConfigError, match=r"cfg.ini:4: \[experiment\] kind"):
        parse_config(text, "cfg.ini")


def test_bad_task_reports_line():
    text = "[experiment]\nkind = whitney\ntask = profile\n"
    with pytest.raises(ConfigError, match=r":3: .*supports tasks extension"):
        parse_config(text)


def test_malformed_line_reports_line():
    with pytest.raises(ConfigError, match=r"x.ini:3: malformed"):
        parse_config("[experiment]\nkind = solve\nthis is not a key value pair\n", "x.ini")


def test_bad_value_reports_line():
    cfg = parse_config("[experiment]\nkind = solve\n\n[solver]\neps = 0.1, oops\n", "c.ini")
    with pytest.raises(ConfigError, match=r"c.ini:5: \[solver\] eps"):
        cfg.numbers("solver", "eps")


def test_mesh_size_validation():
    with pytest.raises(ConfigError, match=r"\[grid\] h"):
        parse_config("[experiment]\nkind = solve\n[grid]\nh = 2\n")


def test_presets():
    cfg = parse_config("[experiment]\nkind = solve\n[grid]\nh_list = 1/16, 1/32, 1/64\n", preset="fine")
    assert cfg.h_list == [1 / 32, 1 / 64, 1 / 128]
    cfg = parse_config(MINIMAL, preset="coarse")
    assert cfg.h == 1 / 64
    with pytest.raises(ConfigError):
        parse_config(MINIMAL, preset="medium")


def test_resolved_config_roundtrip():
    cfg = parse_config(MINIMAL, "m.ini")
    again = parse_config(cfg.to_ini(), "m.ini")
    assert again.sections == cfg.sections
    assert (again.kind, again.task, again.seed) == ("classify", "spatial_dimension", 1)


def test_poly_from_expr():
    p = poly_from_expr("x1**2 - x2**2/3 + 2*t", 2)
    assert p == PolySpec.from_text("alpha=2,0 j=0 coeff=1\nalpha=0,2 j=0 coeff=-1/3\nalpha=0,0 j=1 coeff=2")


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.ini")), ids=lambda p: p.stem)
def test_shipped_configs_parse(path):
    cfg = load_config(path)
    assert cfg.name == path.stem
    load_config(path, preset="fine")


def _data_files(d: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name != "manifest.json"}


def test_run_is_deterministic(tmp_path):
    cfg = load_config(CONFIGS / "c11_log_sobolev.ini")
    a, out_a = run_experiment(cfg, tmp_path / "a")
    b, _ = run_experiment(cfg, tmp_path / "b")
    assert _data_files(a) == _data_files(b)
    ma = json.loads((a / "manifest.json").read_text())
    mb = json.loads((b / "manifest.json").read_text())
    ma.pop("timings"), mb.pop("timings")
    assert ma == mb
    summary = json.loads((a / "summary.json").read_text())
    assert summary["passed"] == out_a.passed
    assert {c["name"] for c in summary["checks"]} == {c.name for c in out_a.checks}
    assert set(ma["files"]) == set(_data_files(a))


def test_cli_runs_and_rejects_wrong_kind(tmp_path, capsys):
    cfg = CONFIGS / "c12_spatial_dimension.ini"
    assert cli.main(["classify", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert "PASS c12_spatial_dimension" in capsys.readouterr().out
    assert cli.main(["whitney", "--config", str(cfg), "--out", str(tmp_path / "o2")]) == 2


def test_cli_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[experiment]\nkind = nope\n")
    assert cli.main(["solve", "--config", str(bad)]) == 2
    assert f"{bad}:2:" in capsys.readouterr().err


def test_reproduce_all_over_directory(tmp_path, capsys):
    d = tmp_path / "cfgs"
    d.mkdir()
    shutil.copy(CONFIGS / "c12_spatial_dimension.ini", d)
    assert cli.main(["reproduce-all", "--configs", str(d), "--out", str(tmp_path / "out")]) == 0
    assert (tmp_path / "out" / "c12_spatial_dimension" / "summary.json").exists()
