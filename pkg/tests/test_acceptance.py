"""The twelve acceptance criteria, each driven by its shipped config."""

from __future__ import annotations

from pathlib import Path

import pytest

from parasig.experiments import load_config, run_experiment

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

CRITERIA = [
    (1, "c01_catalog", "catalog exactness"),
    (2, "c02_frequency_catalog", "frequency recovery on catalog fields"),
    (3, "c03_frequency_monotone", "generalized frequency near-monotone on solver output"),
    (4, "c04_classify_gap", "frequency gap across free boundary points"),
    (5, "c05_growth", "growth bounds and Hoelder stability"),
    (6, "c06_weiss", "Weiss functional"),
    (7, "c07_monneau", "Monneau functional and singular fit"),
    (8, "c08_cross_validation", "projected vs penalized solver"),
    (9, "c09_diff_formula", "differentiation formulas"),
    (10, "c10_whitney", "parabolic Whitney extension"),
    (11, "c11_log_sobolev", "log-Sobolev gap"),
    (12, "c12_spatial_dimension", "spatial dimension of singular points"),
]

RESULTS: dict[int, str] = {}


@pytest.fixture(scope="module")
def out_root(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


@pytest.mark.parametrize("number,config,title", CRITERIA, ids=[c[1] for c in CRITERIA])
def test_criterion(number, config, title, out_root):
    cfg = load_config(CONFIGS / f"{config}.ini")
    _, outcome = run_experiment(cfg, out_root / config)
    failed = [c for c in outcome.checks if not c.passed]
    status = "PASS" if not failed else "FAIL"
    line = f"criterion {number:2d} {status}: {title} ({len(outcome.checks) - len(failed)}/{len(outcome.checks)} checks)"
    RESULTS[number] = line
    print(line)
    assert outcome.checks, "no checks were run"
    assert not failed, "; ".join(f"{c.name}: value={c.value:.4g} tol={c.tol:.3g} {c.detail}" for c in failed)
