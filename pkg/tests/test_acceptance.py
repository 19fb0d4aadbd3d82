"""Full workflows on the shipped configuration; run with ``pytest -m slow``."""

import json
from pathlib import Path

import pytest

from app.cli.router import main
from app.schemas.experiment import ExperimentConfig
from app.services.verification_service import verification_service

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

pytestmark = pytest.mark.slow


def test_quick_property_suites(tmp_path) -> None:
    out = tmp_path / "verify"
    code = main(["verify", "--quick", "--seed", "7", "--out", str(out)])
    summary = json.loads((out / "verify_summary.json").read_text())
    assert summary["failed"] == []
    assert summary["total"] == len(verification_service.suites)
    discretization = next(r for r in summary["results"] if r["name"] == "discretization")
    assert discretization["max_violation"] < 0.02
    assert code == 0


def test_ground_state_and_max_principle_at_full_resolution() -> None:
    summary = verification_service.run(ExperimentConfig(), seed=1, only=["ground_state", "max_principle"])
    assert summary.failed == [], [r.details for r in summary.results]
    assert summary.results[1].details["strong_checked"] > 0


def test_annulus_ground_state_is_foliated_schwarz_symmetric(tmp_path) -> None:
    config = CONFIGS / "annulus.ini"
    solved = tmp_path / "solve"
    assert main(["--config", str(config), "solve", "--out", str(solved)]) == 0
    report = json.loads((solved / "solve_report.json").read_text())
    assert report["converged"]
    assert report["residual_relative"] <= 1e-8 * (1.0 + 1e-6)
    assert report["positivity"]["holds"]
    assert report["distinct"]
    assert report["symmetry"]["axis"]["status"] in ("axis", "radial")

    diag = tmp_path / "symmetry"
    code = main(["--config", str(config), "symmetry", "--fields", str(solved / "fields.bin"), "--out", str(diag)])
    symmetry = json.loads((diag / "symmetry_report.json").read_text())
    assert all(verdict["holds"] for verdict in symmetry["foliated"])
    assert code == 0


def test_suite_errors_are_recorded_as_failures() -> None:
    config = ExperimentConfig.model_validate({"system": {"a2": "1.5"}, "grid": {"target_nodes": 60}})
    summary = verification_service.run(config, seed=1, quick=True, only=["ground_state"])
    assert not summary.passed
    assert summary.failed == ["ground_state"]
    assert summary.results[0].details["error_code"] == "DomainError"
