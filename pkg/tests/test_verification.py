"""Tests for the property suites that do not need a full workflow."""

from app.schemas.experiment import ExperimentConfig
from app.services.verification_service import verification_service


class TestMaxPrincipleSuite:
    def test_fails_without_a_ground_state(self) -> None:
        summary = verification_service.run(ExperimentConfig(), seed=3, quick=True, only=["max_principle"])
        result = summary.results[0]
        assert not result.passed
        assert summary.failed == ["max_principle"]
        assert result.details["strong_checked"] == 0
        assert result.details["strong_not_run"]
        assert not result.details["ground_state_available"]
        assert result.details["hypothesis_not_met"] == 0
        assert result.details["strong_violations"] == 0
