"""Tests for the acceptance pipeline and profile scaling."""

from __future__ import annotations

from pathlib import Path
from unittest.mock import patch

import pytest

from localsgd_lab.acceptance.base import BaseCriterion, CriterionResult, ProfileScale
from localsgd_lab.context import RunContext


class _Passing(BaseCriterion):
    number = 1
    name = "passing"
    title = "always passes"
    header = ("a", "b")

    def run(self, ctx: RunContext, scale: ProfileScale) -> CriterionResult:
        return CriterionResult(True, "fine", ((1, 2.0),))


class _Raising(BaseCriterion):
    number = 2
    name = "raising"
    title = "raises a lab error"

    def run(self, ctx: RunContext, scale: ProfileScale) -> CriterionResult:
        from localsgd_lab.errors import InvalidParameterError

        raise InvalidParameterError("eta must be positive")


class _Interrupted(BaseCriterion):
    number = 3
    name = "interrupted"
    title = "user pressed CTRL+C"

    def run(self, ctx: RunContext, scale: ProfileScale) -> CriterionResult:
        raise KeyboardInterrupt


def _ctx(out: Path, profile: str = "quick") -> RunContext:
    from localsgd_lab.config import ExperimentSpec

    return RunContext(ExperimentSpec("acceptance", {}, 0), out, profile=profile)


class TestProfileScale:
    """Test sample-size and tolerance scaling."""

    def test_quick(self):
        """Quick divides n by 10 and widens tolerances by 1.5."""
        scale = ProfileScale.of("quick")
        assert scale.n(100_000) == 10_000
        assert scale.widen(2.0) == 3.0
        assert scale.relax(3.0) == 2.0

    def test_full_is_identity(self):
        """Full leaves sample sizes and tolerances alone."""
        scale = ProfileScale.of("full")
        assert scale.n(65536) == 65536
        assert scale.widen(0.1) == 0.1
        assert scale.relax(2.0) == 2.0

    def test_n_stays_even_and_positive(self):
        """Scaled sizes are even and at least two."""
        quick = ProfileScale.of("quick")
        assert quick.n(15) == 2
        assert quick.n(30) == 4
        assert ProfileScale.of("full").n(7) == 8

    def test_unknown_profile_means_full(self):
        """Anything but quick scales like full."""
        assert ProfileScale.of("other").n_divisor == 1


class TestSelectCriteria:
    """Test criterion selection."""

    def test_all_by_default(self):
        """No selection runs every criterion in number order."""
        from localsgd_lab.acceptance import select_criteria

        numbers = [c.number for c in select_criteria()]
        assert numbers == list(range(1, 13))

    def test_subset_keeps_run_order(self):
        """A subset is returned in run order, not request order."""
        from localsgd_lab.acceptance import select_criteria

        assert [c.number for c in select_criteria([11, 5])] == [5, 11]

    def test_unknown_number(self):
        """Unknown criterion numbers are a ConfigError."""
        from localsgd_lab.acceptance import select_criteria
        from localsgd_lab.errors import ConfigError

        with pytest.raises(ConfigError, match="unknown acceptance criteria"):
            select_criteria([5, 99])

    def test_csv_names(self):
        """Criterion CSVs are numbered with two digits."""
        assert _Passing().csv_name == "criterion_01_passing.csv"
        assert repr(_Passing()) == "<_Passing(number=1, name='passing')>"


class TestRunAcceptance:
    """Test the pipeline with stand-in criteria."""

    def test_lab_error_becomes_fail(self, tmp_path):
        """A criterion raising a LabError is recorded as FAIL and the rest still run."""
        from localsgd_lab.acceptance import VERDICTS_NAME, run_acceptance
        from localsgd_lab.artifacts import read_csv

        ctx = _ctx(tmp_path)
        with patch("localsgd_lab.acceptance.select_criteria", return_value=[_Raising(), _Passing()]):
            assert not run_acceptance(ctx)
        _, rows = read_csv(tmp_path / VERDICTS_NAME)
        assert [r[0] for r in rows] == ["2", "1"]
        assert rows[0][2] == "false"
        assert rows[0][3] == "InvalidParameterError: eta must be positive"
        assert rows[1][2] == "true"
        assert (tmp_path / "criterion_01_passing.csv").exists()
        assert not (tmp_path / "criterion_02_raising.csv").exists()

    def test_verdict_lines(self, tmp_path):
        """Each criterion records one verdict line with its number and name."""
        from localsgd_lab.acceptance import run_acceptance

        ctx = _ctx(tmp_path)
        with patch("localsgd_lab.acceptance.select_criteria", return_value=[_Passing()]):
            assert run_acceptance(ctx)
        assert [v.line for v in ctx.verdicts] == ["PASS [1] passing: fine"]

    def test_interrupt_cancels(self, tmp_path):
        """CTRL+C inside a criterion becomes RunCancelled and no verdicts file is written."""
        from localsgd_lab.acceptance import VERDICTS_NAME, run_acceptance
        from localsgd_lab.errors import RunCancelled

        ctx = _ctx(tmp_path)
        with patch("localsgd_lab.acceptance.select_criteria", return_value=[_Passing(), _Interrupted()]):
            with pytest.raises(RunCancelled):
                run_acceptance(ctx)
        assert not (tmp_path / VERDICTS_NAME).exists()

    def test_console_steps(self, tmp_path):
        """With a console each criterion is announced as a numbered step."""
        from localsgd_lab.acceptance import run_acceptance
        from localsgd_lab.ui import Console

        ctx = _ctx(tmp_path)
        ctx.ui = Console(record=True, width=160)
        with patch("localsgd_lab.acceptance.select_criteria", return_value=[_Passing()]):
            run_acceptance(ctx)
        text = ctx.ui.export_text()
        assert "[1/1]" in text
        assert "1. always passes" in text


class TestAcceptanceCommand:
    """Test the acceptance suite through the CLI."""

    def test_cheap_criterion_exits_zero(self, tmp_path):
        """The arithmetic criterion passes end to end."""
        from localsgd_lab.cli import main

        out = tmp_path / "acc"
        with pytest.raises(SystemExit) as info:
            main(["acceptance", "criteria=[11]", "--profile", "quick", "--out", str(out), "-q"])
        assert info.value.code == 0
        assert (out / "verdicts.csv").exists()
        assert (out / "criterion_11_arithmetic_identities.csv").exists()
