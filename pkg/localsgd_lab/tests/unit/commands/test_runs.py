"""Small end-to-end runs of the simulation commands."""

from __future__ import annotations

from pathlib import Path

import pytest


def _run(name: str, overrides: dict, out: Path, workers: int = 1):
    from localsgd_lab.commands import get_command
    from localsgd_lab.config import ExperimentSpec
    from localsgd_lab.context import RunContext

    cmd = get_command(name)()
    ctx = RunContext(ExperimentSpec(name, cmd.validate(overrides), 3), out, workers=workers)
    cmd.run(ctx)
    return ctx


def _names(ctx) -> list[str]:
    return sorted(p.name for p in ctx.artifacts)


class TestDensityCommand:
    """Test the density command."""

    def test_writes_histograms_and_means(self, tmp_path):
        """One histogram per checkpoint plus the means table."""
        from localsgd_lab.artifacts import read_csv

        ctx = _run("density", {"checkpoints": [4, 8], "n": 2000, "bins": 20}, tmp_path)
        assert _names(ctx) == ["density_k4.csv", "density_k8.csv", "estimates.csv", "means.csv"]
        header, rows = read_csv(tmp_path / "density_k4.csv")
        assert header == ["bin_left", "bin_right", "center", "count", "density"]
        assert len(rows) == 20
        _, means = read_csv(tmp_path / "means.csv")
        assert [r[0] for r in means] == ["4", "8"]
        assert all(r[3] == "2000" for r in means)

    def test_estimates_carry_the_interval(self, tmp_path):
        """estimates.csv uses the shared estimator columns with the 95% interval around the mean."""
        from localsgd_lab.artifacts import read_csv
        from localsgd_lab.estimators import Z95

        _run("density", {"checkpoints": [4, 8], "n": 2000, "bins": 20, "eta": 0.05}, tmp_path)
        header, rows = read_csv(tmp_path / "estimates.csv")
        assert header == [
            "experiment", "objective", "eta", "k", "K", "R", "M", "n", "mode", "mean", "stderr", "ci_lo", "ci_hi",
        ]
        assert [(r[0], r[1], r[3], r[4], r[7], r[8]) for r in rows] == [
            ("density", "quadratic", "4", "", "2000", "plain"),
            ("density", "quadratic", "8", "", "2000", "plain"),
        ]
        for row in rows:
            mean, stderr, lo, hi = (float(v) for v in row[9:])
            assert lo == pytest.approx(mean - Z95 * stderr)
            assert hi == pytest.approx(mean + Z95 * stderr)

    def test_explicit_range(self, tmp_path):
        """Given edges are used as the histogram range."""
        from localsgd_lab.artifacts import read_csv

        _run("density", {"checkpoints": [4], "n": 500, "bins": 10, "range_lo": -2.0, "range_hi": 2.0}, tmp_path)
        _, rows = read_csv(tmp_path / "density_k4.csv")
        assert float(rows[0][0]) == -2.0
        assert float(rows[-1][1]) == 2.0


class TestFedAvgRunCommand:
    """Test the fedavg-run command."""

    def test_scalar_family_with_baselines(self, tmp_path):
        """Per-round means for R + 1 round starts and three summary rows."""
        from localsgd_lab.artifacts import read_csv

        ctx = _run("fedavg-run", {"objective": "quadratic", "K": 2, "R": 3, "M": 2, "n": 256}, tmp_path)
        assert _names(ctx) == ["estimates.csv", "rounds.csv", "summary.csv"]
        _, rounds = read_csv(tmp_path / "rounds.csv")
        assert len(rounds) == 4
        _, summary = read_csv(tmp_path / "summary.csv")
        assert [r[0] for r in summary] == ["fedavg", "minibatch", "single_machine"]

    def test_estimates_list_every_algorithm(self, tmp_path):
        """FedAvg and both baselines get an estimator row with K, R and M filled in."""
        from localsgd_lab.artifacts import read_csv

        _run("fedavg-run", {"objective": "quadratic", "K": 2, "R": 3, "M": 2, "n": 256}, tmp_path)
        header, rows = read_csv(tmp_path / "estimates.csv")
        assert header[-2:] == ["ci_lo", "ci_hi"]
        assert [r[0] for r in rows] == ["fedavg-run", "fedavg-run:minibatch", "fedavg-run:single_machine"]
        assert all((r[4], r[5], r[6]) == ("2", "3", "2") for r in rows)
        assert all(r[3] == "" for r in rows)

    def test_composite_skips_baselines(self, tmp_path):
        """Composite objectives report FedAvg only."""
        from localsgd_lab.artifacts import read_csv

        _run("fedavg-run", {"objective": "composite", "K": 2, "R": 2, "M": 2, "n": 128, "eta": 0.1}, tmp_path)
        _, summary = read_csv(tmp_path / "summary.csv")
        assert [r[0] for r in summary] == ["fedavg"]

    def test_fedavg_composite_with_odd_clients(self, tmp_path):
        """fedavg-run on the composite refuses an odd M before simulating."""
        from localsgd_lab.errors import InvalidParameterError

        with pytest.raises(InvalidParameterError):
            _run("fedavg-run", {"objective": "composite", "K": 2, "R": 2, "M": 3, "n": 16}, tmp_path)
        assert not (tmp_path / "rounds.csv").exists()

    def test_hetero_pair_is_deterministic(self, tmp_path):
        """Point-mass clients leave no spread across replicas."""
        from localsgd_lab.artifacts import read_csv

        _run("fedavg-run", {"objective": "hetero_pair", "K": 2, "R": 3, "M": 2, "n": 64, "baselines": False}, tmp_path)
        _, rounds = read_csv(tmp_path / "rounds.csv")
        assert all(float(r[3]) <= 1e-12 for r in rounds)

    def test_worker_count_does_not_change_output(self, tmp_path):
        """Multi-block runs are byte-identical at one and two workers."""
        overrides = {"objective": "logcosh", "K": 2, "R": 2, "M": 2, "n": 70000, "baselines": False}
        _run("fedavg-run", overrides, tmp_path / "one", workers=1)
        _run("fedavg-run", overrides, tmp_path / "two", workers=2)
        for name in ("rounds.csv", "summary.csv"):
            assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()


class TestBiasScanCommand:
    """Test the bias-scan command."""

    def test_files_and_verdict(self, tmp_path):
        """Histograms, means and one drift verdict are produced."""
        ctx = _run("bias-scan", {"checkpoints": [8, 16], "n": 1000, "bins": 10}, tmp_path)
        assert "bias.csv" in _names(ctx)
        assert "density_k16.csv" in _names(ctx)
        assert [v.name for v in ctx.verdicts] == ["bias-scan"]


class TestLowerBoundSuiteCommand:
    """Test the lowerbound-suite command."""

    def test_parts_written(self, tmp_path):
        """Each of the three mechanisms writes its table."""
        ctx = _run(
            "lowerbound-suite",
            {"n": 2000, "K": 2, "R": 2, "etas": [0.1], "Ks": [2], "Rs": [1, 5]},
            tmp_path,
        )
        assert _names(ctx) == [
            "composite.csv",
            "hetero_drift.csv",
            "homog_drift.csv",
            "lower_bound_terms.csv",
        ]
        verdicts = {v.name: v.passed for v in ctx.verdicts}
        assert set(verdicts) == {"homog-drift", "hetero-drift"}
        assert verdicts["hetero-drift"]

    def test_odd_client_count_refused_with_heterogeneity(self):
        """An odd M would unbalance the heterogeneous coordinate, so validation refuses it."""
        from localsgd_lab.commands import get_command
        from localsgd_lab.errors import InvalidParameterError

        cmd = get_command("lowerbound-suite")()
        with pytest.raises(InvalidParameterError, match="M=3"):
            cmd.validate({"M": 3})
        assert cmd.validate({"M": 3, "zeta_star": 0.0})["M"] == 3


class TestVerifyUpperCommand:
    """Test the verify-upper command."""

    def test_verdict_and_control(self, tmp_path):
        """One theorem gives a verdict, a negative control and one CSV row."""
        from localsgd_lab.artifacts import read_csv

        ctx = _run("verify-upper", {"which": "convex3o", "M": 2, "K": 4, "R": 8, "n": 256}, tmp_path)
        assert [v.name for v in ctx.verdicts] == ["verify-convex3o", "control-convex3o"]
        _, rows = read_csv(tmp_path / "verify.csv")
        assert len(rows) == 1
        assert rows[0][0] == "convex3o"

    def test_control_can_be_disabled(self, tmp_path):
        """control_slack = 0 drops the negative control."""
        ctx = _run(
            "verify-upper", {"which": "convex3o", "M": 2, "K": 4, "R": 8, "n": 256, "control_slack": 0.0}, tmp_path
        )
        assert [v.name for v in ctx.verdicts] == ["verify-convex3o"]


class TestSdeCheckCommand:
    """Test the sde-check command."""

    def test_too_few_paths_is_inconclusive(self, tmp_path):
        """A sample too small to resolve u_tt is refused with a suggested n."""
        from localsgd_lab.errors import InconclusiveError

        with pytest.raises(InconclusiveError) as info:
            _run("sde-check", {"n": 100, "control": False, "k": 0}, tmp_path)
        assert info.value.required_n > 100

    def test_trace_columns(self, tmp_path):
        """The trace holds u(t, x) at each fitted time under the t,u_mean,u_stderr header."""
        from localsgd_lab.artifacts import read_csv

        overrides = {
            "objective": "quadratic",
            "L": 1.0,
            "x": 0.5,
            "n": 2,
            "t_grid": [0.03, 0.06, 0.09, 0.12],
            "control": False,
            "k": 0,
        }
        ctx = _run("sde-check", overrides, tmp_path)
        assert _names(ctx) == ["sde_fit.csv", "sde_trace.csv"]
        header, rows = read_csv(tmp_path / "sde_trace.csv")
        assert header == ["t", "u_mean", "u_stderr"]
        assert [float(r[0]) for r in rows] == [0.03, 0.06, 0.09, 0.12]
        u = [float(r[1]) for r in rows]
        assert 0.0 < u[-1] < u[0] < 0.5


class TestBoundsEvalCommand:
    """Test the bounds-eval command."""

    def test_stepsizes_below_inverse_h(self, tmp_path):
        """Every prescribed step size respects eta <= 1/H."""
        from localsgd_lab.artifacts import read_csv

        ctx = _run("bounds-eval", {"H": 4.0}, tmp_path)
        assert ctx.passed
        _, steps = read_csv(tmp_path / "stepsizes.csv")
        assert steps
        assert all(float(r[1]) <= 0.25 for r in steps)
