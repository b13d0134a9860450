"""Tests for power-law fits and bias sweeps."""

from __future__ import annotations

import pytest


class TestFitPowerLaw:
    """Test weighted log-log regression."""

    def test_exact_power_law(self):
        """y = 2 s^1.5 is recovered exactly."""
        from localsgd_lab.scaling import fit_power_law

        fit = fit_power_law([(s, 2.0 * s**1.5) for s in (2.0, 4.0, 8.0, 16.0)])
        assert fit.exponent == pytest.approx(1.5)
        assert fit.r_squared == pytest.approx(1.0)
        assert fit.n_points == 4
        assert fit.predict(32.0) == pytest.approx(2.0 * 32.0**1.5)

    def test_weights_accepted(self):
        """Three-tuples carry weights."""
        from localsgd_lab.scaling import fit_power_law

        fit = fit_power_law([(1.0, 1.0, 1.0), (2.0, 8.0, 4.0), (4.0, 64.0, 9.0)])
        assert fit.exponent == pytest.approx(3.0)

    def test_too_few_points(self):
        """At least three points are needed."""
        from localsgd_lab.errors import InvalidParameterError
        from localsgd_lab.scaling import fit_power_law

        with pytest.raises(InvalidParameterError):
            fit_power_law([(1.0, 1.0), (2.0, 2.0)])

    def test_non_positive_magnitudes(self):
        """Zero or negative magnitudes are reported by index."""
        from localsgd_lab.errors import NonPositiveMagnitudeError
        from localsgd_lab.scaling import fit_power_law

        with pytest.raises(NonPositiveMagnitudeError) as info:
            fit_power_law([(1.0, 1.0), (2.0, 0.0), (3.0, -1.0)])
        assert info.value.indices == [1, 2]

    def test_duplicate_scales_rejected(self):
        """Scales must be distinct."""
        from localsgd_lab.errors import InvalidParameterError
        from localsgd_lab.scaling import fit_power_law

        with pytest.raises(InvalidParameterError):
            fit_power_law([(1.0, 1.0), (1.0, 2.0), (3.0, 3.0)])


class TestRegime:
    """Test bias order and sweep regime checks."""

    def test_bias_order(self):
        """Piecewise is second order, logcosh third order."""
        from localsgd_lab.objectives import make_logcosh_instance, make_piecewise_quadratic
        from localsgd_lab.scaling import bias_order

        assert bias_order(make_piecewise_quadratic(1.0, 0.5, 1.0)) == 2
        assert bias_order(make_logcosh_instance(1.0, 0.5, 1.0)) == 3

    def test_quadratic_has_no_order(self):
        """Quadratics have no bias to fit."""
        from localsgd_lab.errors import InvalidParameterError
        from localsgd_lab.objectives import make_quadratic
        from localsgd_lab.scaling import bias_order

        with pytest.raises(InvalidParameterError):
            bias_order(make_quadratic(1.0, 1.0))

    def test_second_order_step_limit(self):
        """Second-order sweeps need eta <= 1/(2kH)."""
        from localsgd_lab.errors import RegimeError
        from localsgd_lab.objectives import make_piecewise_quadratic
        from localsgd_lab.scaling import check_sweep_regime

        with pytest.raises(RegimeError):
            check_sweep_regime(make_piecewise_quadratic(1.0, 0.5, 1.0), [0.1, 0.1], [4, 8])

    def test_k_of_one_rejected(self):
        """Bias is identically zero at k = 1."""
        from localsgd_lab.errors import RegimeError
        from localsgd_lab.objectives import make_piecewise_quadratic
        from localsgd_lab.scaling import check_sweep_regime

        with pytest.raises(RegimeError):
            check_sweep_regime(make_piecewise_quadratic(1.0, 0.5, 1.0), [0.001], [1])

    def test_third_order_step_limit(self):
        """Third-order sweeps need eta <= 1/(2kH) at every grid point."""
        from localsgd_lab.errors import RegimeError
        from localsgd_lab.objectives import make_logcosh_instance
        from localsgd_lab.scaling import check_sweep_regime

        obj = make_logcosh_instance(1.0, 0.5, 1.0)
        with pytest.raises(RegimeError, match="1/\\(2kH\\)"):
            check_sweep_regime(obj, [0.02, 0.04, 0.08], [20] * 3)
        with pytest.raises(RegimeError, match="1/\\(2kH\\)"):
            check_sweep_regime(obj, [0.02] * 4, [8, 16, 32, 64])
        check_sweep_regime(obj, [0.001, 0.002, 0.004], [16] * 3)

    def test_third_order_grid_crossing_terms(self):
        """A k grid spanning the cubic and sqrt(k) terms mixes regimes."""
        from localsgd_lab.errors import RegimeError
        from localsgd_lab.objectives import make_logcosh_instance
        from localsgd_lab.scaling import check_sweep_regime

        with pytest.raises(RegimeError, match="crosses"):
            check_sweep_regime(make_logcosh_instance(1.0, 0.5, 1e4), [1e-4] * 3, [2, 4, 4000])

    def test_sweep_refuses_saturated_grid(self):
        """sweep_bias_scaling refuses before sampling when eta k H > 1/2."""
        from localsgd_lab.errors import RegimeError
        from localsgd_lab.rng import RngKey
        from localsgd_lab.scaling import sweep_bias_scaling

        with pytest.raises(RegimeError):
            sweep_bias_scaling("logcosh", {"H": 1.0, "Q": 0.5, "sigma": 1.0}, "eta", [0.02, 0.04, 0.08], 20, 10, RngKey(0))

    def test_third_order_grid_in_one_term(self):
        """A short k grid stays on the cubic term."""
        from localsgd_lab.objectives import make_logcosh_instance
        from localsgd_lab.scaling import check_sweep_regime

        check_sweep_regime(make_logcosh_instance(1.0, 0.5, 1.0), [0.01] * 3, [2, 4, 8])


class TestSweep:
    """Test sweep marking and validation."""

    def test_insignificant_and_opposite_points_dropped(self):
        """Points below 5 stderr or against the majority sign are excluded."""
        from localsgd_lab.estimators import MonteCarloEstimate
        from localsgd_lab.scaling import SweepPoint, _mark_points

        points = [
            SweepPoint("k", 2.0, MonteCarloEstimate(100, -1.0, 0.01)),
            SweepPoint("k", 4.0, MonteCarloEstimate(100, -2.0, 0.01)),
            SweepPoint("k", 8.0, MonteCarloEstimate(100, 1.0, 0.01)),
            SweepPoint("k", 16.0, MonteCarloEstimate(100, -0.01, 0.01)),
        ]
        _mark_points(points)
        assert [p.used_in_fit for p in points] == [True, True, False, False]
        assert points[2].note == "sign opposite to majority"

    def test_sweep_result_window(self):
        """The window is target +- tolerance."""
        from localsgd_lab.scaling import PowerLawFit, SweepResult

        result = SweepResult([], PowerLawFit(1.6, 0.0, 1.0, 0.01, 4), 2, 1.5, 0.15)
        assert result.window == pytest.approx((1.35, 1.65))
        assert result.passed

    def test_unknown_axis_rejected(self):
        """The axis must be k or eta."""
        from localsgd_lab.errors import InvalidParameterError
        from localsgd_lab.rng import RngKey
        from localsgd_lab.scaling import sweep_bias_scaling

        with pytest.raises(InvalidParameterError):
            sweep_bias_scaling("piecewise", {"H": 1.0}, "x", [2, 4, 8], 0.001, 10, RngKey(0))  # type: ignore[arg-type]

    def test_client_family_rejected(self):
        """Sweeps need a scalar objective."""
        from localsgd_lab.errors import InvalidParameterError
        from localsgd_lab.rng import RngKey
        from localsgd_lab.scaling import sweep_bias_scaling

        with pytest.raises(InvalidParameterError):
            sweep_bias_scaling("hetero_pair", {}, "k", [2, 4, 8], 0.001, 10, RngKey(0))

    def test_piecewise_k_sweep_recovers_exponent(self):
        """A small-step piecewise k sweep fits close to 1.5."""
        from localsgd_lab.rng import RngKey
        from localsgd_lab.scaling import sweep_bias_scaling

        result = sweep_bias_scaling(
            "piecewise", {"h_right": 1.0, "h_left": 0.5, "sigma": 1.0}, "k", [4, 8, 16, 32], 0.01, 400_000, RngKey(11)
        )
        assert result.order == 2
        assert result.target == 1.5
        assert abs(result.fit.exponent - 1.5) <= 0.3
