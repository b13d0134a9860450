"""The acceptance criteria, in run order.

Each criterion measures at the full-profile sample size scaled by the
profile, writes one CSV through the context and returns a result; a failed
comparison is a result with ``passed=False``, never an exception.
"""

from __future__ import annotations

import math
from typing import Any

import numpy as np

from localsgd_lab.acceptance.base import BaseCriterion, CriterionResult, ProfileScale
from localsgd_lab.artifacts import file_checksum
from localsgd_lab.bounds import STEPSIZE_RULES, RateInputs, lower_bound_hetero, lower_bound_homog, verify_upper_bound
from localsgd_lab.commands import get_command
from localsgd_lab.commands.bias_scan import monotone_drift
from localsgd_lab.commands.lowerbound_suite import hetero_drift_rows, homog_drift_check
from localsgd_lab.commands.oracle_grid import sigma_gap_rows
from localsgd_lab.commands.sde_check import control_passes
from localsgd_lab.commands.verify_upper import inputs_for
from localsgd_lab.config import ExperimentSpec
from localsgd_lab.context import RunContext
from localsgd_lab.engine import FedAvgConfig, homogeneous_clients, run_fedavg, simulate_sgd
from localsgd_lab.errors import ConfigError
from localsgd_lab.estimators import (
    WelfordState,
    dominance_check,
    estimate_bias,
    estimate_density,
    map_blocks,
    reduce_states,
)
from localsgd_lab.objectives import (
    make_hetero_pair,
    make_logcosh_instance,
    make_piecewise_quadratic,
    make_quadratic,
)
from localsgd_lab.oracles import (
    DEFAULT_C_H,
    PAPER_C_H,
    bias_envelope_2o,
    hetero_drift_asymptotic,
    hetero_round_map,
    hetero_round_starts,
    largest_valid_c_h,
    quad_sgd_distribution,
)
from localsgd_lab.rng import uniforms
from localsgd_lab.scaling import TOLERANCE_2O, TOLERANCE_3O, sweep_bias_scaling
from localsgd_lab.sde import REL_TOL, check_backward_expansion

PIECEWISE_UNIT = {"h_right": 1.0, "h_left": 0.5, "sigma": 1.0}
LOGCOSH_UNIT = {"H": 1.0, "Q": 0.5, "sigma": 1.0, "noise": "gaussian"}


class IterateDriftCriterion(BaseCriterion):
    number = 1
    name = "iterate_drift"
    title = "SGD iterate mean drifts left of GD on the kinked quadratic"
    header = ("k", "mean", "stderr", "n")

    def run(self, ctx: RunContext, scale: ProfileScale) -> CriterionResult:
        obj = make_piecewise_quadratic(2.0, 0.2, 0.1)
        result = estimate_density(
            obj, 0.0, 0.01, [128, 256, 512, 1024], scale.n(65536), ctx.key("acceptance/drift"),
            bins=200, range=(-0.6, 0.6), workers=ctx.workers,
        )
        passed, detail = monotone_drift(result.means, scale.relax(2.0))
        rows = tuple((k, e.mean, e.stderr, e.n) for k, e in sorted(result.means.items()))
        return CriterionResult(passed, detail, rows)


class BiasSandwichCriterion(BaseCriterion):
    number = 2
    name = "bias_sandwich"
    title = "Second-order bias lies inside its lower and upper envelopes"
    header = ("k", "bias", "stderr", "n", "lower", "upper", "inside")

    def run(self, ctx: RunContext, scale: ProfileScale) -> CriterionResult:
        eta, ks = 0.01, [16, 32, 64, 128]
        obj = make_piecewise_quadratic(1.0, 0.5, 1.0)
        estimates = estimate_bias(obj, 0.0, eta, ks, scale.n(20_000_000), "antithetic", ctx.key("acceptance/sandwich"), ctx.workers)
        width = scale.widen(2.0)
        rows = []
        for k in ks:
            e = estimates[k]
            env = bias_envelope_2o(eta, 1.0, 1.0, k)
            lower = math.nan if env.lower is None else env.lower
            upper = math.nan if env.upper is None else env.upper
            inside = lower - width * e.stderr <= abs(e.mean) <= upper + width * e.stderr and e.mean < 0
            rows.append((k, e.mean, e.stderr, e.n, lower, upper, inside))
        failed = [r[0] for r in rows if not r[6]]
        detail = f"k={ks} outside envelope at {failed}" if failed else f"all {len(ks)} checkpoints inside, all negative"
        return CriterionResult(not failed, detail, tuple(rows))


class ExponentFitCriterion(BaseCriterion):
    """Four log-log sweeps: k and eta axes on the kinked and the smooth objective."""

    number = 3
    name = "exponent_fits"
    title = "Bias exponents in k and eta match the second- and third-order rates"
    header = ("family", "axis", "exponent", "exponent_stderr", "window_lo", "window_hi", "passed")

    SWEEPS: tuple[tuple[str, dict[str, Any], str, list[float], float, float], ...] = (
        ("piecewise", PIECEWISE_UNIT, "k", [16, 32, 64, 128], 0.002, TOLERANCE_2O),
        ("piecewise", PIECEWISE_UNIT, "eta", [0.002, 0.004, 0.008], 32, TOLERANCE_2O),
        ("logcosh", LOGCOSH_UNIT, "k", [8, 16, 32, 64], 0.001, TOLERANCE_3O),
        ("logcosh", LOGCOSH_UNIT, "eta", [0.001, 0.002, 0.004], 16, TOLERANCE_3O),
    )

    def run(self, ctx: RunContext, scale: ProfileScale) -> CriterionResult:
        rows = []
        for family, params, axis, grid, fixed, tolerance in self.SWEEPS:
            values = [int(g) for g in grid] if axis == "k" else grid
            result = sweep_bias_scaling(
                family, params, axis, values, fixed, scale.n(2_000_000),
                ctx.key(f"acceptance/sweep-{family}-{axis}"), 0.0, scale.widen(tolerance), ctx.workers,
            )
            lo, hi = result.window
            rows.append((family, axis, result.fit.exponent, result.fit.exponent_stderr, lo, hi, result.passed))
        detail = " ".join(f"{r[0]}/{r[1]}={r[2]:.3f}" for r in rows)
        return CriterionResult(all(r[6] for r in rows), detail, tuple(rows))


class QuadraticOracleCriterion(BaseCriterion):
    number = 4
    name = "quadratic_oracle"
    title = "Monte-Carlo mean and variance of SGD on quadratics match the closed form"
    header = ("L", "eta", "t", "mean", "stderr", "predicted_mean", "variance", "predicted_variance", "passed")

    def run(self, ctx: RunContext, scale: ProfileScale) -> CriterionResult:
        n = scale.n(100_000)
        mean_sigmas, var_rel = scale.widen(4.0), scale.widen(0.03)
        rows = []
        for L in (0.5, 1.0, 2.0):
            obj = make_quadratic(L, 1.0)
            for eta in (0.01, 0.05, 0.1):
                for t in (1, 5, 20):
                    key = ctx.key(f"acceptance/quad-L={L!r}-eta={eta!r}-t={t}")

                    def block(first: int, size: int, obj=obj, eta=eta, t=t, key=key) -> WelfordState:
                        return WelfordState.from_samples(simulate_sgd(obj, 1.0, eta, t, key.at(replica=first), size, [t])[0])

                    state = reduce_states(map_blocks(block, n, ctx.workers))
                    stderr = math.sqrt(state.variance / state.count)
                    oracle = quad_sgd_distribution(L, 1.0, eta, 1.0, t)
                    ok = (
                        abs(state.mean - oracle.mean) <= mean_sigmas * stderr
                        and abs(state.variance - oracle.variance) <= var_rel * oracle.variance
                    )
                    rows.append((L, eta, t, state.mean, stderr, oracle.mean, state.variance, oracle.variance, ok))
        failed = sum(1 for r in rows if not r[8])
        return CriterionResult(failed == 0, f"{len(rows) - failed}/{len(rows)} grid points agree", tuple(rows))


class HeteroRecursionCriterion(BaseCriterion):
    """Deterministic FedAvg on the two-client instance against the a/b round map."""

    number = 5
    name = "hetero_recursion"
    title = "FedAvg on the heterogeneous pair follows the closed-form round map"
    header = ("eta", "K", "R", "max_abs_error")

    ETAS = (0.01, 0.05, 0.1, 0.3)
    KS = (1, 2, 5, 10)
    RS = (1, 5, 20)
    EXACT_TOL = 1e-12

    def run(self, ctx: RunContext, scale: ProfileScale) -> CriterionResult:
        clients = make_hetero_pair(1.0, 1.0)
        rows = []
        for eta in self.ETAS:
            for K in self.KS:
                for R in self.RS:
                    run = run_fedavg(clients, FedAvgConfig(eta, K, R, 2), ctx.key("acceptance/hetero-exact"))
                    exact = hetero_round_starts(1.0, eta, K, R, 1.0)
                    rows.append((eta, K, R, float(np.max(np.abs(run.round_starts.values - exact)))))
        worst = max(r[3] for r in rows)
        k1_zero = all(hetero_round_map(1.0, eta, 1).b == 0.0 for eta in self.ETAS)
        b_two = hetero_round_map(1.0, 0.1, 2).b
        asymptotic = all(
            abs(hetero_round_map(1.0, eta, K).b - hetero_drift_asymptotic(1.0, eta, K))
            <= 0.1 * abs(hetero_drift_asymptotic(1.0, eta, K))
            for eta in (0.001, 0.002, 0.005, 0.01)
            for K in (2, 3, 5, 10)
            if eta * K <= 0.1
        )
        passed = worst <= self.EXACT_TOL and k1_zero and abs(b_two + 0.0025) <= 1e-15 and asymptotic
        detail = f"max error={worst:.3g} b(K=1)=0:{k1_zero} b(0.1, 2)={b_two:.17g} asymptotic within 10%:{asymptotic}"
        return CriterionResult(passed, detail, tuple(rows))


class HeteroDriftCriterion(BaseCriterion):
    number = 6
    name = "hetero_drift"
    title = "Exact heterogeneous drift stays below its ceiling"
    header = ("eta", "K", "R", "exact", "bound", "bound_published_c_h", "holds")

    GRID = [(eta, K, R) for eta in (0.01, 0.03, 0.1, 0.3, 0.5) for K in (2, 3, 5, 10, 20, 50) for R in (1, 2, 5, 10, 20, 50)]

    def run(self, ctx: RunContext, scale: ProfileScale) -> CriterionResult:
        rows = hetero_drift_rows(1.0, 1.0, self.GRID, DEFAULT_C_H)
        violations = sum(1 for r in rows if r[3] > r[5])
        valid = largest_valid_c_h([(r[0], r[1], r[2]) for r in rows])
        passed = bool(rows) and all(r[6] for r in rows)
        detail = (
            f"points={len(rows)} c_h={DEFAULT_C_H:g} holds everywhere:{passed}; "
            f"c_h={PAPER_C_H:g} violated at {violations}; largest valid c_h={valid:.4g}"
        )
        return CriterionResult(passed, detail, tuple(rows))


class HomogDriftCriterion(BaseCriterion):
    number = 7
    name = "homog_drift"
    title = "Homogeneous FedAvg round starts drift below the ceiling"
    header = ("eta", "K", "R", "M", "mean", "stderr", "n", "bound", "passed")

    SETTINGS = ((0.1, 10, 5), (0.05, 20, 10))
    M = 2

    def run(self, ctx: RunContext, scale: ProfileScale) -> CriterionResult:
        margin = scale.relax(2.0)
        rows = []
        for eta, K, R in self.SETTINGS:
            est, bound = homog_drift_check(
                1.0, 1.0, eta, K, R, self.M, scale.n(4_000_000), ctx.key(f"acceptance/homog-eta={eta!r}"), ctx.workers
            )
            rows.append((eta, K, R, self.M, est.mean, est.stderr, est.n, bound, est.mean + margin * est.stderr <= bound))
        detail = " ".join(f"(eta={r[0]:g},K={r[1]},R={r[2]}) mean={r[4]:.4g} bound={r[7]:.4g}" for r in rows)
        return CriterionResult(all(r[8] for r in rows), detail, tuple(rows))


class DominanceCriterion(BaseCriterion):
    number = 8
    name = "dominance"
    title = "Quadratic comparators stochastically dominate the kinked iterate"
    header = ("comparator_L", "violation", "dkw_bound", "n", "passed")

    def run(self, ctx: RunContext, scale: ProfileScale) -> CriterionResult:
        factor = scale.widen(3.0)
        piecewise = make_piecewise_quadratic(1.0, 0.5, 1.0)
        rows = []
        for L in (1.0, 0.5):
            report = dominance_check(
                piecewise, make_quadratic(L, 1.0), 0.0, 0.05, 20, scale.n(1_000_000), ctx.key("acceptance/dominance"),
                coupled=False, workers=ctx.workers,
            )
            rows.append((L, report.violation, report.dkw_bound, report.n, report.within(factor)))
        detail = " ".join(f"L={r[0]:g} violation={r[1]:.3g}" for r in rows) + f" DKW={rows[0][2]:.3g}"
        return CriterionResult(all(r[4] for r in rows), detail, tuple(rows))


class BackwardExpansionCriterion(BaseCriterion):
    number = 9
    name = "sde_coefficient"
    title = "Second time derivative of the SDE mean matches the backward equation"
    header = ("objective", "fitted_u_tt", "stderr", "predicted_u_tt", "passed")

    def run(self, ctx: RunContext, scale: ProfileScale) -> CriterionResult:
        n = scale.n(20_000_000)
        rel_tol = scale.widen(REL_TOL)
        smooth = check_backward_expansion(
            make_logcosh_instance(1.0, 0.5, 1.0), 0.0, 0.1, 1.0, n, ctx.key("acceptance/sde-logcosh"),
            rel_tol=rel_tol, workers=ctx.workers,
        )
        control = check_backward_expansion(
            make_quadratic(1.0, 1.0), 0.0, 0.1, 1.0, n, ctx.key("acceptance/sde-quadratic"),
            rel_tol=rel_tol, workers=ctx.workers,
        )
        smooth_ok = smooth.u_tt_within(rel_tol)
        control_ok = control_passes(control, scale.widen(4.0))
        rows = (
            ("logcosh", smooth.fitted.u_tt, smooth.fitted_stderr.u_tt, smooth.predicted.u_tt, smooth_ok),
            ("quadratic", control.fitted.u_tt, control.fitted_stderr.u_tt, control.predicted.u_tt, control_ok),
        )
        detail = (
            f"u_tt={smooth.fitted.u_tt:.5g} predicted={smooth.predicted.u_tt:.5g} "
            f"control u_tt={control.fitted.u_tt:.3g} +- {control.fitted_stderr.u_tt:.2g}"
        )
        return CriterionResult(smooth_ok and control_ok, detail, rows)


class UpperBoundCriterion(BaseCriterion):
    number = 10
    name = "upper_bounds"
    title = "FedAvg at the prescribed step sizes stays within slack of the third-order bounds"
    header = ("theorem", "eta", "measured", "stderr", "bound", "passed", "control_fails")

    THEOREMS = ("convex3o", "nonconvex3o")
    SLACK = 10.0
    CONTROL_SLACK = 0.001

    def run(self, ctx: RunContext, scale: ProfileScale) -> CriterionResult:
        obj = make_logcosh_instance(1.0, 0.5, 1.0)
        M, K, R, x0 = 8, 16, 64, 1.0
        inputs: RateInputs = inputs_for(obj, x0, M, K, R, 1.0)
        clients = homogeneous_clients(obj, M)
        slack = scale.widen(self.SLACK)
        rows = []
        for which in self.THEOREMS:
            verdict = verify_upper_bound(
                clients, inputs, scale.n(16384), ctx.key("acceptance/upper"), which, slack, x0, ctx.workers  # type: ignore[arg-type]
            )
            control_fails = verdict.measured.mean > self.CONTROL_SLACK * verdict.bound.total
            rows.append((which, verdict.eta, verdict.measured.mean, verdict.measured.stderr, verdict.bound.total, verdict.passed, control_fails))
        detail = " ".join(f"{r[0]}: measured={r[2]:.4g} bound={r[4]:.4g}" for r in rows)
        return CriterionResult(all(r[5] and r[6] for r in rows), detail, tuple(rows))


class ArithmeticIdentitiesCriterion(BaseCriterion):
    """Exact checks; no Monte Carlo is involved, so the profile does not matter."""

    number = 11
    name = "arithmetic_identities"
    title = "Sigma gap, zero-heterogeneity reduction and step-size ceilings"
    header = ("check", "points", "failures")

    RANDOM_INPUTS = 200

    def run(self, ctx: RunContext, scale: ProfileScale) -> CriterionResult:
        etas = [float(e) for e in np.geomspace(1e-3, 1.0 / 6.0, 25)]
        ks = sorted({int(k) for k in np.geomspace(2, 4096, 40)})
        gap_rows = sigma_gap_rows(etas, [0.5, 1.0, 2.0], ks, 1.0)
        gap_failures = sum(1 for r in gap_rows if not r[10])

        reduction_failures = eta_failures = 0
        for inputs in self._random_inputs(ctx):
            homog = lower_bound_homog(inputs)
            hetero = lower_bound_hetero(inputs)
            same_terms = all(hetero.terms[name] == value for name, value in homog.terms.items())
            if not (same_terms and hetero.terms["hetero"] == 0.0 and hetero.total == homog.total):
                reduction_failures += 1
            for rule in STEPSIZE_RULES.values():
                eta, _ = rule(inputs)
                if not eta <= 1.0 / inputs.H:
                    eta_failures += 1
        rows = (
            ("sigma_gap", len(gap_rows), gap_failures),
            ("hetero_reduces_to_homog", self.RANDOM_INPUTS, reduction_failures),
            ("eta_below_inverse_H", self.RANDOM_INPUTS * len(STEPSIZE_RULES), eta_failures),
        )
        passed = bool(gap_rows) and gap_failures == reduction_failures == eta_failures == 0
        detail = f"sigma-gap points={len(gap_rows)} failures={gap_failures + reduction_failures + eta_failures}"
        return CriterionResult(passed, detail, rows)

    def _random_inputs(self, ctx: RunContext) -> list[RateInputs]:
        """Log-uniform constants in [1e-2, 1e2] and integer M, K, R drawn from the run's key."""
        u = uniforms(ctx.key("acceptance/identities"), self.RANDOM_INPUTS * 9).reshape(self.RANDOM_INPUTS, 9)
        out = []
        for row in u:
            H, sigma, Q, G, D, B = (10.0 ** (4.0 * v - 2.0) for v in row[:6])
            M, K, R = (1 + int(v * 64) for v in row[6:])
            out.append(RateInputs(H=H, sigma=sigma, Q=Q, G=G, D=D, B=B, M=M, K=max(K, 2), R=R))
        return out


class DeterminismCriterion(BaseCriterion):
    """Rerun cheap multi-block commands at two worker counts and compare CSV checksums."""

    number = 12
    name = "determinism"
    title = "Results are bit-identical across worker counts"
    header = ("command", "file", "checksum_serial", "checksum_parallel", "identical")

    RUNS: tuple[tuple[str, dict[str, Any]], ...] = (
        ("bias-scan", {"n": 150_000}),
        ("fedavg-run", {"K": 4, "R": 8, "M": 2, "n": 150_000}),
        ("density", {"objective": "logcosh", "range_lo": -3.0, "range_hi": 3.0, "n": 150_000}),
        ("oracle-grid", {}),
    )

    def run(self, ctx: RunContext, scale: ProfileScale) -> CriterionResult:
        parallel = max(2, ctx.workers)
        rows = []
        for command, overrides in self.RUNS:
            serial = self._checksums(ctx, command, overrides, 1)
            threaded = self._checksums(ctx, command, overrides, parallel)
            for name in sorted(set(serial) | set(threaded)):
                a, b = serial.get(name, ""), threaded.get(name, "")
                rows.append((command, name, a, b, a == b and a != ""))
        mismatched = [f"{r[0]}/{r[1]}" for r in rows if not r[4]]
        detail = f"{len(rows)} files compared at workers 1 and {parallel}; mismatched: {mismatched or 'none'}"
        return CriterionResult(bool(rows) and not mismatched, detail, tuple(rows))

    def _checksums(self, ctx: RunContext, command: str, overrides: dict[str, Any], workers: int) -> dict[str, str]:
        cls = get_command(command)
        if cls is None:
            raise ConfigError(f"unknown command '{command}'")
        cmd = cls()
        spec = ExperimentSpec(command, cmd.validate(overrides), ctx.seed)
        child = RunContext(spec, ctx.out_dir / "determinism" / f"{command}-workers{workers}", workers=workers, profile=ctx.profile)
        cmd.run(child)
        return {path.name: file_checksum(path) for path in child.artifacts}


def get_all_criteria() -> list[BaseCriterion]:
    return [
        IterateDriftCriterion(),
        BiasSandwichCriterion(),
        ExponentFitCriterion(),
        QuadraticOracleCriterion(),
        HeteroRecursionCriterion(),
        HeteroDriftCriterion(),
        HomogDriftCriterion(),
        DominanceCriterion(),
        BackwardExpansionCriterion(),
        UpperBoundCriterion(),
        ArithmeticIdentitiesCriterion(),
        DeterminismCriterion(),
    ]
