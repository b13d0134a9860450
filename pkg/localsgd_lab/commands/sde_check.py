"""sde-check: Taylor coefficients of u(t, x) = E[X(t) | X(0) = x] against the backward equation."""

from __future__ import annotations

from localsgd_lab.commands import register_command
from localsgd_lab.commands.base import BaseCommand, block_count, build_objective, family_schema
from localsgd_lab.config import Param
from localsgd_lab.context import RunContext
from localsgd_lab.objectives import make_quadratic
from localsgd_lab.sde import (
    REL_TOL,
    BackwardExpansion,
    check_backward_expansion,
    discrete_cross_check,
    taylor_coeffs_predicted,
)

CONTROL_SIGMAS = 4.0
TRACE_HEADER = ("t", "u_mean", "u_stderr")


def trace_rows(result: BackwardExpansion, x: float) -> list[tuple[float, float, float]]:
    """u(t, x) = x + mean shift at every fitted time."""
    return [(t, x + e.mean, e.stderr) for t, e in result.points]


def control_passes(result: BackwardExpansion, sigmas: float = CONTROL_SIGMAS) -> bool:
    return abs(result.fitted.u_tt) <= sigmas * result.fitted_stderr.u_tt


@register_command
class SdeCheckCommand(BaseCommand):
    """Fit u_t and u_tt on antithetic Euler-Maruyama paths and compare u_tt with F'F'' - (1/2) eta sigma^2 F'''."""

    name = "sde-check"
    anchor = "continuous-time SDE limit of SGD and its backward-equation Taylor coefficients"
    summary = "Fitted second time derivative of the SDE mean vs the backward-equation prediction, with a quadratic control"
    schema = {
        **family_schema("logcosh", ("logcosh", "piecewise", "quadratic")),
        "x": Param("float", 0.0, "start point"),
        "eta": Param("float", 0.1, "step size entering the diffusion"),
        "n": Param("int", 2_000_000, "SDE paths (pairs are n / 2)"),
        "t_grid": Param("floats", [0.05, 0.1, 0.15, 0.2], "times at which u(t, x) is estimated"),
        "rel_tol": Param("float", REL_TOL, "relative tolerance on u_tt"),
        "control": Param("bool", True, "also run the quadratic control"),
        "k": Param("int", 2, "SGD steps of the discrete cross-check; 0 skips it"),
    }

    def run(self, ctx: RunContext) -> None:
        p = ctx.params
        obj = build_objective(p)
        sigma = p["sigma"]
        runs = [(p["objective"], obj)]
        if p["control"]:
            runs.append(("quadratic-control", make_quadratic(obj.constants.H, sigma)))

        fits = []
        for label, target in runs:
            with ctx.track(block_count(p["n"] // 2), f"sde {label}") as progress:
                result = check_backward_expansion(
                    target,
                    p["x"],
                    p["eta"],
                    sigma,
                    p["n"],
                    ctx.key(f"sde-{label}"),
                    p["t_grid"],
                    rel_tol=p["rel_tol"],
                    paper_literal=ctx.paper_literal,
                    workers=ctx.workers,
                    progress=progress,
                )
            alt = taylor_coeffs_predicted(target, p["x"], p["eta"], sigma, not ctx.paper_literal)
            trace = "sde_trace_control.csv" if label == "quadratic-control" else "sde_trace.csv"
            ctx.write_csv(trace, TRACE_HEADER, trace_rows(result, p["x"]))
            fits.append((label, "u_t", result.fitted.u_t, result.fitted_stderr.u_t, result.predicted.u_t, alt.u_t))
            fits.append((label, "u_tt", result.fitted.u_tt, result.fitted_stderr.u_tt, result.predicted.u_tt, alt.u_tt))

            if label == "quadratic-control":
                ok = control_passes(result)
                line = f"u_tt={result.fitted.u_tt:.3g} +- {result.fitted_stderr.u_tt:.2g} (expected 0)"
            else:
                ok = result.u_tt_within(p["rel_tol"])
                line = (
                    f"u_tt={result.fitted.u_tt:.6g} +- {result.fitted_stderr.u_tt:.2g} "
                    f"predicted={result.predicted.u_tt:.6g} other convention={alt.u_tt:.6g}"
                )
            ctx.record_verdict(f"sde-{label}", ok, f"{'PASS' if ok else 'FAIL'} sde-check {label}: {line}")

        ctx.write_csv(
            "sde_fit.csv", ["objective", "coefficient", "fitted", "stderr", "predicted", "predicted_other_convention"], fits
        )

        if p["k"] >= 2:
            check = discrete_cross_check(obj, p["x"], p["eta"], p["k"], p["n"], ctx.key("sde-discrete"), ctx.paper_literal, ctx.workers)
            ctx.write_csv(
                "discrete.csv",
                ["k", "measured", "stderr", "predicted", "relative_error"],
                [(p["k"], check.measured.mean, check.measured.stderr, check.predicted, check.relative_error)],
            )
            if ctx.ui:
                ctx.ui.info(
                    f"discrete bias at k={p['k']}: {check.measured.mean:.4g} vs leading order {check.predicted:.4g}"
                )
