"""rate-fit: log-log exponent of the iterate bias along k or eta."""

from __future__ import annotations

from localsgd_lab.commands import register_command
from localsgd_lab.commands.base import BaseCommand, block_count, family_params, family_schema
from localsgd_lab.config import Param
from localsgd_lab.context import RunContext
from localsgd_lab.estimators import ESTIMATE_HEADER, ESTIMATES_NAME, estimate_row
from localsgd_lab.scaling import SweepResult, sweep_bias_scaling


def write_sweep(ctx: RunContext, result: SweepResult, prefix: str = "") -> None:
    ctx.write_csv(
        f"{prefix}points.csv",
        ["axis", "s", "mean", "stderr", "n", "used_in_fit", "note"],
        [(pt.axis, pt.s, pt.estimate.mean, pt.estimate.stderr, pt.estimate.n, pt.used_in_fit, pt.note) for pt in result.points],
    )
    f = result.fit
    lo, hi = result.window
    ctx.write_csv(
        f"{prefix}fit.csv",
        ["order", "exponent", "exponent_stderr", "intercept", "r_squared", "n_points", "target", "window_lo", "window_hi"],
        [(result.order, f.exponent, f.exponent_stderr, f.intercept, f.r_squared, f.n_points, result.target, lo, hi)],
    )


def sweep_line(result: SweepResult, axis: str) -> str:
    lo, hi = result.window
    return (
        f"{'PASS' if result.passed else 'FAIL'} rate-fit axis={axis} order={result.order} "
        f"exponent={result.fit.exponent:.4f} window=[{lo:.3g}, {hi:.3g}] r2={result.fit.r_squared:.4f}"
    )


@register_command
class RateFitCommand(BaseCommand):
    """Antithetic bias along a grid of k (eta fixed) or eta (k fixed), with a weighted power-law fit."""

    name = "rate-fit"
    anchor = "bias grows like eta^2 k^1.5 (second order) or eta^3 k^2 (third order)"
    summary = "Bias-scaling sweep with an exponent verdict against the order's target window"
    schema = {
        **family_schema("piecewise", ("piecewise", "logcosh"), h_right=1.0, h_left=0.5),
        "axis": Param("str", "k", "swept quantity", ("k", "eta")),
        "grid": Param("floats", [16, 32, 64, 128], "values of the swept quantity"),
        "fixed": Param("float", 0.002, "value of the other quantity (eta when axis=k, k when axis=eta)"),
        "x0": Param("float", 0.0, "start point"),
        "n": Param("int", 2_000_000, "SGD paths per grid point (pairs are n / 2)"),
        "tolerance": Param("float", 0.0, "half-width of the exponent window; 0 uses the order default"),
    }

    def run(self, ctx: RunContext) -> None:
        p = ctx.params
        grid = [int(g) for g in p["grid"]] if p["axis"] == "k" else p["grid"]
        total = block_count(p["n"] // 2) * len(grid)
        with ctx.track(total, f"rate-fit {p['axis']}") as progress:
            result = sweep_bias_scaling(
                p["objective"],
                family_params(p),
                p["axis"],
                grid,
                p["fixed"],
                p["n"],
                ctx.key(f"rate-fit-{p['objective']}-{p['axis']}"),
                p["x0"],
                p["tolerance"] or None,
                ctx.workers,
                progress,
            )
        write_sweep(ctx, result)
        on_eta = p["axis"] == "eta"
        estimates = [
            estimate_row(
                self.name, p["objective"], pt.estimate, pt.s if on_eta else p["fixed"], "antithetic", k=int(p["fixed"] if on_eta else pt.s)
            )
            for pt in result.points
        ]
        ctx.write_csv(ESTIMATES_NAME, ESTIMATE_HEADER, estimates)
        if ctx.ui:
            ctx.ui.table(
                "Sweep points",
                ["s", "mean", "stderr", "used"],
                [(pt.s, pt.estimate.mean, pt.estimate.stderr, pt.used_in_fit) for pt in result.points],
            )
        ctx.record_verdict(self.name, result.passed, sweep_line(result, p["axis"]))
