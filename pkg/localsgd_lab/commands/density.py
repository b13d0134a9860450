"""density: histograms of SGD iterates for any scalar objective."""

from __future__ import annotations

from localsgd_lab.commands import register_command
from localsgd_lab.commands.base import BaseCommand, block_count, build_objective, family_schema
from localsgd_lab.commands.bias_scan import write_densities
from localsgd_lab.config import Param
from localsgd_lab.context import RunContext
from localsgd_lab.estimators import ESTIMATE_HEADER, ESTIMATES_NAME, estimate_density, estimate_row, predicted_range


@register_command
class DensityCommand(BaseCommand):
    name = "density"
    anchor = "density of SGD iterates at increasing step counts"
    summary = "Per-checkpoint histograms and iterate means (range predicted when not given)"
    schema = {
        **family_schema("quadratic"),
        "eta": Param("float", 0.01, "step size"),
        "x0": Param("float", 0.0, "start point"),
        "checkpoints": Param("ints", [128, 256, 512, 1024], "recorded step counts"),
        "n": Param("int", 65536, "replicas"),
        "bins": Param("int", 200, "histogram bins"),
        "range_lo": Param("float", 0.0, "histogram lower edge; equal edges mean predicted"),
        "range_hi": Param("float", 0.0, "histogram upper edge"),
    }

    def run(self, ctx: RunContext) -> None:
        p = ctx.params
        obj = build_objective(p)
        lo, hi = p["range_lo"], p["range_hi"]
        span = (lo, hi) if lo < hi else predicted_range(obj, p["x0"], p["eta"], p["checkpoints"])
        if ctx.ui:
            ctx.ui.status(f"histogram range [{span[0]:.4g}, {span[1]:.4g}] with {p['bins']} bins")
        with ctx.track(block_count(p["n"]), "density") as progress:
            result = estimate_density(
                obj, p["x0"], p["eta"], p["checkpoints"], p["n"], ctx.key("density"), p["bins"], span, ctx.workers, progress
            )
        write_densities(ctx, result)
        rows = [(k, e.mean, e.stderr, e.n) for k, e in sorted(result.means.items())]
        ctx.write_csv("means.csv", ["k", "mean", "stderr", "n"], rows)
        ctx.write_csv(
            ESTIMATES_NAME,
            ESTIMATE_HEADER,
            [estimate_row(self.name, p["objective"], e, p["eta"], k=k) for k, e in sorted(result.means.items())],
        )
        if ctx.ui:
            ctx.ui.table("Iterate means", ["k", "mean", "stderr", "n"], rows)
