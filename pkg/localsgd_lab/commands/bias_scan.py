"""bias-scan: iterate densities and the drift of the mean SGD iterate away from GD."""

from __future__ import annotations

import logging
import math
from typing import Mapping

from localsgd_lab.commands import register_command
from localsgd_lab.commands.base import BaseCommand, block_count, build_objective, family_schema
from localsgd_lab.config import Param
from localsgd_lab.context import RunContext
from localsgd_lab.engine import simulate_gd
from localsgd_lab.estimators import (
    ESTIMATE_HEADER,
    ESTIMATES_NAME,
    DensityResult,
    MonteCarloEstimate,
    estimate_density,
    estimate_row,
    suggest_sample_size,
)
from localsgd_lab.objectives import Objective1D
from localsgd_lab.oracles import BiasEnvelope, bias_envelope_2o, bias_envelope_3o

logger = logging.getLogger(__name__)

GAP_SIGMAS = 2.0


def monotone_drift(means: Mapping[int, MonteCarloEstimate], gap_sigmas: float = GAP_SIGMAS) -> tuple[bool, str]:
    """Checkpoint means strictly decrease, each gap beyond ``gap_sigmas`` joint stderrs, and end below zero."""
    ks = sorted(means)
    worst = math.inf
    for a, b in zip(ks, ks[1:]):
        gap = means[a].mean - means[b].mean
        joint = math.hypot(means[a].stderr, means[b].stderr)
        worst = min(worst, gap / joint if joint > 0 else (math.inf if gap > 0 else -math.inf))
    last = means[ks[-1]]
    below = last.ci95[1] < 0.0
    passed = worst > gap_sigmas and below
    return passed, f"min gap/joint stderr={worst:.3g} last mean={last.mean:.6g} (95% upper {last.ci95[1]:.3g})"


def write_densities(ctx: RunContext, result: DensityResult) -> None:
    for k, hist in result.histograms.items():
        width = hist.edges[1:] - hist.edges[:-1]
        density = hist.counts / (hist.total * width)
        rows = [
            (float(hist.edges[i]), float(hist.edges[i + 1]), float(hist.centers[i]), int(hist.counts[i]), float(density[i]))
            for i in range(len(hist.counts))
        ]
        ctx.write_csv(f"density_k{k}.csv", ["bin_left", "bin_right", "center", "count", "density"], rows)


def envelope_for(obj: Objective1D, eta: float, k: int) -> BiasEnvelope:
    c = obj.constants
    if not c.q_bounded:
        return bias_envelope_2o(eta, c.H, c.sigma, k)
    return bias_envelope_3o(eta, c.H, c.Q, c.sigma, k)


@register_command
class BiasScanCommand(BaseCommand):
    """Histogram SGD iterates at several checkpoints and check that their mean keeps drifting left."""

    name = "bias-scan"
    anchor = "SGD iterate mean drifts away from the GD iterate on a piecewise quadratic"
    summary = "Iterate densities, bias per checkpoint and a monotone-drift verdict"
    schema = {
        **family_schema("piecewise", sigma=0.1),
        "eta": Param("float", 0.01, "step size"),
        "x0": Param("float", 0.0, "start point"),
        "checkpoints": Param("ints", [128, 256, 512, 1024], "recorded step counts"),
        "n": Param("int", 65536, "replicas"),
        "bins": Param("int", 200, "histogram bins"),
        "range_lo": Param("float", -0.6, "histogram lower edge"),
        "range_hi": Param("float", 0.6, "histogram upper edge"),
    }

    def run(self, ctx: RunContext) -> None:
        p = ctx.params
        obj = build_objective(p)
        eta, x0 = p["eta"], p["x0"]
        ks = sorted(set(p["checkpoints"]))
        if ctx.ui:
            ctx.ui.status(f"{obj!r}, eta={eta:g}, n={p['n']}")
            lower = envelope_for(obj, eta, ks[-1]).lower
            if lower:
                need = suggest_sample_size(eta, obj.constants.sigma, ks[-1], lower)
                ctx.ui.info(f"replicas to resolve the smallest admissible bias at k={ks[-1]}: {need}")
        with ctx.track(block_count(p["n"]), "bias-scan") as progress:
            result = estimate_density(
                obj, x0, eta, ks, p["n"], ctx.key("bias-scan"), p["bins"], (p["range_lo"], p["range_hi"]), ctx.workers, progress
            )
        write_densities(ctx, result)

        gd = simulate_gd(obj, x0, eta, max(ks), ks)[:, 0]
        rows = []
        for k, z in zip(ks, gd):
            est = result.means[k]
            env = envelope_for(obj, eta, k)
            rows.append((k, est.mean, est.stderr, est.n, float(z), est.mean - float(z), _opt(env.lower), _opt(env.upper)))
        ctx.write_csv("bias.csv", ["k", "mean", "stderr", "n", "gd", "bias", "envelope_lower", "envelope_upper"], rows)
        ctx.write_csv(
            ESTIMATES_NAME,
            ESTIMATE_HEADER,
            [estimate_row(self.name, p["objective"], result.means[k], eta, k=k) for k in ks],
        )
        if ctx.ui:
            ctx.ui.table("Checkpoint means", ["k", "mean", "stderr", "gd"], [(r[0], r[1], r[2], r[4]) for r in rows])

        passed, detail = monotone_drift(result.means)
        ctx.record_verdict(self.name, passed, f"{'PASS' if passed else 'FAIL'} bias-scan monotone drift: {detail}")


def _opt(value: float | None) -> float:
    return math.nan if value is None else value
