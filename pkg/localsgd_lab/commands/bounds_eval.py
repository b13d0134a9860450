"""bounds-eval: every rate and step-size formula, term by term."""

from __future__ import annotations

from localsgd_lab.bounds import STEPSIZE_RULES, RateInputs, all_reports
from localsgd_lab.commands import register_command
from localsgd_lab.commands.base import BaseCommand
from localsgd_lab.config import Param
from localsgd_lab.context import RunContext

_INPUT_FIELDS = ("H", "sigma", "Q", "G", "D", "B", "zeta_star", "zeta", "M", "K", "R")


def rate_inputs(params: dict) -> RateInputs:
    return RateInputs(**{name: params[name] for name in _INPUT_FIELDS})


@register_command
class BoundsEvalCommand(BaseCommand):
    """Evaluate lower bounds, earlier bounds, baselines and the prescribed step sizes for one set of constants."""

    name = "bounds-eval"
    anchor = "FedAvg convergence-rate table: lower bounds and third-order upper bounds"
    summary = "Per-term rate table (theorem,term_name,value) and prescribed step sizes"
    schema = {
        "H": Param("float", 1.0, "smoothness"),
        "sigma": Param("float", 1.0, "noise scale"),
        "Q": Param("float", 0.5, "third-order smoothness"),
        "G": Param("float", 1.0, "gradient bound"),
        "D": Param("float", 1.0, "initial distance"),
        "B": Param("float", 1.0, "initial value gap"),
        "zeta_star": Param("float", 0.0, "heterogeneity at the optimum"),
        "zeta": Param("float", 0.0, "uniform heterogeneity"),
        "M": Param("int", 4, "clients"),
        "K": Param("int", 16, "local steps"),
        "R": Param("int", 64, "rounds"),
    }

    def run(self, ctx: RunContext) -> None:
        inputs = rate_inputs(ctx.params)
        rows = []
        for report in all_reports(inputs):
            rows += report.rows()
        ctx.write_csv("bounds.csv", ["theorem", "term_name", "value"], rows)

        steps = []
        for name, rule in STEPSIZE_RULES.items():
            eta, report = rule(inputs)
            steps.append((name, eta, report.total))
        ctx.write_csv("stepsizes.csv", ["theorem", "eta", "rate"], steps)
        if ctx.ui:
            ctx.ui.table("Prescribed step sizes", ["theorem", "eta", "rate"], steps)
        ok = all(eta <= 1.0 / inputs.H for _, eta, _ in steps)
        ctx.record_verdict(self.name, ok, f"{'PASS' if ok else 'FAIL'} bounds-eval prescribed eta <= 1/H")
