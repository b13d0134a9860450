"""verify-upper: FedAvg at a prescribed step size against the evaluated upper bound."""

from __future__ import annotations

import math

from localsgd_lab.bounds import DEFAULT_SLACK, STEPSIZE_RULES, RateInputs, UpperBoundVerdict, verify_upper_bound
from localsgd_lab.commands import register_command
from localsgd_lab.commands.base import BaseCommand, block_count, build_objective, family_schema
from localsgd_lab.config import Param
from localsgd_lab.context import RunContext
from localsgd_lab.engine import homogeneous_clients
from localsgd_lab.objectives import Objective1D

CONTROL_SLACK = 0.001


def inputs_for(obj: Objective1D, x0: float, M: int, K: int, R: int, G: float) -> RateInputs:
    """Theorem constants read off the objective's declared constants, with B and D measured from x0."""
    c = obj.constants
    return RateInputs(
        H=c.H,
        sigma=math.sqrt(obj.noise.variance()),
        Q=c.Q if c.q_bounded else 0.0,
        G=G,
        D=abs(x0 - c.x_star),
        B=float(obj.gap(x0)),
        M=M,
        K=K,
        R=R,
    )


def control_line(verdict: UpperBoundVerdict, slack: float) -> tuple[bool, str]:
    """The same measurement must fail at a tiny slack; passing means the bound is vacuous."""
    fails = verdict.measured.mean > slack * verdict.bound.total
    status = "PASS" if fails else "FAIL"
    return fails, (
        f"{status} negative-control theorem={verdict.theorem} measured={verdict.measured.mean:.6g} "
        f"bound={verdict.bound.total:.6g} C={slack:g} (expected to fail)"
    )


@register_command
class VerifyUpperCommand(BaseCommand):
    """Run FedAvg at each theorem's step size, measure E[F'(x_hat)^2] and compare with C times the rate."""

    name = "verify-upper"
    anchor = "FedAvg upper bounds under third-order smoothness (convex and non-convex) and the second-order baseline"
    summary = "Measured squared gradient norm vs slack times the evaluated bound, with a negative control"
    schema = {
        **family_schema("logcosh", ("logcosh", "quadratic", "piecewise")),
        "which": Param("str", "convex3o", "theorem", (*STEPSIZE_RULES, "all")),
        "M": Param("int", 8, "clients"),
        "K": Param("int", 16, "local steps"),
        "R": Param("int", 64, "rounds"),
        "x0": Param("float", 1.0, "start point"),
        "G": Param("float", 1.0, "gradient bound used by the non-convex rates"),
        "slack": Param("float", DEFAULT_SLACK, "C in measured <= C * bound"),
        "control_slack": Param("float", CONTROL_SLACK, "slack of the negative control; 0 disables it"),
        "n": Param("int", 16384, "replicas"),
    }

    def run(self, ctx: RunContext) -> None:
        p = ctx.params
        obj = build_objective(p)
        inputs = inputs_for(obj, p["x0"], p["M"], p["K"], p["R"], p["G"])
        clients = homogeneous_clients(obj, p["M"])
        theorems = list(STEPSIZE_RULES) if p["which"] == "all" else [p["which"]]
        rows = []
        for which in theorems:
            with ctx.track(block_count(p["n"]), f"verify {which}") as progress:
                verdict = verify_upper_bound(
                    clients, inputs, p["n"], ctx.key("verify-upper"), which, p["slack"], p["x0"], ctx.workers, progress
                )
            rows.append(
                (which, verdict.eta, verdict.measured.mean, verdict.measured.stderr, verdict.bound.total, p["slack"], verdict.passed)
            )
            for term, value in verdict.bound.terms.items():
                if ctx.ui:
                    ctx.ui.status(f"{which} {term} = {value:.4g}")
            ctx.record_verdict(f"verify-{which}", verdict.passed, verdict.line())
            if p["control_slack"] > 0:
                fails, line = control_line(verdict, p["control_slack"])
                ctx.record_verdict(f"control-{which}", fails, line)
        ctx.write_csv("verify.csv", ["theorem", "eta", "measured", "stderr", "bound", "C", "passed"], rows)
