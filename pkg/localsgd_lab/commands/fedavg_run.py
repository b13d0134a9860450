"""fedavg-run: FedAvg (Local SGD) against the minibatch and single-machine baselines."""

from __future__ import annotations

from typing import Sequence

from localsgd_lab.commands import register_command
from localsgd_lab.commands.base import BaseCommand, block_count, build_clients, family_schema
from localsgd_lab.config import Param
from localsgd_lab.context import RunContext
from localsgd_lab.engine import FedAvgConfig, population_gap, simulate_minibatch_sgd, simulate_sgd
from localsgd_lab.estimators import (
    ESTIMATE_HEADER,
    ESTIMATES_NAME,
    MonteCarloEstimate,
    WelfordState,
    estimate_row,
    fedavg_round_stats,
    map_blocks,
    reduce_states,
)
from localsgd_lab.objectives import ClientObjective
from localsgd_lab.rng import RngKey

ALL_FAMILIES = ("piecewise", "logcosh", "quadratic", "hetero_pair", "composite")


def baseline_gap(
    clients: Sequence[ClientObjective], cfg: FedAvgConfig, key: RngKey, n: int, which: str, workers: int = 1
) -> MonteCarloEstimate:
    """F(x_final) - F(x*) of a baseline with the same gradient budget as FedAvg."""

    def block(first: int, size: int) -> WelfordState:
        block_key = key.at(replica=first)
        if which == "minibatch":
            final = simulate_minibatch_sgd(clients, cfg, block_key, size)[-1]
        else:
            first_client = min(clients, key=lambda c: c.client_tag)
            final = simulate_sgd(
                first_client.objective,
                cfg.x0,
                cfg.eta,
                cfg.total_steps,
                block_key.at(client=first_client.client_tag),
                size,
                [cfg.total_steps],
            )[0]
        return WelfordState.from_samples(population_gap(clients, final))

    return MonteCarloEstimate.from_state(reduce_states(map_blocks(block, n, workers)))


@register_command
class FedAvgRunCommand(BaseCommand):
    """M clients run K local SGD steps from the broadcast point; the server averages them, R times."""

    name = "fedavg-run"
    anchor = "FedAvg / Local SGD algorithm (broadcast, K local steps, average)"
    summary = "Simulate FedAvg and report per-round means and the final suboptimality"
    schema = {
        **family_schema("logcosh", ALL_FAMILIES),
        "eta": Param("float", 0.05, "step size"),
        "K": Param("int", 16, "local steps per round"),
        "R": Param("int", 64, "rounds"),
        "M": Param("int", 8, "clients"),
        "x0": Param("float", 1.0, "start point (composites use their own)"),
        "n": Param("int", 4096, "replicas"),
        "metric": Param("str", "value_gap", "final metric", ("value_gap", "grad_sq")),
        "baselines": Param("bool", True, "also run minibatch and single-machine SGD"),
    }

    def run(self, ctx: RunContext) -> None:
        p = ctx.params
        cfg = FedAvgConfig(p["eta"], p["K"], p["R"], p["M"], p["x0"], p["n"], ctx.seed)
        clients = build_clients(p, p["M"], p["K"], p["R"])
        key = ctx.key("fedavg-run")
        with ctx.track(block_count(p["n"]), "fedavg") as progress:
            stats = fedavg_round_stats(clients, cfg, p["n"], key, p["metric"], ctx.workers, progress)

        ctx.write_csv(
            "rounds.csv",
            ["algorithm", "round", "mean", "stderr"],
            [("fedavg", r, e.mean, e.stderr) for r, e in enumerate(stats.rounds)],
        )
        summary = [("fedavg", p["metric"], stats.metric.mean, stats.metric.stderr, stats.metric.n)]  # type: ignore[union-attr]
        counts = {"K": p["K"], "R": p["R"], "M": p["M"]}
        estimates = [estimate_row(self.name, p["objective"], stats.metric, p["eta"], **counts)]  # type: ignore[arg-type]
        if p["baselines"] and isinstance(clients, list):
            for which in ("minibatch", "single_machine"):
                est = baseline_gap(clients, cfg, key.child(which), p["n"], which, ctx.workers)
                summary.append((which, "value_gap", est.mean, est.stderr, est.n))
                estimates.append(estimate_row(f"{self.name}:{which}", p["objective"], est, p["eta"], **counts))
        elif p["baselines"] and ctx.ui:
            ctx.ui.info("baselines are run for scalar client families only")
        ctx.write_csv("summary.csv", ["algorithm", "metric", "mean", "stderr", "n"], summary)
        ctx.write_csv(ESTIMATES_NAME, ESTIMATE_HEADER, estimates)
        if ctx.ui:
            ctx.ui.table("Final suboptimality", ["algorithm", "metric", "mean", "stderr", "n"], summary)
            ctx.ui.success(f"final mean round start {stats.rounds[-1].mean:.6g}")
