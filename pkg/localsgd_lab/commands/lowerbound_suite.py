"""lowerbound-suite: the three mechanisms behind the FedAvg lower bound, checked separately."""

from __future__ import annotations

import math
from typing import Any

from localsgd_lab.bounds import RateInputs, lower_bound_hetero
from localsgd_lab.commands import register_command
from localsgd_lab.commands.base import BaseCommand, block_count
from localsgd_lab.config import Param
from localsgd_lab.context import RunContext
from localsgd_lab.engine import FedAvgConfig, homogeneous_clients
from localsgd_lab.errors import InvalidParameterError
from localsgd_lab.estimators import MonteCarloEstimate, ProgressCallback, fedavg_error, fedavg_round_stats
from localsgd_lab.objectives import lowerbound_mu, make_lowerbound_composite, make_piecewise_quadratic
from localsgd_lab.oracles import (
    DEFAULT_C_H,
    PAPER_C_H,
    hetero_drift_bound,
    hetero_round_starts,
    homog_drift_bound,
    homog_value_floor,
    largest_valid_c_h,
)
from localsgd_lab.rng import RngKey

DRIFT_SIGMAS = 2.0


def homog_drift_check(
    L: float,
    sigma: float,
    eta: float,
    K: int,
    R: int,
    M: int,
    n: int,
    key: RngKey,
    workers: int = 1,
    progress: ProgressCallback | None = None,
) -> tuple[MonteCarloEstimate, float]:
    """MC estimate of E[x^(R,0)] for FedAvg on the piecewise instance (L, L/2) from 0, with its ceiling."""
    bound = homog_drift_bound(eta, L, sigma, K, R)
    obj = make_piecewise_quadratic(L, L / 2.0, sigma)
    cfg = FedAvgConfig(eta, K, R, M, 0.0, n, key.master_seed)
    stats = fedavg_round_stats(homogeneous_clients(obj, M), cfg, n, key, "value_gap", workers, progress)
    return stats.rounds[-1], bound


def hetero_drift_rows(H: float, zeta_star: float, grid: list[tuple[float, int, int]], c_h: float) -> list[tuple]:
    """(eta, K, R, exact x^(R,0), bound at c_h, bound at the published constant, holds) per grid point with eta H <= 1/2 and K >= 2."""
    rows = []
    for eta, K, R in grid:
        if eta * H > 0.5 or K < 2:
            continue
        exact = float(hetero_round_starts(H, eta, K, R, zeta_star)[-1])
        bound = hetero_drift_bound(eta, H, zeta_star, K, R, c_h)
        published = hetero_drift_bound(eta, H, zeta_star, K, R, PAPER_C_H)
        rows.append((eta, K, R, exact, bound, published, exact <= bound))
    return rows


@register_command
class LowerBoundSuiteCommand(BaseCommand):
    """Homogeneous round drift (MC), heterogeneous drift (exact) and the composite hard instance."""

    name = "lowerbound-suite"
    anchor = "FedAvg lower bound: homogeneous round drift, heterogeneous drift and the three-coordinate hard instance"
    summary = "Drift ceilings against simulation plus composite suboptimality next to the lower-bound terms"
    schema = {
        "H": Param("float", 1.0, "smoothness"),
        "sigma": Param("float", 1.0, "noise scale"),
        "zeta_star": Param("float", 1.0, "heterogeneity at the optimum"),
        "D": Param("float", 1.0, "initial distance"),
        "eta_drift": Param("float", 0.1, "step size of the homogeneous drift check"),
        "K": Param("int", 10, "local steps"),
        "R": Param("int", 5, "rounds"),
        "M": Param("int", 2, "clients"),
        "n": Param("int", 400000, "replicas for Monte-Carlo parts"),
        "etas": Param("floats", [0.01, 0.03, 0.1, 0.3], "step sizes for the exact and composite parts"),
        "Ks": Param("ints", [2, 5, 10], "local steps for the exact heterogeneous grid"),
        "Rs": Param("ints", [1, 5, 20], "rounds for the exact heterogeneous grid"),
        "c_h": Param("float", DEFAULT_C_H, "heterogeneous drift constant"),
    }

    def validate(self, params: dict[str, Any]) -> dict[str, Any]:
        p = super().validate(params)
        if p["zeta_star"] > 0 and p["M"] % 2:
            raise InvalidParameterError(f"the heterogeneous coordinate needs an even number of clients, got M={p['M']}")
        return p

    def run(self, ctx: RunContext) -> None:
        p = ctx.params
        H, sigma, zeta_star, D = p["H"], p["sigma"], p["zeta_star"], p["D"]
        K, R, M, n = p["K"], p["R"], p["M"], p["n"]

        if ctx.ui:
            ctx.ui.step("Homogeneous round drift")
        with ctx.track(block_count(n), "drift") as progress:
            est, bound = homog_drift_check(H, sigma, p["eta_drift"], K, R, M, n, ctx.key("homog-drift"), ctx.workers, progress)
        floor = homog_value_floor(p["eta_drift"], H, sigma, K, R)
        ctx.write_csv(
            "homog_drift.csv",
            ["eta", "K", "R", "M", "mean", "stderr", "n", "bound", "value_floor"],
            [(p["eta_drift"], K, R, M, est.mean, est.stderr, est.n, bound, floor)],
        )
        ok = est.mean + DRIFT_SIGMAS * est.stderr <= bound
        ctx.record_verdict(
            "homog-drift",
            ok,
            f"{'PASS' if ok else 'FAIL'} homog-drift E[x^(R,0)]={est.mean:.6g} +- {est.stderr:.2g} bound={bound:.6g}",
        )

        if ctx.ui:
            ctx.ui.step("Heterogeneous drift (exact)")
        grid = [(eta, k, r) for eta in p["etas"] for k in p["Ks"] for r in p["Rs"]]
        rows = hetero_drift_rows(H, zeta_star, grid, p["c_h"])
        ctx.write_csv("hetero_drift.csv", ["eta", "K", "R", "exact", "bound", "bound_published_c_h", "holds"], rows)
        valid = largest_valid_c_h([(r[0], r[1], r[2]) for r in rows], H, zeta_star) if zeta_star > 0 else math.inf
        violated = sum(1 for r in rows if r[3] > r[5])
        if ctx.ui:
            ctx.ui.info(f"largest valid c_h on this grid: {valid:.4g}; published constant violated at {violated} points")
        ok = all(r[6] for r in rows)
        ctx.record_verdict("hetero-drift", ok, f"{'PASS' if ok else 'FAIL'} hetero-drift c_h={p['c_h']:g} points={len(rows)}")

        if ctx.ui:
            ctx.ui.step("Composite hard instance")
        mu = lowerbound_mu(H, sigma, zeta_star, D, K, R)
        composite = make_lowerbound_composite(H, mu, sigma, zeta_star, D)
        comp_rows = []
        for eta in p["etas"]:
            if eta * H > 0.5:
                continue
            cfg = FedAvgConfig(eta, K, R, M, 0.0, n, ctx.seed)
            gap = fedavg_error(composite, cfg, n, ctx.key(f"composite-eta={eta!r}"), "value_gap", ctx.workers)
            comp_rows.append((eta, gap.mean, gap.stderr, gap.n))
        report = lower_bound_hetero(RateInputs(H=H, sigma=sigma, D=D, zeta_star=zeta_star, M=M, K=K, R=R))
        best = min(comp_rows, key=lambda r: r[1]) if comp_rows else None
        ctx.write_csv("composite.csv", ["eta", "value_gap", "stderr", "n"], comp_rows)
        ctx.write_csv("lower_bound_terms.csv", ["theorem", "term_name", "value"], report.rows())
        if ctx.ui and best is not None:
            ctx.ui.table(
                "Composite suboptimality",
                ["best eta", "value gap", "lower-bound total", "ratio"],
                [(best[0], best[1], report.total, best[1] / report.total if report.total else math.inf)],
            )
