"""oracle-grid: deterministic table of mixing scales and the sigma-gap lower bound."""

from __future__ import annotations

from localsgd_lab.commands import register_command
from localsgd_lab.commands.base import BaseCommand
from localsgd_lab.config import Param
from localsgd_lab.context import RunContext
from localsgd_lab.oracles import key_scales, sigma_gap_lower


def sigma_gap_rows(etas: list[float], Ls: list[float], ks: list[int], sigma: float) -> list[tuple]:
    """One row per in-regime (eta, L, k): scales, the gap, both lower bounds and whether the default one holds."""
    rows = []
    for L in Ls:
        for eta in etas:
            if not 0 < eta * L <= 1 / 6:
                continue
            for k in ks:
                if k < 2:
                    continue
                s = key_scales(eta, L, k)
                gap = (s.sigma_y - s.sigma_z) * sigma
                lower = sigma_gap_lower(eta, L, sigma, k)
                literal = sigma_gap_lower(eta, L, sigma, k, paper_literal=True)
                rows.append((eta, L, k, s.alpha_y, s.alpha_z, s.sigma_y, s.sigma_z, gap, lower, literal, gap >= lower))
    return rows


@register_command
class OracleGridCommand(BaseCommand):
    name = "oracle-grid"
    anchor = "mixing-scale gap between the two curvature sides of the piecewise quadratic"
    summary = "Pure-arithmetic CSV of key scales and the sigma-gap bound over a grid (identical on every machine)"
    schema = {
        "etas": Param("floats", [0.001, 0.005, 0.01, 0.02, 0.05, 0.1, 1 / 6], "step sizes"),
        "Ls": Param("floats", [0.5, 1.0, 2.0], "curvatures"),
        "ks": Param("ints", [2, 3, 4, 8, 16, 32, 64, 128, 256, 1024], "step counts"),
        "sigma": Param("float", 1.0, "noise scale"),
    }

    def run(self, ctx: RunContext) -> None:
        p = ctx.params
        rows = sigma_gap_rows(p["etas"], p["Ls"], p["ks"], p["sigma"])
        ctx.write_csv(
            "oracle_grid.csv",
            ["eta", "L", "k", "alpha_y", "alpha_z", "sigma_y", "sigma_z", "gap", "lower", "lower_literal", "holds"],
            rows,
        )
        failures = [r for r in rows if not r[10]]
        literal_violations = sum(1 for r in rows if r[7] < r[9])
        if ctx.ui:
            ctx.ui.info(f"{len(rows)} in-regime points; published constant violated at {literal_violations}")
        ok = bool(rows) and not failures
        ctx.record_verdict(
            self.name, ok, f"{'PASS' if ok else 'FAIL'} oracle-grid sigma-gap points={len(rows)} failures={len(failures)}"
        )
