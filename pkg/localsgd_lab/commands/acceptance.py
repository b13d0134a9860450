"""acceptance: the whole acceptance suite as one command."""

from __future__ import annotations

from localsgd_lab.acceptance import get_all_criteria, run_acceptance
from localsgd_lab.commands import register_command
from localsgd_lab.commands.base import BaseCommand
from localsgd_lab.config import Param
from localsgd_lab.context import RunContext


@register_command
class AcceptanceCommand(BaseCommand):
    """Run the numbered acceptance criteria at the selected profile and write verdicts.csv."""

    name = "acceptance"
    anchor = "every acceptance criterion of the lab, from iterate drift to determinism"
    summary = "Per-criterion PASS/FAIL with timings; quick profile uses n / 10 and 1.5x tolerances"
    schema = {
        "criteria": Param("ints", [c.number for c in get_all_criteria()], "criterion numbers to run"),
    }

    def run(self, ctx: RunContext) -> None:
        run_acceptance(ctx, ctx.params["criteria"])
