"""Acceptance pipeline: every criterion runs in order and ends in a PASS/FAIL verdict."""

from __future__ import annotations

import logging
import time
from typing import Sequence

from localsgd_lab.acceptance.base import BaseCriterion, CriterionResult, ProfileScale
from localsgd_lab.acceptance.criteria import get_all_criteria
from localsgd_lab.context import RunContext
from localsgd_lab.errors import ConfigError, LabError, RunCancelled

logger = logging.getLogger(__name__)

VERDICTS_NAME = "verdicts.csv"


def select_criteria(numbers: Sequence[int] | None = None) -> list[BaseCriterion]:
    criteria = get_all_criteria()
    if not numbers:
        return criteria
    known = {c.number for c in criteria}
    unknown = sorted(set(numbers) - known)
    if unknown:
        raise ConfigError(f"unknown acceptance criteria {unknown} (known: 1..{max(known)})")
    return [c for c in criteria if c.number in set(numbers)]


def _evaluate(criterion: BaseCriterion, ctx: RunContext, scale: ProfileScale) -> CriterionResult:
    try:
        return criterion.run(ctx, scale)
    except LabError as e:
        logger.debug("criterion %d raised", criterion.number, exc_info=True)
        return CriterionResult(False, f"{type(e).__name__}: {e}")


def run_acceptance(ctx: RunContext, numbers: Sequence[int] | None = None) -> bool:
    """Run the selected criteria; per-criterion CSVs plus verdicts.csv land in ``ctx.out_dir``.

    Timings go to the console only, so the written files depend on the seed
    and nothing else.
    """
    scale = ProfileScale.of(ctx.profile)
    criteria = select_criteria(numbers)
    ui = ctx.ui
    if ui:
        ui.set_total_steps(len(criteria))

    rows = []
    try:
        for criterion in criteria:
            if ui:
                ui.step(f"{criterion.number}. {criterion.title}")
            started = time.perf_counter()
            result = _evaluate(criterion, ctx, scale)
            elapsed = time.perf_counter() - started
            if result.rows:
                ctx.write_csv(criterion.csv_name, criterion.header, result.rows)
            status = "PASS" if result.passed else "FAIL"
            ctx.record_verdict(f"criterion-{criterion.number}", result.passed, f"{status} [{criterion.number}] {criterion.name}: {result.detail}")
            if ui:
                ui.info(f"{criterion.name} took {elapsed:.1f}s (profile={scale.name})")
            rows.append((criterion.number, criterion.name, result.passed, result.detail))
    except KeyboardInterrupt:
        raise RunCancelled("acceptance") from None

    ctx.write_csv(VERDICTS_NAME, ["number", "name", "passed", "detail"], rows)
    return all(r[2] for r in rows)


__all__ = ["BaseCriterion", "CriterionResult", "ProfileScale", "get_all_criteria", "run_acceptance", "select_criteria"]
