"""Pytest configuration for localsgd_lab tests."""

from __future__ import annotations

import pytest


@pytest.fixture(autouse=True)
def _no_seed_env(monkeypatch):
    """Keep a seed exported in the developer's shell out of every test."""
    from localsgd_lab.config import SEED_ENV_VAR

    monkeypatch.delenv(SEED_ENV_VAR, raising=False)
