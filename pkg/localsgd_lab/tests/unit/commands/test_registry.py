"""Tests for the command registry and the shared command helpers."""

from __future__ import annotations

import pytest


class TestRegistry:
    """Test command registration and lookup."""

    def test_every_builtin_module_registers(self):
        """Each builtin module contributes exactly one command."""
        from localsgd_lab.commands import BUILTIN_MODULES, get_all_commands

        names = [c.name for c in get_all_commands()]
        assert len(names) == len(BUILTIN_MODULES)
        assert len(set(names)) == len(names)
        assert "rate-fit" in names
        assert "acceptance" in names

    def test_get_command(self):
        """Lookup by name returns the class, unknown names return None."""
        from localsgd_lab.commands import get_command
        from localsgd_lab.commands.oracle_grid import OracleGridCommand

        assert get_command("oracle-grid") is OracleGridCommand
        assert get_command("nope") is None

    def test_list_commands_has_anchor(self):
        """Every listed command names what it verifies."""
        from localsgd_lab.commands import list_commands

        for name, summary, anchor in list_commands():
            assert name
            assert summary
            assert anchor

    def test_commands_follow_protocol(self):
        """Registered classes satisfy the Command protocol."""
        from localsgd_lab.commands import get_all_commands
        from localsgd_lab.commands.base import Command

        for cls in get_all_commands():
            assert isinstance(cls(), Command)

    def test_defaults_validate(self):
        """Every schema accepts its own defaults."""
        from localsgd_lab.commands import get_all_commands

        for cls in get_all_commands():
            params = cls().validate({})
            assert set(params) == set(cls.schema)

    def test_help_text_and_repr(self):
        """help_text carries the anchor and repr names the command."""
        from localsgd_lab.commands.density import DensityCommand

        cmd = DensityCommand()
        assert "[verifies:" in cmd.help_text
        assert repr(cmd) == "<DensityCommand(name='density')>"


class TestFamilyHelpers:
    """Test objective selection from command parameters."""

    def test_family_schema_overrides_default(self):
        """Keyword defaults replace the stock default and keep the kind."""
        from localsgd_lab.commands.base import family_schema

        schema = family_schema("piecewise", sigma=0.1)
        assert schema["sigma"].default == 0.1
        assert schema["sigma"].kind == "float"
        assert schema["objective"].choices == ("piecewise", "logcosh", "quadratic")
        assert "zeta_star" not in schema

    def test_family_schema_with_client_families(self):
        """Heterogeneous families add zeta_star, composites add D."""
        from localsgd_lab.commands.base import family_schema

        schema = family_schema("logcosh", ("logcosh", "hetero_pair", "composite"))
        assert "zeta_star" in schema
        assert "D" in schema

    def test_family_params_picks_family_keys(self):
        """Only the selected family's keys are passed on."""
        from localsgd_lab.commands.base import family_params

        params = {"objective": "quadratic", "L": 2.0, "sigma": 0.5, "H": 9.0, "h_right": 1.0}
        assert family_params(params) == {"L": 2.0, "sigma": 0.5}
        assert family_params(params, {"extra": 1}) == {"L": 2.0, "sigma": 0.5, "extra": 1}

    def test_build_objective(self):
        """Scalar families build an Objective1D with the given constants."""
        from localsgd_lab.commands.base import build_objective

        obj = build_objective({"objective": "logcosh", "H": 2.0, "Q": 1.0, "sigma": 0.5, "noise": "uniform"})
        assert obj.constants.H == 2.0
        assert obj.constants.Q == 1.0
        assert obj.noise.kind == "uniform"

    def test_build_objective_rejects_client_sets(self):
        """A client family is not a scalar objective."""
        from localsgd_lab.commands.base import build_objective
        from localsgd_lab.errors import ConfigError

        with pytest.raises(ConfigError, match="not a scalar objective"):
            build_objective({"objective": "hetero_pair", "H": 1.0, "zeta_star": 1.0})

    def test_build_clients_replicates_scalars(self):
        """A scalar family becomes M clients with distinct tags."""
        from localsgd_lab.commands.base import build_clients

        clients = build_clients({"objective": "quadratic", "L": 1.0, "sigma": 1.0}, 3, 4, 5)
        assert [c.client_tag for c in clients] == [0, 1, 2]
        assert clients[0].objective is clients[2].objective

    def test_build_clients_checks_m(self):
        """The two-client family refuses any other M."""
        from localsgd_lab.commands.base import build_clients
        from localsgd_lab.errors import ConfigError

        with pytest.raises(ConfigError, match="defines 2 clients"):
            build_clients({"objective": "hetero_pair", "H": 1.0, "zeta_star": 1.0}, 3, 4, 5)

    def test_build_clients_composite(self):
        """Composites are built with the run's K and R."""
        from localsgd_lab.commands.base import build_clients
        from localsgd_lab.objectives import CompositeObjective

        built = build_clients(
            {"objective": "composite", "H": 1.0, "sigma": 1.0, "zeta_star": 1.0, "D": 1.0}, 2, 4, 4
        )
        assert isinstance(built, CompositeObjective)
        assert built.dim == 3

    def test_block_count(self):
        """Block counts round up and never drop below one."""
        from localsgd_lab.commands.base import block_count
        from localsgd_lab.estimators import BLOCK_SIZE

        assert block_count(1) == 1
        assert block_count(BLOCK_SIZE) == 1
        assert block_count(BLOCK_SIZE + 1) == 2
