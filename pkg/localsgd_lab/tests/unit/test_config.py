"""Tests for experiment configuration and seed precedence."""

from __future__ import annotations

import math
import tempfile
from pathlib import Path

import pytest


class TestSerialize:
    """Test config serialization and parsing."""

    def test_save_and_load_preserves_spec(self):
        """A saved spec loads back unchanged."""
        from localsgd_lab.config import ExperimentSpec, load_config, save_config

        spec = ExperimentSpec(
            "rate-fit",
            {"objective": "piecewise", "grid": [16, 32, 64], "eta": 1e-05, "antithetic": True},
            master_seed=7,
        )
        with tempfile.TemporaryDirectory() as tmpdir:
            path = save_config(spec, Path(tmpdir) / "config.toml")
            assert load_config(path) == spec

    def test_non_finite_floats(self):
        """inf and nan are written in TOML syntax."""
        from localsgd_lab.config import ExperimentSpec, parse, serialize

        spec = parse(serialize(ExperimentSpec("bounds-eval", {"a": math.inf, "b": -math.inf})))
        assert spec.params == {"a": math.inf, "b": -math.inf}

    def test_quoted_keys(self):
        """Keys outside the bare-key alphabet are quoted."""
        from localsgd_lab.config import ExperimentSpec, serialize

        assert '"a.b" = 1' in serialize(ExperimentSpec("x", {"a.b": 1}))

    def test_unknown_top_level_key(self):
        """Only command, master_seed, output_dir and [params] are allowed."""
        from localsgd_lab.config import parse
        from localsgd_lab.errors import ConfigError

        with pytest.raises(ConfigError):
            parse('command = "density"\nworkers = 4\n')

    def test_missing_command(self):
        """command is required."""
        from localsgd_lab.config import parse
        from localsgd_lab.errors import ConfigError

        with pytest.raises(ConfigError):
            parse("[params]\neta = 0.1\n")

    def test_nested_tables_rejected(self):
        """Parameters are flat."""
        from localsgd_lab.config import parse
        from localsgd_lab.errors import ConfigError

        with pytest.raises(ConfigError):
            parse('command = "density"\n[params.inner]\nx = 1\n')

    def test_invalid_toml(self):
        """Syntax errors become ConfigError."""
        from localsgd_lab.config import parse
        from localsgd_lab.errors import ConfigError

        with pytest.raises(ConfigError):
            parse("command = ")

    def test_seed_range(self):
        """Seeds must fit in 64 unsigned bits."""
        from localsgd_lab.config import parse
        from localsgd_lab.errors import ConfigError

        with pytest.raises(ConfigError):
            parse('command = "density"\nmaster_seed = -3\n')

    def test_missing_file(self):
        """An unreadable config is a ConfigError."""
        from localsgd_lab.config import load_config
        from localsgd_lab.errors import ConfigError

        with pytest.raises(ConfigError):
            load_config(Path("/nonexistent/config.toml"))


class TestAssignments:
    """Test key=value overrides."""

    @pytest.mark.parametrize(
        ("text", "expected"),
        [
            ("eta=0.1", ("eta", 0.1)),
            ("K=16", ("K", 16)),
            ("grid=[1, 2, 4]", ("grid", [1, 2, 4])),
            ("objective=logcosh", ("objective", "logcosh")),
            ("antithetic=false", ("antithetic", False)),
        ],
    )
    def test_parse_assignment(self, text, expected):
        """Values use config syntax; bare words are strings."""
        from localsgd_lab.config import parse_assignment

        assert parse_assignment(text) == expected

    def test_missing_equals(self):
        """An override without '=' is rejected."""
        from localsgd_lab.config import parse_assignment
        from localsgd_lab.errors import ConfigError

        with pytest.raises(ConfigError):
            parse_assignment("eta")


class TestValidateParams:
    """Test schema validation."""

    def _schema(self):
        from localsgd_lab.config import Param

        return {
            "eta": Param("float", 0.01),
            "K": Param("int", None),
            "mode": Param("str", "plain", choices=("plain", "antithetic")),
            "ks": Param("ints", [1, 2]),
        }

    def test_defaults_filled_and_ints_widened(self):
        """Missing entries take defaults and ints become floats where floats are expected."""
        from localsgd_lab.config import validate_params

        out = validate_params("demo", {"K": 4, "eta": 1}, self._schema())
        assert out == {"eta": 1.0, "K": 4, "mode": "plain", "ks": [1, 2]}
        assert isinstance(out["eta"], float)

    def test_missing_required(self):
        """Parameters without defaults are required."""
        from localsgd_lab.config import validate_params
        from localsgd_lab.errors import ConfigError

        with pytest.raises(ConfigError, match="missing required parameter 'K'"):
            validate_params("demo", {}, self._schema())

    def test_unknown_parameter(self):
        """Unknown names are rejected."""
        from localsgd_lab.config import validate_params
        from localsgd_lab.errors import ConfigError

        with pytest.raises(ConfigError, match="unknown parameters"):
            validate_params("demo", {"K": 1, "typo": 2}, self._schema())

    def test_bool_is_not_int(self):
        """true is not accepted where an int is expected."""
        from localsgd_lab.config import validate_params
        from localsgd_lab.errors import ConfigError

        with pytest.raises(ConfigError):
            validate_params("demo", {"K": True}, self._schema())

    def test_choices_enforced(self):
        """String parameters with choices reject other values."""
        from localsgd_lab.config import validate_params
        from localsgd_lab.errors import ConfigError

        with pytest.raises(ConfigError, match="must be one of"):
            validate_params("demo", {"K": 1, "mode": "sobol"}, self._schema())

    def test_empty_list_rejected(self):
        """List parameters need at least one entry."""
        from localsgd_lab.config import validate_params
        from localsgd_lab.errors import ConfigError

        with pytest.raises(ConfigError):
            validate_params("demo", {"K": 1, "ks": []}, self._schema())


class TestResolveSeed:
    """Test seed precedence."""

    def test_cli_wins(self):
        """The CLI flag beats config and environment."""
        from localsgd_lab.config import SEED_ENV_VAR, ExperimentSpec, resolve_seed

        assert resolve_seed(5, ExperimentSpec("x", master_seed=6), {SEED_ENV_VAR: "7"}) == 5

    def test_config_before_environment(self):
        """The config seed beats the environment."""
        from localsgd_lab.config import SEED_ENV_VAR, ExperimentSpec, resolve_seed

        assert resolve_seed(None, ExperimentSpec("x", master_seed=6), {SEED_ENV_VAR: "7"}) == 6

    def test_environment_accepts_hex(self):
        """The environment variable is parsed with base prefixes."""
        from localsgd_lab.config import SEED_ENV_VAR, ExperimentSpec, resolve_seed

        assert resolve_seed(None, ExperimentSpec("x"), {SEED_ENV_VAR: "0x10"}) == 16

    def test_default_zero(self):
        """Without any source the seed is 0."""
        from localsgd_lab.config import ExperimentSpec, resolve_seed

        assert resolve_seed(None, ExperimentSpec("x"), {}) == 0

    def test_bad_environment_value(self):
        """A non-integer environment seed is a ConfigError."""
        from localsgd_lab.config import SEED_ENV_VAR, ExperimentSpec, resolve_seed
        from localsgd_lab.errors import ConfigError

        with pytest.raises(ConfigError):
            resolve_seed(None, ExperimentSpec("x"), {SEED_ENV_VAR: "seven"})
