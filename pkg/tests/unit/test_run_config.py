"""
Unit tests for run configuration parsing and hashing.
"""

import pytest

from sclens.core.exceptions import ConfigurationError
from sclens.schemas.run_config import load_run_config, parse_run_config

CONFIG = """
# dispersive decay ladder
experiment = dispersive
metric = conformal-bump
epsilon = 0.25
h_list = 0.2, 0.1, 0.05
times = 0.5,1.0
tolerances = slope:0.15, mass:1e-10
"""


class TestRunConfig:
    """Test ``key = value`` run configurations."""

    @pytest.mark.unit
    def test_lists_and_tolerances(self):
        config = parse_run_config(CONFIG)
        assert config.experiment == "dispersive"
        assert config.h_list == [0.2, 0.1, 0.05]
        assert config.times == [0.5, 1.0]
        assert config.tolerance("slope", 0.3) == 0.15
        assert config.tolerance("mass", 1.0) == 1e-10
        assert config.tolerance("missing", 0.3) == 0.3
        assert config.dim == 1

    @pytest.mark.unit
    def test_overrides_win(self):
        config = parse_run_config(CONFIG, overrides={"epsilon": 0.5, "seed": None})
        assert config.epsilon == 0.5
        assert config.seed == 0

    @pytest.mark.unit
    @pytest.mark.parametrize(
        "extra",
        [
            "colour = blue",
            "scenario = d",
            "points = 4",
            "dim = 4",
            "max_bubbles = 9",
            "flow_time = 2.0",
        ],
    )
    def test_invalid_values(self, extra):
        with pytest.raises(ConfigurationError):
            parse_run_config(CONFIG + extra + "\n")

    @pytest.mark.unit
    def test_box_defaults_to_sixteen_support_radii(self):
        assert parse_run_config(CONFIG).length == 16.0
        assert parse_run_config(CONFIG + "r_supp = 2\n").length == 32.0
        assert parse_run_config(CONFIG + "r_supp = 2\nlength = 20\n").length == 20.0
        assert parse_run_config(CONFIG).morawetz_radius * 2.0 < 0.5 * 16.0

    @pytest.mark.unit
    def test_unknown_experiment(self):
        with pytest.raises(ConfigurationError):
            parse_run_config("experiment = teleport\n")

    @pytest.mark.unit
    def test_duplicate_key(self):
        with pytest.raises(ConfigurationError, match=":3:"):
            parse_run_config("experiment = nls\ndt = 0.1\ndt = 0.2\n")

    @pytest.mark.unit
    def test_hash_ignores_bookkeeping(self):
        base = parse_run_config(CONFIG)
        moved = parse_run_config(CONFIG, overrides={"out": "/tmp/elsewhere", "threads": 4})
        renamed = parse_run_config(CONFIG.replace("dispersive", "converge"))
        changed = parse_run_config(CONFIG, overrides={"epsilon": 0.3})
        assert base.config_hash() == moved.config_hash() == renamed.config_hash()
        assert base.config_hash() != changed.config_hash()
        assert len(base.config_hash()) == 16

    @pytest.mark.unit
    def test_load_from_file(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text(CONFIG)
        config = load_run_config(path, overrides={"threads": 2})
        assert config.threads == 2
        with pytest.raises(ConfigurationError):
            load_run_config(tmp_path / "absent.cfg")
