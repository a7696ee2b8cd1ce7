"""
Integration tests for the experiment drivers and the command-line entry point.
"""

import json

import pytest

from sclens.core.exceptions import Blowup, ConfigurationError
from sclens.core.storage import read_fbi_table
from sclens.main import main
from sclens.schemas.run_config import EXPERIMENTS, parse_run_config
from sclens.services.experiments import (
    ExperimentFactory,
    run_experiment,
    run_geodesic,
    run_nls,
    run_propagator_convergence,
)

GEODESIC = """
experiment = geodesic
dim = 2
t_max = 2.0
dt = 0.01
samples = 20000
xi_max = 1.0
r_list = 0.4, 0.2
seed = 7
"""

NLS = """
experiment = nls
dim = 1
length = 32
points = 256
dt = 0.001
t_max = 0.05
slices = 6
amplitude = 0.5
picard_iterations = 2
"""

CONVERGE = """
experiment = converge
metric = conformal-bump
epsilon = 0.2
dim = 1
length = 32
points = 256
dt = 0.001
t_max = 0.1
slices = 3
scenario = b
centers = 3, 5, 7
"""

EXTINCTION = """
experiment = extinction
dim = 1
length = 16
points = 512
dt = 0.001
t_max = 0.2
slices = 3
h_list = 0.2, 0.15, 0.1
"""

DISPERSIVE = """
experiment = dispersive
dim = 1
length = 16
points = 512
dt = 0.001
h_list = 0.1, 0.05
slices = 4
fixed_time = 0.25
"""

MORAWETZ = """
experiment = morawetz
dim = 1
length = 16
points = 256
dt = 0.001
t_max = 0.04
slices = 5
refinements = 1
amplitude = 0.5
lengths = 0.02, 0.04
"""

SMOOTHING = """
experiment = smoothing
dim = 1
length = 64
points = 1024
dt = 0.001
n_list = 2, 4
b_list = 1, 2
window = 1
"""

PROFILES = """
experiment = profiles
dim = 1
length = 16
points = 256
scales = 0.5, 1
centers = -3, 3
max_bubbles = 3
"""


def assert_outputs(out_dir, summary, name, tables):
    """Every table CSV, the gnuplot script and the summary exist and are listed."""
    for filename in [f"{name}_{t}.csv" for t in tables] + [f"{name}.gp", f"{name}_summary.json"]:
        assert (out_dir / filename).exists()
        assert filename in summary.files


class TestExperimentFactory:
    """Test driver lookup."""

    @pytest.mark.integration
    def test_every_subcommand_has_a_driver(self):
        assert ExperimentFactory.get_supported_experiments() == list(EXPERIMENTS)
        assert ExperimentFactory.is_experiment_supported("nls")
        assert not ExperimentFactory.is_experiment_supported("wave")

    @pytest.mark.integration
    def test_unsupported_experiment(self):
        config = parse_run_config(NLS)
        with pytest.raises(ConfigurationError):
            ExperimentFactory.create_experiment("wave", config)


class TestDrivers:
    """Test small end-to-end driver runs."""

    @pytest.mark.integration
    def test_geodesic_outputs(self, tmp_path):
        config = parse_run_config(GEODESIC)
        summary, records = run_experiment(config, tmp_path)
        for name in ("geodesic_trajectory.csv", "geodesic_homogeneity.csv", "geodesic_preimage.csv",
                     "geodesic.gp", "geodesic_summary.json"):
            assert (tmp_path / name).exists()
            assert name in summary.files
        assert summary.flags["symbol_drift"]
        assert summary.flags["homogeneity"]
        assert summary.flags["nontrapping"]
        assert "boundary_clean" not in summary.flags
        saved = json.loads((tmp_path / "geodesic_summary.json").read_text())
        assert saved["config_hash"] == config.config_hash()
        assert saved["records"] == len(records)
        header = (tmp_path / "geodesic_preimage.csv").read_text().splitlines()[0]
        assert header == "config_hash,seed,r,measure,stderr,hits,samples,reliable"

    @pytest.mark.integration
    def test_csv_bodies_are_deterministic(self, tmp_path):
        config = parse_run_config(GEODESIC)
        run_geodesic(config, tmp_path / "first")
        run_geodesic(config, tmp_path / "second")
        for name in ("geodesic_trajectory.csv", "geodesic_preimage.csv"):
            first = (tmp_path / "first" / name).read_text()
            second = (tmp_path / "second" / name).read_text()
            assert first == second

    @pytest.mark.integration
    def test_nls_conserves_mass(self, tmp_path):
        config = parse_run_config(NLS)
        summary, records = run_experiment(config, tmp_path)
        assert summary.flags["mass"]
        assert summary.flags["holder"]
        assert summary.flags["contracting"]
        assert summary.flags["boundary_clean"]
        assert (tmp_path / "nls_picard.csv").exists()
        assert {r.parameters["table"] for r in records} == {"conservation", "picard"}
        assert len(run_nls(config)) == len(records)

    @pytest.mark.integration
    def test_convergence_ladder(self, tmp_path):
        config = parse_run_config(CONVERGE)
        summary, records = run_experiment(config, tmp_path)
        assert [r.parameters["center"] for r in records] == [3.0, 5.0, 7.0]
        assert all(r.values["diff_L6"] >= 0.0 for r in records)
        assert (tmp_path / "converge_sweep.csv").exists()
        assert summary.values["c3_norm"] > 0.0
        assert len(run_propagator_convergence(config)) == len(records)

    @pytest.mark.integration
    def test_extinction_sweep(self, tmp_path):
        config = parse_run_config(EXTINCTION)
        summary, records = run_experiment(config, tmp_path)
        assert_outputs(tmp_path, summary, "extinction", ["sweep"])
        assert [r.parameters["h"] for r in records] == [0.2, 0.15, 0.1]
        assert {"decreasing_in_h", "window_monotone", "h_exponent", "boundary_clean"} <= set(summary.flags)
        assert all(r.values["sup_T"] >= r.values["sup_2T"] for r in records)

    @pytest.mark.integration
    def test_dispersive_tables_and_fbi(self, tmp_path):
        config = parse_run_config(DISPERSIVE)
        summary, records = run_experiment(config, tmp_path)
        assert_outputs(tmp_path, summary, "dispersive", ["short_time", "fixed_time"])
        assert {"t_slope", "scaled_constant", "h_slope", "fbi_isometry"} <= set(summary.flags)
        assert summary.values["fbi_isometry_defect"] >= 0.0
        assert {r.parameters["table"] for r in records} == {"short_time", "fixed_time"}
        assert "dispersive_initial_fbi.fbi" in summary.files
        table = read_fbi_table(tmp_path / "dispersive_initial_fbi.fbi")
        assert table.h == pytest.approx(0.1)
        assert table.values.shape == (len(table.x_axis), len(table.xi_axis))

    @pytest.mark.integration
    def test_morawetz_identity_and_bourgain(self, tmp_path):
        config = parse_run_config(MORAWETZ)
        summary, records = run_experiment(config, tmp_path)
        assert_outputs(tmp_path, summary, "morawetz", ["identity", "bourgain"])
        identity = [r for r in records if r.parameters["table"] == "identity"]
        assert [r.parameters["level"] for r in identity] == [0, 1]
        assert "richardson" in summary.flags
        assert summary.flags["boundary_clean"]
        bourgain = [r for r in records if r.parameters["table"] == "bourgain"]
        assert [r.parameters["length"] for r in bourgain] == [0.02, 0.04]

    @pytest.mark.integration
    def test_smoothing_ladders(self, tmp_path):
        config = parse_run_config(SMOOTHING)
        summary, records = run_experiment(config, tmp_path)
        assert_outputs(tmp_path, summary, "smoothing", ["b_sweep", "n_sweep"])
        assert len(records) == 4
        assert all(r.values["functional"] > 0.0 for r in records)
        assert {"b_exponent", "n_exponent", "boundary_clean"} <= set(summary.flags)

    @pytest.mark.integration
    def test_profile_frames(self, tmp_path):
        config = parse_run_config(PROFILES)
        summary, records = run_experiment(config, tmp_path)
        assert_outputs(tmp_path, summary, "profiles", ["frames"])
        assert {"frames_recovered", "decoupling", "boundary_clean"} <= set(summary.flags)
        assert 1 <= len(records) <= 3
        assert summary.values["remainder_norm"] <= summary.values["input_norm"]


class TestCommandLine:
    """Test exit codes of the ``sclens`` entry point."""

    @pytest.mark.integration
    def test_successful_run(self, tmp_path):
        path = tmp_path / "nls.cfg"
        path.write_text(NLS)
        code = main(["nls", "--config", str(path), "--out", str(tmp_path / "out"), "--seed", "3"])
        assert code in (0, 1)
        saved = json.loads((tmp_path / "out" / "nls_summary.json").read_text())
        assert saved["seed"] == 3

    @pytest.mark.integration
    def test_bad_config_exits_with_2(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text(NLS + "colour = blue\n")
        assert main(["nls", "--config", str(path), "--out", str(tmp_path)]) == 2
        assert main(["nls", "--config", str(tmp_path / "absent.cfg")]) == 2

    @pytest.mark.integration
    def test_numerical_failure_exits_with_3(self, mocker, tmp_path):
        mocker.patch("sclens.main.run_experiment", side_effect=Blowup("sup |u| = 1e9 exceeds the ceiling"))
        assert main(["nls", "--out", str(tmp_path)]) == 3

    @pytest.mark.integration
    def test_unknown_subcommand(self):
        with pytest.raises(SystemExit) as exc:
            main(["teleport"])
        assert exc.value.code == 2


class TestAcceptance:
    """Longer runs that check the measured laws, not just the plumbing."""

    @pytest.mark.integration
    @pytest.mark.slow
    def test_flat_preimage_slope(self, tmp_path):
        text = GEODESIC.replace("samples = 20000", "samples = 200000")
        config = parse_run_config(text.replace("r_list = 0.4, 0.2", "r_list = 0.4, 0.2, 0.1, 0.05"))
        summary, _ = run_experiment(config, tmp_path)
        assert summary.flags["reliable"]
        assert abs(summary.slopes["preimage"].slope - 2.0) <= 0.2

    @pytest.mark.integration
    @pytest.mark.slow
    def test_nls_with_mu_zero_is_linear(self, tmp_path):
        config = parse_run_config(NLS.replace("picard_iterations = 2", "mu = 0"))
        summary, _ = run_experiment(config, tmp_path)
        assert summary.values["mass_drift"] <= 1e-12
        assert summary.values["energy_drift"] <= 1e-12
