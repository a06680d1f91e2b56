import numpy as np
import pytest

from clpd.bench import build_problem, parse_config, run_experiment
from clpd.cli import main as cli_main
from clpd.errors import ConfigError
from clpd.trace import read_trace_csv, validate_trace_csv

MINIMAL_EXAMPLE1 = """
[experiment]
tag = example1
n = 10
m = 10
mu = 1.5
seed = 1
x1 = ones

[solver aapda]
p = 4
gamma1 = 1
theta = 1e-6
cap = 100
"""

EXAMPLE1_MULTI = """
[experiment]
tag = example1
n = 8
m = 8
mu = 1.5
seed = 3
x1 = ones

[solver aapda-p4]
method = aapda
p = 4
theta = 1e-6
cap = 60

[solver aapda-p5]
method = aapda
p = 5
theta = 1e-6
cap = 60

[solver lin-alm]
theta = 1e-6
cap = 60

[output]
plot = true
"""

ODE_CONFIG = """
[experiment]
tag = ode
n = 2
m = 2
mu = 1.5
seed = 11
q = 2
p = 3
t0 = 1
tend = 2.2
x1 = ones
"""


class TestParseConfig:
    def test_minimal_example1(self):
        config = parse_config(MINIMAL_EXAMPLE1)
        assert config.tag == "example1"
        assert config.seed == 1
        assert config.solvers[0].method == "aapda"
        assert config.solvers[0].options["p"] == 4.0
        assert config.solvers[0].options["cap"] == 100

    def test_missing_seed_names_key_and_section(self):
        bad = MINIMAL_EXAMPLE1.replace("seed = 1\n", "")
        with pytest.raises(ConfigError) as excinfo:
            parse_config(bad)
        assert any("'seed'" in e and "[experiment]" in e for e in excinfo.value.errors)

    def test_p_schedule_string(self):
        config = parse_config(MINIMAL_EXAMPLE1.replace("p = 4", "p = k"))
        assert config.solvers[0].options["p"] == "k"

    def test_unknown_key_reports_line(self):
        bad = MINIMAL_EXAMPLE1 + "wibble = 3\n"
        with pytest.raises(ConfigError) as excinfo:
            parse_config(bad)
        assert any("wibble" in e and "line" in e for e in excinfo.value.errors)

    def test_all_errors_collected(self):
        bad = """
[experiment]
tag = example1
n = ten
mu = 1.5
x1 = sideways

[solver aapda]
theta = 1e-6
"""
        with pytest.raises(ConfigError) as excinfo:
            parse_config(bad)
        text = "\n".join(excinfo.value.errors)
        assert "expects int" in text  # n = ten
        assert "'seed'" in text  # missing
        assert "'m'" in text  # missing
        assert "'p'" in text  # missing solver key
        assert "x1" in text

    def test_ode_allows_no_solvers(self):
        config = parse_config(ODE_CONFIG)
        assert config.tag == "ode"
        assert config.solvers == []

    def test_ode_rejects_solver_sections(self):
        bad = ODE_CONFIG + "\n[solver aapda]\np = 4\n"
        with pytest.raises(ConfigError):
            parse_config(bad)

    def test_density_range_checked(self):
        bad = """
[experiment]
tag = example2
m = 5
n = 5
density = 1.5
seed = 1

[solver fista]
"""
        with pytest.raises(ConfigError) as excinfo:
            parse_config(bad)
        assert any("density" in e for e in excinfo.value.errors)

    def test_build_problem_matches_generator(self):
        config = parse_config(MINIMAL_EXAMPLE1)
        prob = build_problem(config)
        assert prob.dim_primal == 10 and prob.dim_dual == 10
        assert prob.meta["seed"] == 1


class TestRunExperiment:
    def test_multi_solver_bundle(self, tmp_path):
        config = parse_config(EXAMPLE1_MULTI)
        result = run_experiment(config, out_dir=tmp_path)
        assert result.ok
        for name in ("aapda-p4", "aapda-p5", "lin-alm"):
            path = tmp_path / f"{name}.csv"
            assert path.exists()
            assert validate_trace_csv(path) == []
        svg = (tmp_path / "convergence.svg").read_text()
        assert svg.startswith("<svg")
        assert "polyline" in svg
        assert (tmp_path / "summary.txt").exists()
        assert (tmp_path / "timing.txt").exists()

    def test_ode_bundle_has_t_column(self, tmp_path):
        config = parse_config(ODE_CONFIG)
        result = run_experiment(config, out_dir=tmp_path)
        assert result.ok
        _, columns, index = read_trace_csv(tmp_path / "ode.csv")
        assert index == "t"
        assert columns["t"][0] == 1.0

    def test_rerun_byte_identical(self, tmp_path):
        config = parse_config(EXAMPLE1_MULTI)
        run_experiment(config, out_dir=tmp_path / "a")
        run_experiment(config, out_dir=tmp_path / "b")
        for name in ("aapda-p4", "aapda-p5", "lin-alm"):
            b1 = (tmp_path / "a" / f"{name}.csv").read_bytes()
            b2 = (tmp_path / "b" / f"{name}.csv").read_bytes()
            assert b1 == b2

    def test_jobs_do_not_change_bytes(self, tmp_path):
        config = parse_config(EXAMPLE1_MULTI)
        run_experiment(config, out_dir=tmp_path / "serial", jobs=1)
        run_experiment(config, out_dir=tmp_path / "parallel", jobs=3)
        for name in ("aapda-p4", "aapda-p5", "lin-alm"):
            assert (tmp_path / "serial" / f"{name}.csv").read_bytes() == (
                tmp_path / "parallel" / f"{name}.csv"
            ).read_bytes()

    def test_solver_error_recorded_bundle_survives(self, tmp_path):
        # fista cannot run constrained problems; the other solver still writes.
        config_text = EXAMPLE1_MULTI.replace(
            "[solver lin-alm]\ntheta = 1e-6\ncap = 60\n", "[solver fista]\ncap = 60\n"
        )
        config = parse_config(config_text)
        result = run_experiment(config, out_dir=tmp_path)
        assert not result.ok
        assert "fista" in result.errors
        assert (tmp_path / "aapda-p4.csv").exists()
        summary = (tmp_path / "summary.txt").read_text()
        assert "ERROR" in summary

    def test_no_plot_flag(self, tmp_path):
        config = parse_config(MINIMAL_EXAMPLE1)
        run_experiment(config, out_dir=tmp_path, plot=False)
        assert not (tmp_path / "convergence.svg").exists()


class TestCli:
    def test_validate_ok(self, tmp_path, capsys):
        cfg = tmp_path / "ok.cfg"
        cfg.write_text(MINIMAL_EXAMPLE1)
        assert cli_main(["validate", str(cfg)]) == 0
        assert "config ok" in capsys.readouterr().out

    def test_validate_bad_exit_code(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text(MINIMAL_EXAMPLE1.replace("seed = 1\n", ""))
        assert cli_main(["validate", str(cfg)]) == 1
        assert "seed" in capsys.readouterr().err

    def test_run_and_rate(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(MINIMAL_EXAMPLE1)
        out = tmp_path / "out"
        assert cli_main(["run", str(cfg), "--out", str(out), "--no-plot"]) == 0
        capsys.readouterr()
        assert cli_main(["rate", str(out / "aapda.csv"), "--column", "f_gap"]) == 0
        printed = capsys.readouterr().out
        assert "slope" in printed

    def test_run_missing_config_io_error(self, capsys):
        assert cli_main(["run", "/nonexistent/x.cfg"]) == 3

    def test_run_solver_error_exit_two(self, tmp_path):
        cfg = tmp_path / "err.cfg"
        cfg.write_text(
            MINIMAL_EXAMPLE1.replace(
                "[solver aapda]\np = 4", "[solver fista]\nalpha = 0.1"
            )
        )
        assert cli_main(["run", str(cfg), "--out", str(tmp_path / "o"), "--no-plot"]) == 2

    def test_rate_missing_column(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(MINIMAL_EXAMPLE1)
        out = tmp_path / "out"
        cli_main(["run", str(cfg), "--out", str(out), "--no-plot"])
        assert cli_main(["rate", str(out / "aapda.csv"), "--column", "bogus"]) == 1
