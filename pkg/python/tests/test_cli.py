"""Tests for the mpbridge command line."""

import csv
import io
import json
import math

import pytest
from click.testing import CliRunner

from cli.main import EXIT_NUMERICAL, EXIT_USAGE, EXIT_VALIDATION, cli, run
from mpbridge.internal.report import read_frames

SCALAR_MODEL = """\
type: explicit
explicit:
  alphabet_size: 2
  matrices:
    - [[1.0]]
    - [[1.0]]
"""

PERIODIC_MODEL = """\
type: explicit
explicit:
  alphabet_size: 2
  matrices:
    - [[0.0, 1.0], [1.0, 0.0]]
    - [[0.0, 1.0], [1.0, 0.0]]
"""

TASEP_MODEL = """\
type: tasep
tasep:
  alpha: 0.75
  beta: 0.75
"""

TWO_STATE_MODEL = """\
type: explicit
explicit:
  alphabet_size: 2
  matrices:
    - [[1.0, 1.0], [1.0, 0.0]]
    - [[1.0, 0.0], [0.0, 1.0]]
"""

SKEWED_PAIRS = "nu2: [[0.5, 0.1], [0.1, 0.3]]\n"

MONTE_CARLO_CONFIG = "defaults:\n  enumerate_cap: 1\n"


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def files(tmp_path):
    """Write a YAML document (or any text) under tmp_path and return its path."""

    def write(name: str, text: str) -> str:
        path = tmp_path / name
        path.write_text(text)
        return str(path)

    return write


HEADERS = {
    "word,probability",
    "lambda,residual,iterations",
    "b,e",
    "a,b,epsilon",
    "a,b,a_next,b_next,S",
    "word_index,block,weight",
    "word_index,bin,block,mass",
    "solver,value,gap,iterations,converged,boundary,constraint_residual",
    "a,a_next,p",
    "x,rho,F,G_opt,integrand",
    "value,argmin_x,iterations,gap",
    "N,max_deviation,tol,within_tol",
    "run,sup_distance",
    "runs,grid,threshold,fraction_below,max_sup_distance",
}


def tables(stdout: str) -> list[list[dict[str, str]]]:
    """Split CLI output into its CSV tables at each known header line."""
    blocks: list[list[str]] = []
    for line in stdout.splitlines():
        if line in HEADERS:
            blocks.append([line])
        elif line:
            blocks[-1].append(line)
    return [list(csv.DictReader(io.StringIO("\n".join(b)))) for b in blocks]


def error_record(result) -> dict:
    return json.loads(result.stderr.strip().splitlines()[-1])


class TestMeasure:
    """Test the measure command."""

    def test_enumerate_two_sites(self, runner):
        result = runner.invoke(
            cli, ["measure", "--tasep", "--alpha", "1", "--beta", "1", "--n", "2", "--enumerate"]
        )
        assert result.exit_code == 0, result.output
        (table,) = tables(result.stdout)
        probs = {row["word"]: float(row["probability"]) for row in table}
        assert probs == pytest.approx({"00": 0.2, "01": 0.2, "10": 0.4, "11": 0.2})

    def test_single_word(self, runner, files):
        model = files("scalar.yaml", SCALAR_MODEL)
        result = runner.invoke(cli, ["measure", model, "--word", "0110"])
        assert result.exit_code == 0, result.output
        (table,) = tables(result.stdout)
        assert float(table[0]["probability"]) == pytest.approx(1 / 16)

    def test_word_and_enumerate_is_usage_error(self, runner, files):
        model = files("scalar.yaml", SCALAR_MODEL)
        result = runner.invoke(cli, ["measure", model, "--word", "01", "--enumerate"])
        assert result.exit_code == EXIT_USAGE
        assert error_record(result)["error"] == "UsageError"

    def test_missing_source_is_usage_error(self, runner):
        result = runner.invoke(cli, ["measure", "--word", "01"])
        assert result.exit_code == EXIT_USAGE

    def test_outside_region(self, runner):
        result = runner.invoke(
            cli, ["measure", "--tasep", "--alpha", "0.3", "--beta", "0.5", "--word", "01"]
        )
        assert result.exit_code == EXIT_VALIDATION
        record = error_record(result)
        assert record["error"] == "RegionViolation"
        assert record["command"] == "measure"

    def test_enumeration_cap(self, runner, files):
        model = files("scalar.yaml", SCALAR_MODEL)
        result = runner.invoke(cli, ["measure", model, "--n", "21", "--enumerate"])
        assert result.exit_code == EXIT_VALIDATION
        assert error_record(result)["error"] == "SizeLimit"


class TestPerron:
    """Test the perron command and error exit codes."""

    def test_explicit_model(self, runner, files):
        model = files("scalar.yaml", SCALAR_MODEL)
        result = runner.invoke(cli, ["perron", model, "--enlarged"])
        assert result.exit_code == 0, result.output
        summary, vector, epsilon, chain = tables(result.stdout)
        assert float(summary[0]["lambda"]) == pytest.approx(2.0)
        assert len(vector) == 1
        assert [float(row["epsilon"]) for row in epsilon] == pytest.approx([0.5, 0.5])
        assert all(float(row["S"]) == pytest.approx(0.5) for row in chain)

    def test_tasep_model(self, runner, files):
        model = files("tasep.yaml", TASEP_MODEL)
        result = runner.invoke(cli, ["perron", model, "--bmax", "5"])
        assert result.exit_code == 0, result.output
        summary, vector = tables(result.stdout)
        assert float(summary[0]["lambda"]) == 4.0
        assert [float(row["e"]) for row in vector] == [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]

    def test_non_primitive_is_numerical_error(self, runner, files):
        model = files("periodic.yaml", PERIODIC_MODEL)
        result = runner.invoke(cli, ["perron", model])
        assert result.exit_code == EXIT_NUMERICAL
        record = error_record(result)
        assert record == {
            "error": "NotPrimitive",
            "message": record["message"],
            "command": "perron",
        }

    def test_invalid_model_file(self, runner, files):
        model = files("bad.yaml", "type: tasep\ntasep:\n  alpha: 0.2\n  beta: 0.3\n")
        result = runner.invoke(cli, ["perron", model])
        assert result.exit_code == EXIT_VALIDATION
        assert "alpha + beta" in error_record(result)["message"]

    def test_boundary_vector_must_be_positive(self, runner, files):
        model = files("zero_x.yaml", SCALAR_MODEL + "  x: [0.0]\n")
        result = runner.invoke(cli, ["perron", model])
        assert result.exit_code == EXIT_VALIDATION
        message = error_record(result)["message"]
        assert "explicit.x" in message
        assert "x must have a positive entry" in message

    def test_boundary_vector_must_be_non_negative(self, runner, files):
        model = files("negative_y.yaml", SCALAR_MODEL + "  y: [-1.0]\n")
        result = runner.invoke(cli, ["measure", model, "--word", "01"])
        assert result.exit_code == EXIT_VALIDATION
        assert "y has a negative entry" in error_record(result)["message"]


class TestSampling:
    """Test the sample-bridge command."""

    def test_jsonl_records(self, runner):
        args = ["sample-bridge", "--tasep", "--alpha", "0.75", "--beta", "0.75"]
        result = runner.invoke(cli, [*args, "--n", "4", "--samples", "5", "--seed", "1"])
        assert result.exit_code == 0, result.output
        records = [json.loads(line) for line in result.stdout.splitlines()]
        assert [r["sample"] for r in records] == [0, 1, 2, 3, 4]
        assert all(len(r["word"]) == 4 for r in records)

    def test_reproducible(self, runner, files):
        model = files("scalar.yaml", SCALAR_MODEL)
        args = ["sample-bridge", model, "--n", "6", "--samples", "3", "--seed", "9"]
        assert runner.invoke(cli, args).stdout == runner.invoke(cli, args).stdout

    def test_summary_to_msgpack(self, runner, files, tmp_path):
        model = files("scalar.yaml", SCALAR_MODEL)
        out = tmp_path / "out.bin"
        result = runner.invoke(
            cli,
            ["sample-bridge", model, "--n", "3", "--samples", "50", "--summary",
             "-f", "msgpack", "-o", str(out)],
        )
        assert result.exit_code == 0, result.output
        with out.open("rb") as stream:
            (record,) = list(read_frames(stream))
        assert sum(record["counts"].values()) == 50
        assert record["params"]["N"] == 3


class TestEmpiricalAndRates:
    """Test empirical, rate-pair, rate-profile and verify-ldp."""

    def test_empirical_pairs(self, runner, files):
        words = files("words.csv", "word\n0110\n")
        result = runner.invoke(cli, ["empirical", words, "--k", "2"])
        assert result.exit_code == 0, result.output
        (table,) = tables(result.stdout)
        assert {row["block"]: float(row["weight"]) for row in table} == {
            "00": 0.25, "01": 0.25, "10": 0.25, "11": 0.25,
        }

    def test_empirical_invalid_word(self, runner, files):
        words = files("words.csv", "word\n0120\n")
        result = runner.invoke(cli, ["empirical", words])
        assert result.exit_code == EXIT_VALIDATION
        assert error_record(result)["error"] == "InvalidWord"

    def test_rate_pair(self, runner, files):
        model = files("scalar.yaml", SCALAR_MODEL)
        nu2 = files("nu2.yaml", "nu2: [[0.25, 0.25], [0.25, 0.25]]\n")
        result = runner.invoke(cli, ["rate-pair", model, nu2])
        assert result.exit_code == 0, result.output
        reports, tilt = tables(result.stdout)
        assert [row["solver"] for row in reports] == ["primal", "dual"]
        for row in reports:
            assert float(row["value"]) == pytest.approx(0.0, abs=1e-8)
        assert [float(row["p"]) for row in tilt] == pytest.approx([0.5] * 4, abs=1e-5)

    def test_rate_profile_at_bulk_density(self, runner, files):
        profile = files("profile.csv", "x,rho\n0.25,0.5\n0.5,0.5\n0.75,0.5\n1.0,0.5\n")
        result = runner.invoke(
            cli, ["rate-profile", profile, "--alpha", "0.75", "--beta", "0.75", "--grid", "40"]
        )
        assert result.exit_code == 0, result.output
        cells, summary = tables(result.stdout)
        assert len(cells) == 40
        assert float(summary[0]["value"]) == pytest.approx(0.0, abs=1e-6)

    def test_rate_profile_needs_sub_unit_rates(self, runner, files):
        profile = files("profile.csv", "x,rho\n0.5,0.5\n1.0,0.5\n")
        result = runner.invoke(cli, ["rate-profile", profile, "--alpha", "1", "--beta", "0.75"])
        assert result.exit_code == EXIT_VALIDATION

    def test_verify_ldp_exact(self, runner, files):
        model = files("scalar.yaml", SCALAR_MODEL)
        result = runner.invoke(
            cli, ["verify-ldp", model, "--ns", "2,4", "--center", "1,0,0,0", "--radius", "0.1"]
        )
        assert result.exit_code == 0, result.output
        records = [json.loads(line) for line in result.stdout.splitlines()]
        assert [r["N"] for r in records] == [2, 4]
        assert [r["rate"] for r in records] == pytest.approx([math.log(2.0)] * 2)
        assert all(r["method"] == "exact" for r in records)

    def test_verify_ldp_center_size(self, runner, files):
        model = files("scalar.yaml", SCALAR_MODEL)
        result = runner.invoke(cli, ["verify-ldp", model, "--ns", "2", "--center", "1,0"])
        assert result.exit_code == EXIT_VALIDATION


class TestChecks:
    """Test stationary-check and fluid-check."""

    def test_stationary_check(self, runner):
        result = runner.invoke(
            cli, ["stationary-check", "--alpha", "0.75", "--beta", "0.6", "--n", "4"]
        )
        assert result.exit_code == 0, result.output
        (table,) = tables(result.stdout)
        assert float(table[0]["max_deviation"]) < 1e-9

    def test_fluid_check(self, runner):
        result = runner.invoke(cli, ["fluid-check", "--runs", "3", "--n", "400", "--seed", "2"])
        assert result.exit_code == 0, result.output
        runs, summary = tables(result.stdout)
        assert len(runs) == 3
        assert summary[0]["runs"] == "3"


class TestConfig:
    """Test settings loading from --config and the environment."""

    def test_bins_from_config(self, runner, files):
        config = files("config.yaml", "defaults:\n  bins: 2\nlogging:\n  level: WARNING\n")
        words = files("words.csv", "word\n0011\n")
        result = runner.invoke(
            cli, ["--config", config, "empirical", words, "--k", "1", "--spatial"]
        )
        assert result.exit_code == 0, result.output
        (table,) = tables(result.stdout)
        assert sorted({row["bin"] for row in table}) == ["1", "2"]

    def test_flag_overrides_config(self, runner, files):
        config = files("config.yaml", "defaults:\n  bins: 2\n")
        words = files("words.csv", "word\n0011\n")
        result = runner.invoke(
            cli, ["--config", config, "empirical", words, "--spatial", "--bins", "4"]
        )
        (table,) = tables(result.stdout)
        assert len({row["bin"] for row in table}) == 4

    def test_config_from_environment(self, runner, files):
        config = files("config.yaml", "defaults:\n  enumerate_cap: 3\n")
        model = files("scalar.yaml", SCALAR_MODEL)
        result = runner.invoke(
            cli,
            ["measure", model, "--n", "4", "--enumerate"],
            env={"MPBRIDGE_CONFIG": config},
        )
        assert result.exit_code == EXIT_VALIDATION
        assert error_record(result)["error"] == "SizeLimit"

    def test_invalid_config(self, runner, files):
        config = files("config.yaml", "defaults:\n  seed: many\n")
        result = runner.invoke(cli, ["--config", config, "fluid-check"])
        assert result.exit_code == EXIT_VALIDATION
        assert "seed" in error_record(result)["message"]


class TestNumericFlags:
    """Test that every numeric flag a command accepts reaches its output."""

    def test_perron_tol(self, runner, files):
        model = files("two_state.yaml", TWO_STATE_MODEL)
        loose = tables(runner.invoke(cli, ["perron", model, "--tol", "0.5"]).stdout)[0]
        tight = tables(runner.invoke(cli, ["perron", model, "--tol", "1e-12"]).stdout)[0]
        assert loose[0]["iterations"] == "1"
        assert int(tight[0]["iterations"]) > 1
        assert float(tight[0]["residual"]) < float(loose[0]["residual"])

    def test_perron_bmax(self, runner, files):
        model = files("tasep.yaml", TASEP_MODEL)
        result = runner.invoke(cli, ["perron", model, "--bmax", "2"])
        assert result.exit_code == 0, result.output
        _, vector = tables(result.stdout)
        assert [float(row["e"]) for row in vector] == [1.0, 2.0, 3.0]

    def test_measure_bmax(self, runner):
        args = ["measure", "--tasep", "--alpha", "0.75", "--beta", "0.75", "--word", "0110"]
        truncated = runner.invoke(cli, [*args, "--bmax", "0"])
        assert truncated.exit_code == 0, truncated.output
        (table,) = tables(truncated.stdout)
        assert float(table[0]["probability"]) == pytest.approx(1 / 16)
        assert truncated.stdout != runner.invoke(cli, args).stdout

    def test_sample_bridge_seed_and_bmax(self, runner):
        args = ["sample-bridge", "--tasep", "--alpha", "0.75", "--beta", "0.75", "--n", "6"]
        args += ["--samples", "20"]
        first = runner.invoke(cli, [*args, "--seed", "1"]).stdout
        assert first != runner.invoke(cli, [*args, "--seed", "2"]).stdout
        capped = runner.invoke(cli, [*args, "--seed", "1", "--bmax", "3"])
        assert capped.exit_code == 0, capped.output
        records = [json.loads(line) for line in capped.stdout.splitlines()]
        assert all(max(r["zeta"]) <= 3 for r in records)

    def test_rate_pair_tol(self, runner, files):
        model = files("scalar.yaml", SCALAR_MODEL)
        nu2 = files("nu2.yaml", SKEWED_PAIRS)
        loose, _ = tables(runner.invoke(cli, ["rate-pair", model, nu2, "--tol", "1e-3"]).stdout)
        tight, _ = tables(runner.invoke(cli, ["rate-pair", model, nu2, "--tol", "1e-10"]).stdout)
        assert int(loose[0]["iterations"]) < int(tight[0]["iterations"])
        assert float(loose[0]["value"]) == pytest.approx(float(tight[0]["value"]), abs=1e-2)

    def test_rate_profile_tol(self, runner, files):
        profile = files("profile.csv", "x,rho\n0.25,0.2\n0.5,0.2\n0.75,0.2\n1.0,0.2\n")
        args = ["rate-profile", profile, "--alpha", "0.75", "--beta", "0.75", "--grid", "8"]
        _, loose = tables(runner.invoke(cli, [*args, "--tol", "1"]).stdout)
        _, tight = tables(runner.invoke(cli, [*args, "--tol", "1e-12"]).stdout)
        assert loose[0]["iterations"] == "100"
        assert int(tight[0]["iterations"]) > 100

    def test_verify_ldp_seed(self, runner, files):
        config = files("config.yaml", MONTE_CARLO_CONFIG)
        model = files("scalar.yaml", SCALAR_MODEL)
        args = ["--config", config, "verify-ldp", model, "--ns", "6,7,8,9"]
        args += ["--center", "1,0,0,0", "--radius", "1.0", "--samples", "2000"]
        first = runner.invoke(cli, [*args, "--seed", "1"])
        assert first.exit_code == 0, first.output
        records = [json.loads(line) for line in first.stdout.splitlines()]
        assert [r["method"] for r in records] == ["monte_carlo"] * 4
        assert first.stdout != runner.invoke(cli, [*args, "--seed", "2"]).stdout

    def test_stationary_check_tol_and_bmax(self, runner):
        args = ["stationary-check", "--alpha", "0.75", "--beta", "0.6", "--n", "4"]
        (exact,) = tables(runner.invoke(cli, [*args, "--tol", "1e-3"]).stdout)
        assert exact[0]["tol"] == "0.001"
        assert exact[0]["within_tol"] == "true"
        (truncated,) = tables(runner.invoke(cli, [*args, "--tol", "1e-3", "--bmax", "0"]).stdout)
        assert float(truncated[0]["max_deviation"]) > 1e-3
        assert truncated[0]["within_tol"] == "false"

    def test_fluid_check_grid(self, runner):
        args = ["fluid-check", "--runs", "3", "--n", "300", "--tilt", "stick", "--seed", "2"]
        coarse_runs, coarse = tables(runner.invoke(cli, [*args, "--grid", "3"]).stdout)
        fine_runs, fine = tables(runner.invoke(cli, [*args, "--grid", "300"]).stdout)
        assert coarse[0]["grid"] == "3"
        assert fine[0]["grid"] == "300"
        assert coarse_runs != fine_runs

    @pytest.mark.parametrize(
        "args",
        [
            ["empirical", "WORDS", "--seed", "1"],
            ["rate-pair", "MODEL", "NU2", "--bmax", "3"],
            ["fluid-check", "--tol", "1e-3"],
            ["stationary-check", "--alpha", "0.75", "--beta", "0.6", "--n", "3", "--grid", "9"],
            ["rate-profile", "PROFILE", "--alpha", "0.75", "--beta", "0.75", "--seed", "1"],
        ],
    )
    def test_unused_flag_is_usage_error(self, runner, files, args):
        paths = {
            "WORDS": files("words.csv", "word\n0110\n"),
            "MODEL": files("scalar.yaml", SCALAR_MODEL),
            "NU2": files("nu2.yaml", SKEWED_PAIRS),
            "PROFILE": files("profile.csv", "x,rho\n0.5,0.5\n1.0,0.5\n"),
        }
        result = runner.invoke(cli, [paths.get(arg, arg) for arg in args])
        assert result.exit_code == EXIT_USAGE


DETERMINISM_RUNS = {
    "perron": ["perron", "MODEL", "--enlarged"],
    "measure": ["measure", "--tasep", "--alpha", "0.75", "--beta", "0.75", "--n", "3",
                "--enumerate"],
    "sample-bridge": ["sample-bridge", "--tasep", "--alpha", "0.75", "--beta", "0.75",
                      "--n", "5", "--samples", "10", "--seed", "3"],
    "empirical": ["empirical", "WORDS", "--k", "1", "--spatial", "--bins", "2"],
    "rate-pair": ["rate-pair", "MODEL", "NU2"],
    "rate-profile": ["rate-profile", "PROFILE", "--alpha", "0.75", "--beta", "0.75",
                     "--grid", "8", "--tol", "1e-3"],
    "verify-ldp": ["--config", "CONFIG", "verify-ldp", "MODEL", "--ns", "3,4",
                   "--center", "1,0,0,0", "--radius", "1.0", "--samples", "500", "--seed", "4"],
    "stationary-check": ["stationary-check", "--alpha", "0.75", "--beta", "0.6", "--n", "3"],
    "fluid-check": ["fluid-check", "--runs", "3", "--n", "200", "--seed", "5", "--grid", "50"],
}


@pytest.mark.parametrize("command", sorted(DETERMINISM_RUNS))
def test_same_seed_gives_identical_output(runner, files, command):
    paths = {
        "MODEL": files("scalar.yaml", SCALAR_MODEL),
        "NU2": files("nu2.yaml", SKEWED_PAIRS),
        "WORDS": files("words.csv", "word\n0011\n0110\n"),
        "PROFILE": files("profile.csv", "x,rho\n0.5,0.3\n1.0,0.6\n"),
        "CONFIG": files("config.yaml", MONTE_CARLO_CONFIG),
    }
    args = [paths.get(arg, arg) for arg in DETERMINISM_RUNS[command]]
    first = runner.invoke(cli, args)
    assert first.exit_code == 0, first.output
    assert first.stdout
    assert runner.invoke(cli, args).stdout == first.stdout


def test_run_returns_exit_code():
    assert run(["measure"]) == EXIT_USAGE
