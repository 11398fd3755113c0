import json
import subprocess
import sys

import numpy as np
import pytest
from click.testing import CliRunner

from streamaft.cli import cli
from streamaft.simlab import SimSpec, generate_dataset


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def csv_file(tmp_path):
    """A small synthetic file in the native time,delta,x1,x2 layout."""
    spec = SimSpec(N=300, k=10, seed=5)
    data = generate_dataset(spec, 0, 13.712)
    path = tmp_path / "data.csv"
    with open(path, "w") as fh:
        for lt, d, x in zip(data.log_times, data.events, data.covariates):
            fh.write(f"{np.exp(lt):.10g},{int(d)},{x[0]:.10g},{x[1]:.10g}\n")
    return str(path)


def run_cmd(args, stdin=None):
    return subprocess.run(
        [sys.executable, "-m", "streamaft.cli"] + args,
        input=stdin, capture_output=True, text=True,
    )


class TestFit:
    def test_table_output(self, runner, csv_file):
        result = runner.invoke(cli, ["fit", csv_file, "--k", "10", "-B", "30",
                                     "--seed", "1", "--gamma1", "0.3"])
        assert result.exit_code == 0, result.output
        assert "x1" in result.output and "batches=30" in result.output

    def test_json_output(self, runner, csv_file):
        result = runner.invoke(cli, ["fit", csv_file, "--k", "10", "-B", "30",
                                     "--seed", "1", "--gamma1", "0.3", "--format", "json"])
        report = json.loads(result.output)
        assert len(report["estimate"]) == 2
        assert report["replicates"] == 30
        assert report["ci_lower"][0] < report["estimate"][0] < report["ci_upper"][0]

    def test_stdin_input(self, runner, csv_file):
        stdin = open(csv_file).read()
        result = runner.invoke(cli, ["fit", "-", "--k", "10", "-B", "0", "--gamma1", "0.3"],
                               input=stdin)
        assert result.exit_code == 0, result.output

    def test_header_flag(self, runner, csv_file):
        content = "time,delta,x1,x2\n" + open(csv_file).read()
        result = runner.invoke(cli, ["fit", "-", "--k", "10", "-B", "0",
                                     "--gamma1", "0.3", "--header"], input=content)
        assert result.exit_code == 0, result.output

    def test_skip_bad(self, runner, csv_file):
        content = "this,is,junk\n" + open(csv_file).read()
        result = runner.invoke(cli, ["fit", "-", "--k", "10", "-B", "0", "--gamma1", "0.3",
                                     "--skip-bad", "--format", "json"], input=content)
        assert json.loads(result.output)["records_skipped"] == 1

    def test_trailing_drop_warning(self, runner, csv_file):
        result = runner.invoke(cli, ["fit", csv_file, "--k", "7", "-B", "0", "--gamma1", "0.3"])
        assert result.exit_code == 0
        assert "dropped" in result.output

    def test_resume_matches_uninterrupted(self, runner, csv_file, tmp_path):
        lines = open(csv_file).read().splitlines(keepends=True)
        ck = str(tmp_path / "mid.ckpt")
        args = ["--k", "10", "-B", "20", "--seed", "3", "--gamma1", "0.3", "--format", "json"]

        full = runner.invoke(cli, ["fit", csv_file] + args)
        first = runner.invoke(cli, ["fit", "-"] + args + ["--checkpoint", ck],
                              input="".join(lines[:150]))
        assert first.exit_code == 0, first.output
        second = runner.invoke(cli, ["fit", "-", "--resume", ck, "--format", "json"],
                               input="".join(lines[150:]))
        assert second.exit_code == 0, second.output
        assert json.loads(second.output)["estimate"] == json.loads(full.output)["estimate"]

    def test_resume_k_conflict(self, runner, csv_file, tmp_path):
        ck = str(tmp_path / "a.ckpt")
        runner.invoke(cli, ["fit", csv_file, "--k", "10", "-B", "0", "--gamma1", "0.3",
                            "--checkpoint", ck])
        result = run_cmd(["fit", "--resume", ck, "--k", "5"], stdin="2.0,1,0.1,0.2\n")
        assert result.returncode == 4


class TestExitCodes:
    def test_missing_k_is_config_error(self):
        result = run_cmd(["fit", "-"], stdin="2.0,1,0.1\n2.0,1,0.2\n")
        assert result.returncode == 2

    def test_bad_record_is_data_error(self):
        result = run_cmd(["fit", "-", "--k", "2"], stdin="2.0,1,0.1\nbroken\n")
        assert result.returncode == 3

    def test_corrupt_checkpoint_is_checkpoint_error(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"not a checkpoint at all")
        result = run_cmd(["inspect", str(path)])
        assert result.returncode == 4

    def test_success_is_zero(self, csv_file):
        result = run_cmd(["fit", csv_file, "--k", "10", "-B", "0", "--gamma1", "0.3"])
        assert result.returncode == 0

    def test_bad_flag_value(self):
        result = run_cmd(["fit", "-", "--k", "2", "--level", "1.5"],
                         stdin="2.0,1,0.1\n2.0,1,0.2\n")
        assert result.returncode == 2


class TestOracle:
    def test_small_solve(self, runner):
        rows = "\n".join([
            "1.0,1,0.0", "1.2,1,0.0", "2.7,1,1.0", "3.3,1,1.0",
        ])
        result = runner.invoke(cli, ["oracle", "-", "--format", "json", "--tol", "1e-4"],
                               input=rows + "\n")
        assert result.exit_code == 0, result.output
        payload = json.loads(result.output)
        assert payload["converged"]
        assert payload["beta"][0] == pytest.approx(1.0, abs=0.05)

    def test_warm_start_flag(self, runner, csv_file):
        result = runner.invoke(cli, ["oracle", csv_file, "--init", "1,1",
                                     "--max-iter", "20", "--tol", "1e-3"])
        assert result.exit_code == 0, result.output
        assert "objective=" in result.output


class TestSimulate:
    def test_tiny_run_csv(self, runner):
        result = runner.invoke(cli, ["simulate", "--n", "400", "--k", "20", "--reps", "2",
                                     "-B", "0", "--format", "csv"])
        assert result.exit_code == 0, result.output
        lines = result.output.strip().splitlines()
        assert lines[0] == "coefficient,bias,emp_sd,coverage"
        assert len(lines) == 3

    def test_config_file_overrides(self, runner, tmp_path):
        cfg = tmp_path / "exp.cfg"
        cfg.write_text("N = 400\nk = 20\nreps = 2\nB = 0\n# comment\nerror_law = logistic\n")
        result = runner.invoke(cli, ["simulate", "--config", str(cfg), "--format", "json"])
        assert result.exit_code == 0, result.output
        assert len(json.loads(result.output)["rows"]) == 2

    def test_bad_config_key(self, runner, tmp_path):
        cfg = tmp_path / "exp.cfg"
        cfg.write_text("bogus = 1\n")
        result = runner.invoke(cli, ["simulate", "--config", str(cfg)])
        assert result.exit_code != 0


class TestGenSeerAndInspect:
    def test_gen_seer_file(self, runner, tmp_path):
        out = tmp_path / "seer.csv"
        result = runner.invoke(cli, ["gen-seer", "--n", "50", "--seed", "1",
                                     "--output", str(out)])
        assert result.exit_code == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0].startswith("time,delta,age_below35")
        assert len(lines) == 51
        fields = lines[1].split(",")
        assert float(fields[0]) > 0 and fields[1] in ("0", "1")

    def test_gen_seer_fits(self, runner, tmp_path):
        out = tmp_path / "seer.csv"
        runner.invoke(cli, ["gen-seer", "--n", "200", "--seed", "1", "--output", str(out)])
        result = runner.invoke(cli, ["fit", str(out), "--k", "20", "-B", "0",
                                     "--gamma1", "0.1", "--header"])
        assert result.exit_code == 0, result.output

    def test_inspect(self, runner, tmp_path, csv_file):
        ck = str(tmp_path / "s.ckpt")
        runner.invoke(cli, ["fit", csv_file, "--k", "10", "-B", "5", "--seed", "2",
                            "--gamma1", "0.3", "--checkpoint", ck])
        result = runner.invoke(cli, ["inspect", ck])
        info = json.loads(result.output)
        assert info["batches_consumed"] == 30
        assert info["k"] == 10 and info["replicates"] == 5 and info["dimension"] == 2
