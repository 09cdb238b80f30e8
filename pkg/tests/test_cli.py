from __future__ import annotations

import numpy as np
import pytest

from regsdml.cli import create_parser
from regsdml.cli import EXIT_ESTIMATION
from regsdml.cli import EXIT_OK
from regsdml.cli import EXIT_USAGE
from regsdml.cli import main
from regsdml.sem.scenarios import generate
from regsdml.sem.scenarios import ScenarioSpec
from regsdml.store import CsvDatasetStore
from regsdml.store import load_dataset_csv
from regsdml.store import Roles


@pytest.fixture
def data_csv(tmp_path):
    filepath = tmp_path / "data.csv"
    CsvDatasetStore(filepath).save(generate(ScenarioSpec("linear_gaussian_oracle"), 120, np.random.default_rng(4)))
    yield filepath


def test_parser_knows_commands():
    args = create_parser().parse_args(["simulate", "--scenario", "intro_sem", "--gamma-grid", "0,1,inf"])
    assert args.command == "simulate"
    assert args.gamma_grid == "0,1,inf"


def test_simulate_is_reproducible(tmp_path):
    first, second = tmp_path / "first.csv", tmp_path / "second.csv"
    flags = ["simulate", "--scenario", "intro_sem", "--N", "100", "--M", "5", "--K", "2", "--S", "2",
             "--seed", "1", "--threads", "2"]
    assert main([*flags, "--out", str(first)]) == EXIT_OK
    assert main([*flags, "--out", str(second)]) == EXIT_OK
    assert first.read_bytes() == second.read_bytes()
    assert (tmp_path / "first.lengths.csv").read_bytes() == (tmp_path / "second.lengths.csv").read_bytes()
    assert "settings,scenario,intro_sem" in first.read_text(encoding="utf-8")


def test_fit_writes_report(tmp_path, data_csv, capsys):
    out = tmp_path / "fit.csv"
    code = main(["fit", "--data", str(data_csv), "--out", str(out), "--S", "2", "--seed", "3",
                 "--methods", "DML,regDML,regsDML,LIML", "--gamma-grid", "0,1,10,inf"])
    assert code == EXIT_OK
    lines = out.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "method,estimate,std_error,ci_lower,ci_upper,gamma_prime"
    assert [line.split(",")[0] for line in lines[1:]] == ["DML", "regDML", "regsDML", "LIML"]
    assert lines[1].endswith(",")
    printed = capsys.readouterr().out.splitlines()
    assert printed[0].split() == lines[0].split(",")
    assert [line.split()[0] for line in printed[1:]] == ["DML", "regDML", "regsDML", "LIML"]


def test_fit_json(tmp_path, data_csv):
    out = tmp_path / "fit.json"
    assert main(["fit", "--data", str(data_csv), "--out", str(out), "--S", "1", "--methods", "DML"]) == EXIT_OK
    assert out.read_text(encoding="utf-8").lstrip().startswith("[")


@pytest.mark.parametrize("argv", [
    [],
    ["fit", "--out", "r.csv"],
    ["simulate", "--scenario", "intro_sem", "--out", "r.csv"],
    ["simulate", "--scenario", "intro_sem", "--seed", "1", "--out", "r.csv", "--folds", "3"],
    ["simulate", "--scenario", "intro_sem", "--seed", "one", "--out", "r.csv"],
    ["generate", "--scenario", "intro_sem", "--out", "d.csv"],
])
def test_usage_errors(argv, capsys):
    assert main(argv) == EXIT_USAGE
    assert capsys.readouterr().err


def test_missing_dataset_is_an_estimation_error(tmp_path, capsys):
    code = main(["fit", "--data", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "fit.csv")])
    assert code == EXIT_ESTIMATION
    assert "error:" in capsys.readouterr().err
    assert not (tmp_path / "fit.csv").exists()


def test_diagnose_prints_metrics(tmp_path, capsys):
    out = tmp_path / "diag.csv"
    code = main(["diagnose", "--mc-size", "2000", "--step", "0.05", "--seed", "1", "--out", str(out)])
    assert code == EXIT_OK
    assert "neyman_psi_derivative" in capsys.readouterr().out
    assert out.read_text(encoding="utf-8").splitlines()[0] == "metric,value"


def test_config_file_and_flags(tmp_path, data_csv):
    config = tmp_path / "run.env"
    config.write_text(f"data={data_csv}\nS=1\nmethods=DML\n", encoding="utf-8")
    out = tmp_path / "fit.csv"
    assert main(["fit", "--config", str(config), "--out", str(out), "--methods", "regsDML"]) == EXIT_OK
    assert out.read_text(encoding="utf-8").splitlines()[1].startswith("regsDML,")


def test_generate_writes_dataset(tmp_path):
    first, second = tmp_path / "first.csv", tmp_path / "second.csv"
    flags = ["generate", "--scenario", "forest_sem", "--N", "40", "--seed", "5"]
    assert main([*flags, "--out", str(first)]) == EXIT_OK
    assert main([*flags, "--out", str(second)]) == EXIT_OK
    assert first.read_bytes() == second.read_bytes()
    data = load_dataset_csv(first, Roles(A=("A1", "A2"), X=("X",), W=("W1", "W2"), Y="Y"))
    assert (data.N, data.q, data.d, data.v) == (40, 2, 1, 2)


def test_generated_dataset_can_be_fitted(tmp_path):
    data = tmp_path / "data.csv"
    assert main(["generate", "--scenario", "intro_sem", "--N", "80", "--seed", "2", "--out", str(data)]) == EXIT_OK
    out = tmp_path / "fit.csv"
    assert main(["fit", "--data", str(data), "--out", str(out), "--S", "2", "--methods", "DML"]) == EXIT_OK
    assert out.read_text(encoding="utf-8").splitlines()[1].startswith("DML,")
