import json

import pandas as pd
import pytest
from click.testing import CliRunner

import main
from main import cli

TINY_TRUSS = """
[experiment]
name = "truss"

[time]
T = 0.01
dt = 0.001

[load]
train_cases = ["tid1"]
test_cases = ["tid3"]

[model]
depth = 1
width = 4

[optimizer]
max_evals = 10

[training]
restarts = 1
"""


def test_help_lists_commands():
    result = CliRunner().invoke(cli, ["--help"])
    assert result.exit_code == 0
    for command in ("gen-data", "train", "nn-test", "fem-test", "sweep", "report"):
        assert command in result.output


def test_missing_config_exit_code(tmp_path):
    result = CliRunner().invoke(cli, ["gen-data", "--config", str(tmp_path / "none.toml")])
    assert result.exit_code == 2


def test_missing_checkpoint_exit_code(tmp_path):
    result = CliRunner().invoke(cli, ["nn-test", "--experiment", "truss", "--out", str(tmp_path),
                                      "--checkpoint", str(tmp_path / "none.ckpt")])
    assert result.exit_code == 3


def test_report_on_empty_run(tmp_path):
    result = CliRunner().invoke(cli, ["report", str(tmp_path)])
    assert result.exit_code == 0
    assert "missing  nncompare.csv" in result.output


def test_gen_data_and_train(tmp_path):
    config = tmp_path / "truss.toml"
    config.write_text(TINY_TRUSS)
    run = tmp_path / "run"
    runner = CliRunner()

    result = runner.invoke(cli, ["gen-data", "--config", str(config), "--out", str(run)])
    assert result.exit_code == 0, result.output
    assert "DATA GENERATION (truss)" in result.output
    assert (run / "data" / "direct_train.csv").exists()

    result = runner.invoke(cli, ["train", "--config", str(config), "--out", str(run),
                                 "--model", "spd", "--max-evals", "5"])
    assert result.exit_code == 0, result.output
    assert "Best seed" in result.output
    manifest = json.loads((run / "manifest_train.json").read_text())
    assert manifest["config"]["model"]["kind"] == "spd"
    assert manifest["config"]["optimizer"]["max_evals"] == 5


@pytest.mark.parametrize("command", ["gen-data", "train", "nn-test", "fem-test", "sweep"])
def test_paper_scale_flag_on_every_command(command):
    result = CliRunner().invoke(cli, [command, "--help"])
    assert result.exit_code == 0
    assert "--paper-scale" in result.output


def test_paper_scale_selects_large_plate_mesh(tmp_path, monkeypatch):
    seen = {}

    def fake_nn_test(cfg, checkpoint, dataset):
        seen["mesh"] = (cfg.mesh.nx, cfg.mesh.ny)
        return pd.DataFrame({"case": ["A6"], "rmse": [0.0], "relative_rmse": [0.0]})

    monkeypatch.setattr(main, "nn_test", fake_nn_test)
    result = CliRunner().invoke(cli, ["nn-test", "--experiment", "plate-elasto-plastic",
                                      "--out", str(tmp_path), "--paper-scale"])
    assert result.exit_code == 0, result.output
    assert seen["mesh"] == (20, 10)


def test_fiber_plate_nn_test_is_a_config_error(tmp_path):
    result = CliRunner().invoke(cli, ["nn-test", "--experiment", "plate-fiber", "--out", str(tmp_path)])
    assert result.exit_code == 2
