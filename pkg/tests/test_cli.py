import os

import pandas as pd
import pytest

import config
from main import build_parser, main

CONFIG_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "configs")


@pytest.fixture(autouse=True)
def output_root(monkeypatch, tmp_path):
    monkeypatch.setattr(config, "OUTPUT_ROOT", str(tmp_path))
    return tmp_path


def test_sample_writes_cloud(tmp_path):
    out = str(tmp_path / "clouds")
    assert main(["--quiet", "sample", "--N", "100", "--seed", "3", "--out", out]) == 0
    assert sorted(os.listdir(out)) == ["cloud.csv", "cloud.json"]
    assert len(pd.read_csv(os.path.join(out, "cloud.csv"))) == 100


def test_eig_from_saved_cloud(tmp_path):
    clouds = str(tmp_path / "clouds")
    assert main(["sample", "--N", "300", "--out", clouds]) == 0
    code = main([
        "eig", "--cloud", os.path.join(clouds, "cloud.csv"), "--k", "5",
        "--zeta-constant", "0.2", "--out", str(tmp_path / "eig"),
    ])
    assert code == 0
    values = pd.read_csv(str(tmp_path / "eig" / "eig_values.csv"))
    assert values["eigenvalue"].iloc[0] == 0.0


def test_paper_schedule_exits_with_resource_code():
    assert main(["experiment", "contraction", "--config", os.path.join(CONFIG_DIR, "paper_schedule.env")]) == 4


def test_bad_config_exits_with_configuration_code(tmp_path):
    path = tmp_path / "bad.env"
    path.write_text("experiment.kind=spectral\ngrid.values=100\nsurprise=1\n")
    assert main(["experiment", "spectral", "--config", str(path)]) == 2


def test_kind_mismatch(tmp_path):
    assert main(["experiment", "field", "--config", os.path.join(CONFIG_DIR, "spectral.env")]) == 2


def test_out_of_range_smoothness():
    assert main(["graph", "--N", "200", "--s", "2.0"]) == 2


def test_report_slope(tmp_path, capsys):
    rows = pd.DataFrame({
        "grid_value": [10, 10, 20, 20, 40, 40],
        "error_n": [1.0, 1.0, 0.5, 0.5, 0.25, 0.25],
    })
    path = str(tmp_path / "rows.csv")
    rows.to_csv(path, index=False)
    assert main(["report", "slope", "--rows", path, "--metric", "error_n"]) == 0
    assert "slope=-1.0000" in capsys.readouterr().out


def test_report_slope_missing_column(tmp_path):
    path = str(tmp_path / "rows.csv")
    pd.DataFrame({"grid_value": [1, 2, 3]}).to_csv(path, index=False)
    assert main(["report", "slope", "--rows", path, "--metric", "error_n"]) == 2


def test_parser_requires_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])
