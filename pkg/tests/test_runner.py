import io
import json
import math
import os

import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose
from rich.console import Console

from experiments.runner import (
    ExperimentRunner,
    contraction_points,
    fit_median_slope,
    run_experiment,
)
from models.experiment import ExperimentConfig
from reporting.notifier import RunNotifier
from utils.errors import ConfigurationError, GraphPriorError, ResourceError
from utils.persistence import ResultStore

CONFIG_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "configs")


def _quiet_notifier():
    return RunNotifier(console=Console(file=io.StringIO()), quiet=True)


def _spectral(**overrides):
    base = dict(kind="spectral", grid_values=(300,), zeta_constant=0.2, n_eigs=9, reference_size=2000, seed=3)
    base.update(overrides)
    return ExperimentConfig(**base)


def _laplacian(**overrides):
    base = dict(kind="laplacian", grid_values=(500, 1000, 2000), zeta_constant=0.2, seed=7)
    base.update(overrides)
    return ExperimentConfig(**base)


def _regression(**overrides):
    base = dict(
        kind="contraction", grid_values=(20, 40, 80), replicas=2, zeta_constant=0.2, k_constant=10,
        n_constant=10, gamma=1.5, n_max_points=1000, seed=11,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


class TestSpectral:
    def test_single_grid_value_has_no_slope(self, tmp_path):
        result = run_experiment(_spectral(), store=ResultStore(str(tmp_path)))
        assert result.n_rows == 1
        assert result.slope is None
        assert result.slope_flag == "fewer_than_3_grid_points"
        row = result.rows.iloc[0]
        assert row["k"] == 9
        assert row["k_source"] == "n_eigs"
        assert row["mean_rel_eig_err_2_6"] > 0
        assert result.detail is not None and len(result.detail) == 9
        with open(os.path.join(str(tmp_path), "slope.json")) as f:
            assert json.load(f)["slope"] is None

    def test_exact_injection(self, tmp_path):
        result = run_experiment(_spectral(inject_exact=True), store=ResultStore(str(tmp_path)))
        row = result.rows.iloc[0]
        assert row["mean_rel_eig_err_2_6"] < 1e-8
        assert row["max_efun_sup_err"] < 1e-8

    def test_rows_cover_grid_and_replicas(self):
        cfg = _spectral(grid_values=(300, 400), replicas=2)
        result = ExperimentRunner(cfg, write=False, notifier=_quiet_notifier()).run()
        assert result.n_rows == 4
        assert list(result.rows["grid_value"]) == [300, 300, 400, 400]
        assert list(result.rows["replica"]) == [0, 1, 0, 1]
        assert result.rows["cloud_seed"].nunique() == 4


class TestField:
    def test_constant_modes_only_have_zero_discrepancy(self):
        cfg = ExperimentConfig(
            kind="field", grid_values=(300,), zeta_constant=0.2, k_override=1, k_continuum=1,
            n_mc=4, reference_size=500, seed=2,
        )
        result = ExperimentRunner(cfg, write=False).run()
        assert result.rows.iloc[0]["mc_mean"] == 0.0
        assert result.rows.iloc[0]["k"] == 1


class TestContraction:
    def test_paper_schedule_refuses_before_allocation(self):
        cfg = ExperimentConfig.from_file(os.path.join(CONFIG_DIR, "paper_schedule.env"))
        with pytest.raises(ResourceError) as info:
            ExperimentRunner(cfg, write=False).run()
        assert info.value.exit_code == 4
        assert "capped" in str(info.value)

    def test_capped_points(self):
        cfg = _regression()
        assert [contraction_points(cfg, n) for n in cfg.grid_values] == [894, 1000, 1000]

    def test_capped_regression(self, tmp_path):
        result = run_experiment(_regression(), store=ResultStore(str(tmp_path)), notifier=_quiet_notifier())
        rows = result.rows
        assert result.n_rows == 6
        assert list(rows["N"]) == [894, 894, 1000, 1000, 1000, 1000]
        assert np.all(rows["error_n"] > 0)
        assert np.all(rows["tikhonov_error_n"] > 0)
        for r in (2, 4, 8):
            assert np.all((rows[f"tail_mass_{r}"] >= 0) & (rows[f"tail_mass_{r}"] <= 1))
        assert np.all(rows["tail_mass_2"] >= rows["tail_mass_8"])
        assert rows["hellinger"].isna().all()
        assert set(rows["schedule_mode"]) == {"capped"}
        assert_allclose(result.reference_slope, -2.5 / 7.0)
        assert result.slope is not None

    def test_classification(self):
        cfg = ExperimentConfig(
            kind="contraction", grid_values=(30,), task="classification", link="logistic",
            truth_coefficients=(0.0, 3.0, 1.5, -1.5), zeta_constant=0.2, k_constant=8,
            n_constant=20, gamma=1.5, n_max_points=600, iters=600, burn_in=100, thin=5, seed=5,
        )
        result = ExperimentRunner(cfg, write=False).run()
        row = result.rows.iloc[0]
        assert 0.0 <= row["acceptance_rate"] <= 1.0
        assert row["hellinger"] >= 0
        assert 0.0 <= row["misclassification"] <= 1.0
        assert math.isnan(row["tikhonov_error_n"])

    def test_unknown_link_fails_up_front(self):
        cfg = _regression(task="classification", link="cauchit")
        with pytest.raises(ConfigurationError):
            ExperimentRunner(cfg, write=False).run()

    def test_single_label_has_no_reference_rate(self):
        cfg = _regression(grid_values=(1,), replicas=1, n_constant=500, k_override=9)
        result = ExperimentRunner(cfg, write=False, notifier=_quiet_notifier()).run()
        row = result.rows.iloc[0]
        assert row["N"] == 500
        assert math.isnan(row["eps_n"])
        for r in (2, 4, 8):
            assert math.isnan(row[f"tail_mass_{r}"])
        assert row["error_n"] >= 0


class TestLaplacian:
    def test_rows_and_slope_against_zeta(self, tmp_path):
        result = run_experiment(_laplacian(), store=ResultStore(str(tmp_path)))
        assert np.all(result.rows["sup_error"] >= 0)
        assert result.x_column == "zeta"
        assert result.slope is not None
        assert sorted(os.listdir(str(tmp_path))) == ["manifest.json", "rows.csv", "slope.json"]

    def test_rerun_is_identical_except_wall_time(self):
        first = ExperimentRunner(_laplacian(), write=False).run().rows
        second = ExperimentRunner(_laplacian(n_jobs=2), write=False).run().rows
        pd.testing.assert_frame_equal(first.drop(columns="wall_time_s"), second.drop(columns="wall_time_s"))

    def test_manifest(self):
        result = ExperimentRunner(_laplacian(), write=False).run()
        manifest = result.manifest
        assert manifest["experiment"] == "laplacian"
        assert manifest["n_rows"] == 3
        assert manifest["nondeterministic_columns"] == ["wall_time_s"]
        assert len(manifest["seeds"]["tasks"]) == 3
        assert manifest["config"]["grid_values"] == [500, 1000, 2000]
        json.dumps(manifest)


def test_runner_rejects_other_kind():
    runner = ExperimentRunner(_laplacian(), write=False)
    with pytest.raises(GraphPriorError):
        runner.run_spectral()


def test_median_slope_flags():
    rows = pd.DataFrame({"grid_value": [1, 2, 4], "metric": [1.0, 0.0, 0.5]})
    assert fit_median_slope(rows, "metric", "grid_value") == (None, "nonpositive_metric")
    rows = pd.DataFrame({"grid_value": [1, 2, 4, 4], "metric": [1.0, 0.5, 0.2, 0.3]})
    fit, flag = fit_median_slope(rows, "metric", "grid_value")
    assert flag == ""
    assert fit.n_points == 3


@pytest.mark.slow
@pytest.mark.parametrize("name", ["spectral.env", "field.env", "contraction.env", "laplacian.env"])
def test_shipped_experiments(name, tmp_path):
    cfg = ExperimentConfig.from_file(os.path.join(CONFIG_DIR, name))
    result = run_experiment(cfg, store=ResultStore(str(tmp_path)))
    assert result.slope is not None
    assert result.slope.slope < 0 or cfg.kind == "laplacian"
