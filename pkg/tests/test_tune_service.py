import math

import numpy as np
import pandas as pd
import pytest

from cpsdetect.exceptions import NumericalException
from cpsdetect.models.log import NORMAL_CODE
from cpsdetect.schemas.svm import SvmConfig
from cpsdetect.schemas.tune import GridSpec, RandomSearchSpec, SvmPoint
from cpsdetect.services import eval_service, svm_service, tune_service


@pytest.fixture
def tuning_logs(random_log):
    train = random_log(40, seed=1)
    labels = [NORMAL_CODE] * 20 + [1] * 5 + [NORMAL_CODE] * 5
    return train, random_log(30, seed=2, labels=labels)


def test_log_grid_shape():
    spec = GridSpec.log_grid()
    assert len(spec.w_values) * len(spec.nu_values) * len(spec.gamma_values) == 50


def test_log_grid_runs_every_cell(plant_logs):
    train, test = plant_logs
    spec = GridSpec.log_grid(max_iter=2000)
    rows = tune_service.grid_search(spec, train, test)
    assert len(rows) == 50
    assert sorted(r.index for r in rows) == list(range(50))


def test_single_cell_matches_direct_run(tuning_logs):
    train, evaluation = tuning_logs
    spec = GridSpec(w_values=[2], nu_values=[0.1], gamma_values=[0.05], include_default_gamma=False)
    [row] = tune_service.grid_search(spec, train, evaluation)

    config = SvmConfig(w=2, nu=0.1, gamma=0.05)
    model = svm_service.train_svm(config, svm_service.prepare_windows(train, 2))
    windows = svm_service.prepare_windows(evaluation, 2)
    expected = eval_service.evaluate_svm(svm_service.predict(model, windows), windows).f_measure
    assert row.status == "ok"
    assert row.f_measure == expected


def test_grid_rows_sorted_by_f(tuning_logs):
    train, evaluation = tuning_logs
    spec = GridSpec(w_values=[1, 2], nu_values=[0.05, 0.3], gamma_values=[0.01, 1.0])
    rows = tune_service.grid_search(spec, train, evaluation)
    scores = [r.f_measure for r in rows]
    assert scores == sorted(scores, reverse=True)


def test_default_gamma_is_added_per_window_size(tuning_logs):
    train, evaluation = tuning_logs
    spec = GridSpec(w_values=[1, 2], nu_values=[0.1], gamma_values=[0.5])
    rows = tune_service.grid_search(spec, train, evaluation)
    d = train.schema.feature_dim("onehot")
    assert {(r.w, r.gamma) for r in rows} == {(1, 0.5), (2, 0.5), (1, 1.0 / d), (2, 1.0 / (2 * d))}


def test_failed_cell_keeps_the_sweep_going(tmp_path, tuning_logs):
    train, evaluation = tuning_logs
    # one pairwise step at an unreachable tolerance cannot converge
    spec = GridSpec(w_values=[1], nu_values=[0.5], gamma_values=[1.0], include_default_gamma=False,
                    solver_tol=1e-15, max_iter=1)
    [row] = tune_service.grid_search(spec, train, evaluation)
    assert row.status == "failed"
    assert row.f_measure is None
    assert "converge" in row.error

    path = tmp_path / "table.csv"
    tune_service.write_table([row], path)
    table = pd.read_csv(path, keep_default_na=False)
    assert table.loc[0, "F"] == tune_service.FAILED_SENTINEL


def test_validation_objective_reports_test_f(tuning_logs):
    train, evaluation = tuning_logs
    spec = GridSpec(w_values=[1], nu_values=[0.1], gamma_values=[0.1], include_default_gamma=False,
                    objective="F_on_validation")
    [row] = tune_service.grid_search(spec, train, evaluation)
    assert row.test_f_measure is not None


def test_random_samples_are_seeded():
    spec = RandomSearchSpec(w=2, trials=20, seed=4)
    first = tune_service.sample_random_configs(spec)
    assert first == tune_service.sample_random_configs(spec)
    assert first != tune_service.sample_random_configs(spec.model_copy(update={"seed": 5}))
    assert all(nu > 0 and gamma > 0 for nu, gamma in first)


def test_random_samples_have_the_requested_mean():
    samples = np.array(tune_service.sample_random_configs(RandomSearchSpec(w=1, trials=4000, scale=1e-3)))
    assert samples.mean(axis=0) == pytest.approx([1e-3, 1e-3], rel=0.1)


def test_random_search_single_trial(tuning_logs):
    train, evaluation = tuning_logs
    spec = RandomSearchSpec(w=1, trials=1, scale=0.1, seed=1)
    [(nu, gamma)] = tune_service.sample_random_configs(spec)
    config, f, rows = tune_service.random_search(spec, train, evaluation)
    assert len(rows) == 1
    assert (config.nu, config.gamma) == (nu, gamma)
    assert f == rows[0].f_measure


def test_random_search_never_loses_to_the_incumbent(tuning_logs):
    train, evaluation = tuning_logs
    grid = GridSpec(w_values=[2], nu_values=[0.01, 0.1, 0.5], gamma_values=[0.01, 0.1, 1.0])
    best = tune_service.grid_search(grid, train, evaluation)[0]
    spec = RandomSearchSpec(w=2, trials=5, scale=0.05, seed=3, incumbent=SvmPoint(nu=best.nu, gamma=best.gamma))
    _, f, rows = tune_service.random_search(spec, train, evaluation)
    assert len(rows) == 6
    assert rows[0].f_measure == best.f_measure
    assert f >= best.f_measure


def test_random_search_without_successes(tuning_logs):
    train, evaluation = tuning_logs
    spec = RandomSearchSpec(w=1, trials=2, scale=1e6, seed=0)
    with pytest.raises(NumericalException):
        tune_service.random_search(spec, train, evaluation)


def test_operating_point_prefers_the_earliest_epoch():
    labels = np.array([NORMAL_CODE, NORMAL_CODE, 1, 1])
    separable = np.array([1.0, 2.0, 9.0, 10.0])
    best, points = tune_service.select_dnn_operating_point([separable, separable * 2], labels)
    assert [p.epoch for p in points] == [1, 2]
    assert best.epoch == 1
    assert best.threshold == 2.0
    assert best.f_measure == 1.0


def test_operating_point_picks_the_best_epoch(tmp_path):
    labels = np.array([NORMAL_CODE, NORMAL_CODE, 1, 1])
    best, points = tune_service.select_dnn_operating_point(
        [np.array([9.0, 1.0, 2.0, 10.0]), np.array([1.0, 2.0, 9.0, 10.0])], labels
    )
    assert best.epoch == 2
    assert points[0].f_measure < 1.0

    path = tmp_path / "points.csv"
    tune_service.write_operating_points(points, path)
    assert path.read_text().splitlines()[0] == "hidden_dim,epoch,threshold,f_measure,auc"


def test_operating_point_over_hidden_sizes(tmp_path):
    labels = np.array([NORMAL_CODE, NORMAL_CODE, 1, 1])
    mixed = np.array([9.0, 1.0, 2.0, 10.0])
    separable = np.array([1.0, 2.0, 9.0, 10.0])
    best, points = tune_service.select_dnn_operating_point({64: [mixed, separable], 32: [mixed, mixed]}, labels)
    assert [(p.hidden_dim, p.epoch) for p in points] == [(32, 1), (32, 2), (64, 1), (64, 2)]
    assert (best.hidden_dim, best.epoch) == (64, 2)

    path = tmp_path / "points.csv"
    tune_service.write_operating_points(points, path)
    table = pd.read_csv(path)
    assert table["hidden_dim"].tolist() == [32, 32, 64, 64]
    assert table["epoch"].tolist() == [1, 2, 1, 2]


def test_operating_point_ties_go_to_the_smaller_net():
    labels = np.array([NORMAL_CODE, NORMAL_CODE, 1, 1])
    separable = np.array([1.0, 2.0, 9.0, 10.0])
    best, _ = tune_service.select_dnn_operating_point({100: [separable], 50: [separable]}, labels)
    assert best.hidden_dim == 50


def test_operating_point_needs_traces():
    with pytest.raises(NumericalException):
        tune_service.select_dnn_operating_point([], np.array([NORMAL_CODE]))
    with pytest.raises(NumericalException):
        tune_service.select_dnn_operating_point({32: []}, np.array([NORMAL_CODE]))


def test_table_columns(tmp_path, tuning_logs):
    train, evaluation = tuning_logs
    rows = tune_service.grid_search(GridSpec(w_values=[1], nu_values=[0.2], gamma_values=[0.1]), train, evaluation)
    path = tmp_path / "table.csv"
    tune_service.write_table(rows, path)
    table = pd.read_csv(path, keep_default_na=False)
    assert list(table.columns) == tune_service.TABLE_COLUMNS
    assert math.isclose(float(table.loc[0, "F"]), rows[0].f_measure)
