import math

import numpy as np
import pytest

from catalog import ConfigManager
from experiments import (ExperimentConfig, TrialRecord, RUNNERS, fit_constant, make_record, trial_tasks,
                         fixed_seed, run_trials, quantile_curve, run_experiment, report_frame, save_report,
                         load_records)
from constants import REPORT_COLUMNS, FACTOR_SEED_OFFSET
from distributions import derive_seed


def make_config(**overrides) -> ExperimentConfig:
    data = {
        "experiment": "main_bound",
        "dims": [[20, 20, 40]],
        "distribution": {"kind": "rademacher", "params": {}, "normalization": "none"},
        "b_factor": {"kind": "orthogonal_projection", "params": {}},
        "trials": 5,
        "base_seed": 7,
        "params": {},
    }
    data.update(overrides)
    return ExperimentConfig.from_dict(data)


class TestFitConstant:
    def test_maximum(self):
        assert fit_constant([1.0, 2.0, 3.0], 1.0) == 3.0

    def test_median(self):
        assert fit_constant([3.0, 1.0, 2.0], 0.5) == 2.0

    def test_single_record(self):
        assert fit_constant([0.7], 0.01) == 0.7

    def test_accepts_records(self):
        task = trial_tasks(make_config(trials=2))
        records = [make_record(make_config(), t, v, 2.0) for t, v in zip(task, [1.0, 4.0])]
        assert fit_constant(records) == 2.0

    def test_rejects_empty(self):
        with pytest.raises(ValueError, match="empty"):
            fit_constant([])

    def test_rejects_bad_quantile(self):
        with pytest.raises(ValueError):
            fit_constant([1.0], 0.0)

    def test_quantile_curve(self):
        curve = quantile_curve(np.arange(1.0, 101.0), [0.1, 0.5, 1.0])
        assert curve == {0.1: 10.0, 0.5: 50.0, 1.0: 100.0}


class TestTrialRecord:
    def test_ratio_consistency(self):
        with pytest.raises(ValueError, match="measured/normalizer"):
            TrialRecord('main_bound', 1, 1, 1, 0, 0, 1.0, 2.0, 0.4)

    def test_positive_normalizer(self):
        with pytest.raises(ValueError, match="positive"):
            TrialRecord('main_bound', 1, 1, 1, 0, 0, 0.0, 0.0, 0.0)

    def test_make_record(self):
        task = trial_tasks(make_config())[0]
        record = make_record(make_config(), task, 3, 4)
        assert record.ratio == 0.75
        assert (record.m, record.n, record.N) == (20, 20, 40)


class TestConfig:
    def test_round_trip(self):
        cfg = make_config(ceiling=2.5, params={"eps": 0.3})
        assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg
        assert cfg.eps == 0.3

    def test_b_factor_dims_from_first_triple(self):
        cfg = make_config(dims=[[10, 12, 30]])
        assert (cfg.b_factor.n, cfg.b_factor.N) == (10, 30)

    def test_missing_field(self):
        with pytest.raises(ValueError, match="missing field"):
            ExperimentConfig.from_dict({"experiment": "main_bound", "dims": [[2, 2, 2]]})

    @pytest.mark.parametrize("dims", [[], [[2, 2]], [[0, 2, 2]]])
    def test_bad_dims(self, dims):
        with pytest.raises(ValueError):
            make_config(dims=dims)

    def test_bad_trials(self):
        with pytest.raises(ValueError, match="trial"):
            make_config(trials=0)


class TestScheduling:
    def test_task_order_and_seeds(self):
        cfg = make_config(dims=[[4, 4, 4], [6, 6, 6]], trials=3)
        tasks = trial_tasks(cfg, groups=2)
        assert len(tasks) == 12
        assert [t.trial for t in tasks] == list(range(12))
        assert [t.seed for t in tasks] == [derive_seed(7, i) for i in range(12)]
        assert [(t.group, t.dims_index) for t in tasks[:6]] == [(0, 0)] * 3 + [(0, 1)] * 3

    def test_fixed_seeds_avoid_trial_seeds(self):
        cfg = make_config(trials=50)
        trial_seeds = {t.seed for t in trial_tasks(cfg)}
        assert fixed_seed(cfg, 0, 2) not in trial_seeds
        assert fixed_seed(cfg, 0, 2) == derive_seed(derive_seed(7, FACTOR_SEED_OFFSET), 2)

    def test_run_trials_keeps_order(self):
        tasks = trial_tasks(make_config(trials=40))
        assert run_trials(tasks, lambda t: t.trial, workers=8) == list(range(40))


class TestNormBounds:
    def test_zero_factor_gives_zero_ratio(self):
        cfg = make_config(b_factor={"kind": "orthogonal_projection", "params": {"rank": 0}})
        report = run_experiment(cfg)
        assert all(r.measured == 0.0 and r.ratio == 0.0 for r in report.records)
        assert report.fitted_constant == 0.0
        assert report.extras['strong_fitted'] == 0.0

    def test_main_bound_report(self):
        report = run_experiment(make_config())
        assert len(report.records) == 5
        assert all(r.normalizer == pytest.approx(2 * math.sqrt(20)) for r in report.records)
        assert report.fitted_constant == max(report.ratios)
        assert report.passed
        assert '20x20x40' in report.extras['fitted_by_dims']

    def test_log_bound_shares_measurements(self):
        main = run_experiment(make_config())
        log = run_experiment(make_config(experiment="log_bound"))
        assert [r.measured for r in main.records] == [r.measured for r in log.records]
        assert all(r.normalizer == pytest.approx(math.sqrt(20 * math.log(40))) for r in log.records)
        assert log.extras['tensor_sum_fitted'] > 0

    def test_rejects_heavy_tails(self):
        cfg = make_config(distribution={"kind": "student_t", "params": {"nu": 3}, "normalization": "none"})
        with pytest.raises(ValueError, match="infinite"):
            run_experiment(cfg)

    def test_ceiling(self):
        report = run_experiment(make_config(ceiling=1e-3))
        assert not report.passed

    def test_unknown_experiment(self):
        with pytest.raises(ValueError, match="Unknown experiment"):
            run_experiment(make_config(experiment="bai_yin"))

    def test_covariance(self):
        cfg = make_config(experiment="covariance", dims=[[30, 30, 30]],
                          distribution={"kind": "gaussian", "params": {}, "normalization": "unit_variance"},
                          b_factor={"kind": "identity", "params": {}})
        report = run_experiment(cfg)
        assert all(r.normalizer == 2.0 for r in report.records)
        assert 0 < report.mean_ratio < 3

    def test_small_columns_at_threshold(self):
        cfg = make_config(experiment="small_columns", dims=[[20, 20, 200]],
                          b_factor={"kind": "diagonal_column_norms", "params": {"value": 0.01}},
                          params={"M": 1.0, "at_threshold": True})
        report = run_experiment(cfg)
        threshold = report.extras['thresholds']['20x20x200']
        assert threshold == pytest.approx(math.log(40) ** -2.5)
        assert all(r.normalizer == pytest.approx(math.sqrt(20)) for r in report.records)

    def test_small_columns_needs_diagonal(self):
        with pytest.raises(ValueError, match="diagonal_column_norms"):
            run_experiment(make_config(experiment="small_columns"))

    def test_controlled_columns(self):
        cfg = make_config(experiment="controlled_columns", dims=[[40, 40, 40]],
                          params={"grid": [[1, 1], [2, 0.25]]})
        report = run_experiment(cfg)
        assert len(report.records) == 10
        assert set(report.extras['fitted_by_grid']) == {'a=1,b=1', 'a=2,b=0.25'}
        assert 'stable_over_grid' in report.checks

    def test_controlled_columns_needs_grid(self):
        with pytest.raises(ValueError, match="grid"):
            run_experiment(make_config(experiment="controlled_columns"))

    def test_column_split(self):
        report = run_experiment(make_config(experiment="column_split", dims=[[20, 20, 80]]))
        assert report.checks['triangle_inequality']
        assert report.checks['large_count_below_bound']
        split = report.extras['split']['20x20x80']
        assert split['large'] <= 80


class TestSmallEntries:
    def test_small_aij(self):
        cfg = make_config(experiment="small_aij",
                          distribution={"kind": "gaussian", "params": {}, "normalization": "none"})
        report = run_experiment(cfg)
        assert report.extras['mean_M'] >= 1.0
        assert report.checks['level_sparsity_decay']
        for r in report.records:
            assert r.normalizer >= math.sqrt(r.n)

    def test_almost_square(self):
        cfg = make_config(experiment="almost_square", dims=[[20, 20, 22]],
                          distribution={"kind": "student_t", "params": {"nu": 6}, "normalization": "unit_moment"})
        report = run_experiment(cfg)
        assert report.extras['max_M'] >= report.extras['mean_M'] > 0

    def test_almost_square_rejects_wide(self):
        with pytest.raises(ValueError, match="exceeds"):
            run_experiment(make_config(experiment="almost_square", dims=[[20, 20, 40]]))

    def test_universal_deviation(self):
        cfg = make_config(experiment="universal_deviation", trials=30,
                          distribution={"kind": "bounded_uniform", "params": {}, "normalization": "none"},
                          b_factor={"kind": "identity", "params": {}})
        report = run_experiment(cfg)
        assert len({r.normalizer for r in report.records}) == 1
        assert [row['t'] for row in report.extras['tail']] == [0.5, 1.0, 2.0, 3.0]
        assert all(r.measured > 0 for r in report.records)

    def test_sparse_norm(self):
        cfg = make_config(experiment="sparse_norm", dims=[[50, 50, 50]],
                          distribution={"kind": "sparse_sign", "params": {"p": 0.1}, "normalization": "none"},
                          b_factor={"kind": "identity", "params": {}}, params={"p_grid": [0.1, 0.5]})
        report = run_experiment(cfg)
        assert len(report.records) == 10
        assert report.checks['norm_dominates_columns']
        assert set(report.extras['fitted_by_p']) == {0.1, 0.5}

    def test_sparse_norm_needs_sparse_law(self):
        with pytest.raises(ValueError, match="sparse_sign"):
            run_experiment(make_config(experiment="sparse_norm"))


class TestSminAndSharpness:
    def gaussian(self):
        return {"kind": "gaussian", "params": {}, "normalization": "unit_variance"}

    def test_smin(self):
        cfg = make_config(experiment="smin", dims=[[40, 20, 20]], distribution=self.gaussian(),
                          params={"threshold": 0.1, "delta": 0.5}, trials=10)
        report = run_experiment(cfg)
        assert all(r.ratio > 0 for r in report.records)
        assert set(report.extras['quantiles']) == {0.01, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99}
        assert 'lower_tail' in report.checks

    def test_smin_rejects_wide(self):
        cfg = make_config(experiment="smin", dims=[[10, 20, 20]], distribution=self.gaussian())
        with pytest.raises(ValueError, match="m >= n"):
            run_experiment(cfg)

    def test_smin_needs_unit_variance(self):
        with pytest.raises(ValueError, match="unit_variance"):
            run_experiment(make_config(experiment="smin", dims=[[40, 20, 20]]))

    def test_sharpness_rejects_finite_fourth_moment(self):
        cfg = make_config(experiment="sharpness", distribution=self.gaussian())
        with pytest.raises(ValueError, match="finite fourth moment"):
            run_experiment(cfg)

    def test_sharpness_control_run(self):
        cfg = make_config(experiment="sharpness", dims=[[20, 20, 20], [40, 40, 40]],
                          distribution=self.gaussian(), b_factor={"kind": "identity", "params": {}},
                          params={"control": True})
        report = run_experiment(cfg)
        assert set(report.checks) == {'flat'}
        assert set(report.extras['medians']) == {'20x20x20', '40x40x40'}


class TestAudits:
    def test_rudelson(self):
        cfg = make_config(experiment="rudelson_audit", dims=[[5, 5, 10], [8, 8, 16]], trials=2,
                          params={"draws": 100, "family": "gaussian"})
        report = run_experiment(cfg)
        assert set(report.extras['fitted_by_m']) == {5, 8}
        assert all(r.ratio > 0 for r in report.records)

    def test_rudelson_unknown_family(self):
        cfg = make_config(experiment="rudelson_audit", params={"family": "sparse"})
        with pytest.raises(ValueError, match="Unknown vector family"):
            run_experiment(cfg)

    def test_variance_audit(self):
        cfg = make_config(experiment="variance_audit", dims=[[20, 20, 20]], trials=10,
                          distribution={"kind": "gaussian", "params": {}, "normalization": "unit_variance"},
                          b_factor={"kind": "identity", "params": {}})
        report = run_experiment(cfg)
        stats = report.extras['20x20x20']
        assert stats['mean'] == pytest.approx(20.0, abs=4 * stats['se_mean'] + 1e-9)
        assert all(r.normalizer == 20.0 for r in report.records)


class TestReports:
    def test_frame_columns(self):
        df = report_frame(run_experiment(make_config()))
        assert list(df.columns) == REPORT_COLUMNS

    def test_save_and_load(self, tmp_path):
        report = run_experiment(make_config())
        path = tmp_path / "report.csv"
        save_report(report, path)
        assert load_records(path) == report.records

    def test_worker_count_does_not_change_output(self, tmp_path):
        cfg = make_config(dims=[[20, 20, 40], [10, 10, 30]], trials=6)
        save_report(run_experiment(cfg, workers=1), tmp_path / "serial.csv")
        save_report(run_experiment(cfg, workers=8), tmp_path / "parallel.csv")
        assert (tmp_path / "serial.csv").read_bytes() == (tmp_path / "parallel.csv").read_bytes()

    def test_load_rejects_missing_columns(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("experiment,m,seed\nmain_bound,3,11\n")
        with pytest.raises(ValueError, match="lacks columns"):
            load_records(path)

    def test_every_runner_registered(self):
        assert len(RUNNERS) == 14


@pytest.mark.slow
class TestAcceptance:
    def test_bai_yin_limit(self, config_dir):
        report = run_experiment(ConfigManager.load_config(config_dir / "bai_yin.json"), workers=4)
        assert 0.95 <= report.mean_ratio <= 1.15
        assert report.passed

    def test_main_bound_constant_stable_in_N(self, config_dir):
        narrow = run_experiment(ConfigManager.load_config(config_dir / "main_bound.json"), workers=4)
        wide = run_experiment(ConfigManager.load_config(config_dir / "main_bound_wide.json"), workers=4)
        assert narrow.fitted_constant <= 3.0
        assert wide.fitted_constant <= 3.0
        assert abs(wide.fitted_constant - narrow.fitted_constant) <= 0.25 * narrow.fitted_constant

    def test_sparse_norm_uniform_in_p(self, config_dir):
        report = run_experiment(ConfigManager.load_config(config_dir / "sparse_norm.json"), workers=4)
        assert report.checks['uniform_over_p']

    def test_smin_lower_tail(self, config_dir):
        report = run_experiment(ConfigManager.load_config(config_dir / "smin.json"), workers=4)
        assert report.checks['lower_tail']

    def test_sharpness_grows(self, config_dir):
        report = run_experiment(ConfigManager.load_config(config_dir / "sharpness.json"), workers=4)
        assert report.checks['increasing']

    def test_sharpness_control_flat(self, config_dir):
        report = run_experiment(ConfigManager.load_config(config_dir / "sharpness_control.json"), workers=4)
        assert report.checks['flat']

    def test_rudelson_constant(self, config_dir):
        report = run_experiment(ConfigManager.load_config(config_dir / "rudelson.json"), workers=4)
        assert report.passed
