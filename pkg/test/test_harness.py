"""
Tests for the paired t-test, random-search tuning and the rankforge command line
"""

import json
import math
import os
import sys

import numpy as np
import pytest
from scipy import stats

sys.path.append(os.path.join(os.path.dirname(__file__), '..', 'src'))
from models.oblivious_boosting import BoostConfig, TrainingLog, TrainingResult, load_model
from modules.data_io import generate_synthetic, write_letor
from modules.harness import (
    PairedTTest,
    RankingHarness,
    UsageError,
    load_training_data,
    paired_t_test,
    sample_trial_config,
    student_t_sf,
)
from modules.harness.harness import (
    ALL_ZERO_NOTE,
    DIFFUSION_TEMPERATURE_RANGE,
    L2_LEAF_REG_RANGE,
    LEARNING_RATE_RANGE,
    MODEL_SHRINK_RATE_RANGE,
    MU_RANGE,
)
from modules.harness.main import EXIT_DATA, EXIT_USAGE, run
from modules.ranking_core import ContractViolationError


@pytest.fixture(scope="module")
def letor_files(tmp_path_factory):
    """Synthetic train/valid/test LETOR files"""
    root = tmp_path_factory.mktemp("letor")
    data = generate_synthetic(40, (5, 10), 6, seed=11)
    paths = {}
    for name, indices in (("train", range(0, 24)), ("valid", range(24, 32)), ("test", range(32, 40))):
        paths[name] = root / f"{name}.txt"
        write_letor(data.subset(indices), paths[name])
    return paths


@pytest.fixture(scope="module")
def trained_model(letor_files, tmp_path_factory):
    """Small YetiRank model trained through the command line"""
    model_path = tmp_path_factory.mktemp("model") / "model.txt"
    code = run(["train", "--train", str(letor_files["train"]), "--valid", str(letor_files["valid"]),
                "--loss", "yetirank", "--iterations", "8", "--depth", "2", "--learning-rate", "0.3",
                "--min-data-in-leaf", "1", "--model-out", str(model_path)])
    assert code == 0
    return model_path


class TestPairedTTest:
    """One-tailed paired t-test"""

    def test_survival_function_matches_scipy(self):
        """Student t tail agrees with scipy"""
        for df in (1, 2, 5, 29, 400):
            for t in (-6.0, -1.3, -0.2, 0.0, 0.4, 1.7, 3.2, 12.0):
                assert student_t_sf(t, df) == pytest.approx(stats.t.sf(t, df), abs=1e-10)

    def test_p_value_matches_scipy(self):
        """p-values agree with scipy's paired test"""
        rng = np.random.default_rng(0)
        for _ in range(100):
            n = int(rng.integers(2, 60))
            a = rng.uniform(size=n)
            b = a - rng.normal(0.02, 0.1, size=n)
            result = paired_t_test(a, b)
            expected = stats.ttest_rel(a, b, alternative="greater")
            assert result.t == pytest.approx(expected.statistic, rel=1e-9)
            assert result.p == pytest.approx(expected.pvalue, abs=1e-10)

    def test_identical_samples(self):
        """Identical samples give t = 0 and p = 0.5"""
        values = np.array([0.2, 0.5, 0.9])
        result = paired_t_test(values, values)
        assert result.t == 0.0
        assert result.p == 0.5
        assert not result.significant

    def test_zero_spread_differences(self):
        """Constant differences give p = 0 or p = 1 by sign"""
        a = np.array([0.5, 0.6, 0.7])
        assert paired_t_test(a + 0.1, a).p == 0.0
        assert paired_t_test(a, a + 0.1).p == 1.0

    def test_swapping_samples_mirrors_p(self):
        """Swapping the samples turns p into 1 - p"""
        rng = np.random.default_rng(1)
        for _ in range(20):
            a, b = rng.uniform(size=(2, 15))
            assert paired_t_test(a, b).p + paired_t_test(b, a).p == pytest.approx(1.0, abs=1e-12)

    def test_significance_threshold(self):
        """A consistent improvement is significant at 0.05"""
        a = np.linspace(0.5, 0.9, 30)
        b = a - 0.05 + 0.01 * np.sin(np.arange(30))
        assert paired_t_test(a, b).significant

    def test_needs_two_queries(self):
        """A single query is rejected"""
        with pytest.raises(ContractViolationError):
            paired_t_test([0.1], [0.2])

    def test_length_mismatch(self):
        """Samples of different length are rejected"""
        with pytest.raises(ContractViolationError):
            paired_t_test([0.1, 0.2], [0.2])


class TestTuning:
    """Random-search tuning"""

    def test_lambda_family_ranges(self):
        """Lambda-family trials stay within their ranges"""
        rng = np.random.default_rng(2)
        base = BoostConfig(loss="yetirank")
        for _ in range(200):
            cfg = sample_trial_config(base, rng)
            assert LEARNING_RATE_RANGE[0] <= cfg.learning_rate <= LEARNING_RATE_RANGE[1]
            assert L2_LEAF_REG_RANGE[0] <= cfg.l2_leaf_reg <= L2_LEAF_REG_RANGE[1]
            assert cfg.depth in (6, 7, 8)
            assert cfg.stochastic == base.stochastic

    def test_stochastic_family_ranges(self):
        """StochasticRank trials sample their own ranges with no l2"""
        rng = np.random.default_rng(3)
        base = BoostConfig(loss="stochasticrank:ndcg@10")
        depths = set()
        for _ in range(200):
            cfg = sample_trial_config(base, rng)
            depths.add(cfg.depth)
            assert cfg.l2_leaf_reg == 0.0
            assert MODEL_SHRINK_RATE_RANGE[0] <= cfg.stochastic.model_shrink_rate <= MODEL_SHRINK_RATE_RANGE[1]
            assert DIFFUSION_TEMPERATURE_RANGE[0] <= cfg.stochastic.diffusion_temperature <= DIFFUSION_TEMPERATURE_RANGE[1]
            assert MU_RANGE[0] <= cfg.stochastic.mu <= MU_RANGE[1]
        assert depths <= set(range(6, 11)) and len(depths) > 3

    def test_tune_picks_best_trial(self, letor_files, tmp_path, mocker):
        """The best validation trial wins and sets the iteration count"""
        def fake_train(train_set, valid_set, config, **views):
            """Validation value grows with the learning rate"""
            log = TrainingLog("NDCG@10", best_iteration=3)
            log.record(0, None, 10.0)
            log.record(3, None, 100.0 * config.learning_rate)
            return TrainingResult(model=None, log=log)

        mocked = mocker.patch("modules.harness.harness.train", side_effect=fake_train)
        harness = RankingHarness(json_output=True)
        trials_out = tmp_path / "trials.csv"
        best, frame = harness.cmd_tune(letor_files["train"], letor_files["valid"], BoostConfig(loss="yetirank"),
                                       budget=6, seed=5, trials_out=trials_out)
        assert mocked.call_count == 6
        assert frame["trial"].tolist() == list(range(6))
        assert best.learning_rate == frame["learning_rate"].max()
        assert best.iterations == 3
        assert trials_out.exists()

    def test_tune_rejects_empty_budget(self, letor_files):
        """A zero budget is a usage error"""
        with pytest.raises(UsageError):
            RankingHarness().cmd_tune(letor_files["train"], letor_files["valid"], BoostConfig(), budget=0, seed=0)


class TestTrainingLabels:
    """Label views for training and monitoring"""

    def test_graded_loss_monitored_on_binary_metric(self, letor_files):
        """An NDCG loss keeps graded labels; MRR monitoring gets binarized copies"""
        data = load_training_data(letor_files["train"], letor_files["valid"],
                                  BoostConfig(loss="lambdamart:ndcg@10", eval_metric="mrr"))
        assert data.train.stacked_relevance().max() > 1.0
        assert set(np.unique(data.train_eval.stacked_relevance())) <= {0.0, 1.0}
        assert set(np.unique(data.valid_eval.stacked_relevance())) <= {0.0, 1.0}
        assert data.valid_eval.document_count == data.valid.document_count

    def test_binary_loss_monitored_on_graded_metric(self, letor_files):
        """A MAP loss trains on binarized labels while NDCG is monitored on graded ones"""
        data = load_training_data(letor_files["train"], letor_files["valid"],
                                  BoostConfig(loss="yetiloss:map", eval_metric="ndcg@10"))
        assert set(np.unique(data.train.stacked_relevance())) <= {0.0, 1.0}
        assert data.train_eval.stacked_relevance().max() > 1.0

    def test_matching_transforms_share_labels(self, letor_files):
        """No monitoring copies when loss target and metric want the same labels"""
        data = load_training_data(letor_files["train"], letor_files["valid"],
                                  BoostConfig(loss="yetiloss:map", eval_metric="mrr"))
        assert data.train_eval is None and data.valid_eval is None

    def test_loss_without_target_uses_metric_labels(self, letor_files):
        """Losses with no target metric take the monitored metric's labels"""
        data = load_training_data(letor_files["train"], None, BoostConfig(loss="yetirank", eval_metric="err"))
        assert data.train.stacked_relevance().max() <= 1.0
        assert data.valid is None and data.train_eval is None


class TestCommandLine:
    """rankforge commands and exit codes"""

    def test_train_writes_model_and_log(self, letor_files, tmp_path, capsys):
        """train saves the truncated model and the log CSV"""
        model_path = tmp_path / "m.txt"
        log_path = tmp_path / "log.csv"
        code = run(["--json", "train", "--train", str(letor_files["train"]), "--valid", str(letor_files["valid"]),
                    "--loss", "lambdamart:ndcg@10", "--iterations", "4", "--depth", "2", "--min-data-in-leaf", "1",
                    "--model-out", str(model_path), "--log-out", str(log_path)])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["metric"] == "NDCG@10"
        assert len(load_model(model_path)) == report["best_iteration"]
        assert log_path.read_text().splitlines()[0] == "iteration,train,valid"

    @pytest.mark.parametrize("loss,metric,name", [
        ("yetiloss:map", "ndcg@10", "NDCG@10"),
        ("stochasticrank:err", "ndcg@10", "NDCG@10"),
        ("lambdamart:mrr", "ndcg@10", "NDCG@10"),
        ("lambdamart:ndcg@10", "mrr", "MRR"),
    ])
    def test_train_with_metric_other_than_loss_target(self, letor_files, tmp_path, capsys, loss, metric, name):
        """Training labels follow the loss target while the log follows --metric"""
        code = run(["--json", "train", "--train", str(letor_files["train"]), "--valid", str(letor_files["valid"]),
                    "--loss", loss, "--metric", metric, "--iterations", "3", "--depth", "2",
                    "--min-data-in-leaf", "1", "--model-out", str(tmp_path / "m.txt")])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["metric"] == name
        assert 0.0 <= report["value"] <= 100.0

    def test_predict(self, trained_model, letor_files, tmp_path):
        """predict writes one score per document"""
        out = tmp_path / "scores.txt"
        assert run(["predict", str(trained_model), str(letor_files["test"]), "--out", str(out)]) == 0
        scores = [float(line) for line in out.read_text().splitlines()]
        assert len(scores) == sum(1 for line in letor_files["test"].read_text().splitlines() if line)

    def test_evaluate(self, trained_model, letor_files, capsys):
        """evaluate reports x100 values per metric"""
        code = run(["--json", "evaluate", str(trained_model), str(letor_files["test"]),
                    "--metric", "ndcg@10", "--metric", "mrr"])
        assert code == 0
        rows = json.loads(capsys.readouterr().out)
        assert [row["metric"] for row in rows] == ["NDCG@10", "MRR"]
        assert all(0.0 <= row["value"] <= 100.0 for row in rows)

    def test_evaluate_table_states_all_zero_convention(self, trained_model, letor_files, capsys):
        """Table output ends with the convention for queries without relevant documents"""
        assert run(["evaluate", str(trained_model), str(letor_files["test"]), "--metric", "ndcg@10"]) == 0
        assert capsys.readouterr().out.splitlines()[-1] == ALL_ZERO_NOTE

    def test_evaluate_per_query(self, trained_model, letor_files, capsys):
        """--per-query prints one line per query"""
        assert run(["evaluate", str(trained_model), str(letor_files["test"]), "--metric", "map", "--per-query"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert sum("\tMAP\t" in line for line in lines) == 8

    def test_compare_model_with_itself(self, trained_model, letor_files, capsys):
        """A model compared with itself gives p = 0.5"""
        code = run(["--json", "compare", str(trained_model), str(trained_model), str(letor_files["test"]),
                    "--metric", "ndcg@10"])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["p"] == 0.5
        assert report["significant"] is False
        assert report["queries"] == 8

    def test_compare_json_without_infinite_t(self, trained_model, letor_files, capsys, mocker):
        """An infinite t statistic from zero-spread differences is written as null"""
        mocker.patch("modules.harness.harness.paired_t_test",
                     return_value=PairedTTest(8, 0.6, 0.5, 0.1, math.inf, 0.0))
        code = run(["--json", "compare", str(trained_model), str(trained_model), str(letor_files["test"]),
                    "--metric", "ndcg@10"])
        assert code == 0
        out = capsys.readouterr().out
        assert "Infinity" not in out
        report = json.loads(out)
        assert report["t"] is None
        assert report["p"] == 0.0

    def test_gap(self, trained_model, letor_files, capsys):
        """gap is train minus test"""
        code = run(["--json", "gap", str(trained_model), str(letor_files["train"]), str(letor_files["test"]),
                    "--metric", "ndcg@10"])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["gap"] == pytest.approx(report["train"] - report["test"])

    @pytest.mark.parametrize("argv", [
        ["train"],
        ["bogus"],
        ["evaluate", "m.txt", "d.txt"],
        ["train", "--train", "x.txt", "--model-out", "m.txt", "--neighbor-window", "0"],
        ["tune", "--train", "x.txt"],
    ])
    def test_usage_errors(self, argv):
        """Bad arguments exit with the usage code"""
        assert run(argv) == EXIT_USAGE

    def test_unsupported_loss_combination(self, letor_files, tmp_path):
        """StochasticRank with MAP exits with the usage code"""
        code = run(["train", "--train", str(letor_files["train"]), "--loss", "stochasticrank:map",
                    "--model-out", str(tmp_path / "m.txt")])
        assert code == EXIT_USAGE

    def test_missing_data_file(self, trained_model, tmp_path):
        """A missing data file exits with the data code"""
        assert run(["evaluate", str(trained_model), str(tmp_path / "absent.txt"), "--metric", "mrr"]) == EXIT_DATA

    def test_malformed_data_file(self, trained_model, tmp_path):
        """Out-of-range labels exit with the data code"""
        bad = tmp_path / "bad.txt"
        bad.write_text("1 qid:1 1:0.5\n9 qid:1 1:0.5\n")
        assert run(["evaluate", str(trained_model), str(bad), "--metric", "mrr"]) == EXIT_DATA

    def test_unsupported_model_version(self, trained_model, letor_files, tmp_path):
        """Unknown model versions exit with the data code"""
        model = tmp_path / "future.txt"
        model.write_text(trained_model.read_text().replace("rankforge-model v1", "rankforge-model v9", 1))
        assert run(["predict", str(model), str(letor_files["test"])]) == EXIT_DATA


class TestExperimentPlan:
    """Comparison and ablation plan"""

    @pytest.fixture
    def runner(self):
        """The comparison script module"""
        from scripts import run_comparison
        return run_comparison

    def test_runs_per_seed(self, runner):
        """Every seed runs the comparison and both ablations"""
        runs = runner.plan_runs(2)
        assert len(runs) == 2 * (4 * 5 - 1 + 3 + 4)
        assert len({run["id"] for run in runs}) == len(runs)
        assert not any(run["loss"] == "stochasticrank:map" for run in runs)

    def test_ablation_configs(self, runner):
        """Ablation variants map to window and smoothing settings"""
        preset = runner.PRESETS["quick"]
        runs = {(run["experiment"], run["variant"]): run for run in runner.plan_runs(1)}
        window = runner.build_config(runs[("window", "2")], preset)
        assert window.neighbor_window == 2 and window.exact_distance
        assert runner.build_config(runs[("window", "all")], preset).neighbor_window == "all"
        smoothing = runner.build_config(runs[("smoothing", "gaussian")], preset)
        assert smoothing.smoothing.distribution.value == "gaussian"
