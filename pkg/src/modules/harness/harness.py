import json
import logging
import math
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import NamedTuple, Optional, Sequence, TextIO, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.special import betainc

from models.oblivious_boosting import BoostConfig, TrainingResult, load_model, predict, save_model, train
from modules.data_io import parse_letor
from modules.metrics import REPORT_SCALE, MetricSpec, per_query_metric
from modules.ranking_core import ConfigurationError, ContractViolationError, Dataset, RankForgeError

logger = logging.getLogger(__name__)

SIGNIFICANCE_LEVEL = 0.05
JSON_KEYS = ("metric", "value", "t", "p", "significant", "best_iteration")
ALL_ZERO_NOTE = "note: queries without relevant documents count as NDCG = 1 and AP = RR = 0"

# random-search ranges: (low, high) sampled log-uniformly unless noted
LEARNING_RATE_RANGE = (1e-3, 1.0)
L2_LEAF_REG_RANGE = (1e-3, 100.0)
LAMBDA_DEPTHS = (6, 8)
STOCHASTIC_DEPTHS = (6, 10)
MODEL_SHRINK_RATE_RANGE = (1e-5, 1e-2)
DIFFUSION_TEMPERATURE_RANGE = (1e8, 1e11)
MU_RANGE = (1e-2, 10.0)


class UsageError(RankForgeError):
    """Invalid command-line usage."""
    pass


@dataclass(frozen=True)
class PairedTTest:
    n: int
    mean_a: float
    mean_b: float
    mean_difference: float
    t: float
    p: float

    @property
    def significant(self) -> bool:
        return self.p < SIGNIFICANCE_LEVEL


def student_t_sf(t: float, df: float) -> float:
    """Upper tail P(T > t) of Student's t with `df` degrees of freedom."""
    tail = 0.5 * float(betainc(df / 2.0, 0.5, df / (df + t * t)))
    return tail if t >= 0 else 1.0 - tail


def paired_t_test(values_a, values_b) -> PairedTTest:
    """
    One-tailed paired t-test of H1: mean(a - b) > 0. With zero spread the
    p-value is 0 for a positive mean difference, 1 for a negative one and
    0.5 when every difference is zero.
    """
    a = np.asarray(values_a, dtype=np.float64)
    b = np.asarray(values_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ContractViolationError("paired samples must be vectors of equal length")
    n = a.size
    if n < 2:
        raise ContractViolationError(f"a paired t-test needs at least 2 queries, got {n}")
    differences = a - b
    mean = float(differences.mean())
    sd = float(differences.std(ddof=1))
    if sd == 0.0:
        t = math.copysign(math.inf, mean) if mean != 0.0 else 0.0
        p = 0.0 if mean > 0.0 else (1.0 if mean < 0.0 else 0.5)
    else:
        t = mean / (sd / math.sqrt(n))
        p = student_t_sf(t, n - 1)
    return PairedTTest(n, float(a.mean()), float(b.mean()), mean, t, p)


def _json_value(value):
    # JSON has no infinities or NaN
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def load_dataset(path: Union[str, Path], metric: Optional[MetricSpec] = None,
                 feature_count: Optional[int] = None) -> Dataset:
    """Parse a LETOR file and apply the label transform `metric` expects."""
    dataset = parse_letor(path, feature_count)
    if metric is not None:
        dataset = dataset.map_labels(metric.label_transform())
    return dataset


class TrainingData(NamedTuple):
    train: Dataset
    valid: Optional[Dataset]
    # same documents labelled for the monitored metric; None when the labels already fit it
    train_eval: Optional[Dataset] = None
    valid_eval: Optional[Dataset] = None


def load_training_data(train_path, valid_path, config: BoostConfig) -> TrainingData:
    """
    Read training files with the labels the loss target needs. When the
    monitored metric expects other labels (`yetiloss:map` monitored with
    NDCG, say) separately transformed copies are returned for monitoring.
    """
    objective = config.objective()
    fit_transform = config.label_metric(objective).label_transform()
    eval_transform = config.metric(objective).label_transform()
    raw_train = parse_letor(train_path)
    raw_valid = parse_letor(valid_path, raw_train.feature_count) if valid_path else None
    train_set = raw_train.map_labels(fit_transform)
    valid_set = raw_valid.map_labels(fit_transform) if raw_valid is not None else None
    if eval_transform is fit_transform:
        return TrainingData(train_set, valid_set)
    logger.info("Monitoring on separately transformed labels")
    return TrainingData(train_set, valid_set, raw_train.map_labels(eval_transform),
                        raw_valid.map_labels(eval_transform) if raw_valid is not None else None)


def sample_trial_config(base: BoostConfig, rng: np.random.Generator) -> BoostConfig:
    def log_uniform(bounds):
        return float(np.exp(rng.uniform(np.log(bounds[0]), np.log(bounds[1]))))

    stochastic = base.loss.strip().lower().startswith("stochasticrank")
    depths = STOCHASTIC_DEPTHS if stochastic else LAMBDA_DEPTHS
    learning_rate = log_uniform(LEARNING_RATE_RANGE)
    depth = int(rng.integers(depths[0], depths[1] + 1))
    if not stochastic:
        return replace(base, learning_rate=learning_rate, depth=depth, l2_leaf_reg=log_uniform(L2_LEAF_REG_RANGE))
    langevin = replace(base.stochastic,
                       model_shrink_rate=log_uniform(MODEL_SHRINK_RATE_RANGE),
                       diffusion_temperature=log_uniform(DIFFUSION_TEMPERATURE_RANGE),
                       mu=log_uniform(MU_RANGE))
    return replace(base, learning_rate=learning_rate, depth=depth, l2_leaf_reg=0.0, stochastic=langevin)


def _run_trial(trial: int, base: BoostConfig, seed: int, data: TrainingData) -> dict:
    config = sample_trial_config(base, np.random.default_rng([seed, trial]))
    try:
        result = train(data.train, data.valid, config, train_eval=data.train_eval, valid_eval=data.valid_eval)
    except RankForgeError as e:
        logger.warning("trial %d failed: %s", trial, e)
        return {"trial": trial, "learning_rate": config.learning_rate, "depth": config.depth,
                "l2_leaf_reg": config.l2_leaf_reg, "best_iteration": 0, "valid": float("nan")}
    frame = result.log.to_frame()
    best = result.log.best_iteration
    return {
        "trial": trial,
        "learning_rate": config.learning_rate,
        "depth": config.depth,
        "l2_leaf_reg": config.l2_leaf_reg,
        "model_shrink_rate": config.stochastic.model_shrink_rate,
        "diffusion_temperature": config.stochastic.diffusion_temperature,
        "mu": config.stochastic.mu,
        "best_iteration": best,
        "valid": float(frame.loc[frame["iteration"] == best, "valid"].iloc[0]),
    }


class RankingHarness:
    """Command implementations; reports are printed as aligned tables or as JSON."""

    def __init__(self, json_output: bool = False, out: Optional[TextIO] = None):
        self.json_output = json_output
        self.out = out if out is not None else sys.stdout

    def _emit(self, rows: Sequence[dict], columns: Sequence[str]) -> None:
        if self.json_output:
            payload = [{key: _json_value(row.get(key)) for key in (*JSON_KEYS, *row.keys())} for row in rows]
            print(json.dumps(payload[0] if len(payload) == 1 else payload, sort_keys=False), file=self.out)
            return
        table = pd.DataFrame([{column: row.get(column) for column in columns} for row in rows])
        print(table.to_string(index=False, float_format=lambda v: f"{v:.2f}"), file=self.out)

    def cmd_train(self, train_path, valid_path, config: BoostConfig, model_out,
                  log_out=None) -> TrainingResult:
        metric = config.metric()
        data = load_training_data(train_path, valid_path, config)
        result = train(data.train, data.valid, config, train_eval=data.train_eval, valid_eval=data.valid_eval)
        save_model(result.model, model_out)
        if log_out is not None:
            result.log.to_csv(log_out)
        frame = result.log.to_frame()
        column = "valid" if data.valid is not None else "train"
        best_row = frame.loc[frame["iteration"] == result.log.best_iteration].iloc[0]
        self._emit([{
            "metric": metric.name,
            "value": None if pd.isna(best_row[column]) else float(best_row[column]),
            "best_iteration": int(result.log.best_iteration),
            "trees": len(result.model),
        }], ["metric", "value", "best_iteration", "trees"])
        return result

    def _scores(self, model_path, data_path, metric: Optional[MetricSpec]):
        model = load_model(model_path)
        dataset = load_dataset(data_path, metric, model.feature_count)
        return dataset, predict(model, dataset)

    def cmd_predict(self, model_path, data_path, out_path=None) -> np.ndarray:
        _, scores = self._scores(model_path, data_path, None)
        text = "\n".join(repr(float(s)) for s in scores) + "\n"
        if out_path is None:
            self.out.write(text)
        else:
            Path(out_path).write_text(text, encoding="utf-8")
        return scores

    def cmd_evaluate(self, model_path, data_path, metrics: Sequence[str], per_query: bool = False) -> list:
        rows = []
        for text in metrics:
            metric = MetricSpec.parse(text)
            dataset, scores = self._scores(model_path, data_path, metric)
            values = per_query_metric(scores, dataset, metric)
            rows.append({"metric": metric.name, "value": float(REPORT_SCALE * values.mean())})
            if per_query:
                for group, value in zip(dataset.groups, values):
                    print(f"{group.query_id}\t{metric.name}\t{REPORT_SCALE * value!r}", file=self.out)
        self._emit(rows, ["metric", "value"])
        if not self.json_output:
            print(ALL_ZERO_NOTE, file=self.out)
        return rows

    def cmd_compare(self, model_a, model_b, test_path, metric_text: str) -> dict:
        metric = MetricSpec.parse(metric_text)
        dataset, scores_a = self._scores(model_a, test_path, metric)
        _, scores_b = self._scores(model_b, test_path, metric)
        result = paired_t_test(per_query_metric(scores_a, dataset, metric),
                               per_query_metric(scores_b, dataset, metric))
        row = {
            "metric": metric.name,
            "value": REPORT_SCALE * result.mean_difference,
            "t": result.t,
            "p": result.p,
            "significant": result.significant,
            "mean_a": REPORT_SCALE * result.mean_a,
            "mean_b": REPORT_SCALE * result.mean_b,
            "queries": result.n,
        }
        if self.json_output:
            self._emit([row], [])
        else:
            print(f"metric   {metric.name}\nmodel A  {row['mean_a']:.2f}\nmodel B  {row['mean_b']:.2f}\n"
                  f"t        {result.t:.4f}\np        {result.p:.3g}\nsignificant at {SIGNIFICANCE_LEVEL}: "
                  f"{'yes' if result.significant else 'no'}", file=self.out)
        return row

    def cmd_gap(self, model_path, train_path, test_path, metric_text: str) -> dict:
        metric = MetricSpec.parse(metric_text)
        train_set, train_scores = self._scores(model_path, train_path, metric)
        test_set, test_scores = self._scores(model_path, test_path, metric)
        train_value = float(REPORT_SCALE * per_query_metric(train_scores, train_set, metric).mean())
        test_value = float(REPORT_SCALE * per_query_metric(test_scores, test_set, metric).mean())
        row = {"metric": metric.name, "train": train_value, "test": test_value,
               "gap": train_value - test_value, "value": train_value - test_value}
        self._emit([row], ["metric", "train", "test", "gap"])
        return row

    def cmd_tune(self, train_path, valid_path, base: BoostConfig, budget: int, seed: int,
                 n_jobs: int = 1, trials_out=None):
        if budget < 1:
            raise UsageError(f"tuning budget must be >= 1, got {budget}")
        metric = base.metric()
        data = load_training_data(train_path, valid_path, base)
        trials = Parallel(n_jobs=n_jobs)(
            delayed(_run_trial)(trial, base, seed, data) for trial in range(budget)
        )
        frame = pd.DataFrame(trials).sort_values("trial", kind="stable").reset_index(drop=True)
        for row in frame.itertuples():
            logger.info("trial %d: valid %s=%.4f at iteration %d", row.trial, metric.name, row.valid,
                        row.best_iteration)
        if frame["valid"].isna().all():
            raise ConfigurationError(f"all {budget} tuning trials failed")
        best = frame.loc[frame["valid"].idxmax()]
        best_config = sample_trial_config(base, np.random.default_rng([seed, int(best["trial"])]))
        best_config = replace(best_config, iterations=max(int(best["best_iteration"]), 1))
        if trials_out is not None:
            frame.to_csv(trials_out, index=False)
        self._emit([{
            "metric": metric.name,
            "value": float(best["valid"]),
            "best_iteration": int(best["best_iteration"]),
            "trial": int(best["trial"]),
            "learning_rate": f"{best_config.learning_rate:.5g}",
            "depth": best_config.depth,
            "l2_leaf_reg": f"{best_config.l2_leaf_reg:.5g}",
        }], ["trial", "metric", "value", "best_iteration", "learning_rate", "depth", "l2_leaf_reg"])
        return best_config, frame

