import logging
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional, Union

import numpy as np
import pandas as pd

from modules.metrics import DEFAULT_DECAY, MetricSpec, mean_metric
from modules.objectives import (
    GradientBuffer,
    Objective,
    SmoothingConfig,
    StochasticRankConfig,
    parse_loss,
)
from modules.ranking_core import ConfigurationError, ContractViolationError, Dataset

from .ensemble import ObliviousEnsemble
from .feature_bins import DEFAULT_MAX_BINS, build_bins
from .oblivious_tree import MAX_DEPTH, fit_tree

logger = logging.getLogger(__name__)

# seed-sequence suffix of the Langevin noise stream, disjoint from the per-query streams
LANGEVIN_STREAM = 1
DEFAULT_EVAL_METRIC = "ndcg@10"
# gradient noise is dropped at or above this diffusion temperature
NOISELESS_TEMPERATURE = 1e30


def langevin_noise_std(learning_rate: float, temperature: float) -> float:
    """
    Standard deviation sqrt(2·lr/T) of the per-document gradient noise, or 0
    from NOISELESS_TEMPERATURE upwards (std <= sqrt(2)·1e-15 for lr <= 1).
    """
    if temperature >= NOISELESS_TEMPERATURE:
        return 0.0
    return math.sqrt(2.0 * learning_rate / temperature)


@dataclass(frozen=True)
class BoostConfig:
    loss: str = "query-rmse"
    eval_metric: Optional[str] = None
    iterations: int = 1000
    learning_rate: float = 0.03
    depth: int = 6
    l2_leaf_reg: float = 3.0
    min_data_in_leaf: int = 10
    max_bins: int = DEFAULT_MAX_BINS
    decay_b: float = DEFAULT_DECAY
    neighbor_window: Union[int, str] = 1
    exact_distance: bool = False
    smoothing: SmoothingConfig = SmoothingConfig()
    stochastic: StochasticRankConfig = StochasticRankConfig()
    early_stopping_rounds: Optional[int] = None
    use_best_model: bool = True
    log_train_metric: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigurationError(f"iterations must be >= 1, got {self.iterations}")
        if not self.learning_rate > 0:
            raise ConfigurationError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 1 <= self.depth <= MAX_DEPTH:
            raise ConfigurationError(f"depth must lie in [1, {MAX_DEPTH}], got {self.depth}")
        if self.l2_leaf_reg < 0:
            raise ConfigurationError(f"l2_leaf_reg must be >= 0, got {self.l2_leaf_reg}")
        if self.min_data_in_leaf < 1:
            raise ConfigurationError(f"min_data_in_leaf must be >= 1, got {self.min_data_in_leaf}")
        if self.early_stopping_rounds is not None and self.early_stopping_rounds < 1:
            raise ConfigurationError("early_stopping_rounds must be >= 1")

    def objective(self) -> Objective:
        smoothing = replace(self.smoothing, seed=self.seed)
        return parse_loss(self.loss, self.decay_b, smoothing, self.neighbor_window, self.stochastic,
                          self.seed, self.exact_distance)

    def metric(self, objective: Optional[Objective] = None) -> MetricSpec:
        if self.eval_metric is not None:
            if isinstance(self.eval_metric, MetricSpec):
                return self.eval_metric
            return MetricSpec.parse(self.eval_metric)
        objective = objective if objective is not None else self.objective()
        if objective.target_metric is not None:
            return objective.target_metric
        return MetricSpec.parse(DEFAULT_EVAL_METRIC)

    def label_metric(self, objective: Optional[Objective] = None) -> MetricSpec:
        """Metric whose label transform the training labels need: the loss target, else the monitored metric."""
        objective = objective if objective is not None else self.objective()
        if objective.target_metric is not None:
            return objective.target_metric
        return self.metric(objective)

    def as_metadata(self) -> dict:
        return {
            "loss": self.loss,
            "iterations": self.iterations,
            "learning_rate": repr(float(self.learning_rate)),
            "depth": self.depth,
            "l2_leaf_reg": repr(float(self.l2_leaf_reg)),
            "min_data_in_leaf": self.min_data_in_leaf,
            "seed": self.seed,
        }


@dataclass
class TrainingLog:
    """Per-iteration train/valid values of the monitored metric (x100 scale); row k follows k trees."""
    metric_name: str
    records: list = field(default_factory=list)
    best_iteration: Optional[int] = None

    def record(self, iteration: int, train_value: Optional[float], valid_value: Optional[float]) -> None:
        self.records.append({"iteration": iteration, "train": train_value, "valid": valid_value})
        logger.debug("iter %d: train %s=%s valid %s=%s", iteration, self.metric_name, train_value,
                     self.metric_name, valid_value)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.records, columns=["iteration", "train", "valid"])
        frame.attrs["metric"] = self.metric_name
        return frame

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False)

    @property
    def final(self) -> dict:
        return self.records[-1]


class TrainingResult(NamedTuple):
    model: ObliviousEnsemble
    log: TrainingLog


class Booster:
    """Gradient boosting loop over oblivious trees with an optional Langevin mode."""

    def __init__(self, config: BoostConfig):
        self.config = config
        self.objective = config.objective()
        self.metric = config.metric(self.objective)

    def _monitor(self, scores: np.ndarray, dataset: Optional[Dataset]) -> Optional[float]:
        if dataset is None:
            return None
        return mean_metric(scores, dataset, self.metric)

    def fit(self, train: Dataset, valid: Optional[Dataset] = None, train_eval: Optional[Dataset] = None,
            valid_eval: Optional[Dataset] = None) -> TrainingResult:
        """
        Boost on `train`, monitoring on `valid`. `train_eval` / `valid_eval`
        carry the same documents labelled for the monitored metric when its
        label transform differs from the one the objective trains on.
        """
        cfg = self.config
        if valid is not None and valid.feature_count != train.feature_count:
            raise ContractViolationError(
                f"train has {train.feature_count} features but valid has {valid.feature_count}"
            )
        if valid is None and valid_eval is not None:
            raise ContractViolationError("valid_eval given without a validation set")
        train_eval = _checked_view(train, train_eval, "train")
        valid_eval = _checked_view(valid, valid_eval, "valid") if valid is not None else None
        langevin = self.objective.gradient_only
        shrink = cfg.stochastic.model_shrink_rate if langevin else 0.0
        keep = 1.0 - shrink
        temperature = cfg.stochastic.diffusion_temperature
        noise_std = langevin_noise_std(cfg.learning_rate, temperature) if langevin else 0.0
        noise_rng = np.random.default_rng([cfg.seed, LANGEVIN_STREAM])

        bins = build_bins(train, cfg.max_bins)
        train_features = train.stacked_features()
        binned = bins.transform(train_features)
        valid_features = valid.stacked_features() if valid is not None else None

        logger.info("Training %s for %d iterations on %d queries / %d documents",
                    self.objective, cfg.iterations, len(train), train.document_count)
        train_scores = np.zeros(train.document_count)
        valid_scores = np.zeros(valid.document_count) if valid is not None else None
        log = TrainingLog(self.metric.name)
        log.record(0, self._monitor(train_scores, train_eval) if cfg.log_train_metric else None,
                   self._monitor(valid_scores, valid_eval))

        trees = []
        best_iteration, best_value, stale = 0, log.final["valid"], 0
        for iteration in range(cfg.iterations):
            buffer = self.objective.gradients(train.split_scores(train_scores), train, iteration)
            grad, hess = buffer.grad, buffer.hess
            if langevin:
                hess = np.ones_like(grad)
                if noise_std > 0.0:
                    grad = grad + noise_rng.normal(0.0, noise_std, size=grad.size)
            l2 = cfg.l2_leaf_reg * float(hess.sum()) / hess.size
            tree = fit_tree(GradientBuffer(grad, hess), binned, bins, cfg.depth, l2, cfg.min_data_in_leaf)
            tree = tree.scaled(cfg.learning_rate)
            trees.append(tree)

            train_scores = train_scores * keep + tree.predict(train_features)
            if valid is not None:
                valid_scores = valid_scores * keep + tree.predict(valid_features)
            log.record(iteration + 1, self._monitor(train_scores, train_eval) if cfg.log_train_metric else None,
                       self._monitor(valid_scores, valid_eval))

            if valid is None:
                continue
            if log.final["valid"] > best_value:
                best_iteration, best_value, stale = iteration + 1, log.final["valid"], 0
            else:
                stale += 1
                if cfg.early_stopping_rounds is not None and stale >= cfg.early_stopping_rounds:
                    logger.info("Early stopping at iteration %d", iteration + 1)
                    break

        if valid is None:
            best_iteration = len(trees)
        log.best_iteration = best_iteration
        metadata = dict(cfg.as_metadata(), objective=str(self.objective), eval_metric=self.metric.name,
                        best_iteration=best_iteration)
        model = ObliviousEnsemble(train.feature_count, trees, shrink, bins, metadata)
        if valid is not None and cfg.use_best_model:
            model = model.truncated(best_iteration)
        logger.info("Finished training: %d trees kept, best iteration %d (valid %s=%s)",
                    len(model), best_iteration, self.metric.name, best_value)
        return TrainingResult(model, log)


def _checked_view(dataset: Dataset, view: Optional[Dataset], name: str) -> Dataset:
    if view is None:
        return dataset
    if len(view) != len(dataset) or view.document_count != dataset.document_count:
        raise ContractViolationError(f"{name} evaluation labels do not cover the {name} documents")
    return view


def train(train_set: Dataset, valid_set: Optional[Dataset], cfg: BoostConfig,
          train_eval: Optional[Dataset] = None, valid_eval: Optional[Dataset] = None) -> TrainingResult:
    return Booster(cfg).fit(train_set, valid_set, train_eval, valid_eval)
