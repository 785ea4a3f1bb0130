import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Union

import numpy as np

from modules.ranking_core import (
    ConfigurationError,
    ContractViolationError,
    Dataset,
    as_relevance,
    binarize_labels,
    check_raw_labels,
    scale_labels_unit,
    worst_case_argsort,
    worst_case_order_batch,
)

logger = logging.getLogger(__name__)

GAIN_NORMALIZER = 2.0 ** 4
DEFAULT_DECAY = 0.85
REPORT_SCALE = 100.0


class MetricKind(str, Enum):
    NDCG = "ndcg"
    DCG = "dcg"
    MRR = "mrr"
    MAP = "map"
    ERR = "err"
    EXPDCG = "expdcg"


@dataclass(frozen=True)
class MetricSpec:
    """
    Ranking quality function. `k` truncates NDCG/DCG (None means all
    positions), `b` is the ExpDCG positional decay.
    """
    kind: MetricKind
    k: Optional[int] = None
    b: float = DEFAULT_DECAY

    def __post_init__(self):
        object.__setattr__(self, "kind", MetricKind(self.kind))
        if self.k is not None:
            if self.kind not in (MetricKind.NDCG, MetricKind.DCG):
                raise ConfigurationError(f"truncation only applies to NDCG/DCG, not {self.kind.value}")
            if int(self.k) != self.k or self.k < 1:
                raise ConfigurationError(f"truncation k must be a positive integer, got {self.k}")
            object.__setattr__(self, "k", int(self.k))
        if not 0.0 < self.b < 1.0:
            raise ConfigurationError(f"decay b must lie in (0, 1), got {self.b}")

    @classmethod
    def parse(cls, text: str) -> "MetricSpec":
        """Build a spec from `ndcg@10`, `ndcg`, `dcg@5`, `mrr`, `map`, `err`, `expdcg` or `expdcg:0.7`."""
        raw = text.strip().lower()
        name, _, argument = raw.partition("@")
        if name in ("ndcg", "dcg"):
            if not argument or argument == "all":
                return cls(MetricKind(name))
            try:
                return cls(MetricKind(name), k=int(argument))
            except ValueError:
                raise ConfigurationError(f"invalid truncation in metric '{text}'")
        if argument:
            raise ConfigurationError(f"metric '{text}' does not accept a truncation")
        name, _, decay = raw.partition(":")
        if name == MetricKind.EXPDCG.value and decay:
            try:
                return cls(MetricKind.EXPDCG, b=float(decay))
            except ValueError:
                raise ConfigurationError(f"invalid decay in metric '{text}'")
        try:
            kind = MetricKind(raw)
        except ValueError:
            raise ConfigurationError(
                f"unknown metric '{text}'; expected ndcg@K, dcg@K, mrr, map, err or expdcg"
            )
        return cls(kind)

    @property
    def name(self) -> str:
        label = self.kind.value.upper().replace("EXPDCG", "ExpDCG")
        if self.k is not None:
            return f"{label}@{self.k}"
        if self.kind == MetricKind.EXPDCG and self.b != DEFAULT_DECAY:
            return f"{label}:{self.b:g}"
        return label

    def __str__(self):
        return self.name

    def label_transform(self):
        """Label preprocessing each metric expects from raw [0, 4] judgments."""
        if self.kind in (MetricKind.MRR, MetricKind.MAP):
            return binarize_labels
        if self.kind == MetricKind.ERR:
            return scale_labels_unit
        return _checked_raw_labels

    def validate_labels(self, relevance: np.ndarray) -> None:
        if self.kind in (MetricKind.NDCG, MetricKind.DCG):
            check_raw_labels(relevance)
        elif self.kind in (MetricKind.MRR, MetricKind.MAP):
            if not np.all((relevance == 0.0) | (relevance == 1.0)):
                raise ContractViolationError(f"{self.name} requires binary relevance labels")
        elif self.kind == MetricKind.ERR:
            if relevance.size and (relevance.min() < 0.0 or relevance.max() > 1.0):
                raise ContractViolationError("ERR requires relevance labels in [0, 1]")


def _checked_raw_labels(relevance):
    relevance = as_relevance(relevance)
    check_raw_labels(relevance)
    return relevance


def _positions(n: int) -> np.ndarray:
    return np.arange(1, n + 1, dtype=np.float64)


def truncated_discounts(n: int, k: Optional[int]) -> np.ndarray:
    positions = _positions(n)
    discounts = 1.0 / np.log2(positions + 1.0)
    if k is not None:
        discounts[positions > k] = 0.0
    return discounts


def _dcg_ranked(ranked: np.ndarray, k: Optional[int]) -> np.ndarray:
    gains = (np.exp2(ranked) - 1.0) / GAIN_NORMALIZER
    return (gains * truncated_discounts(ranked.shape[-1], k)).sum(axis=-1)


def _ideal_dcg(ranked: np.ndarray, k: Optional[int]) -> np.ndarray:
    ideal = -np.sort(-ranked, axis=-1)
    return _dcg_ranked(ideal, k)


def _ndcg_ranked(ranked: np.ndarray, k: Optional[int]) -> np.ndarray:
    dcg = _dcg_ranked(ranked, k)
    ideal = _ideal_dcg(ranked, k)
    # all-zero label queries count as perfectly ranked
    return np.divide(dcg, ideal, out=np.ones_like(dcg), where=ideal > 0.0)


def _average_precision_ranked(ranked: np.ndarray) -> np.ndarray:
    precision = np.cumsum(ranked, axis=-1) / _positions(ranked.shape[-1])
    hits = (precision * ranked).sum(axis=-1)
    total = ranked.sum(axis=-1)
    return np.divide(hits, total, out=np.zeros_like(hits), where=total > 0.0)


def _cascade_ranked(ranked: np.ndarray) -> np.ndarray:
    # reciprocal rank and ERR share the cascade form
    not_stopped = np.cumprod(1.0 - ranked, axis=-1)
    reach = np.concatenate([np.ones_like(ranked[..., :1]), not_stopped[..., :-1]], axis=-1)
    return (ranked / _positions(ranked.shape[-1]) * reach).sum(axis=-1)


def _exp_dcg_ranked(ranked: np.ndarray, b: float) -> np.ndarray:
    decay = b ** (_positions(ranked.shape[-1]) - 1.0)
    return (decay * ranked).sum(axis=-1)


def ranked_metric_values(spec: MetricSpec, ranked: np.ndarray) -> np.ndarray:
    """
    Metric value of relevance labels already listed in rank order. Works on
    the last axis, so any leading batch shape is evaluated in one call.
    """
    ranked = np.asarray(ranked, dtype=np.float64)
    if ranked.shape[-1] == 0:
        raise ContractViolationError("cannot evaluate an empty query")
    kind = spec.kind
    if kind == MetricKind.NDCG:
        return _ndcg_ranked(ranked, spec.k)
    if kind == MetricKind.DCG:
        return _dcg_ranked(ranked, spec.k)
    if kind == MetricKind.MAP:
        return _average_precision_ranked(ranked)
    if kind in (MetricKind.MRR, MetricKind.ERR):
        return _cascade_ranked(ranked)
    return _exp_dcg_ranked(ranked, spec.b)


def evaluate(spec: MetricSpec, z, r) -> float:
    relevance = as_relevance(r)
    spec.validate_labels(relevance)
    permutation = worst_case_argsort(z, relevance)
    return float(ranked_metric_values(spec, relevance[permutation.order]))


def metric_values_batch(spec: MetricSpec, scores: np.ndarray, r) -> np.ndarray:
    """Metric of every row of a (draws, n) score matrix against one label vector."""
    relevance = as_relevance(r)
    scores = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    order = worst_case_order_batch(scores, relevance)
    return ranked_metric_values(spec, relevance[order])


def _truncation(k: Union[int, str, None]) -> Optional[int]:
    if k is None or k == "all":
        return None
    if int(k) != k or k < 1:
        raise ContractViolationError(f"truncation k must be a positive integer, got {k}")
    return int(k)


def dcg_at_k(z, r, k: Union[int, str, None] = None) -> float:
    return evaluate(MetricSpec(MetricKind.DCG, k=_truncation(k)), z, r)


def ndcg_at_k(z, r, k: Union[int, str, None] = None) -> float:
    return evaluate(MetricSpec(MetricKind.NDCG, k=_truncation(k)), z, r)


def average_precision(z, r) -> float:
    return evaluate(MetricSpec(MetricKind.MAP), z, r)


def reciprocal_rank(z, r) -> float:
    return evaluate(MetricSpec(MetricKind.MRR), z, r)


def expected_reciprocal_rank(z, r) -> float:
    return evaluate(MetricSpec(MetricKind.ERR), z, r)


def exp_dcg(z, r, b: float = DEFAULT_DECAY) -> float:
    if not 0.0 < b < 1.0:
        raise ContractViolationError(f"decay b must lie in (0, 1), got {b}")
    return evaluate(MetricSpec(MetricKind.EXPDCG, b=b), z, r)


def per_query_metric(scores: Union[np.ndarray, Sequence[np.ndarray]], dataset: Dataset,
                     spec: MetricSpec) -> np.ndarray:
    """Per-query metric values; `scores` is either flat (document-aligned) or one array per query."""
    if isinstance(scores, np.ndarray) and scores.ndim == 1:
        scores = dataset.split_scores(scores)
    if len(scores) != len(dataset):
        raise ContractViolationError(
            f"got scores for {len(scores)} queries, dataset has {len(dataset)}"
        )
    return np.array([
        evaluate(spec, query_scores, group.relevance)
        for query_scores, group in zip(scores, dataset.groups)
    ])


def mean_metric(scores: Union[np.ndarray, Sequence[np.ndarray]], dataset: Dataset,
                spec: MetricSpec) -> float:
    """Unweighted mean over queries, reported on the x100 scale."""
    return float(REPORT_SCALE * per_query_metric(scores, dataset, spec).mean())
