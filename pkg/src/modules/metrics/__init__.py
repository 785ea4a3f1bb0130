from .metrics import (
    DEFAULT_DECAY,
    GAIN_NORMALIZER,
    REPORT_SCALE,
    MetricKind,
    MetricSpec,
    average_precision,
    dcg_at_k,
    evaluate,
    exp_dcg,
    expected_reciprocal_rank,
    mean_metric,
    metric_values_batch,
    ndcg_at_k,
    per_query_metric,
    ranked_metric_values,
    reciprocal_rank,
    truncated_discounts,
)

__all__ = [
    "DEFAULT_DECAY",
    "GAIN_NORMALIZER",
    "REPORT_SCALE",
    "MetricKind",
    "MetricSpec",
    "average_precision",
    "dcg_at_k",
    "evaluate",
    "exp_dcg",
    "expected_reciprocal_rank",
    "mean_metric",
    "metric_values_batch",
    "ndcg_at_k",
    "per_query_metric",
    "ranked_metric_values",
    "reciprocal_rank",
    "truncated_discounts",
]
