from .ranking_core import (
    MAX_RAW_LABEL,
    ConfigurationError,
    ContractViolationError,
    Dataset,
    QueryGroup,
    RankForgeError,
    RankPermutation,
    as_relevance,
    as_scores,
    binarize_labels,
    check_raw_labels,
    scale_labels_unit,
    split_dataset,
    worst_case_argsort,
    worst_case_order_batch,
)

__all__ = [
    "MAX_RAW_LABEL",
    "ConfigurationError",
    "ContractViolationError",
    "Dataset",
    "QueryGroup",
    "RankForgeError",
    "RankPermutation",
    "as_relevance",
    "as_scores",
    "binarize_labels",
    "check_raw_labels",
    "scale_labels_unit",
    "split_dataset",
    "worst_case_argsort",
    "worst_case_order_batch",
]
