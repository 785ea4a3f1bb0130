import logging
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from modules.ranking_core import ContractViolationError, Dataset

logger = logging.getLogger(__name__)

DEFAULT_MAX_BINS = 255


@dataclass(frozen=True, eq=False)
class FeatureBins:
    """Per-feature split borders; bin k holds values in (borders[k-1], borders[k]]."""
    borders: tuple

    def __post_init__(self):
        borders = tuple(np.asarray(b, dtype=np.float64) for b in self.borders)
        for feature, values in enumerate(borders):
            if values.ndim != 1 or np.any(np.diff(values) <= 0):
                raise ContractViolationError(f"borders of feature {feature} must be strictly increasing")
            if values.size > 255:
                raise ContractViolationError(f"feature {feature} has {values.size} borders, at most 255 fit a bin byte")
        object.__setattr__(self, "borders", borders)

    @property
    def feature_count(self) -> int:
        return len(self.borders)

    def border_counts(self) -> np.ndarray:
        return np.array([b.size for b in self.borders], dtype=np.int64)

    def transform(self, features) -> np.ndarray:
        return bin_features(self, features)


def _feature_borders(values: np.ndarray, max_bins: int) -> np.ndarray:
    distinct = np.unique(values)
    if distinct.size <= max_bins:
        return (distinct[:-1] + distinct[1:]) / 2.0
    levels = np.arange(1, max_bins) / max_bins
    quantiles = np.quantile(values, levels)
    # snap each quantile to the midpoint between the distinct values around it
    upper = np.clip(np.searchsorted(distinct, quantiles, side="right"), 1, distinct.size - 1)
    return np.unique((distinct[upper - 1] + distinct[upper]) / 2.0)


def build_bins(train: Union[Dataset, np.ndarray], max_bins: int = DEFAULT_MAX_BINS) -> FeatureBins:
    if not 2 <= max_bins <= 256:
        raise ContractViolationError(f"max_bins must lie in [2, 256], got {max_bins}")
    features = train.stacked_features() if isinstance(train, Dataset) else np.asarray(train, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] == 0:
        raise ContractViolationError("cannot build bins from an empty dataset")
    borders = [_feature_borders(features[:, f], max_bins) for f in range(features.shape[1])]
    logger.info("Built bins for %d features (%d borders in total)",
                len(borders), sum(b.size for b in borders))
    return FeatureBins(tuple(borders))


def bin_features(bins: FeatureBins, features: Union[np.ndarray, Sequence]) -> np.ndarray:
    """uint8 bin matrix; bin > s exactly when the value is above border s."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != bins.feature_count:
        raise ContractViolationError(
            f"expected a matrix with {bins.feature_count} feature columns, got shape {features.shape}"
        )
    binned = np.empty(features.shape, dtype=np.uint8)
    for f, borders in enumerate(bins.borders):
        binned[:, f] = np.searchsorted(borders, features[:, f], side="left")
    return binned
