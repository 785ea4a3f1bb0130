import logging
from dataclasses import dataclass

import numpy as np

from modules.objectives import GradientBuffer
from modules.ranking_core import ContractViolationError

from .feature_bins import FeatureBins

logger = logging.getLogger(__name__)

# feature index of a level that sends every document to bit 0
NULL_FEATURE = -1
MAX_DEPTH = 16


@dataclass(frozen=True, eq=False)
class ObliviousTree:
    """
    Depth-d tree sharing one (feature, border) split per level. The leaf of
    a document is the bit pattern of its split outcomes, bit t set when the
    feature value is above the level-t border.
    """
    features: np.ndarray
    borders: np.ndarray
    leaf_values: np.ndarray

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.int64).reshape(-1)
        borders = np.asarray(self.borders, dtype=np.float64).reshape(-1)
        leaf_values = np.asarray(self.leaf_values, dtype=np.float64).reshape(-1)
        if features.size != borders.size:
            raise ContractViolationError("an oblivious tree needs one border per split feature")
        if features.size > MAX_DEPTH:
            raise ContractViolationError(f"tree depth {features.size} exceeds {MAX_DEPTH}")
        if leaf_values.size != 1 << features.size:
            raise ContractViolationError(
                f"a depth-{features.size} tree needs {1 << features.size} leaves, got {leaf_values.size}"
            )
        if not np.all(np.isfinite(leaf_values)):
            raise ContractViolationError("leaf values must be finite")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "borders", borders)
        object.__setattr__(self, "leaf_values", leaf_values)

    @property
    def depth(self) -> int:
        return int(self.features.size)

    def leaf_indices(self, features: np.ndarray) -> np.ndarray:
        index = np.zeros(features.shape[0], dtype=np.int64)
        for level, (feature, border) in enumerate(zip(self.features, self.borders)):
            if feature == NULL_FEATURE:
                continue
            index |= (features[:, feature] > border).astype(np.int64) << level
        return index

    def predict(self, features: np.ndarray) -> np.ndarray:
        return self.leaf_values[self.leaf_indices(features)]

    def scaled(self, factor: float) -> "ObliviousTree":
        return ObliviousTree(self.features, self.borders, self.leaf_values * factor)


def _leaf_terms(g_sum, h_sum, count, l2_leaf_reg):
    denominator = h_sum + l2_leaf_reg
    usable = (count > 0) & (denominator > 0)
    return np.divide(g_sum * g_sum, denominator, out=np.zeros_like(g_sum), where=usable)


def leaf_newton_values(g_sum, h_sum, l2_leaf_reg: float) -> np.ndarray:
    denominator = h_sum + l2_leaf_reg
    return np.divide(-g_sum, denominator, out=np.zeros_like(g_sum), where=denominator > 0)


def fit_tree(grad: GradientBuffer, binned: np.ndarray, bins: FeatureBins, depth: int,
             l2_leaf_reg: float, min_data_in_leaf: int = 1) -> ObliviousTree:
    """
    Greedy level-wise oblivious tree. Each level takes the (feature, border)
    maximizing sum over leaves of G^2 / (H + l2) over the partition it
    induces; ties go to the lowest (feature, border). Without a positive
    gain the level gets a null split.
    """
    g = np.asarray(grad.grad, dtype=np.float64)
    h = np.asarray(grad.hess, dtype=np.float64)
    n, feature_count = binned.shape
    if g.size != n:
        raise ContractViolationError(f"{g.size} gradients for {n} binned documents")
    if feature_count != bins.feature_count:
        raise ContractViolationError("binned matrix and bins disagree on the feature count")
    if not 1 <= depth <= MAX_DEPTH:
        raise ContractViolationError(f"depth must lie in [1, {MAX_DEPTH}], got {depth}")
    if l2_leaf_reg < 0:
        raise ContractViolationError(f"l2_leaf_reg must be >= 0, got {l2_leaf_reg}")

    border_counts = bins.border_counts()
    bin_count = int(border_counts.max(initial=0)) + 1
    splittable = np.arange(bin_count)[None, :] < border_counts[:, None]
    offsets = (np.arange(feature_count, dtype=np.int64) * bin_count)[None, :]
    repeated_g = np.repeat(g, feature_count)
    repeated_h = np.repeat(h, feature_count)

    leaf = np.zeros(n, dtype=np.int64)
    split_features = []
    split_borders = []
    for level in range(depth):
        if feature_count == 0:
            split_features.append(NULL_FEATURE)
            split_borders.append(0.0)
            continue
        leaf_count = 1 << level
        shape = (leaf_count, feature_count, bin_count)
        keys = (leaf[:, None] * (feature_count * bin_count) + offsets + binned).ravel()
        size = leaf_count * feature_count * bin_count
        left_g = np.cumsum(np.bincount(keys, weights=repeated_g, minlength=size).reshape(shape), axis=2)
        left_h = np.cumsum(np.bincount(keys, weights=repeated_h, minlength=size).reshape(shape), axis=2)
        left_c = np.cumsum(np.bincount(keys, minlength=size).reshape(shape), axis=2)
        total_g, total_h, total_c = left_g[:, :, -1:], left_h[:, :, -1:], left_c[:, :, -1:]
        right_g, right_h, right_c = total_g - left_g, total_h - left_h, total_c - left_c

        score = (_leaf_terms(left_g, left_h, left_c, l2_leaf_reg)
                 + _leaf_terms(right_g, right_h, right_c, l2_leaf_reg)).sum(axis=0)
        current = _leaf_terms(total_g[:, 0, 0], total_h[:, 0, 0], total_c[:, 0, 0], l2_leaf_reg).sum()
        gain = score - current

        starved = (((left_c > 0) & (left_c < min_data_in_leaf))
                   | ((right_c > 0) & (right_c < min_data_in_leaf))).any(axis=0)
        gain[~splittable | starved] = -np.inf
        best = int(np.argmax(gain))
        if gain.flat[best] > 0:
            feature, border_index = divmod(best, bin_count)
            split_features.append(feature)
            split_borders.append(float(bins.borders[feature][border_index]))
            leaf |= (binned[:, feature] > border_index).astype(np.int64) << level
        else:
            split_features.append(NULL_FEATURE)
            split_borders.append(0.0)

    leaf_total = 1 << depth
    g_sum = np.bincount(leaf, weights=g, minlength=leaf_total)
    h_sum = np.bincount(leaf, weights=h, minlength=leaf_total)
    return ObliviousTree(np.array(split_features), np.array(split_borders),
                         leaf_newton_values(g_sum, h_sum, l2_leaf_reg))
