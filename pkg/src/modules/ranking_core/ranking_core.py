import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

logger = logging.getLogger(__name__)


class RankForgeError(Exception):
    """Base error for every rankforge component"""
    pass


class ContractViolationError(RankForgeError):
    """A precondition of an operation was violated"""
    pass


class ConfigurationError(RankForgeError):
    """Invalid hyperparameters or unsupported combinations"""
    pass


MAX_RAW_LABEL = 4.0


def as_scores(values) -> np.ndarray:
    scores = np.asarray(values, dtype=np.float64)
    if scores.ndim != 1:
        raise ContractViolationError(f"scores must be one-dimensional, got shape {scores.shape}")
    if not np.all(np.isfinite(scores)):
        raise ContractViolationError("scores must be finite")
    return scores


def as_relevance(values) -> np.ndarray:
    relevance = np.asarray(values, dtype=np.float64)
    if relevance.ndim != 1:
        raise ContractViolationError(f"relevance must be one-dimensional, got shape {relevance.shape}")
    if not np.all(np.isfinite(relevance)):
        raise ContractViolationError("relevance labels must be finite")
    return relevance


def check_raw_labels(relevance: np.ndarray) -> None:
    if relevance.size and (relevance.min() < 0.0 or relevance.max() > MAX_RAW_LABEL):
        raise ContractViolationError(
            f"raw relevance labels must lie in [0, {MAX_RAW_LABEL:g}], "
            f"got range [{relevance.min():g}, {relevance.max():g}]"
        )


@dataclass(frozen=True, eq=False)
class RankPermutation:
    """
    Worst-case ordering of one query.

    `order[t]` is the document index (0-based) shown at rank position t + 1;
    `positions[i]` is the 1-based rank position of document i.
    """
    order: np.ndarray
    positions: np.ndarray

    def __len__(self):
        return len(self.order)


def worst_case_argsort(z, r) -> RankPermutation:
    """
    Sort documents by descending score. Tied scores put the less relevant
    document first and remaining ties keep ascending document index, so every
    metric sees the pessimistic ordering.
    """
    scores = as_scores(z)
    relevance = as_relevance(r)
    if scores.shape != relevance.shape:
        raise ContractViolationError(
            f"scores and relevance differ in length: {scores.size} != {relevance.size}"
        )
    if scores.size == 0:
        raise ContractViolationError("cannot rank an empty query")

    # lexsort is stable, so equal (score, relevance) pairs keep index order
    order = np.lexsort((relevance, -scores))
    positions = np.empty_like(order)
    positions[order] = np.arange(1, order.size + 1)
    return RankPermutation(order=order, positions=positions)


def worst_case_order_batch(scores: np.ndarray, relevance: np.ndarray) -> np.ndarray:
    """Row-wise worst_case_argsort orders for a (draws, n) score matrix."""
    relevance = np.broadcast_to(relevance, scores.shape)
    return np.lexsort((relevance, -scores), axis=-1)


def binarize_labels(r) -> np.ndarray:
    relevance = as_relevance(r)
    check_raw_labels(relevance)
    return (relevance > 0.0).astype(np.float64)


def scale_labels_unit(r) -> np.ndarray:
    relevance = as_relevance(r)
    check_raw_labels(relevance)
    return relevance / MAX_RAW_LABEL


@dataclass(frozen=True, eq=False)
class QueryGroup:
    query_id: str
    features: np.ndarray
    relevance: np.ndarray

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        relevance = as_relevance(self.relevance)
        if features.ndim != 2:
            raise ContractViolationError(f"query {self.query_id}: features must be a matrix")
        if features.shape[0] != relevance.size:
            raise ContractViolationError(
                f"query {self.query_id}: {features.shape[0]} feature rows "
                f"but {relevance.size} labels"
            )
        if relevance.size == 0:
            raise ContractViolationError(f"query {self.query_id} has no documents")
        # ids are compared as written in LETOR files
        object.__setattr__(self, "query_id", str(self.query_id))
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "relevance", relevance)

    @property
    def size(self) -> int:
        return int(self.relevance.size)

    def permuted(self, permutation: Sequence[int]) -> "QueryGroup":
        """Same query with its documents listed in a different order."""
        permutation = np.asarray(permutation)
        return QueryGroup(self.query_id, self.features[permutation], self.relevance[permutation])

    def with_relevance(self, relevance) -> "QueryGroup":
        return QueryGroup(self.query_id, self.features, relevance)


@dataclass(frozen=True, eq=False)
class Dataset:
    groups: tuple
    feature_count: int
    query_offsets: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        groups = tuple(self.groups)
        if not groups:
            raise ContractViolationError("a dataset needs at least one query group")
        query_ids = [group.query_id for group in groups]
        if len(set(query_ids)) != len(query_ids):
            raise ContractViolationError("query ids must be unique within a dataset")
        for group in groups:
            if group.features.shape[1] != self.feature_count:
                raise ContractViolationError(
                    f"query {group.query_id} has {group.features.shape[1]} features, "
                    f"dataset declares {self.feature_count}"
                )
        offsets = np.zeros(len(groups) + 1, dtype=np.int64)
        np.cumsum([group.size for group in groups], out=offsets[1:])
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "query_offsets", offsets)

    def __len__(self):
        return len(self.groups)

    def __iter__(self):
        return iter(self.groups)

    @property
    def document_count(self) -> int:
        return int(self.query_offsets[-1])

    def stacked_features(self) -> np.ndarray:
        return np.vstack([group.features for group in self.groups])

    def stacked_relevance(self) -> np.ndarray:
        return np.concatenate([group.relevance for group in self.groups])

    def split_scores(self, flat_scores) -> list:
        """Cut a document-aligned score array into one array per query."""
        flat_scores = np.asarray(flat_scores, dtype=np.float64)
        if flat_scores.shape != (self.document_count,):
            raise ContractViolationError(
                f"expected {self.document_count} scores, got shape {flat_scores.shape}"
            )
        return np.split(flat_scores, self.query_offsets[1:-1])

    def map_labels(self, transform: Callable[[np.ndarray], np.ndarray]) -> "Dataset":
        groups = [group.with_relevance(transform(group.relevance)) for group in self.groups]
        return Dataset(tuple(groups), self.feature_count)

    def subset(self, indices: Sequence[int]) -> "Dataset":
        return Dataset(tuple(self.groups[i] for i in indices), self.feature_count)


def split_dataset(d: Dataset, fractions=(0.8, 0.2), seed: int = 0):
    """
    Query-level split into (train, valid). Query order is shuffled with a
    seeded generator and cut by cumulative fraction of the query count; each
    part keeps the original relative order of its queries.
    """
    if len(d) < 2:
        raise ContractViolationError("splitting needs at least 2 query groups")
    if len(fractions) != 2 or min(fractions) <= 0 or not np.isclose(sum(fractions), 1.0):
        raise ContractViolationError(f"fractions must be two positive numbers summing to 1, got {fractions}")

    shuffled = np.random.default_rng(seed).permutation(len(d))
    cut = int(round(fractions[0] * len(d)))
    cut = min(max(cut, 1), len(d) - 1)
    train_indices = np.sort(shuffled[:cut])
    valid_indices = np.sort(shuffled[cut:])
    logger.info("Split %d queries into %d train / %d valid", len(d), cut, len(d) - cut)
    return d.subset(train_indices), d.subset(valid_indices)
