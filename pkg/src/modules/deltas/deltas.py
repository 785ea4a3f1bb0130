import logging

import numpy as np

from modules.metrics import GAIN_NORMALIZER, MetricKind, MetricSpec, ranked_metric_values, truncated_discounts
from modules.ranking_core import ContractViolationError, as_relevance, worst_case_argsort

logger = logging.getLogger(__name__)

# rows of a batched oracle evaluation are processed in blocks of this many elements
ORACLE_BLOCK_ELEMENTS = 1 << 22


def _ranked_view(spec: MetricSpec, z, r):
    relevance = as_relevance(r)
    spec.validate_labels(relevance)
    permutation = worst_case_argsort(z, relevance)
    return relevance, permutation, relevance[permutation.order]


def _check_pair(n: int, i: int, j: int) -> None:
    if i == j:
        raise ContractViolationError(f"swap needs two distinct documents, got i = j = {i}")
    for index in (i, j):
        if not 0 <= index < n:
            raise ContractViolationError(f"document index {index} outside 0..{n - 1}")


def oracle_swap_deltas_ranked(spec: MetricSpec, ranked: np.ndarray, a, b) -> np.ndarray:
    """|M(swapped) - M(ranked)| for every position pair (a[k], b[k]), by re-evaluation."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    n = ranked.shape[-1]
    base = ranked_metric_values(spec, ranked)
    out = np.empty(a.size, dtype=np.float64)
    block = max(1, ORACLE_BLOCK_ELEMENTS // max(n, 1))
    for start in range(0, a.size, block):
        stop = min(start + block, a.size)
        rows = np.arange(stop - start)
        swapped = np.tile(ranked, (stop - start, 1))
        swapped[rows, a[start:stop]] = ranked[b[start:stop]]
        swapped[rows, b[start:stop]] = ranked[a[start:stop]]
        out[start:stop] = np.abs(ranked_metric_values(spec, swapped) - base)
    return out


def _ndcg_swap_deltas(ranked: np.ndarray, k, a, b) -> np.ndarray:
    discounts = truncated_discounts(ranked.size, k)
    ideal = float(ranked_metric_values(MetricSpec(MetricKind.DCG, k=k), -np.sort(-ranked)))
    if ideal == 0.0:
        return np.zeros(a.size)
    gain_gap = np.abs(np.exp2(ranked[a]) - np.exp2(ranked[b])) / GAIN_NORMALIZER
    return gain_gap * np.abs(discounts[a] - discounts[b]) / ideal


def _exp_dcg_swap_deltas(ranked: np.ndarray, decay: float, a, b) -> np.ndarray:
    return np.abs(decay ** a - decay ** b) * np.abs(ranked[a] - ranked[b])


def _mrr_swap_deltas(ranked: np.ndarray, a, b) -> np.ndarray:
    n = ranked.size
    relevant = ranked == 1.0
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    relevant_before = np.concatenate([[0], np.cumsum(relevant)])
    # next_relevant[t]: first relevant position >= t (n when there is none)
    candidates = np.where(relevant, np.arange(n), n)
    next_relevant = np.append(np.minimum.accumulate(candidates[::-1])[::-1], n)
    gate = (ranked[a] != ranked[b]) & (relevant_before[lo] == 0)
    first_other = np.minimum(hi, next_relevant[lo + 1])
    return np.where(gate, np.abs(1.0 / (lo + 1) - 1.0 / (first_other + 1)), 0.0)


def swap_deltas_ranked(spec: MetricSpec, ranked: np.ndarray, a, b) -> np.ndarray:
    """
    Swap deltas for arrays of 0-based rank positions on one ranked label
    vector. NDCG, MRR and ExpDCG use closed forms; the other metrics go
    through the oracle.
    """
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    if spec.kind == MetricKind.NDCG:
        return _ndcg_swap_deltas(ranked, spec.k, a, b)
    if spec.kind == MetricKind.EXPDCG:
        return _exp_dcg_swap_deltas(ranked, spec.b, a, b)
    if spec.kind == MetricKind.MRR:
        return _mrr_swap_deltas(ranked, a, b)
    return oracle_swap_deltas_ranked(spec, ranked, a, b)


def swap_delta_oracle(spec: MetricSpec, z, r, i: int, j: int) -> float:
    relevance, permutation, ranked = _ranked_view(spec, z, r)
    _check_pair(relevance.size, i, j)
    a = permutation.positions[i] - 1
    b = permutation.positions[j] - 1
    return float(oracle_swap_deltas_ranked(spec, ranked, [a], [b])[0])


def delta_ndcg_closed(z, r, k, i: int, j: int) -> float:
    spec = MetricSpec(MetricKind.NDCG, k=None if k == "all" else k)
    relevance, permutation, ranked = _ranked_view(spec, z, r)
    _check_pair(relevance.size, i, j)
    a = np.array([permutation.positions[i] - 1])
    b = np.array([permutation.positions[j] - 1])
    return float(_ndcg_swap_deltas(ranked, spec.k, a, b)[0])


def delta_mrr_closed(z, r, i: int, j: int) -> float:
    spec = MetricSpec(MetricKind.MRR)
    relevance, permutation, ranked = _ranked_view(spec, z, r)
    _check_pair(relevance.size, i, j)
    a = np.array([permutation.positions[i] - 1])
    b = np.array([permutation.positions[j] - 1])
    return float(_mrr_swap_deltas(ranked, a, b)[0])


def swap_delta(spec: MetricSpec, z, r, i: int, j: int) -> float:
    relevance, permutation, ranked = _ranked_view(spec, z, r)
    _check_pair(relevance.size, i, j)
    a = [permutation.positions[i] - 1]
    b = [permutation.positions[j] - 1]
    return float(swap_deltas_ranked(spec, ranked, a, b)[0])


def moved_orders(n: int, source, target) -> np.ndarray:
    """
    Index arrays that move the element at 0-based position `source` to
    position `target`, keeping every other relative order. `source` and
    `target` broadcast together; the result has one more axis of length n.
    """
    source = np.asarray(source, dtype=np.int64)[..., None]
    target = np.asarray(target, dtype=np.int64)[..., None]
    q = np.arange(n)
    upward = np.where(q == target, source, np.where((q > target) & (q <= source), q - 1, q))
    downward = np.where(q == target, source, np.where((q >= source) & (q < target), q + 1, q))
    return np.where(target <= source, upward, downward)


def move_target_position(source, rank_target):
    """0-based position reached when the document at `source` is placed after rank `rank_target` (0 = first)."""
    rank_target = np.asarray(rank_target, dtype=np.int64)
    return np.where(rank_target <= source, rank_target, rank_target - 1)


def move_deltas_ranked(spec: MetricSpec, ranked: np.ndarray, source: int, rank_targets) -> np.ndarray:
    """Loss change L(moved) - L(current), with L = 1 - M, for each rank target."""
    targets = move_target_position(source, rank_targets)
    orders = moved_orders(ranked.size, source, targets)
    return ranked_metric_values(spec, ranked) - ranked_metric_values(spec, ranked[orders])


def move_delta(spec: MetricSpec, z, r, i: int, j: int) -> float:
    """
    Loss change from placing document i immediately after the document
    currently at rank j (j = 0 puts it first).
    """
    relevance, permutation, ranked = _ranked_view(spec, z, r)
    n = relevance.size
    if not 0 <= i < n:
        raise ContractViolationError(f"document index {i} outside 0..{n - 1}")
    if not 0 <= j <= n:
        raise ContractViolationError(f"rank target {j} outside 0..{n}")
    source = int(permutation.positions[i]) - 1
    return float(move_deltas_ranked(spec, ranked, source, [j])[0])
