import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Union

import numpy as np
from scipy.special import expit

from modules.deltas import moved_orders, swap_deltas_ranked
from modules.metrics import DEFAULT_DECAY, MetricKind, MetricSpec, ranked_metric_values
from modules.ranking_core import (
    ConfigurationError,
    ContractViolationError,
    Dataset,
    as_relevance,
    as_scores,
    worst_case_argsort,
    worst_case_order_batch,
)

logger = logging.getLogger(__name__)

# element budget for one block of the batched CCS placement tensor
CCS_BLOCK_ELEMENTS = 1 << 22


class SmoothingDistribution(str, Enum):
    LOGISTIC = "logistic"
    GAUSSIAN = "gaussian"
    NONE = "none"


@dataclass(frozen=True)
class SmoothingConfig:
    distribution: SmoothingDistribution = SmoothingDistribution.LOGISTIC
    permutation_count: int = 10
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "distribution", SmoothingDistribution(self.distribution))
        if self.permutation_count < 1:
            raise ConfigurationError(f"permutation_count must be >= 1, got {self.permutation_count}")


@dataclass(frozen=True)
class StochasticRankConfig:
    sigma: float = 1.0
    mu: float = 0.0
    model_shrink_rate: float = 0.0
    diffusion_temperature: float = 1e9

    def __post_init__(self):
        if not self.sigma > 0:
            raise ConfigurationError(f"sigma must be > 0, got {self.sigma}")
        if self.mu < 0:
            raise ConfigurationError(f"mu must be >= 0, got {self.mu}")
        if self.model_shrink_rate < 0 or self.model_shrink_rate >= 1:
            raise ConfigurationError(f"model_shrink_rate must lie in [0, 1), got {self.model_shrink_rate}")
        if not self.diffusion_temperature > 0:
            raise ConfigurationError(f"diffusion_temperature must be > 0, got {self.diffusion_temperature}")


@dataclass(frozen=True, eq=False)
class PairwiseWeights:
    """Sparse pair weights of one query; `i` is the more relevant document of each pair."""
    i: np.ndarray
    j: np.ndarray
    w: np.ndarray

    def __len__(self):
        return int(self.w.size)

    def as_dict(self) -> dict:
        return {(int(a), int(b)): float(value) for a, b, value in zip(self.i, self.j, self.w)}

    @classmethod
    def empty(cls) -> "PairwiseWeights":
        return cls(np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64), np.empty(0))


@dataclass(frozen=True, eq=False)
class GradientBuffer:
    grad: np.ndarray
    hess: np.ndarray

    def __post_init__(self):
        if self.grad.shape != self.hess.shape:
            raise ContractViolationError("gradient and curvature buffers differ in length")

    @classmethod
    def concatenate(cls, buffers: Sequence["GradientBuffer"]) -> "GradientBuffer":
        return cls(np.concatenate([b.grad for b in buffers]), np.concatenate([b.hess for b in buffers]))


def query_rng(seed: int, query_index: int, iteration: int) -> np.random.Generator:
    """Noise stream of one query at one iteration, independent of evaluation order."""
    return np.random.default_rng([seed, query_index, iteration])


def logistic_noise(u):
    u = np.asarray(u, dtype=np.float64)
    return np.log(u / (1.0 - u))


def draw_smoothing_noise(cfg: SmoothingConfig, n: int, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """(draws, n) noise matrix; the `none` distribution collapses to one zero draw."""
    if cfg.distribution == SmoothingDistribution.NONE:
        return np.zeros((1, n))
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    shape = (cfg.permutation_count, n)
    if cfg.distribution == SmoothingDistribution.GAUSSIAN:
        return rng.standard_normal(shape)
    return logistic_noise(rng.uniform(np.finfo(np.float64).tiny, 1.0, size=shape))


def _accumulate(n: int, draws: int, i_parts, j_parts, w_parts) -> PairwiseWeights:
    if not i_parts:
        return PairwiseWeights.empty()
    i = np.concatenate(i_parts)
    j = np.concatenate(j_parts)
    w = np.concatenate(w_parts)
    if i.size == 0:
        return PairwiseWeights.empty()
    keys, inverse = np.unique(i * n + j, return_inverse=True)
    totals = np.bincount(inverse, weights=w, minlength=keys.size)
    return PairwiseWeights(keys // n, keys % n, totals / draws)


def _position_pairs(n: int, window: Union[int, str, None], exact_distance: bool):
    if window in (None, "all"):
        return np.triu_indices(n, 1)
    window = int(window)
    if window < 1:
        raise ConfigurationError(f"neighbor window must be >= 1 or 'all', got {window}")
    if exact_distance:
        a = np.arange(max(n - window, 0))
        return a, a + window
    a_parts, b_parts = [], []
    for distance in range(1, min(window, n - 1) + 1):
        a = np.arange(n - distance)
        a_parts.append(a)
        b_parts.append(a + distance)
    if not a_parts:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    return np.concatenate(a_parts), np.concatenate(b_parts)


def _delta_weights_for_order(spec, relevance, order, a, b):
    ranked = relevance[order]
    differ = ranked[a] != ranked[b]
    a, b = a[differ], b[differ]
    deltas = swap_deltas_ranked(spec, ranked, a, b)
    first_more_relevant = ranked[a] > ranked[b]
    i = np.where(first_more_relevant, order[a], order[b])
    j = np.where(first_more_relevant, order[b], order[a])
    return i, j, deltas


def lambdamart_weights(spec: MetricSpec, z, r) -> PairwiseWeights:
    """Swap-delta weights for every pair with r_i > r_j at the unperturbed scores."""
    relevance = as_relevance(r)
    spec.validate_labels(relevance)
    order = worst_case_argsort(z, relevance).order
    a, b = np.triu_indices(relevance.size, 1)
    i, j, w = _delta_weights_for_order(spec, relevance, order, a, b)
    return _accumulate(relevance.size, 1, [i], [j], [w])


def yetirank_weights(z, r, b: float = DEFAULT_DECAY, cfg: SmoothingConfig = SmoothingConfig(),
                     noise: Optional[np.ndarray] = None, rng: Optional[np.random.Generator] = None,
                     position_exponent: str = "relevant") -> PairwiseWeights:
    """
    Monte-Carlo YetiRank weights: adjacent pairs of each perturbed ordering
    contribute (r_i - r_j) * b^(p_i - 1). With `position_exponent="leading"`
    the exponent uses the upper of the two positions instead of p_i.
    """
    if not 0.0 < b < 1.0:
        raise ContractViolationError(f"decay b must lie in (0, 1), got {b}")
    if position_exponent not in ("relevant", "leading"):
        raise ConfigurationError(f"unknown position_exponent '{position_exponent}'")
    scores = as_scores(z)
    relevance = as_relevance(r)
    n = relevance.size
    if noise is None:
        noise = draw_smoothing_noise(cfg, n, rng)
    a = np.arange(n - 1)
    i_parts, j_parts, w_parts = [], [], []
    for draw in noise:
        order = worst_case_argsort(scores + draw, relevance).order
        ranked = relevance[order]
        differ = ranked[a] != ranked[a + 1]
        upper = a[differ]
        lower = upper + 1
        first_more_relevant = ranked[upper] > ranked[lower]
        exponent = upper if position_exponent == "leading" else np.where(first_more_relevant, upper, lower)
        i_parts.append(np.where(first_more_relevant, order[upper], order[lower]))
        j_parts.append(np.where(first_more_relevant, order[lower], order[upper]))
        w_parts.append(np.abs(ranked[upper] - ranked[lower]) * b ** exponent)
    return _accumulate(n, noise.shape[0], i_parts, j_parts, w_parts)


def yetiloss_weights(spec: MetricSpec, z, r, window: Union[int, str, None] = 1,
                     cfg: SmoothingConfig = SmoothingConfig(), noise: Optional[np.ndarray] = None,
                     rng: Optional[np.random.Generator] = None, exact_distance: bool = False) -> PairwiseWeights:
    """
    Monte-Carlo YetiLoss weights: swap deltas of the target metric at each
    perturbed ordering, restricted to pairs at most `window` positions apart
    (exactly `window` apart with `exact_distance`, every pair for "all").
    """
    scores = as_scores(z)
    relevance = as_relevance(r)
    spec.validate_labels(relevance)
    n = relevance.size
    if noise is None:
        noise = draw_smoothing_noise(cfg, n, rng)
    a, b = _position_pairs(n, window, exact_distance)
    i_parts, j_parts, w_parts = [], [], []
    for draw in noise:
        order = worst_case_argsort(scores + draw, relevance).order
        i, j, w = _delta_weights_for_order(spec, relevance, order, a, b)
        i_parts.append(i)
        j_parts.append(j)
        w_parts.append(w)
    return _accumulate(n, noise.shape[0], i_parts, j_parts, w_parts)


def pairwise_surrogate_value_grad(weights: PairwiseWeights, z):
    """
    Pairwise logistic surrogate sum w_ij * ln(1 + exp(-(z_i - z_j))) with its
    gradient and curvature; weights are constants.
    """
    scores = as_scores(z)
    n = scores.size
    if not np.all(np.isfinite(weights.w)):
        raise ContractViolationError("pair weights must be finite")
    margin = scores[weights.i] - scores[weights.j]
    value = float(np.sum(weights.w * np.logaddexp(0.0, -margin)))
    pull = weights.w * expit(-margin)
    grad = np.bincount(weights.j, weights=pull, minlength=n) - np.bincount(weights.i, weights=pull, minlength=n)
    curvature = weights.w * expit(margin) * expit(-margin)
    hess = np.bincount(weights.i, weights=curvature, minlength=n) + np.bincount(weights.j, weights=curvature, minlength=n)
    return value, GradientBuffer(grad, hess)


def query_rmse_gradients(scores: Union[np.ndarray, Sequence[np.ndarray]], dataset: Dataset) -> GradientBuffer:
    """Gradients of the query-averaged squared error (1/N) sum_q (1/n_q) sum_i (z_i - r_i)^2."""
    if isinstance(scores, np.ndarray) and scores.ndim == 1:
        scores = dataset.split_scores(scores)
    n_queries = len(dataset)
    buffers = []
    for query_scores, group in zip(scores, dataset.groups):
        scale = 2.0 / (n_queries * group.size)
        residual = as_scores(query_scores) - group.relevance
        buffers.append(GradientBuffer(scale * residual, np.full(group.size, scale)))
    return GradientBuffer.concatenate(buffers)


def _others_positions(n: int) -> np.ndarray:
    # row t: positions of the other documents when the one at t is lifted out
    t = np.arange(n)[:, None]
    m = np.arange(n - 1)[None, :]
    return np.where(m < t, m, m + 1)


def _check_ccs_metric(spec: MetricSpec) -> None:
    if spec.kind == MetricKind.MAP:
        raise ConfigurationError("StochasticRank does not support MAP")


def stochasticrank_ccs_gradient_draws(spec: MetricSpec, z, r, cfg: StochasticRankConfig,
                                      noise: np.ndarray) -> np.ndarray:
    """
    Coordinate conditional sampling estimates of d/dz_i E L(z - mu r + sigma eps, r),
    one row per noise draw.

    For document i the other documents keep their perturbed scores while
    i's own noise is integrated out exactly: the loss is piecewise constant
    in i's score, so the derivative is the sum over the other documents of
    the loss jump when i crosses them, weighted by the Gaussian density of
    i's score at the crossing point.
    """
    _check_ccs_metric(spec)
    scores = as_scores(z)
    relevance = as_relevance(r)
    spec.validate_labels(relevance)
    noise = np.atleast_2d(np.asarray(noise, dtype=np.float64))
    draws, n = noise.shape
    if n != scores.size:
        raise ContractViolationError(f"noise has {n} columns for {scores.size} documents")
    out = np.zeros((draws, n))
    if n == 1:
        return out

    shifted = scores - cfg.mu * relevance
    others = _others_positions(n)
    normalizer = 1.0 / math.sqrt(2.0 * math.pi * cfg.sigma ** 2)
    per_draw = n * n * n
    draw_block = max(1, CCS_BLOCK_ELEMENTS // per_draw)

    for start in range(0, draws, draw_block):
        stop = min(start + draw_block, draws)
        source_block = max(1, CCS_BLOCK_ELEMENTS // ((stop - start) * n * n))
        perturbed = shifted + cfg.sigma * noise[start:stop]
        order = worst_case_order_batch(perturbed, relevance)
        ranked = relevance[order]
        sorted_perturbed = np.take_along_axis(perturbed, order, axis=1)
        sorted_shifted = shifted[order]
        by_position = np.empty((stop - start, n))
        for source_start in range(0, n, source_block):
            sources = np.arange(source_start, min(source_start + source_block, n))
            placements = moved_orders(n, sources[:, None], np.arange(n)[None, :])
            # values[d, t, m]: metric with the document at t placed at position m
            values = ranked_metric_values(spec, ranked[:, placements])
            jumps = values[:, :, 1:] - values[:, :, :-1]
            crossing = sorted_perturbed[:, others[sources]]
            offset = crossing - sorted_shifted[:, sources, None]
            density = normalizer * np.exp(-offset ** 2 / (2.0 * cfg.sigma ** 2))
            by_position[:, sources] = np.sum(jumps * density, axis=-1)
        np.put_along_axis(out[start:stop], order, by_position, axis=1)
    return out


def stochasticrank_ccs_gradients(spec: MetricSpec, z, r, cfg: StochasticRankConfig,
                                 eps: Optional[np.ndarray] = None,
                                 rng: Optional[np.random.Generator] = None) -> GradientBuffer:
    """Single-draw CCS gradient; curvature is zero (gradient-only objective)."""
    _check_ccs_metric(spec)
    n = np.asarray(z).size
    if eps is None:
        eps = (rng if rng is not None else np.random.default_rng()).standard_normal(n)
    grad = stochasticrank_ccs_gradient_draws(spec, z, r, cfg, eps[None, :])[0]
    return GradientBuffer(grad, np.zeros(n))


def ccs_crossing_factors(z, r, cfg: StochasticRankConfig, eps: np.ndarray) -> np.ndarray:
    """
    Unnormalized Gaussian factors exp(-(crossing - z_i)^2 / (2 sigma^2)) of one
    draw, row t for the document at perturbed position t, column m for the
    m-th highest other document.
    """
    scores = as_scores(z)
    relevance = as_relevance(r)
    shifted = scores - cfg.mu * relevance
    perturbed = shifted + cfg.sigma * np.asarray(eps, dtype=np.float64)
    order = worst_case_argsort(perturbed, relevance).order
    crossing = perturbed[order][_others_positions(scores.size)]
    offset = crossing - shifted[order][:, None]
    return np.exp(-offset ** 2 / (2.0 * cfg.sigma ** 2))


class Objective:
    """Per-iteration gradient provider used by the booster."""

    name = "objective"
    gradient_only = False
    target_metric: Optional[MetricSpec] = None

    def gradients(self, scores: Sequence[np.ndarray], dataset: Dataset, iteration: int) -> GradientBuffer:
        raise NotImplementedError

    def __str__(self):
        return self.name


class QueryRmseObjective(Objective):
    name = "query-rmse"

    def gradients(self, scores, dataset, iteration):
        return query_rmse_gradients(scores, dataset)


class PairwiseObjective(Objective):
    def __init__(self, seed: int = 0):
        self.seed = seed

    def weights(self, z, r, rng: np.random.Generator) -> PairwiseWeights:
        raise NotImplementedError

    def gradients(self, scores, dataset, iteration):
        buffers = []
        for index, (query_scores, group) in enumerate(zip(scores, dataset.groups)):
            rng = query_rng(self.seed, index, iteration)
            weights = self.weights(query_scores, group.relevance, rng)
            _, buffer = pairwise_surrogate_value_grad(weights, query_scores)
            buffers.append(buffer)
        return GradientBuffer.concatenate(buffers)


class LambdaMartObjective(PairwiseObjective):
    def __init__(self, spec: MetricSpec, seed: int = 0):
        super().__init__(seed)
        self.target_metric = spec
        self.name = f"lambdamart:{spec.name.lower()}"

    def weights(self, z, r, rng):
        return lambdamart_weights(self.target_metric, z, r)


class YetiRankObjective(PairwiseObjective):
    name = "yetirank"

    def __init__(self, decay: float = DEFAULT_DECAY, smoothing: SmoothingConfig = SmoothingConfig(),
                 seed: int = 0, position_exponent: str = "relevant"):
        super().__init__(seed)
        self.decay = decay
        self.smoothing = smoothing
        self.position_exponent = position_exponent

    def weights(self, z, r, rng):
        return yetirank_weights(z, r, self.decay, self.smoothing, rng=rng,
                                position_exponent=self.position_exponent)


class YetiLossObjective(PairwiseObjective):
    def __init__(self, spec: MetricSpec, window: Union[int, str] = 1,
                 smoothing: SmoothingConfig = SmoothingConfig(), seed: int = 0, exact_distance: bool = False):
        super().__init__(seed)
        self.target_metric = spec
        self.window = window
        self.smoothing = smoothing
        self.exact_distance = exact_distance
        self.name = f"yetiloss:{spec.name.lower()}"

    def weights(self, z, r, rng):
        return yetiloss_weights(self.target_metric, z, r, self.window, self.smoothing, rng=rng,
                                exact_distance=self.exact_distance)


class StochasticRankObjective(Objective):
    gradient_only = True

    def __init__(self, spec: MetricSpec, config: StochasticRankConfig = StochasticRankConfig(), seed: int = 0):
        _check_ccs_metric(spec)
        self.target_metric = spec
        self.config = config
        self.seed = seed
        self.name = f"stochasticrank:{spec.name.lower()}"

    def gradients(self, scores, dataset, iteration):
        buffers = []
        for index, (query_scores, group) in enumerate(zip(scores, dataset.groups)):
            rng = query_rng(self.seed, index, iteration)
            buffers.append(stochasticrank_ccs_gradients(self.target_metric, query_scores, group.relevance,
                                                        self.config, rng=rng))
        return GradientBuffer.concatenate(buffers)


LOSS_FAMILIES = ("query-rmse", "lambdamart", "yetirank", "yetiloss", "stochasticrank")


def parse_loss(text: str, decay: float = DEFAULT_DECAY, smoothing: SmoothingConfig = SmoothingConfig(),
               window: Union[int, str] = 1, stochastic: StochasticRankConfig = StochasticRankConfig(),
               seed: int = 0, exact_distance: bool = False) -> Objective:
    """Objective from `query-rmse`, `lambdamart:<metric>`, `yetirank`, `yetiloss:<metric>` or `stochasticrank:<metric>`."""
    family, _, metric_text = text.strip().lower().partition(":")
    if family not in LOSS_FAMILIES:
        raise ConfigurationError(f"unknown loss '{text}'; expected one of {', '.join(LOSS_FAMILIES)}")
    if family in ("query-rmse", "yetirank"):
        if metric_text:
            raise ConfigurationError(f"loss '{family}' does not take a metric")
        if family == "query-rmse":
            return QueryRmseObjective()
        return YetiRankObjective(decay, smoothing, seed)
    if not metric_text:
        raise ConfigurationError(f"loss '{family}' needs a metric, e.g. {family}:ndcg@10")
    spec = MetricSpec.parse(metric_text)
    if spec.kind == MetricKind.EXPDCG and spec.b == DEFAULT_DECAY:
        spec = MetricSpec(MetricKind.EXPDCG, b=decay)
    if family == "lambdamart":
        return LambdaMartObjective(spec, seed)
    if family == "yetiloss":
        return YetiLossObjective(spec, window, smoothing, seed, exact_distance)
    if spec.kind == MetricKind.MAP:
        raise ConfigurationError("unsupported combination stochasticrank:map; StochasticRank does not support MAP")
    return StochasticRankObjective(spec, stochastic, seed)
