"""
Tests for pairwise weights, the logistic surrogate and the CCS gradient estimator
"""

import itertools
import os
import sys

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import logistic, norm

sys.path.append(os.path.join(os.path.dirname(__file__), '..', 'src'))
from modules.metrics import MetricKind, MetricSpec, ranked_metric_values
from modules.objectives import (
    LambdaMartObjective,
    QueryRmseObjective,
    SmoothingConfig,
    SmoothingDistribution,
    StochasticRankConfig,
    StochasticRankObjective,
    YetiLossObjective,
    YetiRankObjective,
    ccs_crossing_factors,
    draw_smoothing_noise,
    lambdamart_weights,
    pairwise_surrogate_value_grad,
    parse_loss,
    query_rmse_gradients,
    stochasticrank_ccs_gradient_draws,
    stochasticrank_ccs_gradients,
    yetiloss_weights,
    yetirank_weights,
)
from modules.ranking_core import ConfigurationError, Dataset, QueryGroup, worst_case_argsort

NDCG10 = MetricSpec(MetricKind.NDCG, k=10)


def random_query(rng, max_n=8):
    """Random scores and raw labels for one query"""
    n = int(rng.integers(2, max_n + 1))
    return rng.normal(size=n), rng.integers(0, 5, size=n).astype(float)


@pytest.fixture
def small_dataset():
    """Six small queries with graded labels"""
    rng = np.random.default_rng(0)
    groups = tuple(
        QueryGroup(str(q), rng.uniform(size=(size, 2)), rng.integers(0, 5, size=size).astype(float))
        for q, size in enumerate([4, 6, 3])
    )
    return Dataset(groups, 2)


class TestSurrogateBound:
    """Logistic surrogate against the misordering indicator"""

    def test_indicator_below_logistic_bound(self):
        """A misordered pair never costs more than log2(1 + e^-d)"""
        rng = np.random.default_rng(0)
        margin = rng.normal(scale=5.0, size=100_000)
        indicator = (margin <= 0).astype(float)
        bound = np.logaddexp(0.0, -margin) / np.log(2.0)
        assert np.count_nonzero(indicator > bound) == 0


class TestSurrogateGradients:
    """Analytic gradients against finite differences"""

    @staticmethod
    def central_difference(f, z, step=1e-5):
        """Central finite-difference gradient of `f` at `z`"""
        grad = np.empty_like(z)
        for k in range(z.size):
            up, down = z.copy(), z.copy()
            up[k] += step
            down[k] -= step
            grad[k] = (f(up) - f(down)) / (2 * step)
        return grad

    def test_frozen_weight_gradients(self):
        """Surrogate gradients match finite differences with weights held fixed"""
        rng = np.random.default_rng(1)
        smoothing = SmoothingConfig(permutation_count=5)
        builders = [
            lambda z, r: lambdamart_weights(NDCG10, z, r),
            lambda z, r: yetirank_weights(z, r, 0.85, smoothing, rng=rng),
            lambda z, r: yetiloss_weights(NDCG10, z, r, 2, smoothing, rng=rng),
            lambda z, r: yetiloss_weights(MetricSpec(MetricKind.MAP), z, (r > 0).astype(float), "all",
                                          smoothing, rng=rng),
        ]
        for instance in range(100):
            z, r = random_query(rng)
            weights = builders[instance % len(builders)](z, r)
            _, buffer = pairwise_surrogate_value_grad(weights, z)
            numeric = self.central_difference(lambda s: pairwise_surrogate_value_grad(weights, s)[0], z)
            np.testing.assert_allclose(buffer.grad, numeric, rtol=1e-6, atol=1e-9)

    def test_curvature_is_gradient_derivative(self):
        """Curvature matches the derivative of the gradient"""
        rng = np.random.default_rng(2)
        for _ in range(20):
            z, r = random_query(rng)
            weights = lambdamart_weights(NDCG10, z, r)
            _, buffer = pairwise_surrogate_value_grad(weights, z)
            for k in range(z.size):
                up, down = z.copy(), z.copy()
                up[k] += 1e-5
                down[k] -= 1e-5
                numeric = (pairwise_surrogate_value_grad(weights, up)[1].grad[k]
                           - pairwise_surrogate_value_grad(weights, down)[1].grad[k]) / 2e-5
                assert buffer.hess[k] == pytest.approx(numeric, rel=1e-5, abs=1e-9)

    def test_query_rmse_gradients(self, small_dataset):
        """QueryRMSE gradients match finite differences of the loss"""
        rng = np.random.default_rng(3)
        flat = rng.normal(size=small_dataset.document_count)

        def loss(scores):
            parts = small_dataset.split_scores(scores)
            return sum(np.mean((p - g.relevance) ** 2) for p, g in zip(parts, small_dataset.groups)) / len(small_dataset)

        buffer = query_rmse_gradients(flat, small_dataset)
        np.testing.assert_allclose(buffer.grad, self.central_difference(loss, flat), rtol=1e-6, atol=1e-9)
        sizes = np.repeat([4, 6, 3], [4, 6, 3])
        np.testing.assert_allclose(buffer.hess, 2.0 / (3 * sizes))


class TestLambdaMartWeights:
    """LambdaMART pair weights"""

    def test_pairs_have_more_relevant_first(self):
        """Pairs list the more relevant document first with positive weight"""
        z = np.array([0.5, 0.2, 0.9])
        r = np.array([2.0, 0.0, 1.0])
        weights = lambdamart_weights(NDCG10, z, r)
        assert set(weights.as_dict()) == {(0, 1), (0, 2), (2, 1)}
        assert np.all(weights.w > 0)

    def test_equal_labels_yield_no_pairs(self):
        """Equally relevant documents form no pair"""
        assert len(lambdamart_weights(NDCG10, [0.1, 0.2], [1.0, 1.0])) == 0


class TestYetiRankExpDcgIdentity:
    """YetiRank as smoothed ExpDCG"""

    def test_leading_exponent_matches_up_to_gain_factor(self):
        """With the leading exponent the weights differ by exactly 1 - b"""
        rng = np.random.default_rng(4)
        for b in (0.85, 0.5):
            spec = MetricSpec(MetricKind.EXPDCG, b=b)
            for seed in range(100):
                z, r = random_query(rng, max_n=6)
                noise = draw_smoothing_noise(SmoothingConfig(permutation_count=1, seed=seed), z.size)
                yeti = yetirank_weights(z, r, b, noise=noise, position_exponent="leading").as_dict()
                loss = yetiloss_weights(spec, z, r, 1, noise=noise).as_dict()
                assert yeti.keys() == loss.keys()
                for pair, value in yeti.items():
                    assert loss[pair] == pytest.approx((1 - b) * value, rel=1e-12)

    def test_relevant_exponent_ratio_depends_on_pair_order(self):
        """With the default exponent misordered pairs differ by (1 - b) / b"""
        rng = np.random.default_rng(5)
        b = 0.85
        spec = MetricSpec(MetricKind.EXPDCG, b=b)
        for seed in range(100):
            z, r = random_query(rng, max_n=6)
            noise = draw_smoothing_noise(SmoothingConfig(permutation_count=1, seed=seed), z.size)
            positions = worst_case_argsort(z + noise[0], r).positions
            yeti = yetirank_weights(z, r, b, noise=noise).as_dict()
            loss = yetiloss_weights(spec, z, r, 1, noise=noise).as_dict()
            assert yeti.keys() == loss.keys()
            for (i, j), value in yeti.items():
                ratio = (1 - b) if positions[i] < positions[j] else (1 - b) / b
                assert loss[(i, j)] == pytest.approx(ratio * value, rel=1e-12)


class TestYetiLossWindows:
    """Neighbour windows of YetiLoss"""

    def test_window_nesting(self):
        """A wider window never lowers a pair's weight"""
        rng = np.random.default_rng(6)
        for seed in range(50):
            z, r = random_query(rng)
            noise = draw_smoothing_noise(SmoothingConfig(seed=seed), z.size)
            narrow = yetiloss_weights(NDCG10, z, r, 1, noise=noise).as_dict()
            wide = yetiloss_weights(NDCG10, z, r, 2, noise=noise).as_dict()
            for pair, value in narrow.items():
                assert wide[pair] >= value

    def test_all_pairs_without_noise_is_lambdamart(self):
        """All pairs without smoothing reduce to LambdaMART"""
        rng = np.random.default_rng(7)
        none = SmoothingConfig(SmoothingDistribution.NONE)
        for _ in range(50):
            z, r = random_query(rng)
            assert (yetiloss_weights(NDCG10, z, r, "all", none).as_dict()
                    == lambdamart_weights(NDCG10, z, r).as_dict())

    def test_exact_distance_excludes_neighbors(self):
        """Exact distance keeps only pairs that far apart"""
        z = np.array([3.0, 2.0, 1.0])
        r = np.array([0.0, 1.0, 2.0])
        none = SmoothingConfig(SmoothingDistribution.NONE)
        weights = yetiloss_weights(NDCG10, z, r, 2, none, exact_distance=True)
        assert set(weights.as_dict()) == {(2, 0)}

    def test_invalid_window(self):
        """Window sizes below one are rejected"""
        with pytest.raises(ConfigurationError):
            yetiloss_weights(NDCG10, [0.1, 0.2], [0.0, 1.0], 0)


class TestSmoothing:
    """Score smoothing noise"""

    def test_noise_shapes(self):
        """One row per permutation, zeros without smoothing"""
        assert draw_smoothing_noise(SmoothingConfig(SmoothingDistribution.NONE), 4).tolist() == [[0.0] * 4]
        logistic_draws = draw_smoothing_noise(SmoothingConfig(permutation_count=7), 4)
        assert logistic_draws.shape == (7, 4) and np.all(np.isfinite(logistic_draws))
        gaussian = draw_smoothing_noise(SmoothingConfig(SmoothingDistribution.GAUSSIAN, 3), 5)
        assert gaussian.shape == (3, 5)

    def test_seeded_weights_are_deterministic(self):
        """Same seed, same weights"""
        z, r = np.array([0.1, 0.4, 0.2, 0.3]), np.array([0.0, 2.0, 1.0, 3.0])
        first = yetirank_weights(z, r, cfg=SmoothingConfig(seed=9)).as_dict()
        second = yetirank_weights(z, r, cfg=SmoothingConfig(seed=9)).as_dict()
        assert first == second

    def test_invalid_permutation_count(self):
        """At least one permutation is required"""
        with pytest.raises(ConfigurationError):
            SmoothingConfig(permutation_count=0)

    @pytest.mark.slow
    def test_two_document_weight_matches_integration(self):
        """Monte Carlo weight of two documents agrees with integration"""
        z = np.array([0.3, -0.1])
        r = np.array([2.0, 0.0])
        b = 0.85
        weights = yetirank_weights(z, r, b, SmoothingConfig(permutation_count=100_000, seed=1)).as_dict()
        # P(doc 0 stays first) = P(e1 - e0 < z0 - z1)
        first, _ = quad(lambda e: logistic.pdf(e) * logistic.cdf(z[0] - z[1] + e), -40, 40)
        expected = 2.0 * (first + (1.0 - first) * b)
        assert weights[(0, 1)] == pytest.approx(expected, rel=0.01)

    @pytest.mark.slow
    def test_independent_runs_agree(self):
        """Two independent runs agree within 2%"""
        z = np.zeros(4)
        r = np.array([0.0, 1.0, 2.0, 3.0])
        first = yetirank_weights(z, r, cfg=SmoothingConfig(permutation_count=100_000, seed=1)).as_dict()
        second = yetirank_weights(z, r, cfg=SmoothingConfig(permutation_count=100_000, seed=2)).as_dict()
        assert first.keys() == second.keys()
        for pair, value in first.items():
            assert second[pair] == pytest.approx(value, rel=0.02)


class TestStochasticRank:
    """Coordinate-conditional StochasticRank estimator"""

    @staticmethod
    def smoothed_loss(spec, z, r, sigma):
        """E[1 - M(z + sigma * eps)] for three documents, integrating over the middle document."""
        total = 0.0
        for top, middle, bottom in itertools.permutations(range(3)):
            def density(y):
                return (norm.pdf(y, z[middle], sigma) * norm.sf(y, z[top], sigma)
                        * norm.cdf(y, z[bottom], sigma))
            probability, _ = quad(density, z[middle] - 12 * sigma, z[middle] + 12 * sigma,
                                  epsabs=1e-14, epsrel=1e-12, limit=200)
            total += probability * (1.0 - float(ranked_metric_values(spec, r[[top, middle, bottom]])))
        return total

    @pytest.mark.slow
    def test_ccs_mean_matches_smoothed_loss_derivative(self):
        """Mean estimate matches the derivative of the smoothed loss"""
        spec = MetricSpec(MetricKind.NDCG, k=3)
        cfg = StochasticRankConfig(sigma=0.5, mu=0.0)
        z = np.array([0.3, 0.0, -0.2])
        r = np.array([0.0, 2.0, 1.0])
        draws = stochasticrank_ccs_gradient_draws(spec, z, r, cfg,
                                                  np.random.default_rng(0).standard_normal((1_000_000, 3)))
        mean = draws.mean(axis=0)
        standard_error = draws.std(axis=0, ddof=1) / np.sqrt(draws.shape[0])
        step = 1e-4
        for k in range(3):
            up, down = z.copy(), z.copy()
            up[k] += step
            down[k] -= step
            numeric = (self.smoothed_loss(spec, up, r, 0.5) - self.smoothed_loss(spec, down, r, 0.5)) / (2 * step)
            assert abs(mean[k] - numeric) <= 3 * standard_error[k]

    def test_non_adjacent_factors_vanish_for_small_sigma(self):
        """For tiny sigma only adjacent crossings carry weight"""
        z = np.array([0.0, 1.0, 2.0, 3.0, 4.0])
        r = np.array([1.0, 0.0, 2.0, 1.0, 0.0])
        cfg = StochasticRankConfig(sigma=1e-3)
        factors = ccs_crossing_factors(z, r, cfg, np.random.default_rng(3).standard_normal(5))
        n = z.size
        for t in range(n):
            for column in range(n - 1):
                if column in (t - 1, t):
                    continue
                assert factors[t, column] < 1e-12

    def test_single_document_has_zero_gradient(self):
        """A lone document gets no gradient"""
        buffer = stochasticrank_ccs_gradients(NDCG10, [0.4], [2.0], StochasticRankConfig(),
                                              rng=np.random.default_rng(0))
        assert buffer.grad.tolist() == [0.0]
        assert buffer.hess.tolist() == [0.0]

    def test_gradient_points_toward_better_ranking(self):
        """The mean gradient pushes the relevant document up"""
        # the relevant document sits last; raising its score must lower the loss
        spec = MetricSpec(MetricKind.NDCG)
        draws = stochasticrank_ccs_gradient_draws(spec, np.array([1.0, 0.0]), np.array([0.0, 2.0]),
                                                  StochasticRankConfig(sigma=1.0),
                                                  np.random.default_rng(1).standard_normal((2000, 2)))
        mean = draws.mean(axis=0)
        assert mean[1] < 0 < mean[0]

    def test_map_is_rejected(self):
        """StochasticRank does not accept MAP"""
        with pytest.raises(ConfigurationError):
            stochasticrank_ccs_gradients(MetricSpec(MetricKind.MAP), [0.1, 0.2], [0.0, 1.0], StochasticRankConfig())
        with pytest.raises(ConfigurationError):
            parse_loss("stochasticrank:map")

    @pytest.mark.parametrize("kwargs", [{"sigma": 0.0}, {"mu": -1.0}, {"model_shrink_rate": 1.0},
                                        {"diffusion_temperature": 0.0}])
    def test_invalid_config(self, kwargs):
        """Out-of-range StochasticRank settings are rejected"""
        with pytest.raises(ConfigurationError):
            StochasticRankConfig(**kwargs)


class TestObjectives:
    """Loss parsing and objective wrappers"""

    @pytest.mark.parametrize("text,cls", [
        ("query-rmse", QueryRmseObjective),
        ("lambdamart:ndcg@10", LambdaMartObjective),
        ("yetirank", YetiRankObjective),
        ("yetiloss:map", YetiLossObjective),
        ("stochasticrank:mrr", StochasticRankObjective),
    ])
    def test_parse_loss(self, text, cls):
        """Loss strings build the matching objective"""
        assert isinstance(parse_loss(text), cls)

    @pytest.mark.parametrize("text", ["ranknet", "yetirank:ndcg", "lambdamart", "yetiloss:precision"])
    def test_parse_loss_errors(self, text):
        """Unknown or incomplete loss strings are rejected"""
        with pytest.raises(ConfigurationError):
            parse_loss(text)

    def test_target_metric(self):
        """Target metric comes from the loss string"""
        assert parse_loss("yetiloss:ndcg@5").target_metric == MetricSpec(MetricKind.NDCG, k=5)
        assert parse_loss("yetirank").target_metric is None

    def test_expdcg_target_takes_decay(self):
        """ExpDCG targets use the configured decay"""
        assert parse_loss("yetiloss:expdcg", decay=0.6).target_metric.b == 0.6

    @pytest.mark.parametrize("text", ["query-rmse", "lambdamart:ndcg@10", "yetirank", "yetiloss:ndcg@10",
                                      "stochasticrank:ndcg@10"])
    def test_gradients_align_with_documents(self, text, small_dataset):
        """One seeded gradient per document, repeatable"""
        objective = parse_loss(text, seed=3)
        scores = small_dataset.split_scores(np.linspace(0.0, 1.0, small_dataset.document_count))
        first = objective.gradients(scores, small_dataset, 0)
        again = objective.gradients(scores, small_dataset, 0)
        assert first.grad.shape == (small_dataset.document_count,)
        assert np.array_equal(first.grad, again.grad)
        assert np.array_equal(first.hess, again.hess)
        assert objective.gradient_only == (text.startswith("stochasticrank"))
