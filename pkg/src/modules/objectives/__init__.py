from .objectives import (
    GradientBuffer,
    LambdaMartObjective,
    Objective,
    PairwiseWeights,
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
    logistic_noise,
    pairwise_surrogate_value_grad,
    parse_loss,
    query_rmse_gradients,
    query_rng,
    stochasticrank_ccs_gradient_draws,
    stochasticrank_ccs_gradients,
    yetiloss_weights,
    yetirank_weights,
)

__all__ = [
    "GradientBuffer",
    "LambdaMartObjective",
    "Objective",
    "PairwiseWeights",
    "QueryRmseObjective",
    "SmoothingConfig",
    "SmoothingDistribution",
    "StochasticRankConfig",
    "StochasticRankObjective",
    "YetiLossObjective",
    "YetiRankObjective",
    "ccs_crossing_factors",
    "draw_smoothing_noise",
    "lambdamart_weights",
    "logistic_noise",
    "pairwise_surrogate_value_grad",
    "parse_loss",
    "query_rmse_gradients",
    "query_rng",
    "stochasticrank_ccs_gradient_draws",
    "stochasticrank_ccs_gradients",
    "yetiloss_weights",
    "yetirank_weights",
]
