from .booster import Booster, BoostConfig, TrainingLog, TrainingResult, train
from .ensemble import (
    MODEL_FORMAT_VERSION,
    ModelFormatError,
    ModelVersionError,
    ObliviousEnsemble,
    load_model,
    model_from_text,
    model_to_text,
    predict,
    save_model,
)
from .feature_bins import FeatureBins, bin_features, build_bins
from .oblivious_tree import NULL_FEATURE, ObliviousTree, fit_tree

__all__ = [
    "MODEL_FORMAT_VERSION",
    "NULL_FEATURE",
    "BoostConfig",
    "Booster",
    "FeatureBins",
    "ModelFormatError",
    "ModelVersionError",
    "ObliviousEnsemble",
    "ObliviousTree",
    "TrainingLog",
    "TrainingResult",
    "bin_features",
    "build_bins",
    "fit_tree",
    "load_model",
    "model_from_text",
    "model_to_text",
    "predict",
    "save_model",
    "train",
]
