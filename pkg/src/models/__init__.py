from .oblivious_boosting import BoostConfig, Booster, ObliviousEnsemble, load_model, save_model, train

__all__ = ["BoostConfig", "Booster", "ObliviousEnsemble", "load_model", "save_model", "train"]
