from .harness import (
    PairedTTest,
    RankingHarness,
    TrainingData,
    UsageError,
    load_dataset,
    load_training_data,
    paired_t_test,
    sample_trial_config,
    student_t_sf,
)

__all__ = [
    "PairedTTest",
    "RankingHarness",
    "TrainingData",
    "UsageError",
    "load_dataset",
    "load_training_data",
    "paired_t_test",
    "sample_trial_config",
    "student_t_sf",
]
