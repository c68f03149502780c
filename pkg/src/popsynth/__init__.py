"""Masked WGAN-GP population synthesis for categorical microdata."""

from .data import (
    MISSING,
    CategoricalSchema,
    CorruptionSpec,
    Dataset,
    DatasetStats,
    compute_stats,
    decode,
    encode,
    generate_toy_population,
    inject_missingness,
    load_dataset,
    remove_combinations,
    replicate_by_weight,
    sample_fraction,
)
from .wgan import (
    CriticNet,
    GeneratorNet,
    TrainingConfig,
    TrainingLog,
    generate_population,
    load_checkpoint,
    save_checkpoint,
    train,
)

__all__ = [
    "MISSING",
    "CategoricalSchema",
    "CorruptionSpec",
    "CriticNet",
    "Dataset",
    "DatasetStats",
    "GeneratorNet",
    "TrainingConfig",
    "TrainingLog",
    "compute_stats",
    "decode",
    "encode",
    "generate_population",
    "generate_toy_population",
    "inject_missingness",
    "load_checkpoint",
    "load_dataset",
    "remove_combinations",
    "replicate_by_weight",
    "sample_fraction",
    "save_checkpoint",
    "train",
]

__version__ = "0.1.0"
