"""Walk through the data layer: a toy population, sampling, combination
removal, missingness injection, and the one-hot encoding with its mask.

Run:  python3 demos/01_data_preparation.py
"""

import numpy as np

from popsynth.data import (
    MISSING,
    CorruptionSpec,
    compute_stats,
    encode,
    generate_toy_population,
    inject_missingness,
    remove_combinations,
    sample_fraction,
    unique_combinations,
)

# A latent-class toy population: 20k rows, 4 attributes with 5/5/4/3
# categories, 3 hidden classes that induce attribute correlations.
gt = generate_toy_population(20_000, 4, [5, 5, 4, 3], 3, seed=7)
print("ground truth:", gt.n_rows, "rows,", len(gt.schema.names), "attributes")
print("distinct combinations:", len(unique_combinations(gt)))

# Training data is a 10% sample with 50 combinations deliberately removed,
# so the generator has genuine sampling zeros to rediscover.
train = sample_fraction(gt, 0.10, seed=1)
train = remove_combinations(train, 50, seed=2)
print("training set:", train.n_rows, "rows,",
      len(unique_combinations(train)), "combinations")

# Blank 10% of the cells in the first two attributes (MCAR).
spec = CorruptionSpec(tuple(gt.schema.names[:2]), 0.10, seed=3)
corrupted = inject_missingness(train, spec)
stats = compute_stats(corrupted)
print("missing-cell rates:",
      {k: round(v, 3)
       for k, v in stats.missing_fraction_per_attribute.items()})
print("rows with >=1 missing cell:",
      round((corrupted.rows == MISSING).any(axis=1).mean(), 4),
      "(expected 1 - 0.9^2 =", round(1 - 0.9**2, 4), ")")

# The encoding: one-hot blocks per attribute; a missing cell becomes an
# all-zero block, and the mask is zero exactly on that block.
x, y = encode(corrupted)
print("encoded matrix:", x.shape, " mask zeros:", int((y == 0).sum()))
row = np.argmax((corrupted.rows == MISSING).any(axis=1))
print("first row with a missing cell:", corrupted.rows[row], "->", x[row])
