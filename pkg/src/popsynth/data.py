"""Categorical data model: schema, datasets, one-hot encoding with missingness masks,
the corruption protocol used to build incomplete training sets, and a toy
ground-truth population generator for desk-scale experiments.

Conventions:
- A dataset cell is an integer category index; MISSING (-1) marks an absent value.
- Encoded matrices are row-major float64 with one block of columns per attribute;
  a present cell becomes a one-hot block, a missing cell an all-zero block.
- The mask matrix is the same shape, 1 where the value is present and 0 where
  missing, constant within each attribute block of a row.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DecodeError, FormatError, SchemaError, ValidationError

MISSING = -1

# reserved CSV column holding per-row replication weights
WEIGHT_COLUMN = "weight"


@dataclass(frozen=True)
class CategoricalSchema:
    """Ordered attribute/category vocabulary fixing the encoding layout."""

    attributes: tuple[tuple[str, tuple[str, ...]], ...]

    def __post_init__(self):
        names = [name for name, _ in self.attributes]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate attribute names in schema")
        for name, cats in self.attributes:
            if len(cats) < 2:
                raise SchemaError(f"attribute {name!r} has fewer than 2 categories")
            if len(set(cats)) != len(cats):
                raise SchemaError(f"duplicate category labels in attribute {name!r}")

    @property
    def names(self) -> list[str]:
        return [name for name, _ in self.attributes]

    @property
    def n_attributes(self) -> int:
        return len(self.attributes)

    def categories(self, name: str) -> tuple[str, ...]:
        for attr, cats in self.attributes:
            if attr == name:
                return cats
        raise SchemaError(f"unknown attribute {name!r}")

    def attribute_index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise SchemaError(f"unknown attribute {name!r}") from None

    @property
    def block_sizes(self) -> list[int]:
        return [len(cats) for _, cats in self.attributes]

    @property
    def total_width(self) -> int:
        return sum(self.block_sizes)

    @property
    def block_slices(self) -> list[slice]:
        slices, start = [], 0
        for width in self.block_sizes:
            slices.append(slice(start, start + width))
            start += width
        return slices

    def to_json(self) -> str:
        doc = {"attributes": [{"name": n, "categories": list(c)} for n, c in self.attributes]}
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "CategoricalSchema":
        try:
            doc = json.loads(text)
            attrs = tuple(
                (a["name"], tuple(a["categories"])) for a in doc["attributes"]
            )
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise FormatError(f"bad schema document: {exc}") from exc
        return cls(attrs)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "CategoricalSchema":
        return cls.from_json(Path(path).read_text())

    def digest(self) -> str:
        """Stable hash of the encoding layout, used to guard checkpoints."""
        canon = json.dumps(
            [[n, list(c)] for n, c in self.attributes], separators=(",", ":")
        )
        return hashlib.sha256(canon.encode()).hexdigest()


@dataclass
class Dataset:
    """Rows of category indices (MISSING allowed) with optional weights."""

    schema: CategoricalSchema
    rows: np.ndarray  # (n_rows, n_attributes) int64, MISSING = -1
    weights: np.ndarray | None = None  # (n_rows,) float64 or None

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.int64)
        if self.rows.ndim != 2 or (
            self.rows.size and self.rows.shape[1] != self.schema.n_attributes
        ):
            raise SchemaError("row length must equal the schema attribute count")
        if self.rows.size == 0:
            self.rows = self.rows.reshape(0, self.schema.n_attributes)
        sizes = np.array(self.schema.block_sizes)
        bad = (self.rows != MISSING) & (
            (self.rows < 0) | (self.rows >= sizes[None, :])
        )
        if bad.any():
            raise SchemaError("category index out of range")
        if self.weights is not None:
            self.weights = np.asarray(self.weights, dtype=np.float64)
            if self.weights.shape != (self.rows.shape[0],):
                raise SchemaError("weights length must equal the row count")
            if (self.weights < 0).any():
                raise ValidationError("negative row weight")

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        if self.schema != other.schema or not np.array_equal(self.rows, other.rows):
            return False
        if (self.weights is None) != (other.weights is None):
            return False
        return self.weights is None or np.array_equal(self.weights, other.weights)

    def labels(self) -> list[list[str]]:
        """Rows as category labels; missing cells become empty strings."""
        out = []
        cats = [c for _, c in self.schema.attributes]
        for row in self.rows:
            out.append(
                ["" if v == MISSING else cats[j][v] for j, v in enumerate(row)]
            )
        return out

    def save(self, path) -> None:
        """Write the dataset as a header-row CSV; empty cell = missing."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            header = list(self.schema.names)
            if self.weights is not None:
                header.append(WEIGHT_COLUMN)
            writer.writerow(header)
            cats = [c for _, c in self.schema.attributes]
            for i, row in enumerate(self.rows):
                cells = ["" if v == MISSING else cats[j][v] for j, v in enumerate(row)]
                if self.weights is not None:
                    w = self.weights[i]
                    cells.append(repr(float(w)))
                writer.writerow(cells)


@dataclass(frozen=True)
class DatasetStats:
    """Table-style dataset summary (rows, categories, combination and missing counts)."""

    n_rows: int
    n_attributes: int
    n_categories: int
    n_unique_combinations: int
    missing_fraction_per_attribute: dict[str, float]
    rows_with_any_missing: int
    rows_with_any_missing_fraction: float

    def to_json(self) -> str:
        doc = {
            "rows": self.n_rows,
            "attributes": self.n_attributes,
            "categories": self.n_categories,
            "unique_combinations": self.n_unique_combinations,
            "missing_attributes": sorted(
                a for a, f in self.missing_fraction_per_attribute.items() if f > 0
            ),
            "missing_pct_per_attribute": {
                a: 100.0 * f for a, f in self.missing_fraction_per_attribute.items()
            },
            "missing_rows": self.rows_with_any_missing,
            "missing_rows_pct": 100.0 * self.rows_with_any_missing_fraction,
        }
        return json.dumps(doc, indent=2)


@dataclass(frozen=True)
class CorruptionSpec:
    """Which attributes lose values, at what rate, under which seed."""

    target_attributes: tuple[str, ...]
    missing_rate: float
    seed: int

    def __post_init__(self):
        if len(self.target_attributes) < 1:
            raise ValidationError("corruption needs at least one target attribute")
        if not (0.0 < self.missing_rate < 1.0):
            raise ValidationError("missing rate must lie in (0, 1)")


def load_dataset(path, schema: CategoricalSchema | None = None) -> Dataset:
    """Read a header-row CSV into a Dataset.

    Empty cells become MISSING. A column named ``weight`` is treated as the
    per-row weight. Without an explicit schema, one is inferred with
    lexicographic category order.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        raw = list(reader)

    weight_idx = None
    names = []
    for i, col in enumerate(header):
        if col == WEIGHT_COLUMN:
            if weight_idx is not None:
                raise FormatError(f"{path}: duplicate weight column")
            weight_idx = i
        else:
            names.append(col)
    attr_cols = [i for i in range(len(header)) if i != weight_idx]

    for lineno, row in enumerate(raw, start=2):
        if len(row) != len(header):
            raise FormatError(f"{path}:{lineno}: ragged row")

    if schema is None:
        observed: list[set[str]] = [set() for _ in names]
        for row in raw:
            for j, i in enumerate(attr_cols):
                if row[i] != "":
                    observed[j].add(row[i])
        attrs = tuple(
            (name, tuple(sorted(obs))) for name, obs in zip(names, observed)
        )
        schema = CategoricalSchema(attrs)
    else:
        if names != schema.names:
            raise SchemaError(
                f"{path}: header {names} does not match schema attributes {schema.names}"
            )

    lookup = [
        {label: k for k, label in enumerate(cats)} for _, cats in schema.attributes
    ]
    rows = np.full((len(raw), len(names)), MISSING, dtype=np.int64)
    weights = np.ones(len(raw)) if weight_idx is not None else None
    for r, row in enumerate(raw):
        for j, i in enumerate(attr_cols):
            cell = row[i]
            if cell == "":
                continue
            try:
                rows[r, j] = lookup[j][cell]
            except KeyError:
                raise SchemaError(
                    f"{path}:{r + 2}: label {cell!r} not in schema attribute {names[j]!r}"
                ) from None
        if weight_idx is not None:
            try:
                weights[r] = float(row[weight_idx])
            except ValueError:
                raise FormatError(f"{path}:{r + 2}: unparseable weight") from None
    return Dataset(schema, rows, weights)


def replicate_by_weight(d: Dataset) -> Dataset:
    """Expand each row into round(weight) copies; the result is unweighted."""
    if d.weights is None:
        raise ValidationError("dataset has no weights to replicate by")
    counts = np.rint(d.weights).astype(np.int64)
    rows = np.repeat(d.rows, counts, axis=0)
    return Dataset(d.schema, rows)


def encode(d: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """One-hot encode a dataset into (matrix, mask), both (n_rows, total_width).

    Missing cells produce an all-zero block in the matrix and in the mask;
    every other mask entry is 1.
    """
    n = d.n_rows
    width = d.schema.total_width
    matrix = np.zeros((n, width))
    mask = np.ones((n, width))
    offsets = np.cumsum([0] + d.schema.block_sizes[:-1])
    for j, (off, blk) in enumerate(zip(offsets, d.schema.block_slices)):
        col = d.rows[:, j]
        present = col != MISSING
        matrix[np.nonzero(present)[0], off + col[present]] = 1.0
        mask[~present, blk] = 0.0
    return matrix, mask


def decode(
    encoded: np.ndarray,
    schema: CategoricalSchema,
    mode: str = "argmax",
    seed: int = 0,
) -> Dataset:
    """Map per-block probability rows back to category indices.

    ``argmax`` takes the per-block maximum (lowest index on ties); ``sample``
    draws one category per block proportional to the block values. Rows must
    be non-negative with non-zero block sums.
    """
    encoded = np.asarray(encoded, dtype=np.float64)
    if encoded.ndim != 2 or encoded.shape[1] != schema.total_width:
        raise SchemaError("encoded width does not match schema total_width")
    if mode not in ("argmax", "sample"):
        raise ValidationError(f"unknown decode mode {mode!r}")
    if (encoded < 0).any():
        raise DecodeError("negative entry in encoded matrix")
    rng = np.random.default_rng(seed)
    n = encoded.shape[0]
    rows = np.empty((n, schema.n_attributes), dtype=np.int64)
    for j, blk in enumerate(schema.block_slices):
        block = encoded[:, blk]
        sums = block.sum(axis=1)
        if (sums <= 0).any():
            raise DecodeError(f"all-zero block for attribute {schema.names[j]!r}")
        if mode == "argmax":
            rows[:, j] = np.argmax(block, axis=1)
        else:
            probs = block / sums[:, None]
            cum = np.cumsum(probs, axis=1)
            u = rng.random(n)
            rows[:, j] = np.minimum(
                (u[:, None] >= cum).sum(axis=1), block.shape[1] - 1
            )
    return Dataset(schema, rows)


def inject_missingness(d: Dataset, spec: CorruptionSpec) -> Dataset:
    """Blank exactly round(r * n_rows) cells per target attribute, MCAR.

    Each target attribute is corrupted independently; the draw for each
    attribute depends only on (seed, attribute), so adding a target does not
    perturb the others.
    """
    n = d.n_rows
    rows = d.rows.copy()
    for name in spec.target_attributes:
        j = d.schema.attribute_index(name)
        if (d.rows[:, j] == MISSING).any():
            raise ValidationError(
                f"target attribute {name!r} already has missing cells"
            )
        k = int(round(spec.missing_rate * n))
        rng = np.random.default_rng([spec.seed, j])
        hit = rng.choice(n, size=k, replace=False)
        rows[hit, j] = MISSING
    return Dataset(d.schema, rows, d.weights.copy() if d.weights is not None else None)


def sample_fraction(d: Dataset, fraction: float, seed: int) -> Dataset:
    """Uniform row sample without replacement of round(fraction * n_rows) rows."""
    if not (0.0 < fraction <= 1.0):
        raise ValidationError("fraction must lie in (0, 1]")
    if d.n_rows == 0:
        raise ValidationError("cannot sample from an empty dataset")
    k = int(round(fraction * d.n_rows))
    rng = np.random.default_rng(seed)
    idx = rng.choice(d.n_rows, size=k, replace=False)
    w = d.weights[idx] if d.weights is not None else None
    return Dataset(d.schema, d.rows[idx], w)


def _combo_view(rows: np.ndarray) -> np.ndarray:
    """Unique-combination helper: view rows as single void records."""
    a = np.ascontiguousarray(rows)
    return a.view([("", a.dtype)] * a.shape[1]).ravel()


def unique_combinations(d: Dataset) -> np.ndarray:
    """Unique full-attribute rows (MISSING counts as its own value)."""
    if d.n_rows == 0:
        return d.rows.copy()
    _, idx = np.unique(_combo_view(d.rows), return_index=True)
    return d.rows[np.sort(idx)]


def remove_combinations(d: Dataset, n_remove: int, seed: int) -> Dataset:
    """Delete all rows of n_remove uniformly chosen unique attribute combinations."""
    combos = unique_combinations(d)
    if n_remove < 0:
        raise ValidationError("n_remove must be non-negative")
    if n_remove >= len(combos):
        raise ValidationError(
            f"n_remove={n_remove} not below the {len(combos)} unique combinations"
        )
    if n_remove == 0:
        w = d.weights.copy() if d.weights is not None else None
        return Dataset(d.schema, d.rows.copy(), w)
    rng = np.random.default_rng(seed)
    chosen = combos[rng.choice(len(combos), size=n_remove, replace=False)]
    doomed = np.isin(_combo_view(d.rows), _combo_view(chosen))
    keep = ~doomed
    w = d.weights[keep] if d.weights is not None else None
    return Dataset(d.schema, d.rows[keep], w)


def compute_stats(d: Dataset) -> DatasetStats:
    missing = d.rows == MISSING
    frac = {
        name: float(missing[:, j].mean()) if d.n_rows else 0.0
        for j, name in enumerate(d.schema.names)
    }
    any_missing = int(missing.any(axis=1).sum())
    return DatasetStats(
        n_rows=d.n_rows,
        n_attributes=d.schema.n_attributes,
        n_categories=d.schema.total_width,
        n_unique_combinations=len(unique_combinations(d)),
        missing_fraction_per_attribute=frac,
        rows_with_any_missing=any_missing,
        rows_with_any_missing_fraction=any_missing / d.n_rows if d.n_rows else 0.0,
    )


def generate_toy_population(
    n_rows: int,
    n_attributes: int,
    categories_per_attribute: list[int],
    n_latent_classes: int,
    seed: int,
) -> Dataset:
    """Draw a synthetic ground-truth population from a latent-class mixture.

    Each row samples a latent class, then each attribute independently from a
    class-specific categorical distribution (Dirichlet-drawn at seed time).
    Two or more classes induce inter-attribute dependence.
    """
    if n_latent_classes < 1:
        raise ValidationError("need at least one latent class")
    if len(categories_per_attribute) != n_attributes:
        raise ValidationError("categories_per_attribute length must equal n_attributes")
    rng = np.random.default_rng(seed)
    attrs = tuple(
        (f"a{j}", tuple(f"c{k}" for k in range(c)))
        for j, c in enumerate(categories_per_attribute)
    )
    schema = CategoricalSchema(attrs)
    class_probs = rng.dirichlet(np.full(n_latent_classes, 5.0))
    # low concentration makes the class-conditional distributions distinct
    # and keeps the joint support compact, so a population has far fewer
    # attainable combinations than the full Cartesian product
    tables = [
        rng.dirichlet(np.full(c, 0.3), size=n_latent_classes)
        for c in categories_per_attribute
    ]
    classes = rng.choice(n_latent_classes, size=n_rows, p=class_probs)
    rows = np.empty((n_rows, n_attributes), dtype=np.int64)
    for j, c in enumerate(categories_per_attribute):
        cum = np.cumsum(tables[j][classes], axis=1)
        u = rng.random(n_rows)
        rows[:, j] = np.minimum((u[:, None] >= cum).sum(axis=1), c - 1)
    return Dataset(schema, rows)
