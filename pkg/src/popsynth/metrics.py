"""Synthetic-population quality metrics.

Attribute-level scores (category coverage, TV complement, category adherence),
k-joint distribution comparisons (SRMSE, R^2), the general / sampling-zero /
structural-zero / missing-sample taxonomy with its ratio scores, precision and
recall over combination supports, sampling-level curves, and the 45-degree
chart export.

Rows containing MISSING in any attribute a metric touches are excluded from
that metric only.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .data import MISSING, Dataset
from .errors import SchemaError, UndefinedMetricError, ValidationError


@dataclass(frozen=True)
class Marginal:
    """Per-category probabilities of one attribute."""

    attribute: str
    probabilities: dict[str, float]

    def __post_init__(self):
        total = sum(self.probabilities.values())
        if abs(total - 1.0) > 1e-9:
            raise ValidationError(f"marginal for {self.attribute!r} sums to {total}")


@dataclass(frozen=True)
class JointTable:
    """Sparse k-joint categorical distribution over an attribute subset."""

    attributes: tuple[str, ...]
    probabilities: dict[tuple[int, ...], float]
    n_cells: int  # product of the k category counts

    def __post_init__(self):
        total = sum(self.probabilities.values())
        if abs(total - 1.0) > 1e-9:
            raise ValidationError(f"joint table sums to {total}")

    def support(self) -> set[tuple[int, ...]]:
        return set(self.probabilities)


@dataclass
class Taxonomy:
    """Partition of generated unique combinations plus the never-generated ones."""

    general_samples: set[tuple[int, ...]]
    sampling_zeros: set[tuple[int, ...]]
    structural_zeros: set[tuple[int, ...]]
    missing_samples: set[tuple[int, ...]]
    generated_row_counts: dict[str, int] = field(default_factory=dict)


def _columns(d: Dataset, attributes) -> np.ndarray:
    idx = [d.schema.attribute_index(a) for a in attributes]
    return d.rows[:, idx]


def _complete_combos(d: Dataset, attributes) -> np.ndarray:
    """Rows restricted to the attributes, with MISSING rows dropped."""
    cols = _columns(d, attributes)
    return cols[(cols != MISSING).all(axis=1)]


def _combo_set(d: Dataset, attributes) -> set[tuple[int, ...]]:
    return set(map(tuple, _complete_combos(d, attributes).tolist()))


def marginal(d: Dataset, attribute: str) -> Marginal:
    """Normalized category frequencies; MISSING cells are excluded."""
    j = d.schema.attribute_index(attribute)
    col = d.rows[:, j]
    col = col[col != MISSING]
    if col.size == 0:
        raise UndefinedMetricError(f"no observed values for attribute {attribute!r}")
    cats = d.schema.categories(attribute)
    counts = np.bincount(col, minlength=len(cats))
    probs = counts / counts.sum()
    return Marginal(attribute, {cats[k]: float(probs[k]) for k in range(len(cats))})


def category_coverage(gt: Dataset, syn: Dataset, attribute: str) -> float:
    """Share of ground-truth-observed categories that also occur in syn."""
    _check_shared_schema(gt, syn)
    j = gt.schema.attribute_index(attribute)
    gt_col = gt.rows[:, j]
    gt_cats = set(gt_col[gt_col != MISSING].tolist())
    if not gt_cats:
        raise UndefinedMetricError(f"attribute {attribute!r} unseen in ground truth")
    syn_col = syn.rows[:, j]
    syn_cats = set(syn_col[syn_col != MISSING].tolist())
    return len(gt_cats & syn_cats) / len(gt_cats)


def tv_complement(gt: Dataset, syn: Dataset, attribute: str) -> float:
    """1 minus the total variation distance between the two marginals."""
    _check_shared_schema(gt, syn)
    r = marginal(gt, attribute).probabilities
    s = marginal(syn, attribute).probabilities
    tvd = 0.5 * sum(abs(r.get(c, 0.0) - s.get(c, 0.0)) for c in set(r) | set(s))
    return 1.0 - tvd


def category_adherence(gt: Dataset, syn: Dataset, attribute: str) -> float:
    """Fraction of synthetic cells whose category was observed in ground truth."""
    _check_shared_schema(gt, syn)
    j = gt.schema.attribute_index(attribute)
    gt_col = gt.rows[:, j]
    observed = set(gt_col[gt_col != MISSING].tolist())
    syn_col = syn.rows[:, j]
    syn_col = syn_col[syn_col != MISSING]
    if syn_col.size == 0:
        raise UndefinedMetricError(f"no synthetic values for attribute {attribute!r}")
    ok = np.isin(syn_col, list(observed)).sum()
    return float(ok) / syn_col.size


def joint_table(d: Dataset, attributes) -> JointTable:
    """Sparse normalized k-joint over the selected attributes."""
    attributes = tuple(attributes)
    if len(attributes) < 1:
        raise ValidationError("need at least one attribute for a joint")
    combos = _complete_combos(d, attributes)
    if combos.shape[0] == 0:
        raise UndefinedMetricError("all rows excluded by missingness")
    uniq, counts = np.unique(combos, axis=0, return_counts=True)
    total = counts.sum()
    probs = {tuple(map(int, u)): float(c / total) for u, c in zip(uniq, counts)}
    n_cells = int(np.prod([len(d.schema.categories(a)) for a in attributes]))
    return JointTable(attributes, probs, n_cells)


def _check_same_subset(gt: JointTable, syn: JointTable) -> None:
    if gt.attributes != syn.attributes or gt.n_cells != syn.n_cells:
        raise ValidationError("joint tables are over different attribute subsets")


def _check_shared_schema(a: Dataset, b: Dataset) -> None:
    if a.schema != b.schema:
        raise SchemaError("datasets do not share a schema")


def srmse(gt: JointTable, syn: JointTable) -> float:
    """RMSE over all cells (absent = 0) divided by the mean cell probability."""
    _check_same_subset(gt, syn)
    keys = gt.support() | syn.support()
    sq = sum(
        (gt.probabilities.get(k, 0.0) - syn.probabilities.get(k, 0.0)) ** 2
        for k in keys
    )
    rmse = np.sqrt(sq / gt.n_cells)
    mean_cell = 1.0 / gt.n_cells
    return float(rmse / mean_cell)


def r_squared(gt: JointTable, syn: JointTable) -> float:
    """1 - SS_res / SS_tot over all cells, with the uniform cell mean as baseline."""
    _check_same_subset(gt, syn)
    pi_bar = 1.0 / gt.n_cells
    keys = gt.support() | syn.support()
    ss_res = sum(
        (gt.probabilities.get(k, 0.0) - syn.probabilities.get(k, 0.0)) ** 2
        for k in keys
    )
    # cells outside both supports contribute (0 - pi_bar)^2 to the total sum
    ss_tot = sum((gt.probabilities.get(k, 0.0) - pi_bar) ** 2 for k in gt.support())
    ss_tot += (gt.n_cells - len(gt.support())) * pi_bar ** 2
    if ss_tot == 0.0:
        raise UndefinedMetricError("ground truth is uniform over all cells; R^2 undefined")
    return 1.0 - ss_res / ss_tot


def classify_taxonomy(gt: Dataset, train: Dataset, gen: Dataset,
                      attributes) -> Taxonomy:
    """Partition generated unique combinations against ground truth and training."""
    _check_shared_schema(gt, train)
    _check_shared_schema(gt, gen)
    attributes = tuple(attributes)
    gt_set = _combo_set(gt, attributes)
    train_set = _combo_set(train, attributes)
    gen_combos = _complete_combos(gen, attributes).tolist()
    gen_set = set(map(tuple, gen_combos))
    general = gen_set & gt_set & train_set
    sampling = (gen_set & gt_set) - train_set
    structural = gen_set - gt_set
    missing = train_set - gen_set
    counts = {"general": 0, "sampling_zero": 0, "structural_zero": 0}
    for row in map(tuple, gen_combos):
        if row in general:
            counts["general"] += 1
        elif row in sampling:
            counts["sampling_zero"] += 1
        else:
            counts["structural_zero"] += 1
    return Taxonomy(general, sampling, structural, missing, counts)


def zero_scores(t: Taxonomy, gt: Dataset, train: Dataset, gen: Dataset,
                attributes) -> tuple[float, float, float]:
    """(score_gs, score_sz, score_stz) ratios for a computed taxonomy."""
    attributes = tuple(attributes)
    gt_set = _combo_set(gt, attributes)
    train_set = _combo_set(train, attributes)
    gen_set = _combo_set(gen, attributes)
    gs_denom = len(gt_set & train_set)
    sz_denom = len(gt_set - train_set)
    c_generated = len(gen_set)
    if gs_denom == 0 or sz_denom == 0 or c_generated == 0:
        raise UndefinedMetricError("zero denominator in taxonomy ratio")
    return (
        len(t.general_samples) / gs_denom,
        len(t.sampling_zeros) / sz_denom,
        len(t.structural_zeros) / c_generated,
    )


def precision_recall(gt: JointTable, gen: JointTable) -> tuple[float, float]:
    """Support precision (over generated combos) and recall (over gt combos)."""
    _check_same_subset(gt, gen)
    gt_sup, gen_sup = gt.support(), gen.support()
    if not gt_sup or not gen_sup:
        raise UndefinedMetricError("empty combination support")
    precision = len(gen_sup & gt_sup) / len(gen_sup)
    recall = len(gt_sup & gen_sup) / len(gt_sup)
    return precision, recall


def sampling_curve(gt: Dataset, train: Dataset, source, attributes,
                   levels, seed: int) -> list[dict]:
    """Taxonomy ratios and precision/recall at increasing generated sample sizes.

    ``source`` is either a callable (n, seed) -> Dataset drawing fresh rows, or
    a Dataset pool from which seeded subsamples without replacement are taken.
    """
    levels = list(levels)
    if any(b < a for a, b in zip(levels, levels[1:])):
        raise ValidationError("levels must be ascending")
    attributes = tuple(attributes)
    gt_joint = joint_table(gt, attributes)
    records = []
    for i, level in enumerate(levels):
        if callable(source):
            gen = source(level, seed + i)
        else:
            if level > source.n_rows:
                raise ValidationError(f"level {level} exceeds the generated pool")
            rng = np.random.default_rng([seed, i])
            idx = rng.choice(source.n_rows, size=level, replace=False)
            gen = Dataset(source.schema, source.rows[idx])
        tax = classify_taxonomy(gt, train, gen, attributes)
        gs, sz, stz = zero_scores(tax, gt, train, gen, attributes)
        prec, rec = precision_recall(gt_joint, joint_table(gen, attributes))
        records.append({
            "level": level, "score_gs": gs, "score_sz": sz, "score_stz": stz,
            "precision": prec, "recall": rec,
        })
    return records


def export_forty_five_degree(gt: JointTable, syn: JointTable, path) -> None:
    """CSV of (combination, gt_prob, syn_prob) over the union of supports."""
    _check_same_subset(gt, syn)
    keys = sorted(gt.support() | syn.support())
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["combination", "gt_prob", "syn_prob"])
        for key in keys:
            writer.writerow([
                "|".join(map(str, key)),
                repr(gt.probabilities.get(key, 0.0)),
                repr(syn.probabilities.get(key, 0.0)),
            ])


def evaluation_report(gt: Dataset, train: Dataset, syn: Dataset,
                      joint_subsets, levels, seed: int) -> dict:
    """Machine-readable metric report covering all evaluation families.

    Undefined metrics are recorded as null with a reason rather than omitted.
    """
    report = {"attribute_level": [], "joints": [], "sampling_curves": []}

    def guarded(fn, *args):
        try:
            return {"value": fn(*args), "reason": None}
        except UndefinedMetricError as exc:
            return {"value": None, "reason": str(exc)}

    for attr in gt.schema.names:
        report["attribute_level"].append({
            "attribute": attr,
            "category_coverage": guarded(category_coverage, gt, syn, attr),
            "tv_complement": guarded(tv_complement, gt, syn, attr),
            "category_adherence": guarded(category_adherence, gt, syn, attr),
        })

    for attrs in joint_subsets:
        attrs = tuple(attrs)
        gt_j = joint_table(gt, attrs)
        syn_j = joint_table(syn, attrs)
        tax = classify_taxonomy(gt, train, syn, attrs)
        entry = {
            "attributes": list(attrs),
            "k": len(attrs),
            "n_cells": gt_j.n_cells,
            "gt_combinations": len(gt_j.support()),
            "syn_combinations": len(syn_j.support()),
            "srmse": guarded(srmse, gt_j, syn_j),
            "r_squared": guarded(r_squared, gt_j, syn_j),
            "taxonomy_counts": {
                "general": len(tax.general_samples),
                "sampling_zero": len(tax.sampling_zeros),
                "structural_zero": len(tax.structural_zeros),
                "missing": len(tax.missing_samples),
            },
        }
        try:
            gs, sz, stz = zero_scores(tax, gt, train, syn, attrs)
            entry["zero_scores"] = {"score_gs": gs, "score_sz": sz, "score_stz": stz}
        except UndefinedMetricError as exc:
            entry["zero_scores"] = {"value": None, "reason": str(exc)}
        entry["precision_recall"] = guarded(precision_recall, gt_j, syn_j)
        report["joints"].append(entry)

        if levels:
            usable = [lv for lv in levels if lv <= syn.n_rows]
            if usable:
                try:
                    records = sampling_curve(gt, train, syn, attrs, usable, seed)
                    reason = None
                except UndefinedMetricError as exc:
                    records, reason = [], str(exc)
                report["sampling_curves"].append({
                    "attributes": list(attrs),
                    "records": records,
                    "reason": reason,
                })
    return report


# published structure of the evaluation report JSON
REPORT_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["attribute_level", "joints", "sampling_curves"],
    "definitions": {
        "guarded": {
            "type": "object",
            "required": ["value", "reason"],
            "properties": {
                "value": {"type": ["number", "array", "null"]},
                "reason": {"type": ["string", "null"]},
            },
        },
    },
    "properties": {
        "attribute_level": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["attribute", "category_coverage", "tv_complement",
                             "category_adherence"],
                "properties": {
                    "attribute": {"type": "string"},
                    "category_coverage": {"$ref": "#/definitions/guarded"},
                    "tv_complement": {"$ref": "#/definitions/guarded"},
                    "category_adherence": {"$ref": "#/definitions/guarded"},
                },
            },
        },
        "joints": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["attributes", "k", "n_cells", "gt_combinations",
                             "syn_combinations", "srmse", "r_squared",
                             "taxonomy_counts"],
                "properties": {
                    "attributes": {"type": "array", "items": {"type": "string"}},
                    "k": {"type": "integer"},
                    "n_cells": {"type": "integer"},
                    "gt_combinations": {"type": "integer"},
                    "syn_combinations": {"type": "integer"},
                    "srmse": {"$ref": "#/definitions/guarded"},
                    "r_squared": {"$ref": "#/definitions/guarded"},
                },
            },
        },
        "sampling_curves": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["attributes", "records"],
                "properties": {
                    "records": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["level", "score_gs", "score_sz",
                                         "score_stz", "precision", "recall"],
                        },
                    },
                },
            },
        },
    },
}


def save_report(report: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
