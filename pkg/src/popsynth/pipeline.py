"""Experiment pipeline: flat-key config files, per-stage seed derivation, and
the staged orchestration behind the ``run-experiment`` command.

Stage seeds are derived from the global seed by hashing the stage name, so
adding or removing one corruption spec leaves every other stage's randomness
untouched.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from . import metrics
from .data import (
    CategoricalSchema,
    CorruptionSpec,
    Dataset,
    compute_stats,
    generate_toy_population,
    inject_missingness,
    load_dataset,
    remove_combinations,
    sample_fraction,
)
from .errors import FormatError, ValidationError
from .wgan import TrainingConfig, generate_population, load_checkpoint, save_checkpoint, train


def stage_seed(global_seed: int, stage: str) -> int:
    """Stable per-stage seed from the global seed and stage name."""
    h = hashlib.sha256(f"{global_seed}:{stage}".encode()).digest()
    return int.from_bytes(h[:8], "little") % (2**63)


@dataclass
class PipelineConfig:
    """Everything one experiment run needs, parsed from a key=value file."""

    seed: int = 0
    out_dir: str = "run"
    gt_csv: str | None = None
    gt_schema: str | None = None
    toy_rows: int = 100_000
    toy_attributes: int = 8
    toy_categories: list[int] = field(default_factory=lambda: [5] * 8)
    toy_latent_classes: int = 4
    sample_fraction: float = 0.1
    remove_combinations: int = 200
    corruptions: list[tuple[list[str] | int, float]] = field(default_factory=list)
    joints: list[list[str]] = field(default_factory=list)
    levels: list[int] = field(default_factory=list)
    generate_n: int | None = None
    generate_mode: str = "sample"
    training: TrainingConfig = field(default_factory=TrainingConfig)


_TRAINING_KEYS = {
    "epochs": int, "batch_size": int, "critic_updates": int, "latent_dim": int,
    "hidden_layers": int, "hidden_units": int, "learning_rate": float,
    "lambda_gp": float, "lambda_bd": float, "lambda_ad": float,
    "leaky_slope": float, "beta1": float, "beta2": float, "epsilon": float,
}


def parse_config(path) -> PipelineConfig:
    """Parse a flat key=value config file ('#' starts a comment)."""
    cfg = PipelineConfig()
    training_kwargs = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"{path}:{lineno}: expected key = value")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        try:
            if key in _TRAINING_KEYS:
                training_kwargs[key] = _TRAINING_KEYS[key](value)
            elif key == "reference_size":
                training_kwargs[key] = None if value.lower() == "all" else int(value)
            elif key == "seed":
                cfg.seed = int(value)
            elif key == "out_dir":
                cfg.out_dir = value
            elif key == "gt_csv":
                cfg.gt_csv = value
            elif key == "gt_schema":
                cfg.gt_schema = value
            elif key == "toy_rows":
                cfg.toy_rows = int(value)
            elif key == "toy_latent_classes":
                cfg.toy_latent_classes = int(value)
            elif key == "toy_categories":
                cfg.toy_categories = [int(v) for v in value.split(",") if v]
                cfg.toy_attributes = len(cfg.toy_categories)
            elif key == "sample_fraction":
                cfg.sample_fraction = float(value)
            elif key == "remove_combinations":
                cfg.remove_combinations = int(value)
            elif key == "corruptions":
                cfg.corruptions = _parse_corruptions(value)
            elif key == "joints":
                cfg.joints = [
                    [a for a in part.split("+") if a]
                    for part in value.split(";") if part
                ]
            elif key == "levels":
                cfg.levels = [int(v) for v in value.split(",") if v]
            elif key == "generate_n":
                cfg.generate_n = int(value)
            elif key == "generate_mode":
                cfg.generate_mode = value
            else:
                raise FormatError(f"{path}:{lineno}: unknown key {key!r}")
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: bad value for {key!r}: {exc}") from exc
    cfg.training = TrainingConfig(**training_kwargs)
    return cfg


def _parse_corruptions(value: str) -> list[tuple[list[str] | int, float]]:
    """'2:0.10,2:0.40' (first-q attributes) or 'a0+a3:0.10' (explicit names)."""
    specs = []
    for part in value.split(","):
        part = part.strip()
        if not part:
            continue
        targets, _, rate = part.partition(":")
        if not rate:
            raise ValueError(f"corruption {part!r} missing rate")
        if "+" in targets or not targets.isdigit():
            specs.append(([a for a in targets.split("+") if a], float(rate)))
        else:
            specs.append((int(targets), float(rate)))
    return specs


def _corruption_spec(cfg: PipelineConfig, schema: CategoricalSchema,
                     targets, rate: float) -> CorruptionSpec:
    if isinstance(targets, int):
        names = tuple(schema.names[:targets])
    else:
        names = tuple(targets)
    label = f"miss-{len(names)}-{int(round(rate * 100))}"
    return CorruptionSpec(names, rate, stage_seed(cfg.seed, f"corrupt:{label}"))


def corruption_label(targets, rate: float) -> str:
    q = targets if isinstance(targets, int) else len(targets)
    return f"miss-{q}-{int(round(rate * 100))}"


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class ExperimentRunner:
    """Runs the staged experiment into one output directory.

    Stages: toy ground truth (or load), training-set preparation, one training
    per variant, one generated population per model, and the evaluation sweep.
    Fails fast on the first stage error, leaving a manifest of completed stages.
    """

    def __init__(self, cfg: PipelineConfig, out_dir=None):
        self.cfg = cfg
        self.out = Path(out_dir or cfg.out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.manifest = {
            "seed": cfg.seed,
            "stages_completed": [],
            "inputs": {},
            "outputs": {},
        }

    def _write_manifest(self):
        with open(self.out / "manifest.json", "w") as fh:
            json.dump(self.manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def _mark(self, stage: str):
        self.manifest["stages_completed"].append(stage)
        self._write_manifest()

    # -- stages -------------------------------------------------------------

    def ground_truth(self) -> Dataset:
        if self.cfg.gt_csv:
            schema = (CategoricalSchema.load(self.cfg.gt_schema)
                      if self.cfg.gt_schema else None)
            gt = load_dataset(self.cfg.gt_csv, schema)
            self.manifest["inputs"]["gt_csv"] = file_digest(self.cfg.gt_csv)
        else:
            gt = generate_toy_population(
                self.cfg.toy_rows, self.cfg.toy_attributes, self.cfg.toy_categories,
                self.cfg.toy_latent_classes, stage_seed(self.cfg.seed, "toy"))
            gt.save(self.out / "gt.csv")
        gt.schema.save(self.out / "schema.json")
        (self.out / "gt_stats.json").write_text(compute_stats(gt).to_json())
        self._mark("ground_truth")
        return gt

    def prepare(self, gt: Dataset) -> dict[str, Dataset]:
        sampled = sample_fraction(gt, self.cfg.sample_fraction,
                                  stage_seed(self.cfg.seed, "sample"))
        nomis = remove_combinations(sampled, self.cfg.remove_combinations,
                                    stage_seed(self.cfg.seed, "remove"))
        variants = {"nomis": nomis}
        for targets, rate in self.cfg.corruptions:
            spec = _corruption_spec(self.cfg, gt.schema, targets, rate)
            label = corruption_label(targets, rate)
            variants[label] = inject_missingness(nomis, spec)
        for name, ds in variants.items():
            ds.save(self.out / f"train_{name}.csv")
            (self.out / f"train_{name}_stats.json").write_text(
                compute_stats(ds).to_json())
        self._mark("prepare")
        return variants

    def train_all(self, variants: dict[str, Dataset]) -> dict[str, Path]:
        checkpoints = {}
        for name, ds in variants.items():
            tc = TrainingConfig(**{**_training_dict(self.cfg.training),
                                   "seed": stage_seed(self.cfg.seed, f"train:{name}")})
            gen, critic, log = train(ds, tc)
            ckpt = self.out / f"model_{name}.ckpt"
            save_checkpoint(gen, critic, tc, ds.schema, ckpt)
            log.save_jsonl(self.out / f"log_{name}.jsonl")
            checkpoints[name] = ckpt
            self._mark(f"train:{name}")
        return checkpoints

    def generate_all(self, checkpoints: dict[str, Path],
                     schema: CategoricalSchema, n: int) -> dict[str, Dataset]:
        populations = {}
        for name, ckpt in checkpoints.items():
            gen, _, _, _ = load_checkpoint(ckpt, expected_schema=schema)
            syn = generate_population(
                gen, n, mode=self.cfg.generate_mode,
                seed=stage_seed(self.cfg.seed, f"generate:{name}"))
            syn.save(self.out / f"syn_{name}.csv")
            populations[name] = syn
            self._mark(f"generate:{name}")
        return populations

    def evaluate_all(self, gt: Dataset, variants: dict[str, Dataset],
                     populations: dict[str, Dataset]) -> dict:
        joints = self.cfg.joints or [gt.schema.names[:3]]
        reports = {}
        for name, syn in populations.items():
            rep = metrics.evaluation_report(
                gt, variants[name], syn, joints, self.cfg.levels,
                stage_seed(self.cfg.seed, f"evaluate:{name}"))
            metrics.save_report(rep, self.out / f"report_{name}.json")
            for attrs in joints:
                gt_j = metrics.joint_table(gt, attrs)
                syn_j = metrics.joint_table(syn, attrs)
                metrics.export_forty_five_degree(
                    gt_j, syn_j,
                    self.out / f"deg45_{name}_{'_'.join(attrs)}.csv")
            reports[name] = rep
            self._mark(f"evaluate:{name}")
        summary = _benchmark_summary(reports)
        with open(self.out / "summary.json", "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
        self._mark("summary")
        return summary

    def run(self) -> dict:
        gt = self.ground_truth()
        variants = self.prepare(gt)
        checkpoints = self.train_all(variants)
        n = self.cfg.generate_n or gt.n_rows
        populations = self.generate_all(checkpoints, gt.schema, n)
        return self.evaluate_all(gt, variants, populations)


def _training_dict(tc: TrainingConfig) -> dict:
    from dataclasses import asdict
    return asdict(tc)


def _benchmark_summary(reports: dict[str, dict]) -> dict:
    """Per-attribute absolute score gaps of each masked model vs the benchmark."""
    if "nomis" not in reports:
        raise ValidationError("no benchmark ('nomis') report to compare against")
    bench = {
        rec["attribute"]: rec for rec in reports["nomis"]["attribute_level"]
    }
    summary = {"benchmark": "nomis", "models": {}}
    for name, rep in reports.items():
        if name == "nomis":
            continue
        gaps = {}
        for rec in rep["attribute_level"]:
            ref = bench[rec["attribute"]]
            gap = {}
            for metric_name in ("category_coverage", "tv_complement",
                                "category_adherence"):
                a, b = rec[metric_name]["value"], ref[metric_name]["value"]
                gap[metric_name] = None if a is None or b is None else abs(a - b)
            gaps[rec["attribute"]] = gap
        summary["models"][name] = gaps
    return summary
