"""Command line interface.

Subcommands: toy-gen, prepare, train, generate, evaluate, run-experiment.
Exit codes: 0 success, 1 runtime/data error, 2 usage error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import metrics
from .data import CategoricalSchema, compute_stats, load_dataset
from .errors import PopsynthError
from .pipeline import ExperimentRunner, parse_config, stage_seed
from .wgan import generate_population, load_checkpoint


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="flat key=value config file")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config's global seed")
    parser.add_argument("--out-dir", default=None,
                        help="override the config's output directory")


def _runner(args) -> ExperimentRunner:
    cfg = parse_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    return ExperimentRunner(cfg, out_dir=args.out_dir)


def cmd_toy_gen(args) -> int:
    runner = _runner(args)
    gt = runner.ground_truth()
    print((runner.out / "gt_stats.json").read_text())
    return 0


def cmd_prepare(args) -> int:
    runner = _runner(args)
    gt = runner.ground_truth()
    variants = runner.prepare(gt)
    for name in variants:
        print(f"wrote train_{name}.csv")
    return 0


def cmd_train(args) -> int:
    runner = _runner(args)
    gt = runner.ground_truth()
    variants = runner.prepare(gt)
    if args.dataset not in variants:
        print(f"unknown dataset {args.dataset!r}; have {sorted(variants)}",
              file=sys.stderr)
        return 2
    runner.train_all({args.dataset: variants[args.dataset]})
    print(f"wrote model_{args.dataset}.ckpt")
    return 0


def cmd_generate(args) -> int:
    schema = CategoricalSchema.load(args.schema) if args.schema else None
    gen, _, _, _ = load_checkpoint(args.checkpoint, expected_schema=schema)
    syn = generate_population(gen, args.n, mode=args.mode, seed=args.seed)
    syn.save(args.out)
    print(f"wrote {args.out} ({syn.n_rows} rows)")
    return 0


def cmd_evaluate(args) -> int:
    cfg = parse_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    schema = CategoricalSchema.load(args.schema) if args.schema else None
    gt = load_dataset(args.gt, schema)
    train_ds = load_dataset(args.train, gt.schema)
    syn = load_dataset(args.syn, gt.schema)
    joints = cfg.joints or [gt.schema.names[:3]]
    report = metrics.evaluation_report(
        gt, train_ds, syn, joints, cfg.levels,
        stage_seed(cfg.seed, "evaluate:cli"))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    metrics.save_report(report, out)
    for attrs in joints:
        gt_j = metrics.joint_table(gt, attrs)
        syn_j = metrics.joint_table(syn, attrs)
        metrics.export_forty_five_degree(
            gt_j, syn_j, out.with_name(f"deg45_{'_'.join(attrs)}.csv"))
    print(f"wrote {out}")
    return 0


def cmd_run_experiment(args) -> int:
    runner = _runner(args)
    runner.run()
    print(f"experiment complete in {runner.out}")
    return 0


def cmd_stats(args) -> int:
    schema = CategoricalSchema.load(args.schema) if args.schema else None
    ds = load_dataset(args.dataset, schema)
    print(compute_stats(ds).to_json())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="popsynth",
        description="Masked WGAN-GP population synthesis toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("toy-gen", help="write the toy ground-truth population")
    _add_common(p)
    p.set_defaults(fn=cmd_toy_gen)

    p = sub.add_parser("prepare", help="emit the training datasets")
    _add_common(p)
    p.set_defaults(fn=cmd_prepare)

    p = sub.add_parser("train", help="train one model variant")
    _add_common(p)
    p.add_argument("--dataset", required=True,
                   help="variant to train: 'nomis' or e.g. 'miss-2-10'")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("generate", help="generate a synthetic population CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--mode", choices=["argmax", "sample"], default="sample")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--schema", default=None,
                   help="schema JSON to validate the checkpoint against")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("evaluate", help="score a synthetic population")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--gt", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--syn", required=True)
    p.add_argument("--schema", default=None)
    p.add_argument("--out", required=True, help="metrics report JSON path")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("run-experiment", help="run the full staged experiment")
    _add_common(p)
    p.set_defaults(fn=cmd_run_experiment)

    p = sub.add_parser("stats", help="print dataset statistics JSON")
    p.add_argument("--dataset", required=True)
    p.add_argument("--schema", default=None)
    p.set_defaults(fn=cmd_stats)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (PopsynthError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
