"""Command-line surface: prepare, train, eval, explain, synth.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
The KGNP_CONFIG environment variable supplies a default config-file path.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .config import TrainConfig, load_config
from .datasets import SplitSpec, eval_graph_for, load_bundle, prepare_bundle
from .errors import DataError, NumericError, UsageError
from .evaluation import evaluate_split
from .explain import export_explanation, extract_explanation
from .kg import load_triples
from .model import load_checkpoint
from .synth import ChainSpec, SynthSizes, generate_planted, write_bundle
from .training import train

CONFIG_ENV = "KGNP_CONFIG"

_CONFIG_FLAGS = [
    ("--lr", float), ("--margin", float), ("--tau", float), ("--K", int), ("--n", int),
    ("--T", int), ("--temperature", float), ("--w-z", float), ("--w-mask", float),
    ("--max-epochs", int), ("--seed", int), ("--k", int), ("--d-edge", int),
    ("--d-z", int), ("--L", int), ("--val-every", int), ("--patience", int),
    ("--n-cand", int), ("--eval-z-samples", int), ("--max-queries", int),
    ("--threads", int),
]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_config_flags(parser):
    for flag, kind in _CONFIG_FLAGS:
        parser.add_argument(flag, type=kind, default=None,
                            dest=flag.lstrip("-").replace("-", "_"))


def _collect_overrides(args) -> dict:
    return {flag.lstrip("-").replace("-", "_"): getattr(args, flag.lstrip("-").replace("-", "_"))
            for flag, _ in _CONFIG_FLAGS}


def build_parser() -> _Parser:
    parser = _Parser(prog="kgnp", description=__doc__)
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    p = sub.add_parser("prepare",
                       help="build an inductive dataset bundle from raw triples")
    p.add_argument("--source", required=True, help="raw triple file (tsv)")
    p.add_argument("--splits", required=True, help="JSON file naming task relations per split")
    p.add_argument("--out", required=True)
    p.add_argument("--K", type=int, default=3)
    p.add_argument("--n-cand", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--subsample-queries", type=float, default=1.0,
                   help="keep this fraction of each test task's queries")

    p = sub.add_parser("train", help="episodic training on a bundle")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None, help=f"config file (default: ${CONFIG_ENV})")
    _add_config_flags(p)

    p = sub.add_parser("eval", help="ranking evaluation of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test", choices=["train", "valid", "test"])
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=None, help="write the JSON report here")
    p.add_argument("--k", type=int, default=None, dest="shots",
                   help="K-shot override: evaluate with only the first k support triples")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--eval-z-samples", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)

    p = sub.add_parser("explain",
                       help="export the explanatory subgraph for one query")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test", choices=["train", "valid", "test"])
    p.add_argument("--task", type=int, default=0)
    p.add_argument("--query", type=int, default=0)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--top-k", type=int, default=None)
    p.add_argument("--format", default="both", choices=["dot", "json", "both"])
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("synth",
                       help="generate a planted 2-hop-chain bundle")
    p.add_argument("--out", required=True)
    p.add_argument("--entities", type=int, default=60)
    p.add_argument("--pairs", type=int, default=20)
    p.add_argument("--distractors", type=int, default=40)
    p.add_argument("--n-cand", type=int, default=10)
    p.add_argument("--K", type=int, default=3)
    p.add_argument("--train-pairs", type=int, default=12)
    p.add_argument("--valid-pairs", type=int, default=4)
    p.add_argument("--chain", default="requires,works_in",
                   help="comma-separated pair of chain relation names")
    p.add_argument("--target", default="implied_by_chain")
    p.add_argument("--seed", type=int, default=0)
    return parser


def _config_from(args) -> TrainConfig:
    path = getattr(args, "config", None) or os.environ.get(CONFIG_ENV) or None
    return load_config(path, _collect_overrides(args))


def cmd_prepare(args) -> int:
    source = load_triples(args.source)
    with open(args.splits, encoding="utf-8") as fh:
        spec = SplitSpec.from_dict(json.load(fh))
    prepare_bundle(source, spec, args.out, K=args.K, n_cand=args.n_cand,
                   seed=args.seed, query_subsample=args.subsample_queries, log=print)
    return 0


def cmd_train(args) -> int:
    config = _config_from(args)
    bundle = load_bundle(args.data)
    kg = bundle.train_graph()
    pools = bundle.train_pools(kg)
    valid = bundle.tasks("valid", kg)
    result = train(kg, pools, config, valid_tasks=valid, out_dir=Path(args.out), log=print)
    summary = {"episodes": result.episodes_run, "best_val_mrr": result.best_val_mrr}
    print(json.dumps(summary, sort_keys=True))
    return 0


def _eval_setup(args, extra: dict | None = None):
    model = load_checkpoint(args.checkpoint)
    bundle = load_bundle(args.data)
    kg, dropped = eval_graph_for(bundle, model.relation_names)
    if dropped:
        print(f"# dropped {dropped} edges with relations unknown to the checkpoint",
              file=sys.stderr)
    overrides = {"d_edge": model.dims.d_edge, "d_z": model.dims.d_z, "L": model.dims.n_layers}
    for key in ("seed", "eval_z_samples", "threads"):
        if getattr(args, key, None) is not None:
            overrides[key] = getattr(args, key)
    overrides.update(extra or {})
    config = load_config(getattr(args, "config", None) or os.environ.get(CONFIG_ENV) or None,
                         overrides)
    return model, bundle, kg, config


def cmd_eval(args) -> int:
    extra = {"K": args.shots} if args.shots is not None else None
    model, bundle, kg, config = _eval_setup(args, extra)
    tasks = bundle.tasks(args.split, kg)
    if not tasks:
        raise DataError(f"bundle has no {args.split!r} tasks")
    report = evaluate_split(kg, model, tasks, config)
    sys.stdout.write(report.flat_table())
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, sort_keys=True)
            fh.write("\n")
    return 0


def cmd_explain(args) -> int:
    model, bundle, kg, config = _eval_setup(args)
    tasks = bundle.tasks(args.split, kg)
    if not 0 <= args.task < len(tasks):
        raise DataError(f"task index {args.task} out of range ({len(tasks)} tasks)")
    task = tasks[args.task]
    if not 0 <= args.query < len(task.queries):
        raise DataError(f"query index {args.query} out of range ({len(task.queries)} queries)")
    exp = extract_explanation(kg, model, task, task.queries[args.query], config,
                              threshold=args.threshold, top_k=args.top_k)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"task{args.task}_query{args.query}"
    written = []
    if args.format in ("dot", "both"):
        export_explanation(kg, exp, "dot", out / f"{stem}.dot")
        written.append(str(out / f"{stem}.dot"))
    if args.format in ("json", "both"):
        export_explanation(kg, exp, "json", out / f"{stem}.json")
        written.append(str(out / f"{stem}.json"))
    print(json.dumps({"kept": len(exp.kept), "dropped": len(exp.dropped),
                      "files": written, "empty": exp.empty_warning}, sort_keys=True))
    return 0


def cmd_synth(args) -> int:
    spec = ChainSpec.parse(args.chain)
    spec.target = args.target
    sizes = SynthSizes(entities=args.entities, pairs=args.pairs,
                       distractors=args.distractors, n_cand=args.n_cand, K=args.K,
                       train_pairs=args.train_pairs, valid_pairs=args.valid_pairs)
    out = write_bundle(generate_planted(spec, sizes, args.seed), args.out)
    print(f"wrote planted bundle to {out}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        handler = {"prepare": cmd_prepare, "train": cmd_train, "eval": cmd_eval,
                   "explain": cmd_explain, "synth": cmd_synth}[args.verb]
        return handler(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
