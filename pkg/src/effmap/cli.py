"""Command-line surface.

    effmap phantom --config c.json --out RUN [--seed N]
    effmap patches --config c.json --out RUN
    effmap atlas   --config c.json --out RUN [--fold K]
    effmap train   --config c.json --out RUN [--fold K] [--threads N]
    effmap predict --config c.json --out RUN [--fold K]
    effmap map     --config c.json --out RUN [--subject ID] [--fold K] [--stride S]
    effmap eval    --scores CSV --out RUN [--name NAME]
    effmap compare --scores-a CSV --scores-b CSV --out RUN
    effmap report  --config c.json --out RUN

Exit codes: 0 success, 1 usage error, 2 data/format error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import pipeline
from .config import load_config
from .errors import EffmapError, UsageError


class _Parser(argparse.ArgumentParser):
    """argparse that raises UsageError (exit 1) instead of exiting 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="effmap", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="command")

    def add(name, help_, config=True, fold=False, threads=False):
        p = sub.add_parser(name, help=help_)
        if config:
            p.add_argument("--config", required=True, help="experiment config JSON")
            p.add_argument("--seed", type=int, default=None, help="override master seed")
        p.add_argument("--out", required=True, help="run directory")
        if fold:
            p.add_argument("--fold", type=int, default=None, help="restrict to one fold")
        if threads:
            p.add_argument(
                "--threads",
                type=int,
                default=1,
                help="fold-level worker processes; 1 is bitwise reproducible",
            )
        return p

    add("phantom", "generate and export a synthetic cohort")
    add("patches", "label, dedup, extract patches, plan folds")
    add("atlas", "build and score the registration baseline per fold", fold=True)
    add("train", "train the patch classifier per fold", fold=True, threads=True)
    add("predict", "score test patches with trained checkpoints", fold=True)
    p_map = add("map", "render a sliding-window efficacy map", fold=False)
    p_map.add_argument("--subject", default=None, help="subject id (default: first test subject)")
    p_map.add_argument("--fold", type=int, default=0, help="checkpoint fold")
    p_map.add_argument("--stride", type=int, default=None, help="lattice stride")

    p_eval = sub.add_parser("eval", help="ROC/AUC/operating point for one scores CSV")
    p_eval.add_argument("--scores", required=True, help="scores CSV path")
    p_eval.add_argument("--out", required=True, help="run directory")
    p_eval.add_argument("--name", default="eval", help="output name (eval/<name>.json)")

    p_cmp = sub.add_parser("compare", help="McNemar comparison of two scores CSVs")
    p_cmp.add_argument("--scores-a", required=True)
    p_cmp.add_argument("--scores-b", required=True)
    p_cmp.add_argument("--out", required=True, help="run directory")

    add("report", "aggregate folds: pooled ROC/AUC, McNemar, figures")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help()
            return 1
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "phantom":
            cfg = load_config(args.config, args.seed)
            manifest = pipeline.run_phantom(cfg, out)
            print(f"cohort: {len(manifest['subjects'])} subjects, hash {manifest['content_hash']}")
        elif args.command == "patches":
            cfg = load_config(args.config, args.seed)
            meta = pipeline.run_patches(cfg, out)
            print(
                f"patches: {meta['n_patches']} kept "
                f"({meta['positive_post_dedup']} positive), "
                f"{meta['excluded']} excluded, "
                f"{meta['total_records']} raw records"
            )
        elif args.command == "atlas":
            cfg = load_config(args.config, args.seed)
            for path in pipeline.run_atlas(cfg, out, args.fold):
                print(f"baseline scores: {path}")
        elif args.command == "train":
            cfg = load_config(args.config, args.seed)
            for path in pipeline.run_train(cfg, out, args.fold, jobs=args.threads):
                print(f"checkpoint: {path}")
        elif args.command == "predict":
            cfg = load_config(args.config, args.seed)
            for path in pipeline.run_predict(cfg, out, args.fold):
                print(f"cnn scores: {path}")
        elif args.command == "map":
            cfg = load_config(args.config, args.seed)
            path = pipeline.run_map(cfg, out, args.subject, args.fold, args.stride)
            print(f"efficacy map: {path}")
        elif args.command == "eval":
            result = pipeline.run_eval(args.scores, out / "eval" / f"{args.name}.json")
            print(
                f"auc {result['auc']:.4f}  sensitivity "
                f"{result['operating_point']['sensitivity']:.3f}  specificity "
                f"{result['operating_point']['specificity']:.3f}"
            )
        elif args.command == "compare":
            result = pipeline.run_compare(
                args.scores_a, args.scores_b, out / "compare.json"
            )
            print(
                f"auc_a {result['auc_a']:.4f}  auc_b {result['auc_b']:.4f}  "
                f"b {result['b']}  c {result['c']}  chi2 {result['chi2']:.4f}  "
                f"p {result['p']:.4g}"
            )
        elif args.command == "report":
            cfg = load_config(args.config, args.seed)
            report = pipeline.run_report(cfg, out)
            m = report["methods"]
            print(
                "pooled AUC: baseline "
                f"{m['baseline']['auc']:.4f}, cnn {m['cnn']['auc']:.4f}, "
                f"bayes {m['bayes']['auc']:.4f}; McNemar p "
                f"{report['mcnemar_cnn_vs_baseline']['p']:.4g}"
            )
        return 0
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        print("run `effmap --help` for usage", file=sys.stderr)
        return 1
    except EffmapError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
