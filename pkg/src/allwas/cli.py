"""Command-line interface.

    allwas ingest <jsonl> [--featurize d=64,seed=0] [--out normalized.jsonl]
    allwas synth <spec.json> [--out corpus.jsonl]
    allwas run <config.json> [--dump-distances]
    allwas sweep <config.json> --axis <axis> --values v1,v2,...
    allwas report <run-dir> [--out <dir>]
    allwas stats <run-dir> --pairs labelA:labelB[,labelC:labelD...]

Exit codes: 0 ok, 2 config error, 3 data error, 4 runtime failure.
ALLWAS_THREADS caps sweep parallelism.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

from .data import FeaturizerConfig, SynthSpec, export_jsonl, ingest_jsonl, make_synthetic
from .errors import AllwasError, ConfigError, DataError
from .harness import ExperimentConfig, run_experiment, run_sweep
from .report import load_records, paired_f1, report, significance_table
from .stats import bonferroni, wilcoxon_signed_rank


def _parse_kv(text: str) -> dict:
    out = {}
    for part in text.split(","):
        if not part:
            continue
        if "=" not in part:
            raise ConfigError(f"expected key=value, got {part!r}")
        key, value = part.split("=", 1)
        out[key.strip()] = int(value)
    return out


def _cmd_ingest(args) -> int:
    featurizer = None
    if args.featurize:
        featurizer = FeaturizerConfig(**_parse_kv(args.featurize))
    class_names = args.class_names.split(",") if args.class_names else None
    corpus = ingest_jsonl(args.path, featurizer=featurizer, class_names=class_names)
    print(f"ingested {corpus.n} examples, d={corpus.dim}, "
          f"classes={list(corpus.class_names)}, "
          f"target={corpus.class_names[corpus.target_class]}")
    if args.out:
        export_jsonl(corpus, args.out)
        print(f"wrote {args.out}")
    return 0


def _cmd_synth(args) -> int:
    with open(args.spec) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"bad synth spec JSON: {exc}") from exc
    if "priors" in raw:
        raw["priors"] = tuple(raw["priors"])
    if "token_count_range" in raw:
        raw["token_count_range"] = tuple(raw["token_count_range"])
    corpus = make_synthetic(SynthSpec(**raw))
    out = args.out or "corpus.jsonl"
    export_jsonl(corpus, out)
    priors = ", ".join(f"{p:.3f}" for p in corpus.class_priors())
    print(f"wrote {out}: {corpus.n} examples, d={corpus.dim}, priors [{priors}]")
    return 0


def _cmd_run(args) -> int:
    cfg = ExperimentConfig.from_json(args.config)
    if args.dump_distances:
        ot = dict(cfg.ot)
        ot["dump_path"] = os.path.join(cfg.out_dir, f"{cfg.label}_distances.csv")
        cfg = replace(cfg, ot=ot)
    record = run_experiment(cfg)
    final = record.curve()[max(record.curve())]
    print(f"cell {record.label}: {len(record.rows)} rows, "
          f"final mean f1 {final:.4f} -> {cfg.out_dir}")
    return 0


def _cmd_sweep(args) -> int:
    cfg = ExperimentConfig.from_json(args.config)
    values = [v for v in args.values.split(",") if v]
    records = run_sweep(cfg, args.axis, values)
    for rec in records:
        final = rec.curve()[max(rec.curve())]
        print(f"cell {rec.label}: final mean f1 {final:.4f}")
    return 0


def _cmd_report(args) -> int:
    records = load_records(args.directory)
    out = args.out or args.directory
    for path in report(records, out):
        print(f"wrote {path}")
    return 0


def _cmd_stats(args) -> int:
    records = {rec.label: rec for rec in load_records(args.directory)}
    pairs = []
    for chunk in args.pairs.split(","):
        if not chunk:
            continue
        if ":" not in chunk:
            raise ConfigError(f"expected labelA:labelB, got {chunk!r}")
        a, b = chunk.split(":", 1)
        for name in (a, b):
            if name not in records:
                raise DataError(f"no cell named {name!r} in {args.directory}")
        pairs.append((a, b))
    if not pairs:
        raise ConfigError("no pairs given")
    m = len(pairs)
    print("cell_a,cell_b,n,statistic,p,p_bonferroni")
    for a, b in pairs:
        xs, ys = paired_f1(records[a], records[b])
        informative = int(sum(1 for x, y in zip(xs, ys) if x != y))
        if len(xs) < 5 or informative < 5:
            stat, p = float("nan"), 1.0
        else:
            stat, p = wilcoxon_signed_rank(
                xs, ys, mode="exact" if len(xs) <= 60 else "normal-approx")
        print(f"{a},{b},{len(xs)},{stat:.10g},{p:.10g},{bonferroni(p, m):.10g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="allwas",
                                     description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate a JSONL corpus")
    p.add_argument("path")
    p.add_argument("--featurize", help="featurizer knobs, e.g. d=64,seed=0")
    p.add_argument("--class-names", help="comma-separated class names")
    p.add_argument("--out", help="write the normalized corpus here")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("spec")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("run", help="run one experiment cell")
    p.add_argument("config")
    p.add_argument("--dump-distances", action="store_true",
                   help="dump the acquisition distance matrix to CSV")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep", help="paired sweep along one axis")
    p.add_argument("config")
    p.add_argument("--axis", required=True,
                   choices=("augmentation-factor", "barycenter-group-size",
                            "strategy"))
    p.add_argument("--values", required=True)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("report", help="render CSV/SVG reports for a run dir")
    p.add_argument("directory")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("stats", help="pairwise significance for named cells")
    p.add_argument("directory")
    p.add_argument("--pairs", required=True)
    p.set_defaults(func=_cmd_stats)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except AllwasError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
