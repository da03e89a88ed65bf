"""Command-line interface: stagewise and end-to-end pipeline runs.

Exit codes: 0 success, 2 configuration error, 3 data/artifact error,
4 backend error. All inter-stage data flows through files in the output
directory, so stages can be run one at a time or all at once via `dedup`.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .config import (
    PipelineConfig,
    apply_paper_strict,
    config_from_dict,
    load_config,
)
from .corpus import corpus_stats, save_postings
from .embed import tokenize
from .errors import BackendError, ConfigError, DataError, DedupError
from .evaluation import GoldSet, read_results_csv, render_report, score
from .pipeline import (
    DICTIONARY_FILE,
    EVAL_FILE,
    GOLD_FILE,
    POSTINGS_FILE,
    REPORT_FILE,
    RESULTS_FILE,
    run_staged,
    stage_dedup,
    stage_embed,
    stage_index,
    stage_ingest,
    stage_normalize,
    stage_translate,
)
from .synth import DupPlan, synth_corpus

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_BACKEND = 4


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="YAML config file; flags override file values")
    parser.add_argument("--out", default="dedup_out", help="artifact directory")
    parser.add_argument("--mode", choices=("two_step", "multilingual"))
    parser.add_argument("--k", type=int, help="neighbors per query")
    parser.add_argument("--theta", type=float, help="base L2 threshold")
    parser.add_argument("--threads", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument(
        "--paper-strict",
        action="store_true",
        help="preset: ascii_only cleaning, k=100, theta=0.25, 384-token limit",
    )
    parser.add_argument("--dict", dest="dictionary", help="dictionary translator JSON file")
    parser.add_argument("--rules", help="'example', 'none', or a YAML/JSON rules file")
    parser.add_argument("--ascii-only", action="store_true", default=None)


def _config_from_args(args: argparse.Namespace) -> PipelineConfig:
    config = load_config(args.config) if args.config else config_from_dict({})
    if getattr(args, "mode", None):
        config = dataclasses.replace(config, mode=args.mode)
    if getattr(args, "seed", None) is not None:
        config = dataclasses.replace(
            config,
            seed=args.seed,
            index=dataclasses.replace(config.index, seed=args.seed),
        )
    if getattr(args, "threads", None) is not None:
        config = dataclasses.replace(config, threads=args.threads)
    if getattr(args, "k", None) is not None:
        config = dataclasses.replace(config, dedup=dataclasses.replace(config.dedup, k=args.k))
    if getattr(args, "theta", None) is not None:
        config = dataclasses.replace(
            config, dedup=dataclasses.replace(config.dedup, base_theta=args.theta)
        )
    if getattr(args, "ascii_only", None):
        config = dataclasses.replace(
            config, normalize=dataclasses.replace(config.normalize, ascii_only=True)
        )
    if getattr(args, "dictionary", None):
        config = dataclasses.replace(
            config,
            translate=dataclasses.replace(
                config.translate, kind="dictionary", dictionary_path=args.dictionary
            ),
        )
    if getattr(args, "rules", None):
        from .dedup import ExpertRule, example_ruleset

        if args.rules == "example":
            rules = tuple(example_ruleset(config.dedup.base_theta))
        elif args.rules == "none":
            rules = ()
        else:
            import yaml

            try:
                raw = yaml.safe_load(Path(args.rules).read_text(encoding="utf-8"))
            except (OSError, yaml.YAMLError) as err:
                raise ConfigError(f"cannot read rules file {args.rules}: {err}") from err
            if not isinstance(raw, list):
                raise ConfigError("rules file must contain a list of rule objects")
            rules = tuple(ExpertRule.from_dict(entry) for entry in raw)
        config = dataclasses.replace(config, dedup=dataclasses.replace(config.dedup, rules=rules))
    if getattr(args, "input", None):
        config = dataclasses.replace(
            config,
            io=dataclasses.replace(
                config.io, input_path=args.input, input_format=getattr(args, "format", "jsonl")
            ),
        )
    if args.paper_strict:
        config = apply_paper_strict(config)
    return config


def _cmd_ingest(args) -> int:
    config = _config_from_args(args)
    postings = stage_ingest(config, args.out)
    stats = corpus_stats(postings, tokenize)
    (Path(args.out) / "corpus_stats.json").write_text(
        json.dumps(stats.to_dict(), indent=2), encoding="utf-8"
    )
    print(f"ingested {len(postings)} postings into {args.out}/{POSTINGS_FILE}")
    return 0


def _cmd_normalize(args) -> int:
    config = _config_from_args(args)
    canonicals = stage_normalize(config, args.out)
    print(f"normalized {len(canonicals)} postings")
    return 0


def _cmd_translate(args) -> int:
    config = _config_from_args(args)
    texts = stage_translate(config, args.out)
    print(f"translated {len(texts)} representative texts")
    return 0


def _cmd_embed(args) -> int:
    config = _config_from_args(args)
    dump = stage_embed(config, args.out)
    print(f"embedded {len(dump) if dump is not None else 0} non-empty representatives")
    return 0


def _cmd_index(args) -> int:
    config = _config_from_args(args)
    index = stage_index(config, args.out)
    print(f"built {index.kind} index over {len(index)} vectors")
    return 0


def _cmd_dedup(args) -> int:
    config = _config_from_args(args)
    outdir = Path(args.out)
    if args.input:
        stage_ingest(config, outdir)
    result = run_staged(config, outdir)
    print(
        f"wrote {len(result.pairs)} labeled pairs to {outdir / RESULTS_FILE} "
        f"(labels: {result.report.label_counts})"
    )
    return 0


def _cmd_eval(args) -> int:
    results_path = Path(args.results or Path(args.out) / RESULTS_FILE)
    gold_path = Path(args.gold or Path(args.out) / GOLD_FILE)
    for path in (results_path, gold_path):
        if not path.exists():
            raise DataError(f"missing file {path}")
    predicted = read_results_csv(results_path)
    gold = GoldSet.load_csv(gold_path)
    report = score(predicted, gold)
    out_path = Path(args.out) / EVAL_FILE
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(json.dumps(report.to_dict(), indent=2), encoding="utf-8")
    print(render_report(None, report, format="text"), end="")
    print(f"wrote {out_path}")
    return 0


def _cmd_synth(args) -> int:
    config = _config_from_args(args)
    plan = DupPlan(
        full_rate=args.full_rate,
        semantic_rate=args.semantic_rate,
        temporal_rate=args.temporal_rate,
        hard_semantic_fraction=args.hard_semantic_fraction,
    )
    result = synth_corpus(
        args.n_base, plan, seed=config.seed, embed_dim=config.embed.dim
    )
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    save_postings(result.postings, outdir / POSTINGS_FILE)
    result.gold.save_csv(outdir / GOLD_FILE)
    (outdir / DICTIONARY_FILE).write_text(
        json.dumps(result.translation_dict, indent=0, sort_keys=True), encoding="utf-8"
    )
    print(
        f"synthesized {len(result.postings)} postings "
        f"({len(result.gold)} gold pairs) into {outdir}"
    )
    return 0


def _cmd_report(args) -> int:
    run_path = Path(args.run or Path(args.out) / REPORT_FILE)
    if not run_path.exists():
        raise DataError(f"missing run report {run_path}")
    run = json.loads(run_path.read_text(encoding="utf-8"))
    eval_report = None
    eval_path = Path(args.eval or Path(args.out) / EVAL_FILE)
    if eval_path.exists():
        from .evaluation import ClassMetrics, EvalReport

        raw = json.loads(eval_path.read_text(encoding="utf-8"))
        per_class = {
            name: ClassMetrics(**metrics)
            for name, metrics in raw.items()
            if name != "macro_f1"
        }
        eval_report = EvalReport(per_class=per_class, macro_f1=raw["macro_f1"])
    print(render_report(run, eval_report, format=args.format), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="postdedup",
        description="Batch duplicate detection for multilingual text corpora",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate a corpus file and store the postings artifact")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=("jsonl", "csv"), default="jsonl")
    _add_common_flags(p)
    p.set_defaults(func=_cmd_ingest)

    for name, func, help_text in (
        ("normalize", _cmd_normalize, "clean postings and fingerprint them"),
        ("translate", _cmd_translate, "translate group representatives"),
        ("embed", _cmd_embed, "embed translated representatives"),
        ("index", _cmd_index, "build the configured vector index"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_common_flags(p)
        p.set_defaults(func=func)

    p = sub.add_parser("dedup", help="run the full pipeline against the artifact directory")
    p.add_argument("--input", help="optionally ingest this corpus file first")
    p.add_argument("--format", choices=("jsonl", "csv"), default="jsonl")
    _add_common_flags(p)
    p.set_defaults(func=_cmd_dedup)

    p = sub.add_parser("eval", help="score results against a gold pair file")
    p.add_argument("--results", help=f"defaults to <out>/{RESULTS_FILE}")
    p.add_argument("--gold", help=f"defaults to <out>/{GOLD_FILE}")
    _add_common_flags(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("synth", help="generate a synthetic corpus with gold labels")
    p.add_argument("--n-base", type=int, default=500)
    p.add_argument("--full-rate", type=float, default=0.15)
    p.add_argument("--semantic-rate", type=float, default=0.15)
    p.add_argument("--temporal-rate", type=float, default=0.10)
    p.add_argument("--hard-semantic-fraction", type=float, default=0.0)
    _add_common_flags(p)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("report", help="render run and eval reports")
    p.add_argument("--run", help=f"defaults to <out>/{REPORT_FILE}")
    p.add_argument("--eval", help=f"defaults to <out>/{EVAL_FILE}")
    p.add_argument("--format", choices=("text", "json"), default="text")
    _add_common_flags(p)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except BackendError as err:
        print(f"backend error: {err}", file=sys.stderr)
        return EXIT_BACKEND
    except (DataError, OSError) as err:
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except DedupError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
