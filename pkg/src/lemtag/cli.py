"""Command-line front-end: train, predict, evaluate, analyze, study.

Subcommands
    jackknife-train   train the joint model with kappa-fold silver tags
    predict           tag + lemmatize a CoNLL-U file (greedy or crunching)
    evaluate          accuracy report with category breakdown and significance
    analyze-errors    edit-operation histogram and length statistics
    learning-curve    accuracy as a function of training-set size
    correlate         correlation study over a per-language results table

Hyperparameters come from a key-value config file (``tagger.epochs = 5``,
one per line, '#' comments) further overridden by repeated ``--set key=val``
flags; flags win. Every writing command also drops a provenance manifest
(JSON with the config snapshot and seed) so runs are reproducible.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

from . import __version__
from . import evaluation as ev
from . import figures
from .data import categorize_tokens, read_conllu, with_predictions, write_conllu
from .lemmatizer import LemmatizerConfig
from .pipeline import (crunch_decode, greedy_joint_decode, jackknife_train,
                       load_model, save_model)
from .tagger import TaggerConfig


class CliError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config plumbing
# ---------------------------------------------------------------------------

def _parse_config_file(path) -> dict[str, str]:
    overrides = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected 'section.key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        overrides[key] = value
    return overrides


def _coerce(value: str, type_str: str):
    if "bool" in type_str:
        if value.lower() in ("true", "1", "yes"):
            return True
        if value.lower() in ("false", "0", "no"):
            return False
        raise CliError(f"cannot read {value!r} as a bool")
    if "int" in type_str:
        return int(value)
    if "float" in type_str:
        return float(value)
    return value


def build_configs(args) -> tuple[TaggerConfig, LemmatizerConfig]:
    overrides: dict[str, str] = {}
    if getattr(args, "config", None):
        overrides.update(_parse_config_file(args.config))
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise CliError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()

    sections = {"tagger": {}, "lemmatizer": {}}
    known = {
        "tagger": {f.name: str(f.type) for f in dataclasses.fields(TaggerConfig)},
        "lemmatizer": {f.name: str(f.type)
                       for f in dataclasses.fields(LemmatizerConfig)},
    }
    for key, value in overrides.items():
        if "." not in key:
            raise CliError(f"config key {key!r} needs a section prefix "
                           "(tagger. or lemmatizer.)")
        section, name = key.split(".", 1)
        if section not in sections:
            raise CliError(f"unknown config section {section!r}")
        if name not in known[section]:
            raise CliError(f"unknown config key {key!r}")
        sections[section][name] = _coerce(value, known[section][name])
    if getattr(args, "beam", None):
        sections["lemmatizer"]["beam_width"] = args.beam
    return (TaggerConfig(**sections["tagger"]),
            LemmatizerConfig(**sections["lemmatizer"]))


def _write_manifest(directory: Path, payload: dict) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    payload = dict(payload, package_version=__version__)
    (directory / "manifest.json").write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _out_dir(args, default: str) -> Path:
    out = Path(args.out) if getattr(args, "out", None) else Path(default)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_jackknife_train(args) -> int:
    tagger_cfg, lemm_cfg = build_configs(args)
    train = read_conllu(args.train, split="train")
    dev = read_conllu(args.dev, split="dev") if args.dev else None
    model, silver = jackknife_train(
        train, kappa=args.kappa, tagger_config=tagger_cfg,
        lemmatizer_config=lemm_cfg, seed=args.seed, dev_corpus=dev,
        quiet=args.quiet)
    save_model(model, args.model)
    out = _out_dir(args, Path(args.model).parent or ".")
    write_conllu(silver, out / "silver_tags.conllu")
    _write_manifest(out, {
        "command": "jackknife-train", "seed": args.seed, "kappa": args.kappa,
        "train": str(args.train), "dev": str(args.dev) if args.dev else None,
        "model": str(args.model),
        "tagger_config": dataclasses.asdict(tagger_cfg),
        "lemmatizer_config": dataclasses.asdict(lemm_cfg)})
    print(f"model written to {args.model}")
    return 0


def cmd_predict(args) -> int:
    model = load_model(args.model)
    corpus = read_conllu(args.test, split="test")
    all_tags, all_lemmas = [], []
    for sentence in corpus.sentences:
        tags = model.tagger.greedy_tag(sentence)
        if args.crunch:
            lemmas = crunch_decode(model, sentence, k=args.crunch,
                                   beam_width=args.beam)
        else:
            _, lemmas = greedy_joint_decode(model, sentence,
                                            beam_width=args.beam)
        all_tags.extend(tags)
        all_lemmas.extend(lemmas)
    predicted = with_predictions(corpus, tags=all_tags, lemmas=all_lemmas)
    write_conllu(predicted, args.out)
    _write_manifest(Path(args.out).parent, {
        "command": "predict", "model": str(args.model), "test": str(args.test),
        "crunch": args.crunch, "beam": args.beam, "out": str(args.out),
        "provenance": model.provenance})
    print(f"predictions written to {args.out}")
    return 0


def _predictions_from(path, gold):
    pred_corpus = read_conllu(path)
    if pred_corpus.n_tokens() != gold.n_tokens():
        raise CliError(f"{path} has {pred_corpus.n_tokens()} tokens, gold has "
                       f"{gold.n_tokens()}")
    return [t.lemma if t.lemma is not None else "" for t in pred_corpus.tokens()]


def cmd_evaluate(args) -> int:
    gold = read_conllu(args.test)
    predictions = _predictions_from(args.pred, gold)
    categories = None
    if args.train:
        categories = categorize_tokens(read_conllu(args.train), gold)
    report = ev.accuracy_report(predictions, gold, categories)
    if args.compare:
        other = _predictions_from(args.compare, gold)
        report.p_value = ev.paired_permutation_test(
            ev.correctness_vector(predictions, gold),
            ev.correctness_vector(other, gold),
            replicates=args.replicates, seed=args.seed)
    for line in report.lines():
        print(line)

    out = _out_dir(args, "eval-report")
    with open(out / "report.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["category", "accuracy", "tokens"])
        writer.writerow(["overall", f"{report.overall:.6f}", report.total])
        for name, (acc, count) in report.categories.items():
            writer.writerow([name, "" if acc is None else f"{acc:.6f}", count])
        if report.p_value is not None:
            writer.writerow(["p_value", f"{report.p_value:.6g}", ""])
    (out / "report.txt").write_text("\n".join(report.lines()) + "\n")
    figures.category_accuracy_figure(report, out / "categories.png")
    _write_manifest(out, {
        "command": "evaluate", "test": str(args.test), "pred": str(args.pred),
        "train": str(args.train) if args.train else None,
        "compare": str(args.compare) if args.compare else None,
        "replicates": args.replicates, "seed": args.seed})
    return 0


def cmd_analyze_errors(args) -> int:
    gold = read_conllu(args.test)
    predictions = _predictions_from(args.pred, gold)
    patterns = ev.error_patterns(predictions, gold)
    incorrect = [(p, t.lemma) for p, t in zip(predictions, gold.tokens())
                 if t.lemma is not None and p != t.lemma]
    out = _out_dir(args, "error-report")
    with open(out / "patterns.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["pattern", "count"])
        for key, count in patterns:
            writer.writerow([" + ".join(key), count])
    lines = [f"incorrect tokens: {len(incorrect)} / {gold.n_tokens()}"]
    if incorrect:
        delta = ev.length_stats(incorrect,
                                (t.lemma for t in gold.tokens()))
        lines.append(f"gold lemmata of errors are {delta:+.2f} characters "
                     "longer than the corpus mean")
        lines.append("top patterns:")
        lines += [f"  {count:>5}  {' + '.join(key)}"
                  for key, count in patterns[:10]]
        figures.error_patterns_figure(patterns, out / "patterns.png")
    (out / "lengths.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    _write_manifest(out, {"command": "analyze-errors", "test": str(args.test),
                          "pred": str(args.pred)})
    return 0


def cmd_learning_curve(args) -> int:
    tagger_cfg, lemm_cfg = build_configs(args)
    train = read_conllu(args.train, split="train")
    dev = read_conllu(args.dev, split="dev")
    fractions = [float(x) for x in args.fractions.split(",")]

    def procedure(subset):
        model, _ = jackknife_train(subset, kappa=args.kappa,
                                   tagger_config=tagger_cfg,
                                   lemmatizer_config=lemm_cfg,
                                   seed=args.seed, dev_corpus=dev,
                                   quiet=args.quiet)
        predictions = []
        for sentence in dev.sentences:
            _, lemmas = greedy_joint_decode(model, sentence, beam_width=args.beam)
            predictions.extend(lemmas)
        return ev.accuracy_report(predictions, dev,
                                  categorize_tokens(subset, dev))

    series = ev.learning_curve(train, fractions, procedure)
    out = _out_dir(args, "learning-curve")
    ev.write_learning_curve_csv(series, out / "learning_curve.csv")
    figures.learning_curve_figure(series, out / "learning_curve.png")
    for fraction, report in series:
        print(f"fraction {fraction:g}: accuracy {report.overall:.4f} "
              f"({report.total} tokens)")
    _write_manifest(out, {
        "command": "learning-curve", "seed": args.seed, "kappa": args.kappa,
        "fractions": fractions, "train": str(args.train), "dev": str(args.dev),
        "tagger_config": dataclasses.asdict(tagger_cfg),
        "lemmatizer_config": dataclasses.asdict(lemm_cfg)})
    return 0


def cmd_correlate(args) -> int:
    rows = ev.load_language_stats(args.table)
    report = ev.correlation_study(rows)
    for line in report.lines():
        print(line)
    out = _out_dir(args, "correlation")
    with open(out / "correlations.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["pair", "pearson", "spearman"])
        writer.writerow(["tags_vs_delta", f"{report.tags_pearson:.6f}",
                         f"{report.tags_spearman:.6f}"])
        writer.writerow(["tokens_vs_delta", f"{report.tokens_pearson:.6f}",
                         f"{report.tokens_spearman:.6f}"])
    figures.correlation_figure(rows, report, out / "correlations.png")
    _write_manifest(out, {"command": "correlate",
                          "table": str(args.table) if args.table else "bundled"})
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lemtag",
        description="Joint morphological tagging and lemmatization toolkit.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def add_common(p, config=False):
        p.add_argument("--seed", type=int, default=0)
        if config:
            p.add_argument("--config", help="key-value config file")
            p.add_argument("--set", action="append", metavar="KEY=VALUE",
                           help="config override; repeatable, wins over --config")

    p = sub.add_parser("jackknife-train",
                       help="train tagger + lemmatizer with fold-wise silver tags")
    p.add_argument("--train", required=True)
    p.add_argument("--dev")
    p.add_argument("--model", required=True, help="output model path")
    p.add_argument("--kappa", type=int, default=10)
    p.add_argument("--out", help="directory for silver tags and manifest")
    p.add_argument("--beam", type=int, default=None)
    p.add_argument("--quiet", action="store_true")
    add_common(p, config=True)
    p.set_defaults(func=cmd_jackknife_train)

    p = sub.add_parser("predict", help="tag and lemmatize a CoNLL-U file")
    p.add_argument("--model", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--out", required=True, help="output CoNLL-U path")
    p.add_argument("--crunch", type=int, metavar="K",
                   help="sum lemma scores over the K best tags")
    p.add_argument("--beam", type=int, default=None,
                   help="beam width (default: model config, 4)")
    add_common(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="accuracy report against gold lemmas",
                       epilog="report.csv columns: category (overall / "
                              "ambiguous / unseen / seen-unambiguous / "
                              "p_value), accuracy, tokens")
    p.add_argument("--test", required=True, help="gold CoNLL-U")
    p.add_argument("--pred", required=True, help="predicted CoNLL-U")
    p.add_argument("--train", help="training CoNLL-U for the category split")
    p.add_argument("--compare", help="second system's predictions for the "
                                     "paired permutation test")
    p.add_argument("--replicates", type=int, default=10000)
    p.add_argument("--out")
    add_common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("analyze-errors",
                       help="edit-operation patterns over wrong lemmas",
                       epilog="patterns.csv columns: pattern (the "
                              "'+'-joined multiset of insert:c / delete:c / "
                              "replace:c->c' operations), count")
    p.add_argument("--test", required=True, help="gold CoNLL-U")
    p.add_argument("--pred", required=True)
    p.add_argument("--out")
    add_common(p)
    p.set_defaults(func=cmd_analyze_errors)

    p = sub.add_parser("learning-curve",
                       help="train on growing prefixes and plot dev accuracy",
                       epilog="learning_curve.csv columns: fraction, "
                              "category, accuracy, tokens")
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--fractions", default="0.1,0.25,0.5,1.0")
    p.add_argument("--kappa", type=int, default=10)
    p.add_argument("--beam", type=int, default=None)
    p.add_argument("--out")
    p.add_argument("--quiet", action="store_true")
    add_common(p, config=True)
    p.set_defaults(func=cmd_learning_curve)

    p = sub.add_parser("correlate",
                       help="correlation study over a per-language table",
                       epilog="correlations.csv columns: pair, pearson, "
                              "spearman")
    p.add_argument("--table", help="CSV with language,tokens,tags,ours,"
                                   "baseline,delta (default: bundled table)")
    p.add_argument("--out")
    add_common(p)
    p.set_defaults(func=cmd_correlate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if not getattr(args, "command", None):
        parser.print_help()
        return 2
    try:
        return args.func(args)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
