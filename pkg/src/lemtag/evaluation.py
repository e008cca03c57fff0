"""Measurement machinery: accuracy breakdowns, paired permutation
significance, edit-operation error mining, a correlation study over the
bundled per-language reference tables, and learning curves.

The reference tables under ``tables/`` carry published per-language dev/test
accuracies for this system family and the baselines it is compared against,
so the correlation study and the table averages are reproducible without
training anything.
"""
from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass
from importlib import resources

import numpy as np
from scipy import stats as sps

from .data import CATEGORIES, Corpus


class EvaluationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# accuracy
# ---------------------------------------------------------------------------

@dataclass
class EvalReport:
    overall: float
    total: int
    categories: dict[str, tuple[float | None, int]]
    p_value: float | None = None

    def lines(self) -> list[str]:
        out = [f"overall accuracy: {self.overall:.4f} ({self.total} tokens)"]
        for name, (acc, count) in self.categories.items():
            shown = f"{acc:.4f}" if acc is not None else "n/a"
            out.append(f"  {name:>17}: {shown} ({count} tokens)")
        if self.p_value is not None:
            out.append(f"  p-value vs comparison: {self.p_value:.4g}")
        return out


def correctness_vector(predictions: list[str], gold: Corpus) -> np.ndarray:
    gold_lemmas = [t.lemma for t in gold.tokens()]
    if len(predictions) != len(gold_lemmas):
        raise EvaluationError(
            f"{len(predictions)} predictions vs {len(gold_lemmas)} gold tokens")
    return np.array([int(p == g) for p, g in zip(predictions, gold_lemmas)])


def accuracy_report(predictions: list[str], gold: Corpus,
                    categories: list[str] | None = None) -> EvalReport:
    """Exact-string-match accuracy, overall and (optionally) per category."""
    correct = correctness_vector(predictions, gold)
    per_category: dict[str, tuple[float | None, int]] = {}
    if categories is not None:
        if len(categories) != len(correct):
            raise EvaluationError("category labels do not align with tokens")
        for name in CATEGORIES:
            mask = np.array([c == name for c in categories])
            count = int(mask.sum())
            acc = float(correct[mask].mean()) if count else None
            per_category[name] = (acc, count)
        if sum(c for _, c in per_category.values()) != len(correct):
            raise EvaluationError("categories do not partition the corpus")
    return EvalReport(overall=float(correct.mean()), total=len(correct),
                      categories=per_category)


# ---------------------------------------------------------------------------
# significance
# ---------------------------------------------------------------------------

def paired_permutation_test(a, b, replicates: int = 10000, seed: int = 0) -> float:
    """Two-sided sign-flip permutation test on the paired difference of
    means; p = (1 + #{|resample| >= |observed|}) / (replicates + 1)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise EvaluationError("inputs must be equal-length vectors")
    if replicates < 1:
        raise EvaluationError("need at least one replicate")
    d = a - b
    observed = abs(d.mean())
    rng = np.random.default_rng(seed)
    hits = 0
    chunk = max(1, int(5e6 / max(1, d.size)))
    done = 0
    while done < replicates:
        m = min(chunk, replicates - done)
        signs = rng.integers(0, 2, size=(m, d.size)) * 2 - 1
        resampled = np.abs((signs * d).mean(axis=1))
        hits += int(np.count_nonzero(resampled >= observed))
        done += m
    return (1 + hits) / (replicates + 1)


# ---------------------------------------------------------------------------
# correlation study over the bundled tables
# ---------------------------------------------------------------------------

@dataclass
class LanguageRow:
    language: str
    tokens: float
    tags: float
    ours: float
    baseline: float
    delta: float


@dataclass
class CorrelationReport:
    tags_pearson: float
    tags_spearman: float
    tokens_pearson: float
    tokens_spearman: float

    def lines(self) -> list[str]:
        return [
            f"tags   vs delta: Pearson {self.tags_pearson:+.3f}  "
            f"Spearman {self.tags_spearman:+.3f}",
            f"tokens vs delta: Pearson {self.tokens_pearson:+.3f}  "
            f"Spearman {self.tokens_spearman:+.3f}",
        ]


def _table_path(name: str):
    return resources.files("lemtag").joinpath("tables", name)


def load_language_stats(path=None) -> list[LanguageRow]:
    """Per-language token/tag counts and dev accuracy deltas. The delta
    column is shipped verbatim from the published table (it bakes in the
    source's own rounding) rather than recomputed."""
    source = open(path, encoding="utf-8") if path is not None \
        else _table_path("language_stats.csv").open(encoding="utf-8")
    with source as f:
        rows = [LanguageRow(r["language"], float(r["tokens"]), float(r["tags"]),
                            float(r["ours"]), float(r["baseline"]),
                            float(r["delta"]))
                for r in csv.DictReader(f)]
    return rows


def load_accuracy_table(split: str = "dev") -> dict[str, list[float]]:
    """Bundled per-language accuracies by system column
    (gold / crunching / jackknifing / ch20 / silver)."""
    if split not in ("dev", "test"):
        raise EvaluationError(f"split must be dev or test, not {split!r}")
    with _table_path(f"{split}_accuracy.csv").open(encoding="utf-8") as f:
        reader = csv.DictReader(f)
        columns: dict[str, list[float]] = {name: [] for name in reader.fieldnames
                                           if name != "language"}
        for row in reader:
            for name in columns:
                columns[name].append(float(row[name]))
    return columns


def correlation_study(rows: list[LanguageRow]) -> CorrelationReport:
    """Pearson and Spearman (average-rank ties) for #tags-vs-delta and
    #tokens-vs-delta."""
    if len(rows) < 3:
        raise EvaluationError("need at least 3 rows")
    tags = np.array([r.tags for r in rows])
    tokens = np.array([r.tokens for r in rows])
    delta = np.array([r.delta for r in rows])
    for name, col in (("tags", tags), ("tokens", tokens), ("delta", delta)):
        if np.ptp(col) == 0:
            raise EvaluationError(f"column {name} is constant; "
                                  "correlation undefined")
    return CorrelationReport(
        tags_pearson=float(sps.pearsonr(tags, delta)[0]),
        tags_spearman=float(sps.spearmanr(tags, delta)[0]),
        tokens_pearson=float(sps.pearsonr(tokens, delta)[0]),
        tokens_spearman=float(sps.spearmanr(tokens, delta)[0]),
    )


# ---------------------------------------------------------------------------
# edit scripts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EditOp:
    kind: str                 # "insert" | "delete" | "replace"
    char: str
    replacement: str | None = None
    position: int = 0         # index into the original hypothesis

    def describe(self) -> str:
        if self.kind == "replace":
            return f"replace:{self.char}->{self.replacement}"
        return f"{self.kind}:{self.char}"


def edit_script(hypothesis: str, gold: str) -> list[EditOp]:
    """Minimal insert/delete/replace script turning hypothesis into gold.

    Unit costs, deterministic backtrace (replace preferred over delete over
    insert), ops ordered left to right over the hypothesis.
    """
    n, m = len(hypothesis), len(gold)
    d = np.zeros((n + 1, m + 1), dtype=np.int32)
    d[:, 0] = np.arange(n + 1)
    d[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            d[i, j] = min(d[i - 1, j - 1] + (hypothesis[i - 1] != gold[j - 1]),
                          d[i - 1, j] + 1,
                          d[i, j - 1] + 1)
    ops: list[EditOp] = []
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and hypothesis[i - 1] == gold[j - 1] \
                and d[i, j] == d[i - 1, j - 1]:
            i, j = i - 1, j - 1
        elif i > 0 and j > 0 and d[i, j] == d[i - 1, j - 1] + 1:
            ops.append(EditOp("replace", hypothesis[i - 1], gold[j - 1], i - 1))
            i, j = i - 1, j - 1
        elif i > 0 and d[i, j] == d[i - 1, j] + 1:
            ops.append(EditOp("delete", hypothesis[i - 1], position=i - 1))
            i -= 1
        else:
            ops.append(EditOp("insert", gold[j - 1], position=i))
            j -= 1
    ops.reverse()
    return ops


def apply_edit_script(hypothesis: str, script: list[EditOp]) -> str:
    out = list(hypothesis)
    offset = 0
    for op in script:
        pos = op.position + offset
        if op.kind == "insert":
            out.insert(pos, op.char)
            offset += 1
        elif op.kind == "delete":
            del out[pos]
            offset -= 1
        else:
            out[pos] = op.replacement
    return "".join(out)


def aggregate_patterns(scripts) -> list[tuple[tuple[str, ...], int]]:
    """Histogram over operation multisets (order-insensitive), most frequent
    first; empty scripts are skipped."""
    counter: Counter[tuple[str, ...]] = Counter()
    for script in scripts:
        if script:
            counter[tuple(sorted(op.describe() for op in script))] += 1
    return sorted(counter.items(), key=lambda kv: (-kv[1], kv[0]))


def error_patterns(predictions: list[str], gold: Corpus):
    """Edit-operation histogram over the incorrectly lemmatized tokens."""
    scripts = []
    for pred, token in zip(predictions, gold.tokens()):
        if token.lemma is not None and pred != token.lemma:
            scripts.append(edit_script(pred, token.lemma))
    return aggregate_patterns(scripts)


def length_stats(incorrect_pairs, corpus_lemmas) -> float:
    """Mean gold-lemma length over the errors minus the corpus mean."""
    incorrect_pairs = list(incorrect_pairs)
    lemmas = [l for l in corpus_lemmas if l is not None]
    if not incorrect_pairs:
        raise EvaluationError("no incorrect tokens; length statistic undefined")
    if not lemmas:
        raise EvaluationError("corpus has no lemmata")
    error_mean = float(np.mean([len(gold) for _, gold in incorrect_pairs]))
    return error_mean - float(np.mean([len(l) for l in lemmas]))


# ---------------------------------------------------------------------------
# learning curve
# ---------------------------------------------------------------------------

def learning_curve(corpus: Corpus, fractions, procedure):
    """Train on growing prefixes of the corpus; one (fraction, EvalReport)
    per requested fraction. ``procedure`` maps a training corpus to an
    EvalReport against a fixed evaluation set."""
    series = []
    for fraction in fractions:
        if not 0 < fraction <= 1:
            raise EvaluationError(f"fraction {fraction} outside (0, 1]")
        n = int(len(corpus.sentences) * fraction)
        if n == 0:
            raise EvaluationError(f"fraction {fraction} yields zero sentences")
        subset = Corpus(corpus.sentences[:n], source=corpus.source,
                        split=f"prefix-{fraction}")
        series.append((fraction, procedure(subset)))
    return series


def write_learning_curve_csv(series, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["fraction", "category", "accuracy", "tokens"])
        for fraction, report in series:
            writer.writerow([fraction, "overall",
                             f"{report.overall:.6f}", report.total])
            for name, (acc, count) in report.categories.items():
                writer.writerow([fraction, name,
                                 "" if acc is None else f"{acc:.6f}", count])
