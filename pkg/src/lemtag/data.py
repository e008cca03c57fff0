"""CoNLL-U ingestion and the corpus-level bookkeeping around it.

Covers reading/writing the 10-column format, bundling UPOS+FEATS into a
single order-invariant morphological tag, character/tag vocabularies,
jackknife fold generation, and the ambiguous/unseen/seen-unambiguous token
categorization used for evaluation breakdowns.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field, replace

import numpy as np

# column indices of the CoNLL-U format
ID, FORM, LEMMA, UPOS, XPOS, FEATS, HEAD, DEPREL, DEPS, MISC = range(10)

CATEGORIES = ("ambiguous", "unseen", "seen-unambiguous")


class ConlluError(ValueError):
    pass


class TagError(ValueError):
    pass


@dataclass(frozen=True)
class MorphTag:
    """A bundle of key=value attributes treated as one label.

    Equality and hashing go through the attribute set, so insertion order
    never matters. The POS lives inside as a regular attribute.
    """

    attrs: frozenset[tuple[str, str]]

    POS_KEY = "POS"

    @classmethod
    def make(cls, pairs) -> "MorphTag":
        d = dict(pairs)
        return cls(frozenset(d.items()))

    @property
    def pos(self) -> str | None:
        for key, value in self.attrs:
            if key == self.POS_KEY:
                return value
        return None

    def canonical(self) -> str:
        """Stable text form: attributes sorted by key (POS first)."""
        items = sorted(self.attrs, key=lambda kv: (kv[0] != self.POS_KEY, kv[0]))
        return "|".join(f"{k}={v}" for k, v in items)

    @classmethod
    def from_canonical(cls, text: str) -> "MorphTag":
        if not text:
            return cls(frozenset())
        return cls.make(pair.split("=", 1) for pair in text.split("|"))

    def feats_column(self) -> str:
        feats = sorted((k, v) for k, v in self.attrs if k != self.POS_KEY)
        return "|".join(f"{k}={v}" for k, v in feats) or "_"

    def __repr__(self):
        return f"MorphTag({self.canonical()})"


def bundle_tag(upos: str, feats: str) -> MorphTag:
    """POS=upos plus every Key=Value pair of the FEATS column."""
    pairs = {MorphTag.POS_KEY: upos}
    if feats and feats != "_":
        for chunk in feats.split("|"):
            if "=" not in chunk:
                raise TagError(f"malformed feature pair {chunk!r} in {feats!r}")
            key, value = chunk.split("=", 1)
            pairs[key] = value
    return MorphTag(frozenset(pairs.items()))


@dataclass
class Token:
    form: str
    lemma: str | None = None
    tag: MorphTag | None = None
    columns: tuple[str, ...] | None = None

    def __post_init__(self):
        if not self.form:
            raise ConlluError("token form must be non-empty")


@dataclass
class Sentence:
    tokens: list[Token]
    comments: list[str] = field(default_factory=list)
    # raw multiword-token / empty-node lines, anchored before token index
    extras: list[tuple[int, str]] = field(default_factory=list)

    def __post_init__(self):
        if not self.tokens:
            raise ConlluError("sentence must contain at least one token")

    def forms(self) -> list[str]:
        return [t.form for t in self.tokens]

    def __len__(self):
        return len(self.tokens)


@dataclass
class Corpus:
    sentences: list[Sentence]
    source: str | None = field(default=None, compare=False)
    split: str | None = field(default=None, compare=False)

    def tokens(self):
        for sentence in self.sentences:
            yield from sentence.tokens

    def n_tokens(self) -> int:
        return sum(len(s) for s in self.sentences)

    def __len__(self):
        return len(self.sentences)


def _is_range_id(s: str) -> bool:
    parts = s.split("-")
    return len(parts) == 2 and all(p.isdigit() for p in parts)


def _is_empty_node_id(s: str) -> bool:
    parts = s.split(".")
    return len(parts) == 2 and all(p.isdigit() for p in parts)


def parse_conllu(data, source: str | None = None, split: str | None = None) -> Corpus:
    """Parse CoNLL-U text (str, bytes, or file object) into a Corpus.

    Multiword-token range lines ("1-2") and empty nodes ("5.1") are kept as
    raw lines for round-tripping but excluded from the token sequence.
    A lemma of "_" is treated as missing.
    """
    if isinstance(data, bytes):
        text = data.decode("utf-8")
    elif hasattr(data, "read"):
        text = data.read()
        if isinstance(text, bytes):
            text = text.decode("utf-8")
    else:
        text = data

    sentences = []
    tokens: list[Token] = []
    comments: list[str] = []
    extras: list[tuple[int, str]] = []

    def flush():
        nonlocal tokens, comments, extras
        if tokens:
            sentences.append(Sentence(tokens, comments, extras))
        tokens, comments, extras = [], [], []

    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.rstrip("\r")
        if not line.strip():
            flush()
            continue
        if line.startswith("#"):
            comments.append(line)
            continue
        cols = line.split("\t")
        if len(cols) != 10:
            raise ConlluError(
                f"line {lineno}: expected 10 tab-separated columns, got {len(cols)}"
            )
        if _is_range_id(cols[ID]) or _is_empty_node_id(cols[ID]):
            extras.append((len(tokens), line))
            continue
        if not cols[FORM]:
            raise ConlluError(f"line {lineno}: empty FORM column")
        lemma = cols[LEMMA] if cols[LEMMA] != "_" else None
        if cols[UPOS] == "_" and cols[FEATS] == "_":
            tag = None
        else:
            try:
                tag = bundle_tag(cols[UPOS], cols[FEATS])
            except TagError as exc:
                raise ConlluError(f"line {lineno}: {exc}") from exc
        tokens.append(Token(cols[FORM], lemma, tag, tuple(cols)))
    flush()
    return Corpus(sentences, source=source, split=split)


def read_conllu(path, split: str | None = None) -> Corpus:
    with open(path, encoding="utf-8") as f:
        return parse_conllu(f, source=str(path), split=split)


def _token_columns(token: Token, position: int) -> list[str]:
    if token.columns is not None:
        cols = list(token.columns)
    else:
        cols = [str(position), token.form, "_", "_", "_", "_", "_", "_", "_", "_"]
    cols[FORM] = token.form
    cols[LEMMA] = token.lemma if token.lemma is not None else "_"
    if token.tag is not None:
        cols[UPOS] = token.tag.pos or "_"
        cols[FEATS] = token.tag.feats_column()
    return cols


def write_conllu(corpus: Corpus, target) -> str | None:
    """Serialize a Corpus back to CoNLL-U.

    ``target`` may be a path or a writable file object; pass None to get the
    text back. LEMMA, UPOS, and FEATS come from the Token fields (so corpora
    carrying predictions serialize them); other columns are preserved.
    """
    buf = io.StringIO()
    for sentence in corpus.sentences:
        for comment in sentence.comments:
            buf.write(comment + "\n")
        extras_at = {}
        for anchor, line in sentence.extras:
            extras_at.setdefault(anchor, []).append(line)
        for i, token in enumerate(sentence.tokens):
            for line in extras_at.get(i, []):
                buf.write(line + "\n")
            buf.write("\t".join(_token_columns(token, i + 1)) + "\n")
        for line in extras_at.get(len(sentence.tokens), []):
            buf.write(line + "\n")
        buf.write("\n")
    text = buf.getvalue()
    if target is None:
        return text
    if hasattr(target, "write"):
        target.write(text)
        return None
    with open(target, "w", encoding="utf-8") as f:
        f.write(text)
    return None


def with_predictions(corpus: Corpus, tags=None, lemmas=None) -> Corpus:
    """Copy of the corpus with predicted tags and/or lemmata swapped in.

    ``tags``/``lemmas`` are flat lists aligned with corpus token order.
    """
    n = corpus.n_tokens()
    for name, seq in (("tags", tags), ("lemmas", lemmas)):
        if seq is not None and len(seq) != n:
            raise ValueError(f"{name} length {len(seq)} != token count {n}")
    out = []
    k = 0
    for sentence in corpus.sentences:
        new_tokens = []
        for token in sentence.tokens:
            new_tokens.append(replace(
                token,
                tag=tags[k] if tags is not None else token.tag,
                lemma=lemmas[k] if lemmas is not None else token.lemma,
            ))
            k += 1
        out.append(Sentence(new_tokens, list(sentence.comments), list(sentence.extras)))
    return Corpus(out, source=corpus.source, split=corpus.split)


# ---------------------------------------------------------------------------
# vocabularies
# ---------------------------------------------------------------------------

class Alphabet:
    """Character inventory plus reserved specials, with stable indices."""

    PAD, UNK, BOS, EOS = "<pad>", "<unk>", "<bos>", "<eos>"
    SPECIALS = (PAD, UNK, BOS, EOS)

    def __init__(self, chars):
        self.symbols: list[str] = list(self.SPECIALS) + list(chars)
        self.index: dict[str, int] = {s: i for i, s in enumerate(self.symbols)}
        if len(self.index) != len(self.symbols):
            raise ValueError("duplicate symbols in alphabet")

    pad_index, unk_index, bos_index, eos_index = 0, 1, 2, 3
    n_specials = 4

    def encode(self, ch: str) -> int:
        return self.index.get(ch, self.unk_index)

    def encode_word(self, word: str) -> list[int]:
        return [self.encode(ch) for ch in word]

    def decode(self, idx: int) -> str:
        return self.symbols[idx]

    def __len__(self):
        return len(self.symbols)

    def __eq__(self, other):
        return isinstance(other, Alphabet) and self.symbols == other.symbols

    def to_json(self):
        return {"chars": self.symbols[self.n_specials:]}

    @classmethod
    def from_json(cls, obj):
        return cls(obj["chars"])


class TagInventory:
    """Distinct morphological tags in first-occurrence order."""

    def __init__(self, tags):
        self.tags: list[MorphTag] = []
        self.index: dict[MorphTag, int] = {}
        for tag in tags:
            if tag not in self.index:
                self.index[tag] = len(self.tags)
                self.tags.append(tag)

    def encode(self, tag: MorphTag) -> int | None:
        return self.index.get(tag)

    def __len__(self):
        return len(self.tags)

    def __getitem__(self, i) -> MorphTag:
        return self.tags[i]

    def __eq__(self, other):
        return isinstance(other, TagInventory) and self.tags == other.tags

    def to_json(self):
        return {"tags": [t.canonical() for t in self.tags]}

    @classmethod
    def from_json(cls, obj):
        return cls(MorphTag.from_canonical(t) for t in obj["tags"])


def build_vocab(corpus: Corpus) -> tuple[Alphabet, TagInventory]:
    """First-occurrence character inventory over forms and lemmata, plus the
    distinct gold tags."""
    chars: dict[str, None] = {}
    tags = []
    for token in corpus.tokens():
        for ch in token.form:
            chars.setdefault(ch)
        if token.lemma:
            for ch in token.lemma:
                chars.setdefault(ch)
        if token.tag is not None:
            tags.append(token.tag)
    return Alphabet(chars.keys()), TagInventory(tags)


# ---------------------------------------------------------------------------
# folds and categories
# ---------------------------------------------------------------------------

def fold_index_blocks(n: int, k: int, rng: np.random.Generator | None = None):
    """Partition range(n) into k blocks whose sizes differ by at most one.

    Contiguous by default; pass an rng to shuffle assignment first.
    """
    if k < 2:
        raise ValueError(f"need at least 2 folds, got {k}")
    if k > n:
        raise ValueError(f"cannot split {n} sentences into {k} folds")
    order = list(range(n)) if rng is None else list(rng.permutation(n))
    base, extra = divmod(n, k)
    blocks = []
    start = 0
    for i in range(k):
        size = base + (1 if i < extra else 0)
        blocks.append(order[start:start + size])
        start += size
    return blocks


def jackknife_folds(corpus: Corpus, k: int, rng: np.random.Generator | None = None):
    """k pairs (train-portion, heldout-portion) partitioning the corpus at
    sentence granularity."""
    blocks = fold_index_blocks(len(corpus.sentences), k, rng)
    folds = []
    for block in blocks:
        heldout_set = set(block)
        train = [s for i, s in enumerate(corpus.sentences) if i not in heldout_set]
        heldout = [corpus.sentences[i] for i in block]
        folds.append((Corpus(train, source=corpus.source, split="fold-train"),
                      Corpus(heldout, source=corpus.source, split="fold-heldout")))
    return folds


def split_corpus(corpus: Corpus, heldout_fraction: float,
                 rng: np.random.Generator | None = None):
    """(train, heldout) split at sentence granularity; contiguous tail unless
    an rng is given."""
    n = len(corpus.sentences)
    n_heldout = int(round(n * heldout_fraction))
    if n_heldout < 1 or n_heldout >= n:
        raise ValueError(f"heldout fraction {heldout_fraction} leaves an empty side")
    order = list(range(n)) if rng is None else list(rng.permutation(n))
    heldout_idx = set(order[n - n_heldout:])
    train = [s for i, s in enumerate(corpus.sentences) if i not in heldout_idx]
    heldout = [s for i, s in enumerate(corpus.sentences) if i in heldout_idx]
    return (Corpus(train, source=corpus.source, split="train"),
            Corpus(heldout, source=corpus.source, split="heldout"))


def categorize_tokens(train: Corpus, eval_corpus: Corpus) -> list[str]:
    """Per eval token: "unseen" if its form never occurs in train,
    "ambiguous" if the form has >= 2 distinct training lemmata, else
    "seen-unambiguous". Matching is exact and case-sensitive."""
    lemmata_by_form: dict[str, set[str]] = {}
    for token in train.tokens():
        if token.lemma is not None:
            lemmata_by_form.setdefault(token.form, set()).add(token.lemma)
        else:
            lemmata_by_form.setdefault(token.form, set())
    categories = []
    for token in eval_corpus.tokens():
        seen = lemmata_by_form.get(token.form)
        if seen is None:
            categories.append("unseen")
        elif len(seen) >= 2:
            categories.append("ambiguous")
        else:
            categories.append("seen-unambiguous")
    return categories
