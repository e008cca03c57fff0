"""Joint-model orchestration: p(lemmas, tags | words) = transducer * tagger.

Training uses jackknifing: the corpus is split into kappa folds, a tagger
trained on each complement predicts silver tags for its held-out fold, and
the lemmatizer trains on (form, silver tag, gold lemma) triples so it has
already seen tagging mistakes when it meets them at decode time. A final
tagger trained on everything supplies test-time tags, and also the silver
tags of the development data that drive the learning-rate schedule (halve on
no improvement, stop at 1e-5).

Decoding is either greedy (best tag, then best lemma) or crunching: the
lemma score is summed over the k-best tags weighted by their tagger
probabilities. The tag weights stay unnormalized over the k-best list;
renormalizing would scale every candidate equally and cannot move the
argmax.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .data import (Alphabet, Corpus, MorphTag, Sentence, TagInventory,
                   build_vocab, fold_index_blocks, with_predictions)
from .lemmatizer import (AttributeVocab, LemmatizerConfig, LemmatizerModel,
                         train_lemmatizer)
from .tagger import TaggerConfig, TaggerModel, train_tagger


@dataclass
class ScheduleState:
    """Learning-rate schedule: halve whenever the development log-likelihood
    fails to improve on the best seen, stop once the rate reaches 1e-5."""

    lr: float = 0.001
    factor: float = 0.5
    min_lr: float = 1e-5
    best: float = float("-inf")
    halvings: int = 0
    stop: bool = False
    restore_best: bool = False

    def step(self, dev_ll: float) -> bool:
        """Record one dev evaluation; returns True when it improved."""
        if dev_ll > self.best:
            self.best = dev_ll
            self.restore_best = False
            return True
        self.lr *= self.factor
        self.halvings += 1
        self.restore_best = True
        if self.lr <= self.min_lr:
            self.stop = True
        return False


def schedule_step(state: ScheduleState, dev_ll: float) -> ScheduleState:
    state.step(dev_ll)
    return state


@dataclass
class JointModel:
    tagger: TaggerModel
    lemmatizer: LemmatizerModel
    alphabet: Alphabet
    tags: TagInventory
    provenance: dict = field(default_factory=dict)


def _silver_triples(corpus: Corpus, silver_tags: list[MorphTag]):
    triples = []
    for token, tag in zip(corpus.tokens(), silver_tags):
        if token.lemma is not None:
            triples.append((token.form, tag, token.lemma))
    return triples


def predict_tags(tagger, corpus: Corpus) -> list[MorphTag]:
    tags = []
    for sentence in corpus.sentences:
        tags.extend(tagger.greedy_tag(sentence))
    return tags


def jackknife_train(corpus: Corpus, kappa: int, tagger_config: TaggerConfig,
                    lemmatizer_config: LemmatizerConfig, seed: int,
                    dev_corpus: Corpus | None = None,
                    shuffle_folds: bool = False,
                    train_tagger_fn=None, quiet: bool = True):
    """Returns (JointModel, silver-tagged training corpus).

    Every training token gets exactly one silver tag, predicted by the
    tagger whose training data excluded that token's fold. The lemmatizer
    then trains on the silver tags over the whole corpus; the returned
    tagger is trained on all of it.
    """
    if train_tagger_fn is None:
        train_tagger_fn = train_tagger
    alphabet, tags = build_vocab(corpus)
    seeds = [int(s) for s in np.random.SeedSequence(seed).generate_state(kappa + 2)]
    fold_rng = np.random.default_rng(seeds[-1]) if shuffle_folds else None
    blocks = fold_index_blocks(len(corpus.sentences), kappa, fold_rng)

    silver: list[list[MorphTag] | None] = [None] * len(corpus.sentences)
    for fold, block in enumerate(blocks):
        heldout = set(block)
        train_part = Corpus(
            [s for i, s in enumerate(corpus.sentences) if i not in heldout],
            source=corpus.source)
        fold_tagger = train_tagger_fn(train_part, tagger_config, seeds[fold],
                                      alphabet=alphabet, tag_inventory=tags)
        for i in block:
            silver[i] = fold_tagger.greedy_tag(corpus.sentences[i])
        if not quiet:
            print(f"[jackknife] fold {fold + 1}/{kappa} tagged "
                  f"{len(block)} held-out sentences")

    silver_flat = [tag for per_sentence in silver for tag in per_sentence]
    final_tagger = train_tagger_fn(corpus, tagger_config, seeds[kappa],
                                   alphabet=alphabet, tag_inventory=tags)

    triples = _silver_triples(corpus, silver_flat)
    dev_triples = None
    if dev_corpus is not None:
        dev_silver = predict_tags(final_tagger, dev_corpus)
        dev_triples = _silver_triples(dev_corpus, dev_silver)
    attr_vocab = AttributeVocab.from_tags(tags.tags)
    lemmatizer = train_lemmatizer(
        triples, lemmatizer_config, seeds[kappa + 1], dev_triples=dev_triples,
        schedule=ScheduleState(lr=lemmatizer_config.lr),
        alphabet=alphabet, attr_vocab=attr_vocab, quiet=quiet)

    silver_corpus = with_predictions(corpus, tags=silver_flat)
    model = JointModel(
        tagger=final_tagger, lemmatizer=lemmatizer,
        alphabet=alphabet, tags=tags,
        provenance={"treebank": corpus.source, "seed": seed, "kappa": kappa,
                    "tagger_config": asdict(tagger_config),
                    "lemmatizer_config": asdict(lemmatizer_config)})
    return model, silver_corpus


# ---------------------------------------------------------------------------
# decoding
# ---------------------------------------------------------------------------

def greedy_joint_decode(model: JointModel, sentence,
                        beam_width: int | None = None):
    """Best tag per word, then best lemma per (word, tag). Returns
    (tags, lemmas)."""
    forms = sentence.forms() if isinstance(sentence, Sentence) else list(sentence)
    tags = model.tagger.greedy_tag(forms)
    lemmas = [model.lemmatizer.decode(form, tag, beam_width).lemma
              for form, tag in zip(forms, tags)]
    return tags, lemmas


def crunch_decode(model: JointModel, sentence, k: int,
                  candidates=None, beam_width: int | None = None):
    """Per word, the lemma maximizing sum over the k-best tags of
    p(lemma | tag, word) * p(tag | sentence).

    ``candidates`` optionally fixes the candidate lemma list (shared by all
    tokens); by default each token's candidates are the union of the beam
    hypotheses decoded under each of its k-best tags, in tag order.
    """
    forms = sentence.forms() if isinstance(sentence, Sentence) else list(sentence)
    k_best = model.tagger.k_best(forms, k)
    lemmas = []
    for form, tag_probs in zip(forms, k_best):
        if candidates is None:
            cands: list[str] = []
            for tag, _ in tag_probs:
                for result in model.lemmatizer.decode_nbest(form, tag, beam_width):
                    if result.lemma and result.lemma not in cands:
                        cands.append(result.lemma)
        else:
            cands = [c for c in candidates if c]
        best_lemma, best_score = None, -np.inf
        for cand in cands:
            parts = [model.lemmatizer.forward_marginal(form, tag, cand)
                     + np.log(p) for tag, p in tag_probs]
            score = ad.logsumexp_values(np.array(parts))
            if score > best_score:
                best_lemma, best_score = cand, score
        lemmas.append(best_lemma)
    return lemmas


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

MAGIC = b"LTMS"
FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    pass


def _payload_entries(params: dict[str, np.ndarray]):
    entries = []
    offset = 0
    for name in sorted(params):
        arr = params[name]
        descr = arr.dtype.newbyteorder("<").str
        entries.append({"name": name, "shape": list(arr.shape),
                        "dtype": descr, "offset": offset,
                        "nbytes": int(arr.nbytes)})
        offset += arr.nbytes
    return entries


def save_model(model: JointModel, path) -> None:
    """Self-describing container: magic, version, JSON manifest (entry table,
    vocabularies, configs, provenance), then raw little-endian payload."""
    params = {}
    for prefix, sub in (("tagger", model.tagger), ("lemmatizer", model.lemmatizer)):
        for name, arr in sub.parameters().items():
            params[f"{prefix}/{name}"] = arr
    entries = _payload_entries(params)
    manifest = {
        "entries": entries,
        "alphabet": model.alphabet.to_json(),
        "tag_inventory": model.tags.to_json(),
        "attr_vocab": model.lemmatizer.attr_vocab.to_json(),
        "tagger_config": asdict(model.tagger.config),
        "lemmatizer_config": asdict(model.lemmatizer.config),
        "provenance": model.provenance,
    }
    blob = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(np.array(FORMAT_VERSION, dtype="<u4").tobytes())
        f.write(np.array(len(blob), dtype="<u8").tobytes())
        f.write(blob)
        for entry in entries:
            arr = params[entry["name"]]
            f.write(np.ascontiguousarray(arr, dtype=np.dtype(entry["dtype"])).tobytes())


def load_model(path) -> JointModel:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != MAGIC:
        raise ModelFormatError("not a model container (bad magic)")
    version = int(np.frombuffer(raw[4:8], dtype="<u4")[0])
    if version != FORMAT_VERSION:
        raise ModelFormatError(
            f"unsupported format version {version} (expected {FORMAT_VERSION})")
    manifest_len = int(np.frombuffer(raw[8:16], dtype="<u8")[0])
    manifest = json.loads(raw[16:16 + manifest_len].decode("utf-8"))
    payload = raw[16 + manifest_len:]

    expected = sum(e["nbytes"] for e in manifest["entries"])
    if len(payload) != expected:
        raise ModelFormatError(
            f"payload is {len(payload)} bytes, entry table wants {expected}")

    alphabet = Alphabet.from_json(manifest["alphabet"])
    tags = TagInventory.from_json(manifest["tag_inventory"])
    attr_vocab = AttributeVocab.from_json(manifest["attr_vocab"])
    tagger_config = TaggerConfig(**manifest["tagger_config"])
    lemmatizer_config = LemmatizerConfig(**manifest["lemmatizer_config"])

    rng = np.random.default_rng(0)
    tagger = TaggerModel(alphabet, tags, tagger_config, rng)
    lemmatizer = LemmatizerModel(alphabet, attr_vocab, lemmatizer_config, rng)
    params = {}
    for prefix, sub in (("tagger", tagger), ("lemmatizer", lemmatizer)):
        for name, arr in sub.parameters().items():
            params[f"{prefix}/{name}"] = arr

    loaded = set()
    for entry in manifest["entries"]:
        name = entry["name"]
        if name not in params:
            raise ModelFormatError(f"container has unknown entry {name!r}")
        arr = params[name]
        if list(arr.shape) != entry["shape"]:
            raise ModelFormatError(
                f"entry {name!r} has shape {entry['shape']}, model wants "
                f"{list(arr.shape)}")
        values = np.frombuffer(
            payload[entry["offset"]:entry["offset"] + entry["nbytes"]],
            dtype=np.dtype(entry["dtype"])).reshape(entry["shape"])
        arr[:] = values
        loaded.add(name)
    missing = set(params) - loaded
    if missing:
        raise ModelFormatError(f"container missing entries: {sorted(missing)}")

    return JointModel(tagger=tagger, lemmatizer=lemmatizer, alphabet=alphabet,
                      tags=tags, provenance=manifest.get("provenance", {}))
