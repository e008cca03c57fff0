"""Context tagger: p(tags | words) for a sentence.

Each word is embedded by a character-level biLSTM (final states of both
directions, concatenated), projected through a linear layer, and fed to a
word-level biLSTM whose states go through a softmax over the tag inventory.
Tags carry no interdependence, so greedy per-word argmax decoding is exact.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .data import Alphabet, Corpus, MorphTag, Sentence, TagInventory, build_vocab


@dataclass
class TaggerConfig:
    char_emb_dim: int = 128
    char_hidden_dim: int = 128
    linear_dim: int = 128
    word_hidden_dim: int = 256
    word_layers: int = 2
    dropout: float = 0.3
    epochs: int = 10
    lr: float = 0.001


def _uniform(rng, shape, fan_in):
    k = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-k, k, shape).astype(ad.FLOAT)


def _forms(sentence) -> list[str]:
    if isinstance(sentence, Sentence):
        return sentence.forms()
    return list(sentence)


def select_k_best(dist: np.ndarray, k: int) -> list[tuple[int, float]]:
    """Indices of the k largest probabilities, descending, ties by index."""
    order = np.argsort(-dist, kind="stable")[:k]
    return [(int(i), float(dist[i])) for i in order]


class TaggerModel:
    """Trainable tagger over a fixed alphabet and tag inventory."""

    def __init__(self, alphabet: Alphabet, tags: TagInventory,
                 config: TaggerConfig, rng: np.random.Generator):
        if len(tags) == 0:
            raise ValueError("empty tag inventory")
        self.alphabet = alphabet
        self.tags = tags
        self.config = config
        c = config

        self.char_emb = _uniform(rng, (len(alphabet), c.char_emb_dim), c.char_emb_dim)
        self.char_fwd = ad.LstmParams.init(c.char_emb_dim, c.char_hidden_dim, rng)
        self.char_bwd = ad.LstmParams.init(c.char_emb_dim, c.char_hidden_dim, rng)
        self.feat_w = _uniform(rng, (c.linear_dim, 2 * c.char_hidden_dim),
                               2 * c.char_hidden_dim)
        self.feat_b = np.zeros(c.linear_dim, dtype=ad.FLOAT)
        self.word_lstms = []
        in_dim = c.linear_dim
        for _ in range(c.word_layers):
            fwd = ad.LstmParams.init(in_dim, c.word_hidden_dim, rng)
            bwd = ad.LstmParams.init(in_dim, c.word_hidden_dim, rng)
            self.word_lstms.append((fwd, bwd))
            in_dim = 2 * c.word_hidden_dim
        self.out_w = _uniform(rng, (len(tags), in_dim), in_dim)
        self.out_b = np.zeros(len(tags), dtype=ad.FLOAT)

        self.training_log: list[dict] = []

    def parameters(self) -> dict[str, np.ndarray]:
        params = {"char_emb": self.char_emb,
                  "feat.w": self.feat_w, "feat.b": self.feat_b,
                  "out.w": self.out_w, "out.b": self.out_b}
        params.update(self.char_fwd.entries("char_fwd"))
        params.update(self.char_bwd.entries("char_bwd"))
        for i, (fwd, bwd) in enumerate(self.word_lstms):
            params.update(fwd.entries(f"word{i}_fwd"))
            params.update(bwd.entries(f"word{i}_bwd"))
        return params

    # -- forward pieces ----------------------------------------------------

    def _char_vector(self, g: ad.Graph, form: str):
        emb = g.leaf(self.char_emb, "char_emb")
        inputs = [ad.gather_row(g, emb, idx) for idx in self.alphabet.encode_word(form)]
        fwd_states = ad.lstm_run(g, self.char_fwd, inputs)
        bwd_states = ad.lstm_run(g, self.char_bwd, inputs, reverse=True)
        return ad.concat(g, fwd_states[-1], bwd_states[0])

    def _logprob_nodes(self, g: ad.Graph, forms: list[str], train: bool,
                       rng: np.random.Generator | None):
        c = self.config
        feats = []
        for form in forms:
            u = self._char_vector(g, form)
            v = ad.affine(g, g.leaf(self.feat_w), u, g.leaf(self.feat_b))
            v = ad.dropout(g, v, c.dropout, rng, train)
            feats.append(v)
        states = feats
        for fwd, bwd in self.word_lstms:
            states = ad.bilstm(g, states, fwd, bwd)
            states = [ad.dropout(g, s, c.dropout, rng, train) for s in states]
        return [ad.log_softmax(g, ad.affine(g, g.leaf(self.out_w), s,
                                            g.leaf(self.out_b)))
                for s in states]

    # -- public ops ----------------------------------------------------------

    def embed_word(self, form: str) -> np.ndarray:
        """Concatenated final char-LSTM states; dimension 2 * char hidden."""
        if not form:
            raise ValueError("form must be non-empty")
        return self._char_vector(ad.Graph(), form).value.copy()

    def tag_distributions(self, sentence) -> list[np.ndarray]:
        """One probability vector over the tag inventory per word."""
        forms = _forms(sentence)
        if not forms:
            raise ValueError("sentence must be non-empty")
        g = ad.Graph()
        nodes = self._logprob_nodes(g, forms, train=False, rng=None)
        return [np.exp(n.value) for n in nodes]

    def greedy_tag(self, sentence) -> list[MorphTag]:
        """Per-word argmax; ties break toward the lowest tag index."""
        return [self.tags[int(np.argmax(dist))]
                for dist in self.tag_distributions(sentence)]

    def k_best(self, sentence, k: int):
        """Per word, the k most probable (tag, probability) pairs."""
        if not 1 <= k <= len(self.tags):
            raise ValueError(f"k must be in [1, {len(self.tags)}], got {k}")
        return [[(self.tags[i], p) for i, p in select_k_best(dist, k)]
                for dist in self.tag_distributions(sentence)]

    def sentence_loss(self, g: ad.Graph, sentence: Sentence, train: bool,
                      rng: np.random.Generator | None):
        """Mean cross-entropy of the gold tags."""
        nodes = self._logprob_nodes(g, sentence.forms(), train, rng)
        picked = []
        for node, token in zip(nodes, sentence.tokens):
            if token.tag is None:
                raise ValueError(f"token {token.form!r} has no gold tag")
            idx = self.tags.encode(token.tag)
            if idx is None:
                raise ValueError(f"gold tag {token.tag!r} missing from inventory")
            picked.append(ad.pick(g, node, idx))
        return ad.scale(g, ad.add_n(g, *picked), -1.0 / len(picked))

    def accuracy(self, corpus: Corpus) -> float:
        total = correct = 0
        for sentence in corpus.sentences:
            predicted = self.greedy_tag(sentence)
            for tok, tag in zip(sentence.tokens, predicted):
                total += 1
                correct += int(tok.tag == tag)
        return correct / total if total else 0.0


def train_tagger(corpus: Corpus, config: TaggerConfig, seed: int,
                 dev: Corpus | None = None,
                 alphabet: Alphabet | None = None,
                 tag_inventory: TagInventory | None = None,
                 quiet: bool = True) -> TaggerModel:
    """Adam training for the configured number of epochs (batch of one
    sentence, sentences shuffled each epoch with the threaded rng)."""
    if not corpus.sentences:
        raise ValueError("cannot train on an empty corpus")
    if alphabet is None or tag_inventory is None:
        built_alpha, built_tags = build_vocab(corpus)
        alphabet = alphabet or built_alpha
        tag_inventory = tag_inventory or built_tags
    rng = np.random.default_rng(seed)
    model = TaggerModel(alphabet, tag_inventory, config, rng)
    params = model.parameters()
    state = ad.OptimizerState.for_params(params, lr=config.lr)

    for epoch in range(config.epochs):
        order = rng.permutation(len(corpus.sentences))
        total_loss = 0.0
        for i in order:
            sentence = corpus.sentences[int(i)]
            g = ad.Graph()
            loss = model.sentence_loss(g, sentence, train=True, rng=rng)
            value, grads = ad.evaluate_with_gradients(g, loss, params)
            ad.adam_step(params, grads, state)
            total_loss += value * len(sentence)
        entry = {"epoch": epoch + 1,
                 "loss": total_loss / corpus.n_tokens()}
        if dev is not None:
            entry["dev_accuracy"] = model.accuracy(dev)
        model.training_log.append(entry)
        if not quiet:
            print(f"[tagger] {entry}")
    return model
