"""Character transducer p(lemma | tag, word) with hard monotonic attention.

A biLSTM encodes the bracketed source word; an LSTM decoder reads the
previous output character together with an order-invariant tag embedding.
Every output character aligns to exactly one source character position and
alignments never move left, so the marginal over alignments is computed
exactly with the forward algorithm over a target-step-by-source-position
lattice. Emissions come from a two-layer feed-forward network over the
aligned encoder state and the decoder state; transitions come from
multiplicative attention renormalized over the reachable (non-decreasing)
positions. The output string is implicitly terminated by the EOS symbol,
which takes its own alignment step.

Beam decoding scores every hypothesis by the exact marginal of its prefix,
so the search differs from the training objective only in the argmax.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .data import Alphabet, MorphTag


@dataclass
class LemmatizerConfig:
    enc_layers: int = 2
    dec_layers: int = 1
    hidden_dim: int = 400        # per encoder direction, and decoder width
    char_emb_dim: int = 200
    tag_emb_dim: int = 40
    ff_hidden_dim: int | None = None   # emission net hidden; defaults to hidden_dim
    dropout: float = 0.4         # embeddings and encoder layers, training only
    lr: float = 0.001
    length_margin: int = 8       # decode cap is len(word) + this
    beam_width: int = 4
    max_epochs: int = 60

    def __post_init__(self):
        if self.beam_width < 1:
            raise ValueError("beam width must be >= 1")
        if self.ff_hidden_dim is None:
            self.ff_hidden_dim = self.hidden_dim


class AttributeVocab:
    """Vocabulary of tag attributes ("Key=Value" strings); index 0 is UNK."""

    UNK = "<unk>"

    def __init__(self, attrs):
        self.symbols: list[str] = [self.UNK]
        seen = {self.UNK}
        for a in attrs:
            if a not in seen:
                seen.add(a)
                self.symbols.append(a)
        self.index = {s: i for i, s in enumerate(self.symbols)}

    @classmethod
    def from_tags(cls, tags):
        out = []
        for tag in tags:
            out.extend(sorted(f"{k}={v}" for k, v in tag.attrs))
        return cls(out)

    def encode(self, key: str, value: str) -> int:
        return self.index.get(f"{key}={value}", 0)

    def __len__(self):
        return len(self.symbols)

    def __eq__(self, other):
        return isinstance(other, AttributeVocab) and self.symbols == other.symbols

    def to_json(self):
        return {"attrs": self.symbols[1:]}

    @classmethod
    def from_json(cls, obj):
        return cls(obj["attrs"])


@dataclass
class AlignmentLattice:
    """Log-space forward trellis: alpha[j][i] covers target step j aligned at
    source character i. The last row includes the EOS step; its logsumexp is
    the sequence log-likelihood."""

    source_len: int
    target_len: int
    alpha: np.ndarray
    log_likelihood: float


@dataclass
class DecodeResult:
    lemma: str
    score: float
    truncated: bool = False


def transition_log_probs(scores: np.ndarray) -> np.ndarray:
    """Full transition table logT[prev, next] for one decoder step.

    Row ``prev`` renormalizes the attention scores over positions
    >= prev; positions to the left get probability exactly zero (-inf).
    """
    n = scores.shape[0]
    suffix = ad.log_cumsum_exp_values(scores, reverse=True)
    table = np.full((n, n), -np.inf)
    for prev in range(n):
        table[prev, prev:] = scores[prev:] - suffix[prev]
    return table


def _uniform(rng, shape, fan_in):
    k = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-k, k, shape).astype(ad.FLOAT)


class LemmatizerModel:
    def __init__(self, alphabet: Alphabet, attr_vocab: AttributeVocab,
                 config: LemmatizerConfig, rng: np.random.Generator):
        self.alphabet = alphabet
        self.attr_vocab = attr_vocab
        self.config = config
        c = config
        enc_out = 2 * c.hidden_dim

        self.char_emb = _uniform(rng, (len(alphabet), c.char_emb_dim), c.char_emb_dim)
        self.attr_emb = _uniform(rng, (len(attr_vocab), c.tag_emb_dim), c.tag_emb_dim)
        self.enc_layers = []
        in_dim = c.char_emb_dim
        for _ in range(c.enc_layers):
            fwd = ad.LstmParams.init(in_dim, c.hidden_dim, rng)
            bwd = ad.LstmParams.init(in_dim, c.hidden_dim, rng)
            self.enc_layers.append((fwd, bwd))
            in_dim = enc_out
        self.dec_layers = []
        in_dim = c.char_emb_dim + c.tag_emb_dim
        for _ in range(c.dec_layers):
            self.dec_layers.append(ad.LstmParams.init(in_dim, c.hidden_dim, rng))
            in_dim = c.hidden_dim
        self.att_w = _uniform(rng, (enc_out, c.hidden_dim), c.hidden_dim)
        self.ff_enc = _uniform(rng, (c.ff_hidden_dim, enc_out), enc_out)
        self.ff_dec = _uniform(rng, (c.ff_hidden_dim, c.hidden_dim), c.hidden_dim)
        self.ff_b1 = np.zeros(c.ff_hidden_dim, dtype=ad.FLOAT)
        self.ff_out = _uniform(rng, (len(alphabet), c.ff_hidden_dim), c.ff_hidden_dim)
        self.ff_b2 = np.zeros(len(alphabet), dtype=ad.FLOAT)

        self.training_log: list[dict] = []

    def parameters(self) -> dict[str, np.ndarray]:
        params = {"char_emb": self.char_emb, "attr_emb": self.attr_emb,
                  "att.w": self.att_w,
                  "ff.enc": self.ff_enc, "ff.dec": self.ff_dec,
                  "ff.b1": self.ff_b1, "ff.out": self.ff_out, "ff.b2": self.ff_b2}
        for i, (fwd, bwd) in enumerate(self.enc_layers):
            params.update(fwd.entries(f"enc{i}_fwd"))
            params.update(bwd.entries(f"enc{i}_bwd"))
        for i, p in enumerate(self.dec_layers):
            params.update(p.entries(f"dec{i}"))
        return params

    # -- forward pieces ------------------------------------------------------

    def _tag_vector(self, g: ad.Graph, tag: MorphTag | None, train: bool, rng):
        """Sum of attribute embeddings; the empty tag is the zero vector."""
        attrs = sorted(tag.attrs) if tag is not None else []
        if not attrs:
            return g.zeros(self.config.tag_emb_dim)
        table = g.leaf(self.attr_emb, "attr_emb")
        rows = [ad.gather_row(g, table, self.attr_vocab.encode(k, v))
                for k, v in attrs]
        vec = rows[0] if len(rows) == 1 else ad.add_n(g, *rows)
        return ad.dropout(g, vec, self.config.dropout, rng, train)

    def _encode(self, g: ad.Graph, word: str, train: bool, rng):
        """Encoder state matrix over the character positions of the word.

        The input is bracketed with BOS/EOS; those two states give context
        to their neighbours but are not alignment targets, so the lattice
        has exactly len(word) columns.
        """
        c = self.config
        ids = ([self.alphabet.bos_index] + self.alphabet.encode_word(word)
               + [self.alphabet.eos_index])
        emb = g.leaf(self.char_emb, "char_emb")
        states = [ad.dropout(g, ad.gather_row(g, emb, i), c.dropout, rng, train)
                  for i in ids]
        for layer, (fwd, bwd) in enumerate(self.enc_layers):
            states = ad.bilstm(g, states, fwd, bwd)
            states = [ad.dropout(g, s, c.dropout, rng, train) for s in states]
        return ad.stack(g, states[1:-1])

    def _decoder_state0(self, g: ad.Graph):
        return [(g.zeros(self.config.hidden_dim), g.zeros(self.config.hidden_dim))
                for _ in self.dec_layers]

    def _decoder_step(self, g: ad.Graph, prev_char: int, tag_vec, state,
                      train: bool, rng):
        """One decoder update; input is [emb(previous char) ; tag vector]."""
        emb = g.leaf(self.char_emb, "char_emb")
        x = ad.dropout(g, ad.gather_row(g, emb, prev_char),
                       self.config.dropout, rng, train)
        x = ad.concat(g, x, tag_vec)
        new_state = []
        for p, (h, c) in zip(self.dec_layers, state):
            h, c = ad.lstm_step(g, p, x, h, c)
            new_state.append((h, c))
            x = h
        return x, new_state

    def _step_tables(self, g: ad.Graph, h_enc, h_dec):
        """Transition attention scores (L,) and log emission matrix (L, V)."""
        u = ad.matvec(g, g.leaf(self.att_w), h_dec)
        scores = ad.matvec(g, h_enc, u)
        hidden = ad.tanh(g, ad.add_rowvec(
            g,
            ad.linear_rows(g, h_enc, g.leaf(self.ff_enc), g.leaf(self.ff_b1)),
            ad.matvec(g, g.leaf(self.ff_dec), h_dec)))
        log_emit = ad.log_softmax(
            g, ad.linear_rows(g, hidden, g.leaf(self.ff_out), g.leaf(self.ff_b2)))
        return scores, log_emit

    def _marginal_node(self, g: ad.Graph, word: str, tag: MorphTag | None,
                       lemma: str, train: bool = False, rng=None,
                       keep_alpha: bool = False):
        """Graph node holding log p(lemma | tag, word); exact in the
        alignments via the forward algorithm, in log space."""
        if not word:
            raise ValueError("word must be non-empty")
        if not lemma:
            raise ValueError("lemma must be non-empty")
        h_enc = self._encode(g, word, train, rng)
        tag_vec = self._tag_vector(g, tag, train, rng)
        targets = self.alphabet.encode_word(lemma) + [self.alphabet.eos_index]
        prev_chars = [self.alphabet.bos_index] + self.alphabet.encode_word(lemma)

        state = self._decoder_state0(g)
        alpha = None
        alphas = []
        for j, (prev, target) in enumerate(zip(prev_chars, targets)):
            h_dec, state = self._decoder_step(g, prev, tag_vec, state, train, rng)
            scores, log_emit = self._step_tables(g, h_enc, h_dec)
            emit_col = ad.take_col(g, log_emit, target)
            if j == 0:
                # virtual start position 0: renormalize over every position
                alpha = ad.add(g, ad.log_softmax(g, scores), emit_col)
            else:
                suffix = ad.log_cumsum_exp(g, scores, reverse=True)
                reach = ad.log_cumsum_exp(g, ad.sub(g, alpha, suffix))
                alpha = ad.add_n(g, scores, reach, emit_col)
            if keep_alpha:
                alphas.append(alpha.value.copy())
        out = ad.logsumexp(g, alpha)
        if keep_alpha:
            return out, np.stack(alphas)
        return out

    # -- public ops ------------------------------------------------------------

    def tag_embed(self, tag: MorphTag | None) -> np.ndarray:
        """Order-invariant tag vector: sum of attribute embeddings."""
        return self._tag_vector(ad.Graph(), tag, train=False, rng=None).value.copy()

    def forward_marginal(self, word: str, tag: MorphTag | None, lemma: str) -> float:
        """Exact log p(lemma | tag, word), summed over monotone alignments."""
        g = ad.Graph()
        return float(self._marginal_node(g, word, tag, lemma).value)

    def lattice(self, word: str, tag: MorphTag | None, lemma: str) -> AlignmentLattice:
        g = ad.Graph()
        out, alphas = self._marginal_node(g, word, tag, lemma, keep_alpha=True)
        return AlignmentLattice(source_len=len(word), target_len=len(lemma),
                                alpha=alphas, log_likelihood=float(out.value))

    def loss_node(self, g: ad.Graph, word: str, tag: MorphTag | None, lemma: str,
                  train: bool = True, rng=None):
        return ad.neg(g, self._marginal_node(g, word, tag, lemma, train, rng))

    def score_tables(self, word: str, tag: MorphTag | None, prefix: str):
        """Per decoder step over BOS + prefix: (attention scores, log emissions).

        Inference-mode tables for inspecting the model's distributions; step
        count is len(prefix) + 1 (the extra step is the one that may emit EOS
        after the full prefix).
        """
        g = ad.Graph()
        h_enc = self._encode(g, word, train=False, rng=None)
        tag_vec = self._tag_vector(g, tag, train=False, rng=None)
        prev_chars = [self.alphabet.bos_index] + self.alphabet.encode_word(prefix)
        state = self._decoder_state0(g)
        scores, emits = [], []
        for prev in prev_chars:
            h_dec, state = self._decoder_step(g, prev, tag_vec, state,
                                              train=False, rng=None)
            s, e = self._step_tables(g, h_enc, h_dec)
            scores.append(s.value.copy())
            emits.append(e.value.copy())
        return scores, emits

    def decode(self, word: str, tag: MorphTag | None,
               beam_width: int | None = None) -> DecodeResult:
        """Beam search where each hypothesis is scored by the exact forward
        marginal of its prefix. Returns the best EOS-terminated hypothesis,
        or the best truncated one (flagged) if none terminates in time."""
        results = self.decode_nbest(word, tag, beam_width)
        return results[0]

    def decode_nbest(self, word: str, tag: MorphTag | None,
                     beam_width: int | None = None) -> list[DecodeResult]:
        """All terminated hypotheses found by the beam, best first."""
        if not word:
            raise ValueError("word must be non-empty")
        if beam_width is None:
            beam_width = self.config.beam_width
        if beam_width < 1:
            raise ValueError("beam width must be >= 1")
        cap = len(word) + self.config.length_margin
        g = ad.Graph()
        h_enc = self._encode(g, word, train=False, rng=None)
        tag_vec = self._tag_vector(g, tag, train=False, rng=None)
        eos = self.alphabet.eos_index
        char_ids = range(self.alphabet.n_specials, len(self.alphabet))

        # hypothesis: (char ids, decoder state nodes, alpha | None, prefix score)
        beam = [([], self._decoder_state0(g), None, 0.0)]
        terminated: list[DecodeResult] = []
        for _ in range(cap + 1):
            candidates = []
            for rank, (chars, state, alpha, _) in enumerate(beam):
                prev = chars[-1] if chars else self.alphabet.bos_index
                h_dec, new_state = self._decoder_step(g, prev, tag_vec, state,
                                                      train=False, rng=None)
                s_node, e_node = self._step_tables(g, h_enc, h_dec)
                s = s_node.value
                log_emit = e_node.value
                if alpha is None:
                    base = ad.log_softmax_values(s)
                else:
                    suffix = ad.log_cumsum_exp_values(s, reverse=True)
                    base = s + ad.log_cumsum_exp_values(alpha - suffix)
                lattice = base[:, None] + log_emit
                peak = lattice.max(axis=0)
                prefix_scores = peak + np.log(np.exp(lattice - peak).sum(axis=0))
                if chars:  # lemmata are non-empty; "" never terminates
                    terminated.append(DecodeResult(
                        "".join(self.alphabet.decode(c) for c in chars),
                        float(prefix_scores[eos])))
                for c in char_ids:
                    candidates.append((float(prefix_scores[c]), rank, c,
                                       chars + [c], new_state, lattice[:, c]))
            if not candidates:
                break
            candidates.sort(key=lambda item: (-item[0], item[1], item[2]))
            beam = [(chars, state, alpha, score)
                    for score, _, _, chars, state, alpha in candidates[:beam_width]]
            best_active = beam[0][3]
            if terminated and max(t.score for t in terminated) >= best_active:
                break

        terminated.sort(key=lambda r: -r.score)
        if terminated and np.isfinite(terminated[0].score):
            return terminated
        # nothing terminated within the cap: flag the best running hypothesis
        chars, _, _, score = beam[0]
        return [DecodeResult("".join(self.alphabet.decode(c) for c in chars),
                             float(score), truncated=True)]


def build_attr_vocab(triples) -> AttributeVocab:
    return AttributeVocab.from_tags(t for _, t, _ in triples if t is not None)


def build_alphabet(triples) -> Alphabet:
    chars: dict[str, None] = {}
    for word, _, lemma in triples:
        for ch in word:
            chars.setdefault(ch)
        for ch in lemma:
            chars.setdefault(ch)
    return Alphabet(chars.keys())


def mean_log_likelihood(model: LemmatizerModel, triples) -> float:
    total = 0.0
    for word, tag, lemma in triples:
        total += model.forward_marginal(word, tag, lemma)
    return total / len(triples)


def train_lemmatizer(triples, config: LemmatizerConfig, seed: int,
                     dev_triples=None, schedule=None,
                     alphabet: Alphabet | None = None,
                     attr_vocab: AttributeVocab | None = None,
                     quiet: bool = True) -> LemmatizerModel:
    """MLE on the exact alignment marginal, one (word, tag, lemma) triple per
    update: Adam, gradient clipping at norm 5, and (when dev data is given)
    the halve-on-no-improvement learning-rate schedule with early stopping.
    """
    triples = list(triples)
    if not triples:
        raise ValueError("cannot train on an empty triple set")
    if alphabet is None:
        alphabet = build_alphabet(triples)
    if attr_vocab is None:
        attr_vocab = build_attr_vocab(triples)
    if dev_triples is not None and schedule is None:
        from .pipeline import ScheduleState
        schedule = ScheduleState(lr=config.lr)

    rng = np.random.default_rng(seed)
    model = LemmatizerModel(alphabet, attr_vocab, config, rng)
    params = model.parameters()
    state = ad.OptimizerState.for_params(params, lr=config.lr)
    best_snapshot = None

    for epoch in range(config.max_epochs):
        order = rng.permutation(len(triples))
        total = 0.0
        for i in order:
            word, tag, lemma = triples[int(i)]
            g = ad.Graph()
            for name, arr in params.items():  # zero grads for unused tables
                g.leaf(arr, name)
            loss = model.loss_node(g, word, tag, lemma, train=True, rng=rng)
            value, grads = ad.evaluate_with_gradients(g, loss, params)
            ad.clip_by_global_norm(grads, 5.0)
            ad.adam_step(params, grads, state)
            total += value
        entry = {"epoch": epoch + 1, "loss": total / len(triples), "lr": state.lr}
        if dev_triples is not None:
            dev_ll = mean_log_likelihood(model, dev_triples)
            entry["dev_ll"] = dev_ll
            improved = schedule.step(dev_ll)
            if improved:
                best_snapshot = {k: v.copy() for k, v in params.items()}
            elif best_snapshot is not None:
                for k, v in params.items():
                    v[:] = best_snapshot[k]
            state.lr = schedule.lr
            entry["lr"] = state.lr
        model.training_log.append(entry)
        if not quiet:
            print(f"[lemmatizer] {entry}")
        if schedule is not None and schedule.stop:
            break
    if best_snapshot is not None:
        for k, v in params.items():
            v[:] = best_snapshot[k]
    return model
