import numpy as np
import pytest

from lemtag import data as D
from lemtag import pipeline as P
from lemtag.lemmatizer import AttributeVocab, LemmatizerConfig, LemmatizerModel
from lemtag.tagger import TaggerConfig, TaggerModel

TINY_TAGGER = TaggerConfig(char_emb_dim=5, char_hidden_dim=4, linear_dim=5,
                           word_hidden_dim=6, word_layers=1, dropout=0.0,
                           epochs=1, lr=0.01)
TINY_LEMM = LemmatizerConfig(enc_layers=1, dec_layers=1, hidden_dim=6,
                             char_emb_dim=5, tag_emb_dim=3, ff_hidden_dim=6,
                             dropout=0.0, length_margin=4, beam_width=4,
                             max_epochs=1)


def tiny_corpus(n=8):
    lines = []
    upos = ["NOUN", "VERB", "DET"]
    for i in range(n):
        form1, lemma1 = f"ab{'a' * (i % 3)}", f"ab{'o' if i % 2 else 'i'}"
        lines.append(
            f"1\t{form1}\t{lemma1}\t{upos[i % 3]}\t_\t_\t0\troot\t_\t_\n"
            f"2\tba\tba\t{upos[(i + 1) % 3]}\t_\t_\t0\troot\t_\t_\n\n")
    return D.parse_conllu("".join(lines), source="tiny")


def random_joint(seed=0, corpus=None):
    corpus = corpus or tiny_corpus()
    alphabet, tags = D.build_vocab(corpus)
    rng = np.random.default_rng(seed)
    tagger = TaggerModel(alphabet, tags, TINY_TAGGER, rng)
    lemmatizer = LemmatizerModel(alphabet, AttributeVocab.from_tags(tags.tags),
                                 TINY_LEMM, rng)
    return P.JointModel(tagger=tagger, lemmatizer=lemmatizer,
                        alphabet=alphabet, tags=tags,
                        provenance={"seed": seed})


# -- schedule -------------------------------------------------------------------

def test_schedule_first_evaluation_keeps_rate():
    state = P.ScheduleState(lr=0.001)
    assert P.schedule_step(state, -5.0) is state
    assert state.lr == 0.001
    assert state.best == -5.0
    assert not state.restore_best
    assert not state.stop


def test_schedule_halves_on_no_improvement():
    state = P.ScheduleState(lr=0.001)
    state.step(-5.0)
    state.step(-6.0)  # worse
    assert state.lr == 0.0005
    assert state.restore_best
    state.step(-4.0)  # better
    assert state.lr == 0.0005
    assert not state.restore_best
    state.step(-4.0)  # equal counts as no improvement
    assert state.lr == 0.00025


def test_schedule_stops_after_seven_halvings():
    state = P.ScheduleState(lr=0.001)
    state.step(-1.0)
    for h in range(1, 8):
        state.step(-2.0)
        assert state.lr == pytest.approx(0.001 * 2.0 ** -h)
        assert state.stop == (state.lr <= 1e-5)
    assert state.halvings == 7
    assert state.lr == pytest.approx(7.8125e-6)
    assert state.stop


# -- jackknifing ------------------------------------------------------------------

class OracleTagger:
    """Stand-in tagger that escapes training and returns gold tags."""

    def __init__(self):
        self.train_corpora = []

    def greedy_tag(self, sentence):
        return [t.tag for t in sentence.tokens]


def test_jackknife_with_oracle_tagger_yields_gold_silver_tags():
    corpus = tiny_corpus(8)
    oracle = OracleTagger()

    def fake_train(train_corpus, config, seed, alphabet=None, tag_inventory=None):
        oracle.train_corpora.append(train_corpus)
        return oracle

    model, silver = P.jackknife_train(corpus, kappa=4,
                                      tagger_config=TINY_TAGGER,
                                      lemmatizer_config=TINY_LEMM, seed=1,
                                      train_tagger_fn=fake_train)
    assert [t.tag for t in silver.tokens()] == [t.tag for t in corpus.tokens()]
    assert [t.lemma for t in silver.tokens()] == [t.lemma for t in corpus.tokens()]
    assert silver.n_tokens() == corpus.n_tokens()
    # kappa fold taggers plus the final one
    assert len(oracle.train_corpora) == 5


def test_jackknife_fold_training_data_excludes_fold():
    corpus = tiny_corpus(9)
    seen = []

    def fake_train(train_corpus, config, seed, alphabet=None, tag_inventory=None):
        seen.append({id(s) for s in train_corpus.sentences})
        return OracleTagger()

    P.jackknife_train(corpus, kappa=3, tagger_config=TINY_TAGGER,
                      lemmatizer_config=TINY_LEMM, seed=0,
                      train_tagger_fn=fake_train)
    fold_train, final = seen[:3], seen[3]
    all_ids = {id(s) for s in corpus.sentences}
    assert final == all_ids
    for train_ids in fold_train:
        heldout = all_ids - train_ids
        assert len(heldout) == 3
        assert heldout.isdisjoint(train_ids)
    heldouts = [frozenset(all_ids - t) for t in fold_train]
    assert len(set(heldouts)) == 3
    assert set().union(*heldouts) == all_ids


def test_jackknife_deterministic_given_seed():
    corpus = tiny_corpus(6)
    kwargs = dict(kappa=3, tagger_config=TINY_TAGGER,
                  lemmatizer_config=TINY_LEMM, seed=7)
    model_a, silver_a = P.jackknife_train(corpus, **kwargs)
    model_b, silver_b = P.jackknife_train(corpus, **kwargs)
    assert [t.tag for t in silver_a.tokens()] == [t.tag for t in silver_b.tokens()]
    for name, arr in model_a.lemmatizer.parameters().items():
        assert np.array_equal(arr, model_b.lemmatizer.parameters()[name]), name


# -- decoding ----------------------------------------------------------------------

def test_crunch_k1_equals_greedy_decode():
    model = random_joint(3)
    rng = np.random.default_rng(5)
    chars = list("ab")
    for _ in range(10):
        forms = ["".join(rng.choice(chars, size=rng.integers(1, 4)))
                 for _ in range(rng.integers(1, 4))]
        _, greedy = P.greedy_joint_decode(model, forms)
        crunched = P.crunch_decode(model, forms, k=1)
        assert crunched == greedy


def test_crunch_full_tagset_matches_full_sum_oracle():
    model = random_joint(11)
    assert len(model.tags) == 3
    rng = np.random.default_rng(2)
    chars = list("ab")
    candidates = [c1 + c2 for c1 in "ab" for c2 in "ab"] + list("ab")
    for _ in range(5):
        forms = ["".join(rng.choice(chars, size=rng.integers(1, 4)))
                 for _ in range(2)]
        got = P.crunch_decode(model, forms, k=3, candidates=candidates)
        dists = model.tagger.tag_distributions(forms)
        for form, dist, lemma in zip(forms, dists, got):
            scores = {}
            for cand in candidates:
                scores[cand] = sum(
                    float(dist[i]) * np.exp(
                        model.lemmatizer.forward_marginal(form, model.tags[i], cand))
                    for i in range(len(model.tags)))
            best = max(candidates, key=lambda c: scores[c])
            assert lemma == best


def test_crunch_weighted_sum_hand_example():
    class StubTagger:
        def k_best(self, forms, k):
            return [[("m1", 0.6), ("m2", 0.4)]]

    class StubLemmatizer:
        table = {("c1", "m1"): 0.8, ("c1", "m2"): 0.2,
                 ("c2", "m1"): 0.2, ("c2", "m2"): 0.8}

        def forward_marginal(self, form, tag, cand):
            return float(np.log(self.table[(cand, tag)]))

    model = P.JointModel(tagger=StubTagger(), lemmatizer=StubLemmatizer(),
                         alphabet=None, tags=None)
    # c1: 0.8 * 0.6 + 0.2 * 0.4 = 0.56 beats c2: 0.2 * 0.6 + 0.8 * 0.4 = 0.44
    assert P.crunch_decode(model, ["w"], k=2, candidates=["c2", "c1"]) == ["c1"]


def test_crunch_rejects_bad_k():
    model = random_joint(0)
    with pytest.raises(ValueError):
        P.crunch_decode(model, ["ab"], k=0)
    with pytest.raises(ValueError):
        P.crunch_decode(model, ["ab"], k=len(model.tags) + 1)


# -- serialization -------------------------------------------------------------------

def test_save_load_roundtrip_bit_exact(tmp_path):
    model = random_joint(9)
    path = tmp_path / "model.bin"
    P.save_model(model, path)
    loaded = P.load_model(path)

    original = {f"tagger/{k}": v for k, v in model.tagger.parameters().items()}
    original.update(
        {f"lemmatizer/{k}": v for k, v in model.lemmatizer.parameters().items()})
    reloaded = {f"tagger/{k}": v for k, v in loaded.tagger.parameters().items()}
    reloaded.update(
        {f"lemmatizer/{k}": v for k, v in loaded.lemmatizer.parameters().items()})
    assert original.keys() == reloaded.keys()
    for name in original:
        assert np.array_equal(original[name], reloaded[name]), name
    assert loaded.alphabet == model.alphabet
    assert loaded.tags == model.tags

    forms = ["ab", "ba"]
    tags_a, lemmas_a = P.greedy_joint_decode(model, forms)
    tags_b, lemmas_b = P.greedy_joint_decode(loaded, forms)
    assert (tags_a, lemmas_a) == (tags_b, lemmas_b)


def test_load_rejects_bad_magic(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"NOPE" + b"\x00" * 32)
    with pytest.raises(P.ModelFormatError, match="magic"):
        P.load_model(path)


def test_load_rejects_version_mismatch(tmp_path):
    model = random_joint(1)
    path = tmp_path / "model.bin"
    P.save_model(model, path)
    raw = bytearray(path.read_bytes())
    raw[4:8] = np.array(99, dtype="<u4").tobytes()
    path.write_bytes(bytes(raw))
    with pytest.raises(P.ModelFormatError, match="version"):
        P.load_model(path)


def test_load_rejects_truncated_payload(tmp_path):
    model = random_joint(1)
    path = tmp_path / "model.bin"
    P.save_model(model, path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-16])
    with pytest.raises(P.ModelFormatError, match="bytes"):
        P.load_model(path)


def _split_container(raw):
    import json
    manifest_len = int(np.frombuffer(raw[8:16], dtype="<u8")[0])
    manifest = json.loads(raw[16:16 + manifest_len].decode())
    return manifest, raw[16 + manifest_len:]


def _join_container(manifest, payload):
    import json
    blob = json.dumps(manifest, sort_keys=True).encode()
    return (P.MAGIC + np.array(P.FORMAT_VERSION, dtype="<u4").tobytes()
            + np.array(len(blob), dtype="<u8").tobytes() + blob + payload)


def test_load_rejects_missing_entry(tmp_path):
    model = random_joint(1)
    path = tmp_path / "model.bin"
    P.save_model(model, path)
    manifest, payload = _split_container(path.read_bytes())
    dropped = manifest["entries"].pop()  # last entry sits at the payload tail
    payload = payload[:dropped["offset"]]
    path.write_bytes(_join_container(manifest, payload))
    with pytest.raises(P.ModelFormatError, match="missing"):
        P.load_model(path)


def test_load_rejects_unknown_entry(tmp_path):
    model = random_joint(1)
    path = tmp_path / "model.bin"
    P.save_model(model, path)
    manifest, payload = _split_container(path.read_bytes())
    manifest["entries"][0]["name"] = "tagger/imaginary"
    path.write_bytes(_join_container(manifest, payload))
    with pytest.raises(P.ModelFormatError, match="unknown entry"):
        P.load_model(path)
