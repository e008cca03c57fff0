import numpy as np
import pytest

from lemtag import data as D

SIMPLE = (
    "# sent_id = 1\n"
    "# text = Bulls run\n"
    "1\tBulls\tbull\tNOUN\t_\tNumber=Plur\t2\tnsubj\t_\t_\n"
    "2\trun\trun\tVERB\t_\tMood=Ind|Tense=Pres\t0\troot\t_\t_\n"
    "\n"
)

WITH_RANGE = (
    "1-2\tvamonos\t_\t_\t_\t_\t_\t_\t_\t_\n"
    "1\tvamos\tir\tVERB\t_\tNumber=Plur\t0\troot\t_\t_\n"
    "2\tnos\tnosotros\tPRON\t_\tCase=Acc\t1\tobj\t_\t_\n"
    "\n"
)

WITH_EMPTY_NODE = (
    "1\tSue\tSue\tPROPN\t_\t_\t2\tnsubj\t_\t_\n"
    "2\tlikes\tlike\tVERB\t_\tTense=Pres\t0\troot\t_\t_\n"
    "5.1\tlikes\tlike\tVERB\t_\t_\t_\t_\t_\t_\n"
    "3\ttea\ttea\tNOUN\t_\t_\t2\tobj\t_\t_\n"
    "\n"
)


def test_parse_single_token_line():
    corpus = D.parse_conllu("1\tran\trun\tVERB\t_\tTense=Past\t0\troot\t_\t_\n")
    assert len(corpus.sentences) == 1
    assert len(corpus.sentences[0]) == 1
    token = corpus.sentences[0].tokens[0]
    assert token.form == "ran"
    assert token.lemma == "run"
    assert token.tag == D.bundle_tag("VERB", "Tense=Past")


def test_parse_comments_only_block():
    corpus = D.parse_conllu("# just a comment\n# another\n\n")
    assert corpus.sentences == []


def test_parse_empty_file():
    assert D.parse_conllu("").sentences == []
    assert D.parse_conllu(b"").sentences == []


def test_range_line_excluded_from_tokens():
    corpus = D.parse_conllu(WITH_RANGE)
    sentence = corpus.sentences[0]
    assert [t.form for t in sentence.tokens] == ["vamos", "nos"]
    assert sentence.extras == [(0, WITH_RANGE.splitlines()[0])]


def test_empty_node_excluded_from_tokens():
    corpus = D.parse_conllu(WITH_EMPTY_NODE)
    assert [t.form for t in corpus.sentences[0].tokens] == ["Sue", "likes", "tea"]


def test_malformed_line_reports_line_number():
    bad = "1\tonly\tthree\n"
    with pytest.raises(D.ConlluError, match="line 1"):
        D.parse_conllu(bad)
    with pytest.raises(D.ConlluError, match="line 5"):
        D.parse_conllu(SIMPLE.replace("\n\n", "\n1\tbad\n"))


def test_missing_lemma_is_none():
    corpus = D.parse_conllu("1\tx\t_\tNOUN\t_\t_\t0\troot\t_\t_\n")
    assert corpus.sentences[0].tokens[0].lemma is None


def test_roundtrip_equal_corpus():
    for text in (SIMPLE, WITH_RANGE, WITH_EMPTY_NODE, SIMPLE + WITH_RANGE):
        corpus = D.parse_conllu(text)
        written = D.write_conllu(corpus, None)
        assert D.parse_conllu(written) == corpus
        # and the serialization itself is stable
        assert D.write_conllu(D.parse_conllu(written), None) == written


def test_roundtrip_preserves_bytes_for_wellformed_input():
    assert D.write_conllu(D.parse_conllu(SIMPLE), None) == SIMPLE
    assert D.write_conllu(D.parse_conllu(WITH_RANGE), None) == WITH_RANGE


def test_bundle_tag_examples():
    tag = D.bundle_tag("NOUN", "Case=Nom|Number=Sing")
    assert tag.attrs == frozenset(
        [("POS", "NOUN"), ("Case", "Nom"), ("Number", "Sing")])
    assert D.bundle_tag("VERB", "_").attrs == frozenset([("POS", "VERB")])
    # attribute order never matters
    assert D.bundle_tag("NOUN", "Number=Sing|Case=Nom") == tag
    assert hash(D.bundle_tag("NOUN", "Number=Sing|Case=Nom")) == hash(tag)


def test_bundle_tag_malformed_pair():
    with pytest.raises(D.TagError, match="malformed"):
        D.bundle_tag("NOUN", "Case=Nom|Broken")


def test_tag_canonical_roundtrip():
    tag = D.bundle_tag("NOUN", "Number=Sing|Case=Nom")
    assert tag.canonical() == "POS=NOUN|Case=Nom|Number=Sing"
    assert D.MorphTag.from_canonical(tag.canonical()) == tag
    assert D.MorphTag.from_canonical("") == D.MorphTag(frozenset())


def test_build_vocab_contents_and_determinism():
    corpus = D.parse_conllu("1\tab\ta\tX\t_\t_\t0\troot\t_\t_\n")
    alphabet, tags = D.build_vocab(corpus)
    assert set("ab") <= set(alphabet.symbols)
    assert alphabet.symbols[:4] == list(D.Alphabet.SPECIALS)
    assert len(alphabet) == 4 + 2
    assert len(tags) == 1

    alphabet2, tags2 = D.build_vocab(corpus)
    assert alphabet2.symbols == alphabet.symbols
    assert tags2.tags == tags.tags


def test_unknown_character_maps_to_unk():
    alphabet, _ = D.build_vocab(D.parse_conllu(SIMPLE))
    assert alphabet.encode("§") == alphabet.unk_index
    assert alphabet.encode("B") != alphabet.unk_index


def test_vocab_serialization_roundtrip():
    alphabet, tags = D.build_vocab(D.parse_conllu(SIMPLE))
    assert D.Alphabet.from_json(alphabet.to_json()) == alphabet
    assert D.TagInventory.from_json(tags.to_json()) == tags


def _toy_corpus(n):
    text = "".join(
        f"1\tw{i}\tw{i}\tX\t_\t_\t0\troot\t_\t_\n\n" for i in range(n))
    return D.parse_conllu(text)


def test_jackknife_four_sentences_two_folds():
    corpus = _toy_corpus(4)
    folds = D.jackknife_folds(corpus, 2)
    assert len(folds) == 2
    heldouts = [f[1] for f in folds]
    assert all(len(h.sentences) == 2 for h in heldouts)
    seen = [s.tokens[0].form for h in heldouts for s in h.sentences]
    assert sorted(seen) == sorted(t.form for t in corpus.tokens())
    for train, heldout in folds:
        heldout_forms = {s.tokens[0].form for s in heldout.sentences}
        train_forms = {s.tokens[0].form for s in train.sentences}
        assert not (heldout_forms & train_forms)
        assert len(train.sentences) + len(heldout.sentences) == 4


def test_jackknife_invalid_k():
    corpus = _toy_corpus(4)
    with pytest.raises(ValueError):
        D.jackknife_folds(corpus, 1)
    with pytest.raises(ValueError):
        D.jackknife_folds(corpus, 5)


def test_jackknife_103_sentences_10_folds():
    corpus = _toy_corpus(103)
    folds = D.jackknife_folds(corpus, 10)
    sizes = [len(h.sentences) for _, h in folds]
    assert sorted(set(sizes)) == [10, 11]
    assert sum(sizes) == 103
    all_forms = [s.tokens[0].form for _, h in folds for s in h.sentences]
    assert len(all_forms) == len(set(all_forms)) == 103


def test_jackknife_shuffled_is_seeded_partition():
    corpus = _toy_corpus(10)
    a = D.jackknife_folds(corpus, 3, rng=np.random.default_rng(5))
    b = D.jackknife_folds(corpus, 3, rng=np.random.default_rng(5))
    assert [h.sentences for _, h in a] == [h.sentences for _, h in b]
    forms = sorted(s.tokens[0].form for _, h in a for s in h.sentences)
    assert forms == sorted(t.form for t in corpus.tokens())


def _corpus_from_pairs(pairs):
    text = "".join(
        f"1\t{form}\t{lemma}\tX\t_\t_\t0\troot\t_\t_\n\n" for form, lemma in pairs)
    return D.parse_conllu(text)


def test_categorize_tokens_examples():
    train = _corpus_from_pairs([
        ("running", "run"), ("running", "running"), ("dogs", "dog")])
    eval_corpus = _corpus_from_pairs([
        ("running", "run"), ("cats", "cat"), ("dogs", "dog")])
    cats = D.categorize_tokens(train, eval_corpus)
    assert cats == ["ambiguous", "unseen", "seen-unambiguous"]


def test_categories_partition_eval_corpus():
    rng = np.random.default_rng(0)
    forms = [f"f{i % 7}" for i in range(30)]
    train = _corpus_from_pairs(
        [(f, f + rng.choice(["", "x"])) for f in forms])
    eval_corpus = _corpus_from_pairs(
        [(f"f{i % 11}", "l") for i in range(22)])
    cats = D.categorize_tokens(train, eval_corpus)
    assert len(cats) == eval_corpus.n_tokens()
    assert set(cats) <= set(D.CATEGORIES)


def test_split_corpus():
    corpus = _toy_corpus(10)
    train, heldout = D.split_corpus(corpus, 0.2)
    assert len(train.sentences) == 8
    assert len(heldout.sentences) == 2
    with pytest.raises(ValueError):
        D.split_corpus(corpus, 0.0)


def test_with_predictions_replaces_columns():
    corpus = D.parse_conllu(SIMPLE)
    new_tag = D.bundle_tag("X", "Foo=Bar")
    pred = D.with_predictions(corpus, tags=[new_tag, new_tag], lemmas=["a", "b"])
    text = D.write_conllu(pred, None)
    reparsed = D.parse_conllu(text)
    tokens = list(reparsed.tokens())
    assert [t.lemma for t in tokens] == ["a", "b"]
    assert all(t.tag == new_tag for t in tokens)
    # untouched columns survive
    assert text.splitlines()[2].split("\t")[D.HEAD] == "2"
    with pytest.raises(ValueError):
        D.with_predictions(corpus, lemmas=["a"])
