"""Synthetic homograph benchmark corpus.

A small artificial language in which the lemma of an ambiguous form is
recoverable only from its morphological tag: nouns and verbs share the
surface suffix "-as" (noun plural vs. verb present) but lemmatize to
stem+"o" vs. stem+"i". Sentential context disambiguates through a marker
word that opens each segment ("da" before noun groups, "mi" before verb
groups), so a context tagger can recover the class while a form-only
lemmatizer cannot.

Inflection table (stem = consonant-vowel-consonant):

    noun  singular  stem+"a"   -> lemma stem+"o"
    noun  plural    stem+"as"  -> lemma stem+"o"   (homograph)
    verb  present   stem+"as"  -> lemma stem+"i"   (homograph)
    verb  past      stem+"is"  -> lemma stem+"i"
"""
from __future__ import annotations

import numpy as np

from .data import Corpus, MorphTag, Sentence, Token

DET_TAG = MorphTag.make([("POS", "DET")])
PRON_TAG = MorphTag.make([("POS", "PRON")])
NOUN_SG = MorphTag.make([("POS", "NOUN"), ("Number", "Sing")])
NOUN_PL = MorphTag.make([("POS", "NOUN"), ("Number", "Plur")])
VERB_PRES = MorphTag.make([("POS", "VERB"), ("Tense", "Pres")])
VERB_PAST = MorphTag.make([("POS", "VERB"), ("Tense", "Past")])

ALL_TAGS = (DET_TAG, PRON_TAG, NOUN_SG, NOUN_PL, VERB_PRES, VERB_PAST)

_CONSONANTS = "bdgklmnprst"
_VOWELS = "aeiou"


def make_stems(n_stems: int, rng: np.random.Generator) -> list[str]:
    stems = []
    seen = set()
    while len(stems) < n_stems:
        stem = (rng.choice(list(_CONSONANTS)) + rng.choice(list(_VOWELS))
                + rng.choice(list(_CONSONANTS)))
        if stem not in seen:
            seen.add(stem)
            stems.append(stem)
    return stems


def _content_token(stem: str, is_noun: bool, ambiguous: bool) -> Token:
    if is_noun:
        lemma = stem + "o"
        if ambiguous:
            return Token(stem + "as", lemma, NOUN_PL)
        return Token(stem + "a", lemma, NOUN_SG)
    lemma = stem + "i"
    if ambiguous:
        return Token(stem + "as", lemma, VERB_PRES)
    return Token(stem + "is", lemma, VERB_PAST)


def make_homograph_corpus(n_sentences: int = 360, n_stems: int = 60,
                          ambiguous_fraction: float = 0.7,
                          seed: int = 0) -> Corpus:
    """Deterministic corpus of marker-opened segments; roughly 5-6 tokens per
    sentence, so the default size is about two thousand tokens."""
    rng = np.random.default_rng(seed)
    stems = make_stems(n_stems, rng)
    sentences = []
    for _ in range(n_sentences):
        tokens: list[Token] = []
        for _ in range(int(rng.integers(1, 3))):
            is_noun = bool(rng.random() < 0.5)
            tokens.append(Token("da", "da", DET_TAG) if is_noun
                          else Token("mi", "mi", PRON_TAG))
            for _ in range(int(rng.integers(2, 5))):
                stem = stems[int(rng.integers(len(stems)))]
                ambiguous = bool(rng.random() < ambiguous_fraction)
                tokens.append(_content_token(stem, is_noun, ambiguous))
        sentences.append(Sentence(tokens))
    return Corpus(sentences, source=f"synthetic(seed={seed})")


def corrupt_tags(corpus: Corpus, fraction: float, seed: int) -> Corpus:
    """Copy of the corpus with the given fraction of gold tags flipped to a
    uniformly random different tag. Lemmata are left untouched."""
    if not 0 <= fraction <= 1:
        raise ValueError("fraction must be within [0, 1]")
    rng = np.random.default_rng(seed)
    sentences = []
    for sentence in corpus.sentences:
        tokens = []
        for token in sentence.tokens:
            tag = token.tag
            if tag is not None and rng.random() < fraction:
                others = [t for t in ALL_TAGS if t != tag]
                tag = others[int(rng.integers(len(others)))]
            tokens.append(Token(token.form, token.lemma, tag, token.columns))
        sentences.append(Sentence(tokens, list(sentence.comments),
                                  list(sentence.extras)))
    return Corpus(sentences, source=corpus.source, split=corpus.split)
