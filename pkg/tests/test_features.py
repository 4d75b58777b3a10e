import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from soanno import textanalysis
from soanno.features import (
    FeatureBundle,
    VocabConfig,
    Vocabulary,
    VocabularyError,
    assemble_features,
    fit_flesch_standardizer,
    fit_vocab,
    load_vocab,
    save_vocab,
    stack_features,
    transform_tfidf,
)
from soanno.sentiment import SentimentLexicon
from soanno.topics import LdaConfig, fit_lda
from tests.conftest import make_post

UNIGRAMS = VocabConfig(min_df=0.0, max_df=1.0, ngram_orders=frozenset({1}))


class TestFitVocab:
    def test_max_df_excludes_ubiquitous_term(self):
        docs = [["cat", "dog"], ["cat"], ["cat", "fish"]]
        vocab = fit_vocab(docs, VocabConfig(min_df=0.0, max_df=0.5, ngram_orders=frozenset({1})))
        # df(cat)=3/3 > 0.5 -> dropped; floor(0.5*3)=1 so df must be <= 1
        assert "cat" not in vocab.term_index
        assert set(vocab.term_index) == {"dog", "fish"}

    def test_min_df_ceiling_rule(self):
        # 1000 docs, min_df 0.0025 -> ceil(2.5) = 3 occurrences required
        docs = [["common"] for _ in range(994)]
        docs += [["rare2"], ["rare2"]]
        docs += [["rare3"], ["rare3"], ["rare3"]]
        docs += [["filler"]]
        vocab = fit_vocab(
            docs, VocabConfig(min_df=0.0025, max_df=0.999, ngram_orders=frozenset({1}))
        )
        assert "rare2" not in vocab.term_index
        assert "rare3" in vocab.term_index

    def test_lexicographic_determinism(self):
        docs = [["b", "a"], ["c", "a"], ["b", "c"]]
        v1 = fit_vocab(docs, UNIGRAMS)
        v2 = fit_vocab(list(reversed(docs)), UNIGRAMS)
        assert v1.term_index == {"a": 0, "b": 1, "c": 2}
        assert v1.term_index == v2.term_index

    def test_df_counted_once_per_doc(self):
        docs = [["dup", "dup", "dup"], ["other"]]
        vocab = fit_vocab(docs, UNIGRAMS)
        assert vocab.doc_freq["dup"] == 1

    def test_empty_vocab_names_thresholds(self):
        docs = [["x"], ["x"]]
        with pytest.raises(VocabularyError, match="min_df.*max_df"):
            fit_vocab(docs, VocabConfig(min_df=0.0, max_df=0.4, ngram_orders=frozenset({1})))

    def test_empty_corpus_errors(self):
        with pytest.raises(VocabularyError):
            fit_vocab([], UNIGRAMS)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            VocabConfig(min_df=0.5, max_df=0.5)


class TestTransform:
    def corpus_vocab(self):
        return fit_vocab([["cat", "dog"], ["cat"], ["dog", "fish"]], UNIGRAMS)

    def test_hand_oracle(self):
        # independent arithmetic: idf(t) = ln((1+3)/(1+df)) + 1
        vocab = self.corpus_vocab()
        idf_dog = math.log(4 / 3) + 1
        idf_fish = math.log(4 / 2) + 1
        norm = math.sqrt(idf_dog**2 + idf_fish**2)
        block = dict(transform_tfidf(vocab, ["dog", "fish"]))
        assert block[vocab.term_index["dog"]] == pytest.approx(idf_dog / norm, abs=1e-12)
        assert block[vocab.term_index["fish"]] == pytest.approx(idf_fish / norm, abs=1e-12)
        assert block[vocab.term_index["dog"]] == pytest.approx(0.6053, abs=1e-4)
        assert block[vocab.term_index["fish"]] == pytest.approx(0.7959, abs=1e-4)

    def test_out_of_vocab_doc_is_zero_block(self):
        assert transform_tfidf(self.corpus_vocab(), ["whale", "squid"]) == []

    def test_scale_invariance_under_l2(self):
        vocab = self.corpus_vocab()
        once = transform_tfidf(vocab, ["dog", "fish"])
        twice = transform_tfidf(vocab, ["dog", "dog", "fish", "fish"])
        for (i1, w1), (i2, w2) in zip(once, twice):
            assert i1 == i2
            assert w1 == pytest.approx(w2, abs=1e-12)

    def test_transform_is_pure(self):
        vocab = self.corpus_vocab()
        assert transform_tfidf(vocab, ["dog"]) == transform_tfidf(vocab, ["dog"])

    @given(
        st.lists(
            st.lists(st.sampled_from("abcdefgh"), min_size=1, max_size=6),
            min_size=1,
            max_size=12,
        ),
        st.lists(st.sampled_from("abcdefghij"), max_size=8),
    )
    @settings(max_examples=80)
    def test_indices_defined_increasing_and_normalized(self, docs, doc):
        vocab = fit_vocab(docs, UNIGRAMS)
        block = transform_tfidf(vocab, doc)
        indices = [i for i, _ in block]
        assert indices == sorted(indices)
        assert all(0 <= i < len(vocab) for i in indices)
        if block:
            norm = math.sqrt(sum(w * w for _, w in block))
            assert norm == pytest.approx(1.0, abs=1e-9)


def tiny_bundle():
    posts = [
        make_post(id="a", title="calm morning", body="the cat sat near the dog."),
        make_post(id="b", title="market worry", body="jobs and money and rent rent."),
        make_post(id="c", title="park visit", body="dog and cat in the park."),
        make_post(id="d", title="quiet day", body="reading a book in the park."),
    ]
    stopwords = frozenset({"the", "a", "and", "in"})
    config = VocabConfig(min_df=0.0, max_df=1.0, ngram_orders=frozenset({1, 2}))
    streams = [textanalysis.tokenize(p.text) for p in posts]
    from soanno.features import doc_terms

    docs = [doc_terms(s, config, stopwords) for s in streams]
    vocab = fit_vocab(docs, config)
    lda_docs = [[t for t in s.tokens if t not in stopwords] for s in streams]
    lda = fit_lda(lda_docs, LdaConfig(K=3, seed=0, iterations=30, burn_in=5), vocabulary=vocab.unigrams())
    lexicon = SentimentLexicon(valence={"worry": -1.5, "calm": 1.2}, boosters={}, negators=frozenset())
    mean, std = fit_flesch_standardizer([p.text for p in posts])
    return posts, FeatureBundle(
        vocab=vocab, lexicon=lexicon, lda=lda, stopwords=stopwords,
        flesch_mean=mean, flesch_std=std,
    )


class TestAssemble:
    def test_total_dim_arithmetic(self):
        posts, bundle = tiny_bundle()
        vec = assemble_features(posts[0], bundle)
        assert vec.total_dim == len(bundle.vocab) + 3 + bundle.lda.K + 1
        assert len(vec.dense) == 3 + bundle.lda.K + 1

    def test_out_of_vocab_neutral_doc_fallbacks(self):
        posts, bundle = tiny_bundle()
        alien = make_post(id="x", title="zzz qqq", body="xxx yyy zzz.")
        vec = assemble_features(alien, bundle)
        assert vec.sparse == ()
        pos, neg, neu = vec.dense[:3]
        assert (pos, neg, neu) == (0.0, 0.0, 1.0)
        theta = vec.dense[3 : 3 + bundle.lda.K]
        assert np.allclose(theta, 1.0 / bundle.lda.K)

    def test_theta_block_sums_to_one(self):
        posts, bundle = tiny_bundle()
        for post in posts:
            vec = assemble_features(post, bundle)
            theta = vec.dense[3 : 3 + bundle.lda.K]
            assert float(theta.sum()) == pytest.approx(1.0, abs=1e-9)

    def test_unscorable_readability_flagged_and_zeroed(self):
        posts, bundle = tiny_bundle()
        silent = make_post(id="y", title="", body="?? !!")
        vec = assemble_features(silent, bundle)
        assert vec.readability_missing
        assert vec.dense[-1] == 0.0

    def test_feature_names_cover_all_dims(self):
        posts, bundle = tiny_bundle()
        names = bundle.feature_names()
        assert len(names) == bundle.total_dim
        assert names[-1] == "readability"
        assert names[len(bundle.vocab)] == "sentiment:pos"
        assert f"topic:{bundle.lda.K - 1}" in names

    def test_stack_features_matches_dense(self):
        posts, bundle = tiny_bundle()
        vectors = [assemble_features(p, bundle) for p in posts]
        X = stack_features(vectors)
        assert X.shape == (len(posts), vectors[0].total_dim)
        for i, vec in enumerate(vectors):
            assert np.allclose(X[i].toarray().ravel(), vec.to_dense())


class TestPersistence:
    def test_vocab_round_trip(self, tmp_path):
        posts, bundle = tiny_bundle()
        save_vocab(bundle.vocab, tmp_path / "v.csv", tmp_path / "v.json", 12.5, 3.25)
        vocab, mean, std = load_vocab(tmp_path / "v.csv", tmp_path / "v.json")
        assert vocab.term_index == bundle.vocab.term_index
        assert vocab.doc_freq == bundle.vocab.doc_freq
        assert vocab.n_docs == bundle.vocab.n_docs
        assert (mean, std) == (12.5, 3.25)
        assert vocab.content_hash() == bundle.vocab.content_hash()
