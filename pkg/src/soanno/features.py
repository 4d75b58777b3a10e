"""tf-idf vocabulary, sparse transforms, and full feature assembly.

The feature vector concatenates four blocks in fixed order:
L2-normalized tf-idf n-gram weights, [pos, neg, neu] sentiment shares,
the LDA topic distribution, and a z-scored reading-ease slot.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from . import textanalysis
from .corpus import Post
from .sentiment import SentimentLexicon, score as sentiment_score
from .textanalysis import NgramConfig, TokenStream, UnscorableTextError
from .topics import LdaConfig, LdaModel, fit_lda, infer_theta, select_k

log = logging.getLogger(__name__)


class VocabularyError(Exception):
    pass


@dataclass(frozen=True)
class VocabConfig:
    min_df: float = 0.0025
    max_df: float = 0.50
    ngram_orders: frozenset[int] = frozenset({1, 2, 3})

    def __post_init__(self) -> None:
        if not 0.0 <= self.min_df < self.max_df <= 1.0:
            raise ValueError("need 0 <= min_df < max_df <= 1")
        if not self.ngram_orders:
            raise ValueError("ngram_orders must be non-empty")

    def to_dict(self) -> dict:
        return {
            "min_df": self.min_df,
            "max_df": self.max_df,
            "ngram_orders": sorted(self.ngram_orders),
        }


@dataclass
class Vocabulary:
    term_index: dict[str, int]
    doc_freq: dict[str, int]
    n_docs: int
    config: VocabConfig

    def __len__(self) -> int:
        return len(self.term_index)

    def idf(self, term: str) -> float:
        return math.log((1 + self.n_docs) / (1 + self.doc_freq[term])) + 1.0

    def unigrams(self) -> list[str]:
        """Single-word terms, in index order (feeds the topic model)."""
        return [t for t in sorted(self.term_index, key=self.term_index.get) if " " not in t]

    def content_hash(self) -> str:
        payload = "\n".join(
            f"{t}\t{i}\t{self.doc_freq[t]}"
            for t, i in sorted(self.term_index.items(), key=lambda kv: kv[1])
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def doc_terms(stream: TokenStream, config: VocabConfig, stopwords: frozenset[str]) -> list[str]:
    return textanalysis.ngrams(
        stream, NgramConfig(orders=config.ngram_orders, stopwords=stopwords)
    )


def fit_vocab(
    docs: Sequence[Sequence[str]],
    config: VocabConfig = VocabConfig(),
) -> Vocabulary:
    """Index all n-gram terms surviving document-frequency pruning.

    docs are per-document term lists (already tokenized into n-grams).
    min_df converts to an absolute count by ceiling and max_df by floor:
    "less than min_df" and "more than max_df" are both strict exclusions.
    Surviving terms are indexed lexicographically.
    """
    if not docs:
        raise VocabularyError("cannot fit a vocabulary on an empty corpus")
    n = len(docs)
    df: dict[str, int] = {}
    for terms in docs:
        for term in set(terms):
            df[term] = df.get(term, 0) + 1
    min_abs = math.ceil(config.min_df * n)
    max_abs = math.floor(config.max_df * n)
    kept = sorted(t for t, c in df.items() if min_abs <= c <= max_abs)
    if not kept:
        raise VocabularyError(
            f"document-frequency pruning removed every term "
            f"(min_df={config.min_df}, max_df={config.max_df}, n_docs={n})"
        )
    return Vocabulary(
        term_index={t: i for i, t in enumerate(kept)},
        doc_freq={t: df[t] for t in kept},
        n_docs=n,
        config=config,
    )


def transform_tfidf(vocab: Vocabulary, terms: Iterable[str]) -> list[tuple[int, float]]:
    """Sparse L2-normalized tf-idf block for one document's term list.

    weight(t) = tf(t) * (ln((1 + N) / (1 + df(t))) + 1); unknown terms are
    ignored and a document with no known terms yields an empty block.
    """
    counts: dict[int, int] = {}
    idf_cache: dict[int, float] = {}
    for term in terms:
        idx = vocab.term_index.get(term)
        if idx is None:
            continue
        counts[idx] = counts.get(idx, 0) + 1
        if idx not in idf_cache:
            idf_cache[idx] = vocab.idf(term)
    if not counts:
        return []
    weights = {idx: tf * idf_cache[idx] for idx, tf in counts.items()}
    norm = math.sqrt(sum(w * w for w in weights.values()))
    return [(idx, weights[idx] / norm) for idx in sorted(weights)]


@dataclass(frozen=True)
class FeatureVector:
    sparse: tuple[tuple[int, float], ...]
    dense: np.ndarray  # [pos, neg, neu] + theta(K) + [flesch_z]
    total_dim: int
    readability_missing: bool = False

    def to_dense(self) -> np.ndarray:
        vec = np.zeros(self.total_dim)
        for idx, w in self.sparse:
            vec[idx] = w
        vec[self.total_dim - len(self.dense) :] = self.dense
        return vec


@dataclass
class FeatureBundle:
    """Everything needed to turn a post into a feature vector."""

    vocab: Vocabulary
    lexicon: SentimentLexicon
    lda: LdaModel
    stopwords: frozenset[str]
    flesch_mean: float = 0.0
    flesch_std: float = 1.0

    @property
    def total_dim(self) -> int:
        return len(self.vocab) + 3 + self.lda.K + 1

    def feature_names(self) -> list[str]:
        names = [""] * len(self.vocab)
        for term, idx in self.vocab.term_index.items():
            names[idx] = term
        names += ["sentiment:pos", "sentiment:neg", "sentiment:neu"]
        names += [f"topic:{k}" for k in range(self.lda.K)]
        names.append("readability")
        return names


def fit_flesch_standardizer(texts: Sequence[str]) -> tuple[float, float]:
    """Mean/std of reading-ease over a training corpus (population std)."""
    scores = []
    for text in texts:
        try:
            scores.append(textanalysis.flesch_reading_ease(text))
        except UnscorableTextError:
            continue
    if not scores:
        return 0.0, 1.0
    mean = float(np.mean(scores))
    std = float(np.std(scores))
    return mean, (std if std > 0 else 1.0)


def assemble_features(post: Post, bundle: FeatureBundle) -> FeatureVector:
    """Feature vector for one post; text is title + " " + body.

    Sentiment and readability run on the raw text (negators must survive);
    n-grams and topics run on the tokenized, stopword-filtered text.
    A post whose readability is unscorable gets the standardized mean (0)
    in the readability slot and a flag.
    """
    text = post.text
    stream = textanalysis.tokenize(text)
    terms = doc_terms(stream, bundle.vocab.config, bundle.stopwords)
    sparse = transform_tfidf(bundle.vocab, terms)

    senti = sentiment_score(text, bundle.lexicon)
    lda_tokens = [t for t in stream.tokens if t not in bundle.stopwords]
    theta = infer_theta(bundle.lda, lda_tokens).theta

    missing = False
    try:
        raw_flesch = textanalysis.flesch_reading_ease(text)
        flesch_z = (raw_flesch - bundle.flesch_mean) / bundle.flesch_std
    except UnscorableTextError:
        flesch_z = 0.0
        missing = True

    dense = np.concatenate(
        [[senti.pos, senti.neg, senti.neu], theta, [flesch_z]]
    )
    return FeatureVector(
        sparse=tuple(sparse),
        dense=dense,
        total_dim=len(bundle.vocab) + len(dense),
        readability_missing=missing,
    )


def stack_features(vectors: Sequence[FeatureVector]) -> sp.csr_matrix:
    """CSR matrix over the full feature space, one row per vector."""
    if not vectors:
        raise ValueError("no feature vectors to stack")
    dim = vectors[0].total_dim
    data: list[float] = []
    indices: list[int] = []
    indptr = [0]
    for vec in vectors:
        if vec.total_dim != dim:
            raise ValueError("inconsistent feature dimensions")
        dense_start = dim - len(vec.dense)
        for idx, w in vec.sparse:
            indices.append(idx)
            data.append(w)
        for j, w in enumerate(vec.dense):
            if w != 0.0:
                indices.append(dense_start + j)
                data.append(float(w))
        indptr.append(len(indices))
    return sp.csr_matrix(
        (np.asarray(data), np.asarray(indices), np.asarray(indptr)),
        shape=(len(vectors), dim),
    )


def fit_feature_bundle(
    posts: Sequence[Post],
    vocab_config: VocabConfig,
    lda_config: LdaConfig,
    lexicon: SentimentLexicon,
    stopwords: frozenset[str],
    lda_candidates: Sequence[int] = (),
) -> tuple[FeatureBundle, list[dict]]:
    """Fit every sub-model of the feature space on a training corpus.

    With lda_candidates the topic count is chosen by mean coherence;
    otherwise lda_config.K is used as-is. Returns the bundle and the
    candidate score table (empty when no selection ran).
    """
    streams = [textanalysis.tokenize(p.text) for p in posts]
    term_docs = [doc_terms(s, vocab_config, stopwords) for s in streams]
    vocab = fit_vocab(term_docs, vocab_config)
    lda_docs = [[t for t in s.tokens if t not in stopwords] for s in streams]
    lda_vocab = vocab.unigrams()
    if lda_candidates and len(lda_candidates) > 0:
        _, lda, table = select_k(lda_docs, lda_candidates, lda_config, vocabulary=lda_vocab)
    else:
        lda = fit_lda(lda_docs, lda_config, vocabulary=lda_vocab)
        table = []
    flesch_mean, flesch_std = fit_flesch_standardizer([p.text for p in posts])
    bundle = FeatureBundle(
        vocab=vocab,
        lexicon=lexicon,
        lda=lda,
        stopwords=stopwords,
        flesch_mean=flesch_mean,
        flesch_std=flesch_std,
    )
    return bundle, table


def featurize_posts(bundle: FeatureBundle, posts: Sequence[Post]) -> sp.csr_matrix:
    return stack_features([assemble_features(p, bundle) for p in posts])


def save_vocab(
    bundle_vocab: Vocabulary,
    csv_path: str | Path,
    meta_path: str | Path,
    flesch_mean: float,
    flesch_std: float,
) -> None:
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["term", "index", "doc_freq"])
        for term, idx in sorted(bundle_vocab.term_index.items(), key=lambda kv: kv[1]):
            writer.writerow([term, idx, bundle_vocab.doc_freq[term]])
    meta = {
        "n_docs": bundle_vocab.n_docs,
        "config": bundle_vocab.config.to_dict(),
        "flesch_mean": flesch_mean,
        "flesch_std": flesch_std,
    }
    Path(meta_path).write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_vocab(
    csv_path: str | Path, meta_path: str | Path
) -> tuple[Vocabulary, float, float]:
    meta = json.loads(Path(meta_path).read_text(encoding="utf-8"))
    term_index: dict[str, int] = {}
    doc_freq: dict[str, int] = {}
    with open(csv_path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            term_index[row["term"]] = int(row["index"])
            doc_freq[row["term"]] = int(row["doc_freq"])
    config = VocabConfig(
        min_df=meta["config"]["min_df"],
        max_df=meta["config"]["max_df"],
        ngram_orders=frozenset(meta["config"]["ngram_orders"]),
    )
    vocab = Vocabulary(
        term_index=term_index,
        doc_freq=doc_freq,
        n_docs=int(meta["n_docs"]),
        config=config,
    )
    return vocab, float(meta["flesch_mean"]), float(meta["flesch_std"])
