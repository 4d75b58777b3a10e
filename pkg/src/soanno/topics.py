"""Latent Dirichlet Allocation by collapsed Gibbs sampling.

Fitting samples token-topic assignments from the collapsed conditional

    p(z = k) ~ (n_dk + alpha) * (n_kw + beta) / (n_k + V * beta)

with all counts excluding the token being resampled. The model estimate is
the count state of the final sweep. Randomness comes from an explicit
64-bit LCG seeded from the config, so a (corpus, config) pair always
produces bit-identical models.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from numba import njit

log = logging.getLogger(__name__)

_U64_MULT = 6364136223846793005
_U64_INC = 1442695040888963407
_U64_MASK = 0xFFFFFFFFFFFFFFFF
_TWO53 = 9007199254740992.0


class LdaError(Exception):
    """Raised for unusable corpora or broken model files."""


@dataclass(frozen=True)
class LdaConfig:
    K: int
    alpha: float | None = None  # None -> 50 / K
    beta: float = 0.01
    iterations: int = 1000
    burn_in: int = 200
    seed: int = 0
    infer_sweeps: int = 50
    debug: bool = False

    def __post_init__(self) -> None:
        if self.K < 2:
            raise ValueError("K must be >= 2")
        if self.alpha is not None and self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if not self.iterations > self.burn_in >= 0:
            raise ValueError("need iterations > burn_in >= 0")
        if self.infer_sweeps < 1:
            raise ValueError("infer_sweeps must be >= 1")

    @property
    def effective_alpha(self) -> float:
        return self.alpha if self.alpha is not None else 50.0 / self.K

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "alpha": self.alpha,
            "beta": self.beta,
            "iterations": self.iterations,
            "burn_in": self.burn_in,
            "seed": self.seed,
            "infer_sweeps": self.infer_sweeps,
        }


@dataclass(frozen=True)
class TopicDistribution:
    theta: np.ndarray
    out_of_vocab: bool = False


@dataclass
class LdaModel:
    topic_word_counts: np.ndarray  # (K, V) int64
    topic_totals: np.ndarray  # (K,) int64
    vocab: tuple[str, ...]
    config: LdaConfig
    word_index: dict[str, int] = field(repr=False, default_factory=dict)
    docs_used: int = 0
    docs_dropped: int = 0

    def __post_init__(self) -> None:
        if not self.word_index:
            self.word_index = {w: i for i, w in enumerate(self.vocab)}

    @property
    def K(self) -> int:
        return self.topic_word_counts.shape[0]

    @property
    def V(self) -> int:
        return self.topic_word_counts.shape[1]

    def vocab_hash(self) -> str:
        return hashlib.sha256("\n".join(self.vocab).encode("utf-8")).hexdigest()

    def top_words(self, k: int, top_m: int) -> list[tuple[str, float]]:
        """Top words of topic k by smoothed weight, ties broken by word."""
        beta = self.config.beta
        weights = (self.topic_word_counts[k] + beta) / (
            self.topic_totals[k] + self.V * beta
        )
        order = sorted(range(self.V), key=lambda w: (-weights[w], self.vocab[w]))
        return [(self.vocab[w], float(weights[w])) for w in order[:top_m]]


@njit(cache=True)
def _lcg_uniform(state):
    state = state * np.uint64(_U64_MULT) + np.uint64(_U64_INC)
    return state, np.float64(state >> np.uint64(11)) / _TWO53


@njit(cache=True)
def _init_assignments(tokens, offsets, z, ndk, nkw, nk, state):
    K = nkw.shape[0]
    for d in range(offsets.shape[0] - 1):
        for j in range(offsets[d], offsets[d + 1]):
            state, u = _lcg_uniform(state)
            k = int(u * K)
            if k == K:
                k = K - 1
            z[j] = k
            ndk[d, k] += 1
            nkw[k, tokens[j]] += 1
            nk[k] += 1
    return state


@njit(cache=True)
def _gibbs_sweep(tokens, offsets, z, ndk, nkw, nk, alpha, beta, state):
    K = nkw.shape[0]
    V = nkw.shape[1]
    vbeta = V * beta
    cum = np.empty(K, dtype=np.float64)
    for d in range(offsets.shape[0] - 1):
        for j in range(offsets[d], offsets[d + 1]):
            w = tokens[j]
            k = z[j]
            ndk[d, k] -= 1
            nkw[k, w] -= 1
            nk[k] -= 1
            total = 0.0
            for kk in range(K):
                total += (ndk[d, kk] + alpha) * (nkw[kk, w] + beta) / (nk[kk] + vbeta)
                cum[kk] = total
            state, u = _lcg_uniform(state)
            target = u * total
            k = K - 1
            for kk in range(K):
                if target < cum[kk]:
                    k = kk
                    break
            z[j] = k
            ndk[d, k] += 1
            nkw[k, w] += 1
            nk[k] += 1
    return state


@njit(cache=True)
def _infer_doc(tokens, nkw, nk, alpha, beta, sweeps, state):
    K = nkw.shape[0]
    V = nkw.shape[1]
    vbeta = V * beta
    n = tokens.shape[0]
    z = np.empty(n, dtype=np.int32)
    nd = np.zeros(K, dtype=np.int64)
    cum = np.empty(K, dtype=np.float64)
    for j in range(n):
        state, u = _lcg_uniform(state)
        k = int(u * K)
        if k == K:
            k = K - 1
        z[j] = k
        nd[k] += 1
    for _ in range(sweeps):
        for j in range(n):
            w = tokens[j]
            nd[z[j]] -= 1
            total = 0.0
            for kk in range(K):
                total += (nd[kk] + alpha) * (nkw[kk, w] + beta) / (nk[kk] + vbeta)
                cum[kk] = total
            state, u = _lcg_uniform(state)
            target = u * total
            k = K - 1
            for kk in range(K):
                if target < cum[kk]:
                    k = kk
                    break
            z[j] = k
            nd[k] += 1
    return nd


def _seed_state(seed: int) -> np.uint64:
    # one scramble step keeps small seeds from producing degenerate streams;
    # python-int arithmetic avoids numpy overflow warnings
    state = ((seed & _U64_MASK) + _U64_INC) * _U64_MULT + _U64_INC
    return np.uint64(state & _U64_MASK)


def _encode_corpus(
    docs: Sequence[Sequence[str]], word_index: dict[str, int]
) -> tuple[np.ndarray, np.ndarray, list[int]]:
    token_ids: list[int] = []
    offsets = [0]
    kept_docs: list[int] = []
    for d, doc in enumerate(docs):
        ids = [word_index[t] for t in doc if t in word_index]
        if ids:
            token_ids.extend(ids)
            offsets.append(len(token_ids))
            kept_docs.append(d)
    return (
        np.asarray(token_ids, dtype=np.int32),
        np.asarray(offsets, dtype=np.int32),
        kept_docs,
    )


def fit_lda(
    docs: Sequence[Sequence[str]],
    config: LdaConfig,
    vocabulary: Sequence[str] | None = None,
) -> LdaModel:
    """Fit a topic model on tokenized docs restricted to `vocabulary`.

    With vocabulary=None the corpus defines it (sorted unique tokens).
    Docs with no in-vocabulary tokens are dropped with a warning; an empty
    effective corpus is an error.
    """
    if vocabulary is None:
        vocabulary = sorted({t for doc in docs for t in doc})
    vocab = tuple(dict.fromkeys(vocabulary))
    word_index = {w: i for i, w in enumerate(vocab)}
    if not vocab:
        raise LdaError("empty vocabulary")
    tokens, offsets, kept = _encode_corpus(docs, word_index)
    dropped = len(docs) - len(kept)
    if dropped:
        log.warning("dropped %d docs with no in-vocabulary tokens", dropped)
    if len(kept) == 0:
        raise LdaError("no documents with in-vocabulary tokens")

    K = config.K
    alpha = config.effective_alpha
    ndk = np.zeros((len(kept), K), dtype=np.int64)
    nkw = np.zeros((K, len(vocab)), dtype=np.int64)
    nk = np.zeros(K, dtype=np.int64)
    z = np.empty(tokens.shape[0], dtype=np.int32)
    state = _seed_state(config.seed)
    # numba boxes the uint64 state as a python int; re-cast at each
    # boundary so the kernels never see an int64-typed state
    state = np.uint64(_init_assignments(tokens, offsets, z, ndk, nkw, nk, state))
    doc_lengths = np.diff(offsets)
    for sweep in range(config.iterations):
        state = np.uint64(
            _gibbs_sweep(tokens, offsets, z, ndk, nkw, nk, alpha, config.beta, state)
        )
        if config.debug:
            _check_counts(ndk, nkw, nk, doc_lengths, sweep)
    return LdaModel(
        topic_word_counts=nkw,
        topic_totals=nk,
        vocab=vocab,
        config=config,
        word_index=word_index,
        docs_used=len(kept),
        docs_dropped=dropped,
    )


def _check_counts(ndk, nkw, nk, doc_lengths, sweep) -> None:
    if not np.array_equal(ndk.sum(axis=1), doc_lengths):
        raise AssertionError(f"sweep {sweep}: doc-topic counts lost tokens")
    if not np.array_equal(nkw.sum(axis=1), nk):
        raise AssertionError(f"sweep {sweep}: topic-word counts diverge from totals")


def infer_theta(model: LdaModel, doc: Sequence[str]) -> TopicDistribution:
    """Infer a topic distribution for one doc with model counts frozen."""
    ids = np.asarray(
        [model.word_index[t] for t in doc if t in model.word_index], dtype=np.int32
    )
    K = model.K
    alpha = model.config.effective_alpha
    if ids.shape[0] == 0:
        return TopicDistribution(theta=np.full(K, 1.0 / K), out_of_vocab=True)
    state = _seed_state(model.config.seed ^ 0x5EED1DEA)
    nd = _infer_doc(
        ids,
        model.topic_word_counts,
        model.topic_totals,
        alpha,
        model.config.beta,
        model.config.infer_sweeps,
        state,
    )
    theta = (nd + alpha) / (ids.shape[0] + K * alpha)
    return TopicDistribution(theta=theta)


def umass_coherence(
    model: LdaModel, docs: Sequence[Sequence[str]], top_m: int = 10
) -> tuple[list[float], float]:
    """Per-topic U_MASS coherence over a reference corpus, plus the mean.

    For each topic's top_m words (descending weight), sums
    log((D(w_m, w_l) + 1) / D(w_l)) over ranked pairs l < m, where D counts
    documents containing a word or both words.
    """
    if top_m < 2:
        raise ValueError("top_m must be >= 2")
    doc_sets = [frozenset(doc) for doc in docs]
    scores: list[float] = []
    for k in range(model.K):
        words = [w for w, _ in model.top_words(k, top_m)]
        present = {w: sum(1 for s in doc_sets if w in s) for w in words}
        score = 0.0
        for m in range(1, len(words)):
            for l in range(m):
                d_l = present[words[l]]
                if d_l == 0:
                    raise LdaError(
                        f"top word {words[l]!r} has zero document frequency in the"
                        " reference corpus"
                    )
                co = sum(
                    1 for s in doc_sets if words[m] in s and words[l] in s
                )
                score += math.log((co + 1) / d_l)
        scores.append(score)
    return scores, float(np.mean(scores))


def select_k(
    docs: Sequence[Sequence[str]],
    candidates: Sequence[int],
    base: LdaConfig,
    vocabulary: Sequence[str] | None = None,
    top_m: int = 10,
) -> tuple[int, LdaModel, list[dict]]:
    """Fit one model per candidate K and keep the best mean coherence.

    Every candidate uses the same seed schedule; ties go to the smaller K.
    """
    if not candidates:
        raise ValueError("no candidate topic counts")
    best: tuple[float, int, LdaModel] | None = None
    table: list[dict] = []
    errors: list[str] = []
    for K in sorted(candidates):
        try:
            model = fit_lda(docs, replace(base, K=K), vocabulary=vocabulary)
            per_topic, mean_score = umass_coherence(model, docs, top_m=top_m)
        except (LdaError, ValueError) as exc:
            errors.append(f"K={K}: {exc}")
            table.append({"K": K, "mean_coherence": None, "error": str(exc)})
            continue
        table.append(
            {"K": K, "mean_coherence": mean_score, "per_topic": per_topic}
        )
        if best is None or mean_score > best[0]:
            best = (mean_score, K, model)
    if best is None:
        raise LdaError("all candidate fits failed: " + "; ".join(errors))
    return best[1], best[2], table


def write_top_words(model: LdaModel, path: str | Path, top_m: int = 10) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["topic", "rank", "word", "weight"])
        for k in range(model.K):
            for rank, (word, weight) in enumerate(model.top_words(k, top_m), 1):
                writer.writerow([k, rank, word, f"{weight:.8f}"])


def save_lda(model: LdaModel, meta_path: str | Path, counts_path: str | Path) -> None:
    np.save(counts_path, model.topic_word_counts)
    meta = {
        "config": model.config.to_dict(),
        "vocab_sha256": model.vocab_hash(),
        "docs_used": model.docs_used,
        "docs_dropped": model.docs_dropped,
    }
    Path(meta_path).write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_lda(
    meta_path: str | Path, counts_path: str | Path, vocabulary: Sequence[str]
) -> LdaModel:
    meta = json.loads(Path(meta_path).read_text(encoding="utf-8"))
    counts = np.load(counts_path)
    vocab = tuple(vocabulary)
    digest = hashlib.sha256("\n".join(vocab).encode("utf-8")).hexdigest()
    if digest != meta["vocab_sha256"]:
        raise LdaError("vocabulary hash mismatch: wrong vocab for this model")
    cfg = meta["config"]
    config = LdaConfig(**cfg)
    model = LdaModel(
        topic_word_counts=counts,
        topic_totals=counts.sum(axis=1),
        vocab=vocab,
        config=config,
        docs_used=int(meta.get("docs_used", 0)),
        docs_dropped=int(meta.get("docs_dropped", 0)),
    )
    return model
