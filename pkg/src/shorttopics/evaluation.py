"""Perplexity, relevance ranking and UMass / UCI / NPMI coherence."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse

from .corpus import Corpus
from .errors import DomainError, ValidationError, VocabularyMismatch
from .topicword import TopicWordMatrix

log = logging.getLogger(__name__)

DEFAULT_EPSILON = 1e-12
DEFAULT_N = 20
DEFAULT_OMEGA = 20


def perplexity(total_loglik: float, total_tokens: int) -> float:
    if total_tokens < 1:
        raise ValidationError("perplexity needs at least one token")
    return math.exp(-total_loglik / total_tokens)


def word_probabilities(corpus: Corpus) -> np.ndarray:
    """Empirical token frequency of every vocabulary word."""
    _, words, counts = corpus.sparse
    freq = np.bincount(words, weights=counts, minlength=corpus.V)
    return freq / freq.sum()


def relevance(phi, word_probs, lam: float = 0.3) -> np.ndarray:
    """lam * log phi_iw + (1 - lam) * log(phi_iw / p_w) for every topic and word."""
    phi = np.asarray(phi, dtype=np.float64)
    p = np.asarray(word_probs, dtype=np.float64)
    if not 0.0 <= lam <= 1.0:
        raise DomainError("lambda must lie in [0, 1]")
    if np.any(phi <= 0) or np.any(p <= 0):
        raise DomainError("relevance needs strictly positive topic-word and word probabilities")
    log_phi = np.log(phi)
    return lam * log_phi + (1.0 - lam) * (log_phi - np.log(p))


def top_words(scores_row, N: int) -> list[int]:
    """Indices of the N largest scores, ties broken by ascending index."""
    scores = np.asarray(scores_row)
    if N > scores.shape[0]:
        raise ValidationError(f"N={N} exceeds the vocabulary size {scores.shape[0]}")
    return np.lexsort((np.arange(scores.shape[0]), -scores))[:N].tolist()


def sliding_windows(corpus: Iterable, omega: int) -> list[tuple[int, ...]]:
    """Every length-omega window at stride 1; shorter documents give one window."""
    if omega < 1:
        raise ValidationError("window size must be >= 1")
    out = []
    for doc in corpus:
        toks = tuple(doc.tokens) if hasattr(doc, "tokens") else tuple(doc)
        if len(toks) <= omega:
            out.append(toks)
        else:
            out.extend(toks[i:i + omega] for i in range(len(toks) - omega + 1))
    return out


@dataclass(frozen=True)
class WordStats:
    words: tuple[int, ...]
    doc_freq: np.ndarray   # per candidate word
    pair_freq: np.ndarray  # symmetric candidate x candidate, diagonal = doc_freq
    D: int
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {w: i for i, w in enumerate(self.words)})

    def p(self, w: int) -> float:
        return self.doc_freq[self._index[w]] / self.D

    def p_pair(self, w1: int, w2: int) -> float:
        return self.pair_freq[self._index[w1], self._index[w2]] / self.D


def word_stats(docset: Iterable, candidate_words: Iterable[int]) -> WordStats:
    """Document frequencies of candidate words and of their unordered pairs."""
    words = tuple(sorted(set(int(w) for w in candidate_words)))
    index = {w: i for i, w in enumerate(words)}
    rows, cols = [], []
    D = 0
    for doc in docset:
        toks = doc.tokens if hasattr(doc, "tokens") else doc
        hits = {index[t] for t in toks if t in index}
        rows.extend([D] * len(hits))
        cols.extend(hits)
        D += 1
    if D == 0:
        raise ValidationError("empty document set")
    B = sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(D, len(words)))
    pair = np.asarray((B.T @ B).todense())
    return WordStats(words, np.diag(pair).copy(), pair, D)


@dataclass(frozen=True)
class CoherenceReport:
    metric: str
    per_topic: tuple[float, ...]
    N: int
    omega: int | None
    epsilon: float

    @property
    def aggregate(self) -> float:
        return float(np.mean(self.per_topic))

    @property
    def K(self) -> int:
        return len(self.per_topic)

    def rows(self) -> list[list]:
        out = [[self.metric, self.K, k, repr(float(s))] for k, s in enumerate(self.per_topic)]
        out.append([self.metric, self.K, "mean", repr(self.aggregate)])
        return out

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["metric", "K", "topic", "score"])
            w.writerows(self.rows())


def _check_topics(topics: Sequence[Sequence[int]]) -> int:
    Ns = {len(t) for t in topics}
    if len(Ns) != 1:
        raise ValidationError("all topics must list the same number of words")
    N = Ns.pop()
    if N < 2:
        raise ValidationError("coherence needs N >= 2 top words")
    return N


def _single(stats: WordStats, w: int) -> float:
    p = stats.p(w)
    if p == 0:
        raise DomainError(f"word {w} never occurs in the reference documents")
    return p


def umass(topics: Sequence[Sequence[int]], stats: WordStats,
          epsilon: float = DEFAULT_EPSILON) -> CoherenceReport:
    """Conditional log co-occurrence, conditioning on the higher-ranked word."""
    N = _check_topics(topics)
    scores = []
    for words in topics:
        total = 0.0
        for m in range(1, N):
            for n in range(m):
                total += math.log((stats.p_pair(words[m], words[n]) + epsilon)
                                  / _single(stats, words[n]))
        scores.append(2.0 * total / (N * (N - 1)))
    return CoherenceReport("umass", tuple(scores), N, None, epsilon)


def _pmi(stats: WordStats, a: int, b: int, epsilon: float) -> tuple[float, float]:
    joint = stats.p_pair(a, b) + epsilon
    return math.log(joint / (_single(stats, a) * _single(stats, b))), joint


def uci(topics, window_stats: WordStats, epsilon: float = DEFAULT_EPSILON,
        omega: int | None = None) -> CoherenceReport:
    N = _check_topics(topics)
    scores = []
    for words in topics:
        total = sum(_pmi(window_stats, a, b, epsilon)[0] for a, b in combinations(words, 2))
        scores.append(2.0 * total / (N * (N - 1)))
    return CoherenceReport("uci", tuple(scores), N, omega, epsilon)


def npmi(topics, window_stats: WordStats, epsilon: float = DEFAULT_EPSILON,
         omega: int | None = None) -> CoherenceReport:
    N = _check_topics(topics)
    scores = []
    for words in topics:
        total = 0.0
        for a, b in combinations(words, 2):
            pmi, joint = _pmi(window_stats, a, b, epsilon)
            denom = -math.log(joint)
            if denom == 0.0:
                raise DomainError(f"pair ({a}, {b}) co-occurs everywhere; NPMI undefined")
            total += pmi / denom
        scores.append(2.0 * total / (N * (N - 1)))
    return CoherenceReport("npmi", tuple(scores), N, omega, epsilon)


def topic_top_words(phi, N: int, present: set[int] | None = None) -> list[list[int]]:
    """Top-N words per topic by probability, skipping words absent from ``present``."""
    values = np.asarray(phi)
    out = []
    excluded = 0
    for row in values:
        order = top_words(row, values.shape[1])
        if present is not None:
            kept = [w for w in order if w in present]
            excluded += sum(1 for w in order[:N] if w not in present)
            order = kept
        if len(order) < N:
            raise ValidationError(f"only {len(order)} candidate words available for N={N}")
        out.append(order[:N])
    if excluded:
        log.info("excluded %d top words absent from the evaluation corpus", excluded)
    return out


def coherence(metric: str, topics, corpus, N: int, omega: int = DEFAULT_OMEGA,
              epsilon: float = DEFAULT_EPSILON) -> CoherenceReport:
    """Compute one metric; UMass counts whole documents, UCI/NPMI sliding windows."""
    candidates = {w for t in topics for w in t}
    if metric == "umass":
        return umass(topics, word_stats(corpus, candidates), epsilon)
    windows = sliding_windows(corpus, omega)
    stats = word_stats(windows, candidates)
    if metric == "uci":
        return uci(topics, stats, epsilon, omega)
    if metric == "npmi":
        return npmi(topics, stats, epsilon, omega)
    raise ValidationError(f"unknown coherence metric {metric!r}")


# --- held-out likelihood ------------------------------------------------------

def check_vocab(model, docset: Corpus) -> None:
    mv = getattr(model, "vocab", None)
    if mv is not None and mv.token_of != docset.vocab.token_of:
        shared = len(set(mv.token_of) & set(docset.vocab.token_of))
        raise VocabularyMismatch(
            f"model vocabulary ({mv.V} words) differs from corpus vocabulary "
            f"({docset.vocab.V} words, {shared} shared)")


def heldout_loglik(model, docset: Corpus, seed: int = 0) -> float:
    """Held-out log likelihood (DMM) or its ELBO proxy (LDA, ProdLDA)."""
    from . import dmm, lda, prodlda

    check_vocab(model, docset)
    if isinstance(model, dmm.DmmModel):
        return float(sum(dmm.log_likelihood(model, d) for d in docset))
    if isinstance(model, lda.LdaModel):
        scale = min(1.0, len(docset) / model.corpus_size)
        return lda.elbo(docset, model.state, model.params, global_scale=scale)
    if isinstance(model, prodlda.ProdLdaModel):
        losses, _ = prodlda.heldout_doc_losses(model, docset, seed)
        return float(-losses.sum())
    raise ValidationError(f"unsupported model type {type(model).__name__}")


def heldout_tokens(model, docset: Corpus) -> int:
    """Token count matching the likelihood of :func:`heldout_loglik`."""
    from . import prodlda

    if isinstance(model, prodlda.ProdLdaModel) and not model.config.count_weighted:
        return sum(len(d.counts) for d in docset)
    return docset.total_tokens


def heldout_perplexity(model, docset: Corpus, seed: int = 0) -> float:
    return perplexity(heldout_loglik(model, docset, seed), heldout_tokens(model, docset))


def topic_word_of(model) -> TopicWordMatrix:
    from . import dmm

    if isinstance(model, dmm.DmmModel):
        return model.phi_hat
    return model.topic_word


def write_top_words(path, topics_words: Sequence[Sequence[str]]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for k, words in enumerate(topics_words):
            f.write(f"{k}\t{','.join(words)}\n")
