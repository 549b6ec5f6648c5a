"""Dirichlet Multinomial Mixture trained by collapsed Gibbs sampling."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import logsumexp

from .corpus import Corpus, Document, Vocabulary
from .errors import NumericalUnderflow, ValidationError
from .kernels import _kernels_py, get_backend
from .topicword import TopicWordMatrix

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DmmParams:
    K: int
    alpha: float = 0.1
    beta: float = 0.1
    iterations: int = 30
    seed: int = 0

    def __post_init__(self):
        if self.K < 1:
            raise ValidationError(f"K must be >= 1, got {self.K}")
        if not self.alpha > 0 or not self.beta > 0:
            raise ValidationError("alpha and beta must be positive")
        if self.iterations < 0:
            raise ValidationError("iterations must be >= 0")


@dataclass
class DmmState:
    """Chain state: labels plus the sufficient-statistic counters they imply."""

    z: np.ndarray     # topic label per document
    m: np.ndarray     # documents per topic
    n_kw: np.ndarray  # K x V word occurrences per topic
    n_k: np.ndarray   # total words per topic

    @classmethod
    def from_labels(cls, z, corpus: Corpus, K: int) -> "DmmState":
        z = np.ascontiguousarray(z, dtype=np.int64)
        indptr, words, counts = corpus.sparse
        m = np.bincount(z, minlength=K).astype(np.int64)
        n_kw = np.zeros((K, corpus.V), dtype=np.int64)
        rows = np.repeat(z, np.diff(indptr))
        np.add.at(n_kw, (rows, words), counts)
        return cls(z, m, n_kw, n_kw.sum(axis=1))

    def copy(self) -> "DmmState":
        return DmmState(self.z.copy(), self.m.copy(), self.n_kw.copy(), self.n_k.copy())

    def is_consistent(self, corpus: Corpus) -> bool:
        ref = DmmState.from_labels(self.z, corpus, self.m.shape[0])
        return (np.array_equal(ref.m, self.m) and np.array_equal(ref.n_kw, self.n_kw)
                and np.array_equal(ref.n_k, self.n_k))


@dataclass(frozen=True)
class DmmModel:
    phi_hat: TopicWordMatrix
    theta_hat: np.ndarray
    params: DmmParams
    labels: np.ndarray | None = None

    @property
    def K(self) -> int:
        return self.phi_hat.K

    @property
    def vocab(self) -> Vocabulary | None:
        return self.phi_hat.vocab

    def to_dict(self) -> dict:
        out = {
            "kind": "dmm",
            "params": asdict(self.params),
            "theta": self.theta_hat.tolist(),
            "phi": self.phi_hat.values.tolist(),
        }
        if self.vocab is not None:
            out["vocab"] = list(self.vocab.token_of)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "DmmModel":
        vocab = Vocabulary(tuple(data["vocab"])) if "vocab" in data else None
        return cls(TopicWordMatrix(np.array(data["phi"]), vocab),
                   np.array(data["theta"]), DmmParams(**data["params"]))


def init(corpus: Corpus, params: DmmParams, rng: np.random.Generator | None = None) -> DmmState:
    """Uniform random labels from the seeded generator."""
    if rng is None:
        rng = np.random.default_rng(params.seed)
    z = rng.integers(params.K, size=len(corpus))
    return DmmState.from_labels(z, corpus, params.K)


def _doc_arrays(doc: Document) -> tuple[np.ndarray, np.ndarray]:
    c = doc.counts
    return np.fromiter(c.keys(), np.int64, len(c)), np.fromiter(c.values(), np.int64, len(c))


def log_conditional(state: DmmState, doc: Document, params: DmmParams) -> np.ndarray:
    """Unnormalized log p(z_d = k | rest); counters must exclude ``doc``."""
    words, counts = _doc_arrays(doc)
    if np.all(counts == 1):
        # one factor per word when every multiplicity is 1
        V = state.n_kw.shape[1]
        lp = np.log(state.m + params.alpha)
        lp -= np.log(state.n_k[:, None] + V * params.beta + np.arange(doc.length)).sum(axis=1)
        lp += np.log(state.n_kw[:, words] + params.beta).sum(axis=1)
        return lp
    return _kernels_py.dmm_log_weights(state.m, state.n_kw, state.n_k, words, counts,
                                       doc.length, params.alpha, params.beta,
                                       state.n_kw.shape[1])


def conditional(state: DmmState, doc: Document, params: DmmParams) -> np.ndarray:
    """Normalized Gibbs conditional over topics (log-space, log-sum-exp)."""
    lp = log_conditional(state, doc, params)
    p = np.exp(lp - logsumexp(lp))
    if not np.all(np.isfinite(p)) or p.sum() == 0:
        raise NumericalUnderflow("conditional could not be normalized")
    return p / p.sum()


def remove_doc(state: DmmState, d: int, doc: Document) -> None:
    k = state.z[d]
    words, counts = _doc_arrays(doc)
    state.m[k] -= 1
    state.n_k[k] -= doc.length
    state.n_kw[k, words] -= counts


def add_doc(state: DmmState, d: int, doc: Document, k: int) -> None:
    words, counts = _doc_arrays(doc)
    state.z[d] = k
    state.m[k] += 1
    state.n_k[k] += doc.length
    state.n_kw[k, words] += counts


def gibbs_sweep(state: DmmState, corpus: Corpus, params: DmmParams,
                rng: np.random.Generator, backend: str | None = None) -> DmmState:
    """Relabel every document once, in place; returns ``state``."""
    kern = get_backend(backend)
    indptr, words, counts = corpus.sparse
    doc_len = np.fromiter((d.length for d in corpus), np.int64, len(corpus))
    uniforms = rng.random(len(corpus))
    kern.gibbs_sweep(state.z, state.m, state.n_kw, state.n_k, indptr, words, counts,
                     doc_len, float(params.alpha), float(params.beta), uniforms)
    return state


def estimate_phi(state: DmmState, params: DmmParams, vocab: Vocabulary | None = None) -> TopicWordMatrix:
    V = state.n_kw.shape[1]
    phi = (params.beta + state.n_kw) / (state.n_k[:, None] + V * params.beta)
    return TopicWordMatrix(phi, vocab)


def estimate_theta(state: DmmState, params: DmmParams) -> np.ndarray:
    n_docs = state.m.sum()
    return (params.alpha + state.m) / (n_docs + params.K * params.alpha)


def doc_log_joint(model: DmmModel, doc: Document) -> np.ndarray:
    """log theta_k + sum_{w in d} log phi_{k,w} for every topic k."""
    words, counts = _doc_arrays(doc)
    return np.log(model.theta_hat) + np.log(model.phi_hat.values[:, words]) @ counts


def log_likelihood(model: DmmModel, doc: Document) -> float:
    return float(logsumexp(doc_log_joint(model, doc)))


def assign(model: DmmModel, doc: Document) -> int:
    """Most probable topic of ``doc`` under the trained model (ties to lowest id)."""
    return int(np.argmax(doc_log_joint(model, doc)))


def train(corpus: Corpus, params: DmmParams, backend: str | None = None,
          callback=None) -> DmmModel:
    """Random init, ``params.iterations`` sweeps, posterior-mean estimates of the final state."""
    rng = np.random.default_rng(params.seed)
    state = init(corpus, params, rng)
    for it in range(params.iterations):
        gibbs_sweep(state, corpus, params, rng, backend)
        if callback is not None:
            callback(it, state)
        log.debug("sweep %d: %d occupied topics", it + 1, int(np.count_nonzero(state.m)))
    return DmmModel(estimate_phi(state, params, corpus.vocab), estimate_theta(state, params),
                    params, state.z.copy())
