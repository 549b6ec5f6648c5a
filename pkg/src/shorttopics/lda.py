"""Latent Dirichlet Allocation fitted by online variational Bayes."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import gammaln, logsumexp

from .corpus import Corpus, Document, Vocabulary
from .errors import DomainError, NoConvergence, ValidationError
from .kernels import get_backend
from .special import digamma
from .topicword import TopicWordMatrix

log = logging.getLogger(__name__)

__all__ = [
    "LdaParams", "VariationalState", "DocPosterior", "LdaModel", "digamma",
    "e_step", "learning_rate", "m_step_online", "elbo", "estimate_phi", "train",
]


@dataclass(frozen=True)
class LdaParams:
    K: int
    alpha: float | None = None   # document-topic prior, 1/K when None
    eta: float | None = None     # topic-word prior, 1/K when None
    kappa: float = 0.75
    tau0: float = 64.0
    batch_size: int = 256
    passes: int = 1
    seed: int = 0
    tol: float = 1e-3
    max_inner: int = 100

    def __post_init__(self):
        if self.K < 1:
            raise ValidationError(f"K must be >= 1, got {self.K}")
        if self.alpha is None:
            object.__setattr__(self, "alpha", 1.0 / self.K)
        if self.eta is None:
            object.__setattr__(self, "eta", 1.0 / self.K)
        if not self.alpha > 0 or not self.eta > 0:
            raise ValidationError("alpha and eta must be positive")
        if not 0.5 < self.kappa <= 1.0:
            raise ValidationError(f"kappa must lie in (0.5, 1], got {self.kappa}")
        if self.tau0 < 0:
            raise ValidationError("tau0 must be >= 0")
        if self.batch_size < 1 or self.passes < 0:
            raise ValidationError("batch_size must be >= 1 and passes >= 0")


@dataclass(frozen=True)
class VariationalState:
    lam: np.ndarray  # K x V variational Dirichlet parameters of the topics
    t: int = 0

    def __post_init__(self):
        if np.any(~(self.lam > 0)):
            raise ValidationError("lambda must be strictly positive")


@dataclass(frozen=True)
class DocPosterior:
    gamma: np.ndarray
    phi_local: np.ndarray  # one responsibility row (over K) per distinct word
    words: np.ndarray
    converged: bool = True
    iterations: int = 0


@dataclass(frozen=True)
class LdaModel:
    state: VariationalState
    params: LdaParams
    corpus_size: int
    vocab: Vocabulary | None = None
    history: list = field(default_factory=list, compare=False)

    @property
    def K(self) -> int:
        return self.params.K

    @property
    def topic_word(self) -> TopicWordMatrix:
        return estimate_phi(self.state, self.vocab)

    def to_dict(self) -> dict:
        out = {
            "kind": "lda",
            "params": asdict(self.params),
            "corpus_size": self.corpus_size,
            "t": self.state.t,
            "lambda": self.state.lam.tolist(),
            "phi": self.topic_word.values.tolist(),
        }
        if self.vocab is not None:
            out["vocab"] = list(self.vocab.token_of)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "LdaModel":
        vocab = Vocabulary(tuple(data["vocab"])) if "vocab" in data else None
        return cls(VariationalState(np.array(data["lambda"]), data["t"]),
                   LdaParams(**data["params"]), data["corpus_size"], vocab)


def dirichlet_expectation(a: np.ndarray) -> np.ndarray:
    """E[log x] for x ~ Dir(a), row-wise for 2-D input."""
    if a.ndim == 1:
        return digamma(a) - digamma(a.sum())
    return digamma(a) - digamma(a.sum(axis=1))[:, None]


def e_step(doc: Document, lam: np.ndarray, alpha: float, tol: float = 1e-3,
           max_inner: int = 100, strict: bool = False) -> DocPosterior:
    """Local coordinate ascent for one document with the topics held at ``lam``.

    Runs until the mean absolute change of gamma drops below ``tol``.
    Without convergence the last iterate is returned with ``converged``
    False, or :class:`NoConvergence` is raised when ``strict``.
    """
    c = doc.counts
    words = np.fromiter(c.keys(), np.int64, len(c))
    cts = np.fromiter(c.values(), np.float64, len(c))
    K = lam.shape[0]
    elog_beta = digamma(lam[:, words]) - digamma(lam.sum(axis=1))[:, None]
    gamma = np.full(K, alpha + doc.length / K)
    converged = False
    it = 0
    for it in range(1, max_inner + 1):
        log_resp = digamma(gamma)[:, None] + elog_beta
        resp = np.exp(log_resp - logsumexp(log_resp, axis=0))
        new_gamma = alpha + resp @ cts
        change = np.mean(np.abs(new_gamma - gamma))
        gamma = new_gamma
        if change < tol:
            converged = True
            break
    if not converged and strict:
        raise NoConvergence(f"e-step did not converge in {max_inner} iterations")
    log_resp = digamma(gamma)[:, None] + elog_beta
    resp = np.exp(log_resp - logsumexp(log_resp, axis=0))
    return DocPosterior(gamma, resp.T, words, converged, it)


def learning_rate(t: int, tau0: float, kappa: float) -> float:
    """rho_t = (tau0 + t) ** -kappa, capped at 1."""
    if t < 0:
        raise DomainError("t must be >= 0")
    base = tau0 + t
    if base <= 1.0:
        return 1.0
    return float(base ** -kappa)


def m_step_online(state: VariationalState, sstats: np.ndarray, rho: float,
                  corpus_size: int, batch_size: int, eta: float) -> VariationalState:
    """Blend lambda toward the minibatch estimate eta + (D / |batch|) * sstats."""
    lam_hat = eta + (corpus_size / batch_size) * sstats
    return VariationalState((1.0 - rho) * state.lam + rho * lam_hat, state.t + 1)


def batch_e_step(corpus: Corpus, lam: np.ndarray, alpha: float, tol: float = 1e-3,
                 max_inner: int = 100, backend: str | None = None):
    """E-step over every document; returns (gamma D x K, sstats K x V, n_unconverged)."""
    kern = get_backend(backend)
    indptr, words, counts = corpus.sparse
    K = lam.shape[0]
    exp_elog_beta = np.ascontiguousarray(np.exp(dirichlet_expectation(lam)))
    doc_len = np.fromiter((d.length for d in corpus), np.float64, len(corpus))
    gamma = np.ascontiguousarray(alpha + np.repeat(doc_len[:, None] / K, K, axis=1))
    sstats = np.zeros_like(lam)
    bad = kern.lda_e_step(indptr, words, counts, exp_elog_beta, float(alpha), float(tol),
                          int(max_inner), gamma, sstats)
    return gamma, sstats, int(bad)


def _local_terms(corpus: Corpus, lam: np.ndarray, gamma: np.ndarray, alpha: float) -> float:
    """Document part of the ELBO with responsibilities at their optimum given gamma."""
    K = lam.shape[0]
    elog_beta = dirichlet_expectation(lam)
    elog_theta = dirichlet_expectation(gamma)
    total = 0.0
    for d, doc in enumerate(corpus):
        c = doc.counts
        words = np.fromiter(c.keys(), np.int64, len(c))
        cts = np.fromiter(c.values(), np.float64, len(c))
        total += cts @ logsumexp(elog_theta[d][:, None] + elog_beta[:, words], axis=0)
    total += np.sum((alpha - gamma) * elog_theta)
    total += np.sum(gammaln(gamma)) - np.sum(gammaln(gamma.sum(axis=1)))
    total += len(corpus) * (gammaln(K * alpha) - K * gammaln(alpha))
    return float(total)


def _global_terms(lam: np.ndarray, eta: float) -> float:
    """E_q[log p(topics | eta)] - E_q[log q(topics)]; zero when lambda == eta."""
    V = lam.shape[1]
    elog_beta = dirichlet_expectation(lam)
    total = np.sum((eta - lam) * elog_beta)
    total += np.sum(gammaln(lam)) - np.sum(gammaln(lam.sum(axis=1)))
    total += lam.shape[0] * (gammaln(V * eta) - V * gammaln(eta))
    return float(total)


def elbo(corpus: Corpus, state: VariationalState, params: LdaParams,
         gamma: np.ndarray | None = None, global_scale: float = 1.0,
         backend: str | None = None) -> float:
    """Evidence lower bound of ``corpus`` under q.

    The per-document factors are fitted against the current lambda unless
    ``gamma`` is given. ``global_scale`` weights the topic (global) term;
    1 gives a bound on log p(corpus | alpha, eta).
    """
    if gamma is None and len(corpus):
        gamma, _, _ = batch_e_step(corpus, state.lam, params.alpha, params.tol,
                                   params.max_inner, backend)
    local = _local_terms(corpus, state.lam, gamma, params.alpha) if len(corpus) else 0.0
    return local + global_scale * _global_terms(state.lam, params.eta)


def estimate_phi(state: VariationalState, vocab: Vocabulary | None = None) -> TopicWordMatrix:
    return TopicWordMatrix(state.lam / state.lam.sum(axis=1, keepdims=True), vocab)


def init_state(K: int, V: int, rng: np.random.Generator) -> VariationalState:
    return VariationalState(rng.gamma(100.0, 1.0 / 100.0, size=(K, V)), 0)


def train(corpus: Corpus, params: LdaParams, backend: str | None = None) -> LdaModel:
    """``passes`` epochs of shuffled minibatches, one online update per minibatch.

    The returned model's ``history`` holds ``(t, rho, batch_elbo)`` rows,
    the minibatch bound being evaluated before each update.
    """
    rng = np.random.default_rng(params.seed)
    D = len(corpus)
    state = init_state(params.K, corpus.V, rng)
    history = []
    for _ in range(params.passes):
        order = rng.permutation(D)
        for start in range(0, D, params.batch_size):
            idx = order[start:start + params.batch_size]
            batch = corpus.subset(idx)
            gamma, sstats, bad = batch_e_step(batch, state.lam, params.alpha, params.tol,
                                              params.max_inner, backend)
            if bad:
                log.debug("%d documents hit max_inner in minibatch %d", bad, state.t)
            scale = D / len(idx)
            batch_bound = (scale * _local_terms(batch, state.lam, gamma, params.alpha)
                           + _global_terms(state.lam, params.eta))
            rho = learning_rate(state.t, params.tau0, params.kappa)
            history.append((state.t, rho, batch_bound))
            state = m_step_online(state, sstats, rho, D, len(idx), params.eta)
    return LdaModel(state, params, D, corpus.vocab, history)
