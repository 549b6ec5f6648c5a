"""ProdLDA: a VAE topic model with a Laplace-approximated Dirichlet prior.

The encoder maps a bag of words to a diagonal logistic-normal posterior;
the decoder mixes the topic rows with the sampled proportions and
normalizes the mixture with a softmax (a weighted product of experts).
"""

from __future__ import annotations

import copy
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import nn
from .corpus import Corpus, Vocabulary
from .errors import DomainError, ShapeMismatch, ValidationError
from .topicword import TopicWordMatrix

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LaplacePrior:
    mu_tilde: np.ndarray
    sigma_tilde: np.ndarray  # diagonal variances

    @property
    def K(self) -> int:
        return self.mu_tilde.shape[0]


def laplace_prior(alpha_vec) -> LaplacePrior:
    """Logistic-normal moments matching a Dirichlet(alpha_vec) prior."""
    a = np.asarray(alpha_vec, dtype=np.float64)
    K = a.shape[0]
    if K < 2:
        raise DomainError("the Laplace approximation needs K >= 2")
    if np.any(~(a > 0)):
        raise DomainError("Dirichlet parameters must be positive")
    log_a = np.log(a)
    mu = log_a - log_a.mean()
    if np.all(a == a[0]):
        mu = np.zeros(K)
    sigma = (1.0 / a) * (1.0 - 2.0 / K) + np.sum(1.0 / a) / K**2
    return LaplacePrior(mu, sigma)


@dataclass(frozen=True)
class ProdLdaConfig:
    K: int
    alpha: float | None = None
    encoder_hidden: tuple[int, int] = (100, 100)
    dropout_p: float = 0.2
    lr: float = 1e-3
    batch_size: int = 256
    max_epochs: int = 100
    patience: int = 10
    val_fraction: float = 0.3
    seed: int = 0
    count_weighted: bool = False
    decoder_bn: bool = False
    head_bn_affine: bool = False
    bn_momentum: float = 0.1
    bn_epsilon: float = 1e-5

    def __post_init__(self):
        if self.K < 2:
            raise ValidationError("ProdLDA needs K >= 2")
        if self.alpha is None:
            object.__setattr__(self, "alpha", 1.0 / self.K)
        if not self.alpha > 0:
            raise ValidationError("alpha must be positive")
        object.__setattr__(self, "encoder_hidden", tuple(int(h) for h in self.encoder_hidden))
        if len(self.encoder_hidden) != 2 or min(self.encoder_hidden) < 1:
            raise ValidationError("encoder_hidden must be two positive widths")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValidationError("val_fraction must lie in (0, 1)")
        if self.patience < 1 or self.max_epochs < 0 or self.batch_size < 2:
            raise ValidationError("patience >= 1, max_epochs >= 0, batch_size >= 2 required")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValidationError("dropout_p must be in [0, 1)")


class ProdLdaModel:
    """Encoder layers, decoder topic matrix and the fixed prior."""

    def __init__(self, V: int, config: ProdLdaConfig, rng=None, vocab: Vocabulary | None = None):
        rng = np.random.default_rng(config.seed if rng is None else rng)
        K = config.K
        h1, h2 = config.encoder_hidden
        self.V = V
        self.config = config
        self.vocab = vocab
        self.prior = laplace_prior(np.full(K, config.alpha))
        self.enc1 = nn.Linear(V, h1, rng=rng)
        self.act1 = nn.Softplus()
        self.enc2 = nn.Linear(h1, h2, rng=rng)
        self.act2 = nn.Softplus()
        self.drop = nn.Dropout(config.dropout_p, rng=rng)
        bn = dict(momentum=config.bn_momentum, epsilon=config.bn_epsilon,
                  learn_gain=config.head_bn_affine, learn_shift=config.head_bn_affine)
        self.mu_head = nn.Linear(h2, K, rng=rng)
        self.mu_bn = nn.BatchNorm(K, **bn)
        self.lv_head = nn.Linear(h2, K, rng=rng)
        self.lv_bn = nn.BatchNorm(K, **bn)
        bound = np.sqrt(6.0 / (K + V))
        self.decoder_phi = rng.uniform(-bound, bound, size=(K, V))
        self.decoder_phi_grad = np.zeros_like(self.decoder_phi)
        self.dec_bn = (nn.BatchNorm(V, momentum=config.bn_momentum, epsilon=config.bn_epsilon,
                                    learn_gain=True, learn_shift=False)
                       if config.decoder_bn else None)
        self.training = True

    @property
    def K(self) -> int:
        return self.config.K

    def layers(self) -> dict[str, nn.Layer]:
        out = {"enc1": self.enc1, "enc2": self.enc2, "drop": self.drop,
               "mu_head": self.mu_head, "mu_bn": self.mu_bn,
               "lv_head": self.lv_head, "lv_bn": self.lv_bn}
        if self.dec_bn is not None:
            out["dec_bn"] = self.dec_bn
        return out

    def parameters(self) -> dict[str, np.ndarray]:
        out = {}
        for lname, layer in self.layers().items():
            for pname, arr in layer.parameters().items():
                out[f"{lname}.{pname}"] = arr
        out["decoder_phi"] = self.decoder_phi
        return out

    def gradients(self) -> dict[str, np.ndarray]:
        out = {}
        for lname, layer in self.layers().items():
            for pname, arr in layer.grads.items():
                out[f"{lname}.{pname}"] = arr
        out["decoder_phi"] = self.decoder_phi_grad
        return out

    def zero_grad(self) -> None:
        for g in self.gradients().values():
            g[...] = 0.0

    def train(self, mode: bool = True) -> "ProdLdaModel":
        self.training = mode
        for layer in (*self.layers().values(), self.act1, self.act2):
            layer.train(mode)
        return self

    def eval(self) -> "ProdLdaModel":
        return self.train(False)

    def zero_heads(self) -> None:
        """Zero both posterior heads, so mu = 0 and log-variance = 0 for every input."""
        for head in (self.mu_head, self.lv_head):
            head.weight[...] = 0.0
            head.bias[...] = 0.0

    # --- forward / backward -------------------------------------------------

    def _encode(self, X):
        if X.ndim != 2 or X.shape[1] != self.V:
            raise ShapeMismatch(f"expected a batch of {self.V}-dimensional bags of words")
        h = self.act1.forward(self.enc1.forward(X))
        h = self.act2.forward(self.enc2.forward(h))
        h = self.drop.forward(h)
        mu = self.mu_bn.forward(self.mu_head.forward(h))
        logvar = self.lv_bn.forward(self.lv_head.forward(h))
        return mu, logvar

    def _decode_logits(self, theta):
        logits = theta @ self.decoder_phi
        if self.dec_bn is not None:
            logits = self.dec_bn.forward(logits)
        return logits

    def per_doc_loss(self, X, weights, eps):
        """KL + reconstruction for every row of the batch; caches for :meth:`backward`."""
        mu, logvar = self._encode(X)
        std = np.exp(0.5 * logvar)
        theta = nn.softmax(mu + std * eps)
        logp = nn.log_softmax(self._decode_logits(theta))
        recon = -np.sum(weights * logp, axis=1)
        kl = kl_divergence(mu, logvar, self.prior)
        self._cache = (mu, logvar, std, eps, theta, logp, weights)
        return kl + recon

    def loss(self, X, weights, eps) -> float:
        return float(np.mean(self.per_doc_loss(X, weights, eps)))

    def backward(self) -> None:
        """Accumulate gradients of the mean batch loss from the last forward."""
        mu, logvar, std, eps, theta, logp, weights = self._cache
        B = mu.shape[0]
        prior = self.prior
        g_logits = (np.exp(logp) * weights.sum(axis=1, keepdims=True) - weights) / B
        if self.dec_bn is not None:
            g_logits = self.dec_bn.backward(g_logits)
        self.decoder_phi_grad += theta.T @ g_logits
        g_z = nn.softmax_backward(theta, g_logits @ self.decoder_phi.T)
        g_mu = g_z + (mu - prior.mu_tilde) / prior.sigma_tilde / B
        g_lv = 0.5 * g_z * eps * std + 0.5 * (np.exp(logvar) / prior.sigma_tilde - 1.0) / B
        g_h = self.mu_head.backward(self.mu_bn.backward(g_mu))
        g_h = g_h + self.lv_head.backward(self.lv_bn.backward(g_lv))
        g_h = self.drop.backward(g_h)
        g_h = self.enc2.backward(self.act2.backward(g_h))
        self.enc1.backward(self.act1.backward(g_h))

    # --- persistence ----------------------------------------------------------

    def state_dict(self) -> dict[str, np.ndarray]:
        out = {k: v.copy() for k, v in self.parameters().items()}
        for lname, layer in self.layers().items():
            if isinstance(layer, nn.BatchNorm):
                for bname, arr in layer.buffers().items():
                    out[f"{lname}.{bname}"] = arr.copy()
                out[f"{lname}.gain"] = layer.gain.copy()
                out[f"{lname}.shift"] = layer.shift.copy()
        return out

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        targets = dict(self.parameters())
        for lname, layer in self.layers().items():
            if isinstance(layer, nn.BatchNorm):
                targets.update({f"{lname}.{b}": a for b, a in layer.buffers().items()})
                targets[f"{lname}.gain"] = layer.gain
                targets[f"{lname}.shift"] = layer.shift
        for name, arr in state.items():
            if name not in targets:
                raise ValidationError(f"unknown parameter {name!r}")
            if targets[name].shape != np.shape(arr):
                raise ShapeMismatch(f"{name}: expected {targets[name].shape}, got {np.shape(arr)}")
            targets[name][...] = arr

    def to_dict(self) -> dict:
        cfg = asdict(self.config)
        cfg["encoder_hidden"] = list(cfg["encoder_hidden"])
        out = {
            "kind": "prodlda",
            "config": cfg,
            "V": self.V,
            "prior": {"mu_tilde": self.prior.mu_tilde.tolist(),
                      "sigma_tilde": self.prior.sigma_tilde.tolist()},
            "weights": {k: v.tolist() for k, v in sorted(self.state_dict().items())},
            "phi": topic_word_matrix(self).values.tolist(),
        }
        if self.vocab is not None:
            out["vocab"] = list(self.vocab.token_of)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ProdLdaModel":
        cfg = dict(data["config"])
        cfg["encoder_hidden"] = tuple(cfg["encoder_hidden"])
        vocab = Vocabulary(tuple(data["vocab"])) if "vocab" in data else None
        model = cls(int(data["V"]), ProdLdaConfig(**cfg), vocab=vocab)
        model.load_state_dict({k: np.array(v) for k, v in data["weights"].items()})
        return model.eval()

    @property
    def topic_word(self) -> TopicWordMatrix:
        return topic_word_matrix(self)


def encode(model: ProdLdaModel, doc_bow) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and log-variance for one bag of words (or a batch)."""
    X = np.asarray(doc_bow, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    mu, logvar = model._encode(X)
    return (mu[0], logvar[0]) if single else (mu, logvar)


def reparam_sample(mu, log_sigma, eps):
    """theta = softmax(mu + sqrt(Sigma) * eps) with ``log_sigma`` the log-variance."""
    return nn.softmax(np.asarray(mu) + np.exp(0.5 * np.asarray(log_sigma)) * np.asarray(eps))


def decode(model_or_phi, theta_s) -> np.ndarray:
    """Word distribution softmax(theta_s @ phi): mix the topic rows, then normalize."""
    phi = model_or_phi.decoder_phi if isinstance(model_or_phi, ProdLdaModel) else np.asarray(model_or_phi)
    return nn.softmax(np.asarray(theta_s) @ phi)


def kl_divergence(mu, log_sigma, prior: LaplacePrior):
    """KL(N(mu, diag exp(log_sigma)) || N(mu~, diag sigma~)), row-wise for batches."""
    mu = np.asarray(mu, dtype=np.float64)
    log_sigma = np.asarray(log_sigma, dtype=np.float64)
    s_t = prior.sigma_tilde
    diff = prior.mu_tilde - mu
    return 0.5 * (np.sum(np.exp(log_sigma) / s_t, axis=-1)
                  + np.sum(diff * diff / s_t, axis=-1)
                  - prior.K
                  + np.sum(np.log(s_t)) - np.sum(log_sigma, axis=-1))


def reconstruction_loss(doc_counts, word_dist, count_weighted: bool = False) -> float:
    """-sum_w weight(w) log p_w; weight is word presence, or the count when ``count_weighted``."""
    c = np.asarray(doc_counts, dtype=np.float64)
    weights = c if count_weighted else (c > 0).astype(np.float64)
    present = weights > 0
    return float(-np.sum(weights[present] * np.log(np.asarray(word_dist)[present])))


def doc_weights(X: np.ndarray, count_weighted: bool) -> np.ndarray:
    return X.copy() if count_weighted else (X > 0).astype(np.float64)


def loss(model: ProdLdaModel, X, rng, eps=None) -> float:
    """Mean over the batch of KL + one-sample reconstruction."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[0] == 0:
        raise ValidationError("empty batch")
    if eps is None:
        eps = rng.standard_normal((X.shape[0], model.K))
    return model.loss(X, doc_weights(X, model.config.count_weighted), eps)


def topic_word_matrix(model: ProdLdaModel) -> TopicWordMatrix:
    return TopicWordMatrix(nn.softmax(model.decoder_phi, axis=1), model.vocab)


def _batches(idx: np.ndarray, size: int):
    """Consecutive slices of ``idx``; a trailing single row joins the previous batch."""
    out = [idx[i:i + size] for i in range(0, len(idx), size)]
    if len(out) > 1 and len(out[-1]) < 2:
        last = out.pop()
        out[-1] = np.concatenate([out[-1], last])
    return out


@dataclass
class TrainingLog:
    epochs: list = field(default_factory=list)  # (epoch, train_loss, val_loss)
    best_epoch: int = -1


def train(corpus: Corpus, config: ProdLdaConfig) -> ProdLdaModel:
    """Adam on a 70/30 train/validation split with early stopping on validation loss.

    Returns the weights of the best validation epoch; ``model.log`` keeps
    the per-epoch losses.
    """
    rng = np.random.default_rng(config.seed)
    model = ProdLdaModel(corpus.V, config, rng=rng, vocab=corpus.vocab)
    X_all = corpus.bow_matrix()
    N = X_all.shape[0]
    perm = rng.permutation(N)
    n_val = min(max(1, int(round(config.val_fraction * N))), N - 2) if N >= 3 else 0
    val_idx, train_idx = np.sort(perm[:n_val]), perm[n_val:]
    W_all = doc_weights(X_all, config.count_weighted)
    X_val, W_val = X_all[val_idx], W_all[val_idx]
    eps_val = rng.standard_normal((len(val_idx), config.K))
    params = list(model.parameters().values())
    adam = nn.AdamState(params, lr=config.lr)
    history = TrainingLog()
    best, best_state, stale = np.inf, model.state_dict(), 0
    for epoch in range(config.max_epochs):
        model.train()
        order = rng.permutation(train_idx)
        total = 0.0
        for batch in _batches(order, config.batch_size):
            if len(batch) < 2:
                continue
            eps = rng.standard_normal((len(batch), config.K))
            model.zero_grad()
            batch_loss = model.loss(X_all[batch], W_all[batch], eps)
            model.backward()
            nn.adam_step(adam, params, list(model.gradients().values()))
            total += batch_loss * len(batch)
        train_loss = total / len(train_idx)
        if n_val:
            model.eval()
            val_loss = model.loss(X_val, W_val, eps_val)
        else:
            val_loss = train_loss
        history.epochs.append((epoch, train_loss, val_loss))
        log.debug("epoch %d: train %.4f val %.4f", epoch, train_loss, val_loss)
        if val_loss < best:
            best, best_state, stale = val_loss, model.state_dict(), 0
            history.best_epoch = epoch
        else:
            stale += 1
            if stale >= config.patience:
                break
    model.load_state_dict(best_state)
    model.eval()
    model.log = history
    return model


def heldout_doc_losses(model: ProdLdaModel, corpus: Corpus, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Eval-mode per-document loss and weight totals with seed-frozen noise."""
    X = corpus.bow_matrix()
    W = doc_weights(X, model.config.count_weighted)
    eps = np.random.default_rng(seed).standard_normal((X.shape[0], model.K))
    was_training = model.training
    model.eval()
    try:
        losses = model.per_doc_loss(X, W, eps)
    finally:
        model.train(was_training)
    return losses, W.sum(axis=1)


def clone(model: ProdLdaModel) -> ProdLdaModel:
    return copy.deepcopy(model)
