"""Variational Bayesian classification head (fully factorized Gaussian).

The head is ``d -> 16 -> 1`` with a ReLU in between and a logistic output.
Each weight has a variational mean ``mu`` and a raw scale ``rho`` with
``sigma = softplus(rho)``; the prior is ``N(0, prior_sigma^2)`` per weight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_expit

from .errors import ConfigError, ShapeError

HIDDEN = 16
HEAD_PARAMS = ("w1", "b1", "w2", "b2")
SIGMA_FLOOR = 1e-12
LOGQ_CLAMP = 1e12
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


def head_shapes(dim: int) -> dict[str, tuple[int, ...]]:
    return {"w1": (dim, HIDDEN), "b1": (HIDDEN,), "w2": (HIDDEN,), "b2": (1,)}


def softplus(x):
    return np.logaddexp(0.0, x)


def inverse_softplus(y: float) -> float:
    return float(y + math.log(-math.expm1(-y)))


@dataclass
class VariationalHead:
    mu: dict[str, np.ndarray]
    rho: dict[str, np.ndarray]
    prior_sigma: float = 1.0
    k: float = 2.0
    j_train: int = 10
    j_eval: int = 30

    def __post_init__(self):
        if self.prior_sigma <= 0:
            raise ConfigError("prior_sigma must be positive")
        if self.k <= 0:
            raise ConfigError("confidence exponent k must be positive")

    @property
    def dim(self) -> int:
        return self.mu["w1"].shape[0]

    @property
    def n_weights(self) -> int:
        return sum(v.size for v in self.mu.values())

    def sigma(self) -> dict[str, np.ndarray]:
        return {n: np.maximum(softplus(r), SIGMA_FLOOR) for n, r in self.rho.items()}

    def copy(self) -> "VariationalHead":
        return VariationalHead({n: v.copy() for n, v in self.mu.items()},
                               {n: v.copy() for n, v in self.rho.items()},
                               self.prior_sigma, self.k, self.j_train, self.j_eval)

    @classmethod
    def init(cls, dim: int, rng: np.random.Generator, rho_init: float = -5.0,
             **kwargs) -> "VariationalHead":
        mu, rho = {}, {}
        fan_in = {"w1": dim, "b1": dim, "w2": HIDDEN, "b2": HIDDEN}
        for name, shape in head_shapes(dim).items():
            bound = 1.0 / math.sqrt(fan_in[name])
            mu[name] = rng.uniform(-bound, bound, size=shape)
            rho[name] = np.full(shape, float(rho_init))
        return cls(mu, rho, **kwargs)

    @classmethod
    def constant(cls, dim: int, mu: float = 0.0, sigma: float | None = None,
                 rho: float | None = None, **kwargs) -> "VariationalHead":
        """Head with every weight sharing one mean and one scale."""
        if rho is None:
            rho = inverse_softplus(sigma if sigma is not None else 1.0)
        shapes = head_shapes(dim)
        return cls({n: np.full(s, float(mu)) for n, s in shapes.items()},
                   {n: np.full(s, float(rho)) for n, s in shapes.items()}, **kwargs)

    def to_dict(self) -> dict:
        return {"prior_sigma": self.prior_sigma, "k": self.k,
                "j_train": self.j_train, "j_eval": self.j_eval,
                "mu": {n: self.mu[n].tolist() for n in HEAD_PARAMS},
                "rho": {n: self.rho[n].tolist() for n in HEAD_PARAMS}}

    @classmethod
    def from_dict(cls, d: dict) -> "VariationalHead":
        return cls({n: np.asarray(d["mu"][n], dtype=np.float64) for n in HEAD_PARAMS},
                   {n: np.asarray(d["rho"][n], dtype=np.float64) for n in HEAD_PARAMS},
                   float(d["prior_sigma"]), float(d["k"]),
                   int(d["j_train"]), int(d["j_eval"]))


@dataclass
class WeightSample:
    """``J`` stacked weight draws; every array carries a leading ``J`` axis."""

    weights: dict[str, np.ndarray]
    eps: dict[str, np.ndarray]
    log_q: np.ndarray
    log_p: np.ndarray

    @property
    def n(self) -> int:
        return self.log_q.shape[0]


def draw_eps(head: VariationalHead, rng: np.random.Generator, n: int = 1) -> dict[str, np.ndarray]:
    return {name: rng.standard_normal((n,) + head.mu[name].shape) for name in HEAD_PARAMS}


def weights_from_eps(head: VariationalHead, eps: dict[str, np.ndarray]) -> WeightSample:
    sig = head.sigma()
    sp2 = head.prior_sigma ** 2
    n = eps["w1"].shape[0]
    weights = {}
    log_q = np.zeros(n)
    log_p = np.zeros(n)
    for name in HEAD_PARAMS:
        e = eps[name]
        # the floor only guards the log density; draws use the raw scale
        w = head.mu[name] + softplus(head.rho[name]) * e
        weights[name] = w
        axes = tuple(range(1, w.ndim))
        log_q += np.sum(-np.log(sig[name]) - _HALF_LOG_2PI - 0.5 * e * e, axis=axes)
        log_p += np.sum(-math.log(head.prior_sigma) - _HALF_LOG_2PI - 0.5 * w * w / sp2,
                        axis=axes)
    return WeightSample(weights, eps, np.clip(log_q, -LOGQ_CLAMP, LOGQ_CLAMP), log_p)


def sample_weights(head: VariationalHead, rng: np.random.Generator, n: int = 1) -> WeightSample:
    """Reparameterized draws ``w = mu + softplus(rho) * eps``."""
    return weights_from_eps(head, draw_eps(head, rng, n))


def _as_features(features, dim):
    x = np.asarray(features, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None]
    if x.ndim != 2 or x.shape[1] != dim:
        raise ShapeError(f"features of shape {np.shape(features)} do not match head dim {dim}")
    return x, single


def _logits(x, weights):
    pre = np.matmul(x, weights["w1"]) + weights["b1"][:, None, :]
    hidden = np.maximum(pre, 0.0)
    z = np.matmul(hidden, weights["w2"][:, :, None])[:, :, 0] + weights["b2"]
    return z, pre, hidden


def forward(features, sample: WeightSample) -> np.ndarray:
    """Probabilities, shape ``(J, B)`` (or ``(J,)`` for one feature vector)."""
    dim = sample.weights["w1"].shape[1]
    x, single = _as_features(features, dim)
    p = expit(_logits(x, sample.weights)[0])
    return p[:, 0] if single else p


@dataclass
class ElboResult:
    loss: float
    grad_mu: dict[str, np.ndarray]
    grad_rho: dict[str, np.ndarray]
    grad_features: np.ndarray
    kl_term: float            # weighted MC estimate of E[log q - log p]
    nll: np.ndarray           # per-instance NLL averaged over the J samples
    probs: np.ndarray = field(repr=False, default=None)


def elbo_loss(features, labels, head: VariationalHead, rng: np.random.Generator | None = None,
              n_samples: int | None = None, dataset_size: int | None = None,
              attention=None, eps: dict[str, np.ndarray] | None = None) -> ElboResult:
    """Monte-Carlo variational loss and its reparameterized gradients.

    ``loss = mean_j [ s * (log q(w_j) - log p(w_j)) - sum_i a_i log p(y_i | x_i, w_j) ]``
    with ``s = batch_size / dataset_size`` (1 when ``dataset_size`` is None) and
    attention ``a_i`` (1 when omitted). Pass ``eps`` to reuse a fixed set of
    standard-normal draws instead of sampling from ``rng``.
    """
    x, _ = _as_features(features, head.dim)
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    B = x.shape[0]
    if B == 0:
        raise ShapeError("empty batch")
    if y.shape[0] != B:
        raise ShapeError("label count does not match batch size")
    a = np.ones(B) if attention is None else np.asarray(attention, dtype=np.float64)
    if eps is None:
        eps = draw_eps(head, rng, n_samples or head.j_train)
    sample = weights_from_eps(head, eps)
    J = sample.n
    scale = 1.0 if dataset_size is None else B / dataset_size

    z, pre, hidden = _logits(x, sample.weights)
    # -log p(y | z) for a Bernoulli with logit z
    nll_jb = -(y * log_expit(z) + (1.0 - y) * log_expit(-z))
    kl_j = sample.log_q - sample.log_p
    loss = float(np.mean(scale * kl_j + nll_jb @ a))

    p = expit(z)
    dz = (p - y) * a / J                                    # (J, B)
    gw = {"w2": np.matmul(dz[:, None, :], hidden)[:, 0, :],
          "b2": dz.sum(axis=1, keepdims=True)}
    dpre = dz[:, :, None] * sample.weights["w2"][:, None, :] * (pre > 0)
    gw["w1"] = np.matmul(x.T, dpre)
    gw["b1"] = dpre.sum(axis=1)
    grad_x = np.matmul(dpre, sample.weights["w1"].transpose(0, 2, 1)).sum(axis=0)

    sig = head.sigma()
    grad_mu, grad_rho = {}, {}
    sp2 = head.prior_sigma ** 2
    for name in HEAD_PARAMS:
        # -log p(w) contributes w / prior_sigma^2 per draw
        g = gw[name] + (scale / J) * sample.weights[name] / sp2
        dsig = expit(head.rho[name])
        # log q at fixed eps is -log(floored sigma) + const per weight
        dlogsig = np.where(softplus(head.rho[name]) > SIGMA_FLOOR, dsig / sig[name], 0.0)
        grad_mu[name] = g.sum(axis=0)
        grad_rho[name] = (g * eps[name]).sum(axis=0) * dsig - scale * dlogsig
    return ElboResult(loss, grad_mu, grad_rho, grad_x, float(scale * kl_j.mean()),
                      nll_jb.mean(axis=0), p)


def kl_closed_form(head: VariationalHead) -> float:
    """Exact ``KL(q || p)`` summed over every weight."""
    s0 = head.prior_sigma
    total = 0.0
    for name, sig in head.sigma().items():
        mu = head.mu[name]
        total += float(np.sum(np.log(s0 / sig) + (sig ** 2 + mu ** 2) / (2 * s0 ** 2) - 0.5))
    return total


def mc_kl(head: VariationalHead, rng: np.random.Generator, n_samples: int,
          chunk: int = 1000) -> float:
    """Monte-Carlo estimate of ``E_q[log q(w) - log p(w)]``."""
    total, done = 0.0, 0
    while done < n_samples:
        n = min(chunk, n_samples - done)
        s = sample_weights(head, rng, n)
        total += float(np.sum(s.log_q - s.log_p))
        done += n
    return total / n_samples


@dataclass
class InstancePrediction:
    mean: float
    confidence: float
    samples: np.ndarray


def confidence_from_samples(samples, k: float, axis: int = 0):
    """``(mean, (1 - population variance) ** k)`` along ``axis``."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.shape[axis] < 2:
        raise ConfigError("need at least 2 Monte-Carlo samples for a variance")
    return samples.mean(axis=axis), (1.0 - samples.var(axis=axis)) ** k


def predict_mc_batch(features, head: VariationalHead, rng: np.random.Generator,
                     n_samples: int | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Mean prediction, confidence and raw ``(J, B)`` samples for a batch."""
    J = head.j_eval if n_samples is None else n_samples
    if J < 2:
        raise ConfigError("predict_mc needs J >= 2")
    x, _ = _as_features(features, head.dim)
    probs = forward(x, sample_weights(head, rng, J))
    mean, conf = confidence_from_samples(probs, head.k)
    return mean, conf, probs


def predict_mc(feature, head: VariationalHead, rng: np.random.Generator,
               n_samples: int | None = None) -> InstancePrediction:
    mean, conf, probs = predict_mc_batch(np.asarray(feature)[None], head, rng, n_samples)
    return InstancePrediction(float(mean[0]), float(conf[0]), probs[:, 0])
