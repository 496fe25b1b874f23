"""Two-component 1-D Gaussian mixture fitted by EM, and the W1/W0 division."""
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .. import numkit
from ..errors import ConfigurationError

W1, W0 = 1, 0


def self_entropy(row) -> float:
    """Entropy (nats) of a probability row; ``0 log 0 = 0``."""
    return float(numkit.entropy(row))


def bank_entropies(bank, temperature=1.0) -> np.ndarray:
    """Per-sample self-entropy of the softmax-normalised memory bank."""
    return numkit.entropy(bank.probabilities(temperature), axis=1)


@dataclass
class GmmFit:
    weights: np.ndarray  # [2], ordered so means[0] <= means[1]
    means: np.ndarray
    variances: np.ndarray
    posteriors: np.ndarray  # responsibility of the low-mean component, per sample
    log_likelihoods: list = field(default_factory=list)
    degenerate: bool = False

    @property
    def n_iter(self) -> int:
        return max(len(self.log_likelihoods) - 1, 0)


def _log_joint(x, weights, means, variances):
    return (np.log(weights)[None, :]
            - 0.5 * np.log(2 * np.pi * variances)[None, :]
            - 0.5 * (x[:, None] - means[None, :]) ** 2 / variances[None, :])


def fit_gmm2(values, tol=1e-6, max_iter=100) -> GmmFit:
    """EM for a two-component mixture on ``values``.

    Initialised deterministically at the 25th/75th percentiles. Variances
    are clamped below at ``1e-6 * var(values)``; clamping solves the
    constrained M-step exactly, so the log-likelihood still never drops.
    ``log_likelihoods`` records the value before the first and after every
    M-step. Identical inputs return a ``degenerate`` fit with both means
    equal and all posteriors 0.5.
    """
    x = np.asarray(values, dtype=float).ravel()
    if len(x) < 4:
        raise ConfigurationError("fit_gmm2 needs at least 4 values")
    if not np.all(np.isfinite(x)):
        raise ConfigurationError("fit_gmm2 needs finite values")
    n = len(x)
    spread = x.var()
    if spread <= 1e-12 * max(1.0, float(np.mean(x * x))):
        mu = float(x.mean())
        return GmmFit(np.array([0.5, 0.5]), np.array([mu, mu]), np.array([spread, spread]),
                      np.full(n, 0.5), [], degenerate=True)

    floor = 1e-6 * spread
    means = np.percentile(x, [25, 75]).astype(float)
    if means[0] == means[1]:
        means = np.array([x.min(), x.max()])
    variances = np.full(2, spread)
    weights = np.array([0.5, 0.5])
    joint = _log_joint(x, weights, means, variances)
    history = [float(logsumexp(joint, axis=1).sum())]
    for _ in range(max_iter):
        resp = np.exp(joint - logsumexp(joint, axis=1, keepdims=True))
        nk = resp.sum(axis=0) + 1e-300
        new_w = np.clip(nk / n, 1e-300, None)
        new_m = (resp * x[:, None]).sum(axis=0) / nk
        new_v = np.maximum((resp * (x[:, None] - new_m) ** 2).sum(axis=0) / nk, floor)
        new_joint = _log_joint(x, new_w, new_m, new_v)
        ll = float(logsumexp(new_joint, axis=1).sum())
        if ll < history[-1]:
            break  # at a fixed point only rounding can lower it; keep the previous step
        weights, means, variances, joint = new_w, new_m, new_v, new_joint
        history.append(ll)
        if history[-1] - history[-2] < tol:
            break

    post = np.exp(joint - logsumexp(joint, axis=1, keepdims=True))
    order = np.argsort(means, kind="stable")
    return GmmFit(weights[order], means[order], variances[order], post[:, order[0]], history)


def divide_samples(fit: GmmFit, sigma: float) -> np.ndarray:
    """Boolean mask of W1 (likely shared class): posterior of the low-entropy component ``>= sigma``."""
    if not 0.0 <= sigma <= 1.0:
        raise ConfigurationError("sigma must lie in [0, 1]")
    return fit.posteriors >= sigma
