"""Feature-space augmentation and the two training losses with analytic gradients."""
import numpy as np
from scipy.special import logsumexp

from .. import numkit
from ..errors import ConfigurationError


def augment(x, rng: np.random.Generator, noise_std=0.1, drop_prob=0.1):
    """Gaussian jitter followed by coordinate dropout (dropped coordinates are zeroed)."""
    x = np.asarray(x, dtype=float)
    out = x + noise_std * rng.standard_normal(x.shape) if noise_std else x.copy()
    if drop_prob:
        out = out * (rng.random(x.shape) >= drop_prob)
    return out


def contrastive_loss(q, pool, pool_labels, q_label, tau=0.07):
    """Supervised contrastive loss of one query against ``pool`` (which must not contain ``q``).

    Positives are pool members sharing ``q_label``. Returns ``(loss, dloss/dq)``;
    with no positives the sample contributes zero loss and zero gradient.
    """
    if tau <= 0:
        raise ConfigurationError("tau must be positive")
    q = np.asarray(q, dtype=float)
    pool = np.atleast_2d(np.asarray(pool, dtype=float))
    if len(pool) == 0:
        raise ConfigurationError("contrastive pool is empty")
    pos = np.asarray(pool_labels) == q_label
    if not pos.any():
        return 0.0, np.zeros_like(q)
    s = pool @ q / tau
    lse = logsumexp(s)
    loss = lse - s[pos].mean()
    weights = np.exp(s - lse) - pos / pos.sum()
    return float(loss), weights @ pool / tau


def batch_contrastive_loss(q, q_labels, keys, key_labels, queue=None, queue_labels=None, tau=0.07):
    """Mean contrastive loss over a batch of queries.

    The pool of anchor ``i`` is every other query, every key and the whole
    queue. Keys and queue are constants; gradients flow into ``q`` both as
    anchors and as pool members. Returns ``(loss, dloss/dq)``.
    """
    if tau <= 0:
        raise ConfigurationError("tau must be positive")
    q = np.asarray(q, dtype=float)
    b = len(q)
    parts = [q, np.asarray(keys, dtype=float)]
    labels = [np.asarray(q_labels), np.asarray(key_labels)]
    if queue is not None and len(queue):
        parts.append(np.asarray(queue, dtype=float))
        labels.append(np.asarray(queue_labels))
    pool = np.concatenate(parts)
    pool_labels = np.concatenate(labels)
    if len(pool) < 2:
        raise ConfigurationError("contrastive pool has no member besides the anchor")

    s = q @ pool.T / tau
    s[np.arange(b), np.arange(b)] = -np.inf
    pos = pool_labels[None, :] == np.asarray(q_labels)[:, None]
    pos[np.arange(b), np.arange(b)] = False
    n_pos = pos.sum(axis=1)
    has = n_pos > 0
    lse = logsumexp(s, axis=1)
    pos_mean = np.where(pos, s, 0.0).sum(axis=1) / np.maximum(n_pos, 1)
    per_anchor = np.where(has, lse - pos_mean, 0.0)
    loss = per_anchor.sum() / b

    g = np.exp(s - lse[:, None]) - pos / np.maximum(n_pos, 1)[:, None]
    g[~has] = 0.0
    g /= b * tau
    grad = g @ pool + g[:, :b].T @ q
    return float(loss), grad


def classification_loss(targets, logits):
    """Mean soft-target cross-entropy of ``softmax(logits)``; returns ``(loss, dloss/dlogits, probs)``.

    The gradient is the exact ``(p - s) / B`` for rows of ``targets`` that sum to one.
    """
    probs = numkit.softmax(logits)
    b = len(probs)
    loss = float(numkit.cross_entropy(targets, probs).sum() / b)
    return loss, (probs * np.sum(targets, axis=1, keepdims=True) - targets) / b, probs
