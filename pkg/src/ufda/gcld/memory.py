"""Per-sample memory bank, class prototypes and the key-embedding queue."""
from collections import deque
from dataclasses import dataclass

import numpy as np

from .. import numkit
from ..errors import ConfigurationError


@dataclass
class MemoryBank:
    """Class-similarity rows ``U`` (one per target sample), mixed on every write."""
    rows: np.ndarray  # [N_T, n_C]
    delta: float = 0.9

    def __post_init__(self):
        if not 0.0 <= self.delta <= 1.0:
            raise ConfigurationError("delta must lie in [0, 1]")

    @classmethod
    def random(cls, n: int, n_classes: int, rng: np.random.Generator, delta=0.9) -> "MemoryBank":
        return cls(numkit.l2_normalize(rng.standard_normal((n, n_classes))), delta)

    def probabilities(self, temperature=1.0) -> np.ndarray:
        """Rows mapped onto the simplex by a softmax at ``temperature``."""
        if temperature <= 0:
            raise ConfigurationError("temperature must be positive")
        return numkit.softmax(self.rows / temperature)


def bank_row_update(bank: MemoryBank, index, q, protos: "PrototypeSet") -> MemoryBank:
    """``row <- delta * (q . mu_c)_c + (1 - delta) * row`` for each sample in ``index``.

    ``index`` and ``q`` may be a single sample or aligned batches.
    """
    q = np.atleast_2d(q)
    index = np.atleast_1d(index)
    if q.shape[1] != protos.vectors.shape[1]:
        raise ConfigurationError("embedding and prototype dimensions differ")
    candidate = q @ protos.vectors.T
    bank.rows[index] = bank.delta * candidate + (1.0 - bank.delta) * bank.rows[index]
    return bank


@dataclass
class PrototypeSet:
    vectors: np.ndarray  # [n_C, embed_dim], unit rows
    gamma: float = 0.99

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigurationError("gamma must lie in [0, 1]")

    @classmethod
    def random(cls, n_classes: int, dim: int, rng: np.random.Generator, gamma=0.99) -> "PrototypeSet":
        return cls(numkit.l2_normalize(rng.standard_normal((n_classes, dim))), gamma)


def update_prototypes(protos: PrototypeSet, q, f_out) -> PrototypeSet:
    """Move the prototype of ``argmax f_out`` toward ``q`` and renormalise it."""
    c = int(np.argmax(f_out))
    protos.vectors[c] = numkit.l2_normalize(protos.gamma * protos.vectors[c] + (1.0 - protos.gamma) * q)
    return protos


def update_prototypes_batch(protos: PrototypeSet, q, labels) -> PrototypeSet:
    """Sequential per-sample updates in batch order; ``labels`` are the classifier argmaxes."""
    vecs, gamma = protos.vectors, protos.gamma
    for qi, c in zip(q, labels):
        v = gamma * vecs[c] + (1.0 - gamma) * qi
        vecs[c] = v / np.sqrt(v @ v)
    return protos


class EmbeddingQueue:
    """FIFO of ``(key embedding, predicted label)`` pairs holding at most ``capacity`` items."""

    def __init__(self, capacity: int, dim: int):
        if capacity < 0:
            raise ConfigurationError("queue capacity must be non-negative")
        self.capacity = capacity
        self.dim = dim
        self._items = deque(maxlen=capacity)

    def __len__(self):
        return len(self._items)

    def push(self, keys, labels):
        keys = np.atleast_2d(keys)
        for k, y in zip(keys, np.atleast_1d(labels)):
            if self.capacity:
                self._items.append((np.array(k, dtype=float), int(y)))

    def items(self) -> list:
        """Oldest first."""
        return list(self._items)

    def arrays(self):
        if not self._items:
            return np.zeros((0, self.dim)), np.zeros(0, dtype=int)
        keys, labels = zip(*self._items)
        return np.array(keys), np.array(labels, dtype=int)
