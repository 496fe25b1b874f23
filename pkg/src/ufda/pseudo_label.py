"""Target pseudo-labels over the union label set Ĉ_T.

Rows are probability vectors indexed by position in ``space.union``.
"""
import csv
from dataclasses import dataclass

import numpy as np

from . import numkit
from .errors import ConfigurationError, InvariantError, ProtocolError
from .scenario import LabelSpace


@dataclass
class PseudoLabelState:
    current: np.ndarray  # C_pse^e, [N_T, n_C]
    previous: np.ndarray  # C_pse^{e-1}
    epoch: int = 0

    @classmethod
    def from_labels(cls, rows) -> "PseudoLabelState":
        rows = np.array(rows, dtype=float)
        return cls(rows, rows.copy(), 0)

    def check(self, atol=1e-9):
        if self.current.shape != self.previous.shape:
            raise InvariantError("pseudo-label snapshots changed shape")
        if not numkit.is_prob_vector(self.current, atol):
            raise InvariantError("pseudo-label rows left the probability simplex")
        return self

    def hard_labels(self) -> np.ndarray:
        return np.argmax(self.current, axis=1)


def _check_votes(votes, space: LabelSpace):
    if len(votes) != space.n_sources:
        raise ProtocolError(f"expected votes from {space.n_sources} sources, got {len(votes)}")
    lengths = {len(v) for v in votes}
    if len(lengths) != 1:
        raise ProtocolError("sources answered for different numbers of samples")


def generate_phl(onehot_votes, space: LabelSpace) -> np.ndarray:
    """Pseudo-hot labels: the average of every source's one-hot vote, scattered onto Ĉ_T."""
    _check_votes(onehot_votes, space)
    n = len(onehot_votes[0])
    rows = np.zeros((n, space.n_classes))
    for m, votes in enumerate(onehot_votes):
        votes = np.asarray(votes, dtype=int)
        to_union = space.local_to_union(m)
        if votes.size and (votes.min() < 0 or votes.max() >= len(to_union)):
            raise ProtocolError(f"source {m} voted outside its label set")
        np.add.at(rows, (np.arange(n), to_union[votes]), 1.0)
    return rows / space.n_sources


def generate_psl(soft_outputs, space: LabelSpace) -> np.ndarray:
    """Pseudo-soft labels: per-class mean of the sources that own the class, renormalised."""
    _check_votes(soft_outputs, space)
    n = len(soft_outputs[0])
    total = np.zeros((n, space.n_classes))
    for m, probs in enumerate(soft_outputs):
        probs = np.asarray(probs, dtype=float)
        to_union = space.local_to_union(m)
        if probs.shape != (n, len(to_union)):
            raise ProtocolError(f"source {m} returned probabilities of shape {probs.shape}")
        total[:, to_union] += probs
    coverage = space.membership().sum(axis=0)
    rows = total / coverage
    return rows / rows.sum(axis=1, keepdims=True)


def update_pseudo_targets(state: PseudoLabelState, in_w1, bank_rows, phi: float) -> PseudoLabelState:
    """Sharpen W1 rows toward their memory-bank argmax, smooth W0 rows toward uniform.

    ``new = phi * (phi * C^e + (1 - phi) * C^{e-1}) + (1 - phi) * z``.
    """
    if not 0.0 <= phi <= 1.0:
        raise ConfigurationError("phi must lie in [0, 1]")
    in_w1 = np.asarray(in_w1, dtype=bool)
    bank_rows = np.asarray(bank_rows, dtype=float)
    n, n_c = state.current.shape
    if in_w1.shape != (n,) or bank_rows.shape != (n, n_c):
        raise ConfigurationError("division and bank must cover every sample")
    z = np.full((n, n_c), 1.0 / n_c)
    z[in_w1] = numkit.onehot(np.argmax(bank_rows[in_w1], axis=1), n_c)
    new = phi * (phi * state.current + (1.0 - phi) * state.previous) + (1.0 - phi) * z
    state.previous = state.current
    state.current = new
    state.epoch += 1
    return state


def blend_fresh_labels(state: PseudoLabelState, fresh, phi: float) -> PseudoLabelState:
    """Merge re-queried pseudo-labels into the running state: ``row <- phi row + (1 - phi) fresh``."""
    if not 0.0 <= phi <= 1.0:
        raise ConfigurationError("phi must lie in [0, 1]")
    fresh = np.asarray(fresh, dtype=float)
    if fresh.shape != state.current.shape:
        raise ProtocolError("fresh pseudo-labels do not match the state shape")
    state.current = phi * state.current + (1.0 - phi) * fresh
    return state


def pseudo_label_accuracy(state: PseudoLabelState, truth, space: LabelSpace) -> float:
    """Share of target samples whose argmax pseudo-label equals their true class (percent)."""
    pred = np.asarray(space.union)[state.hard_labels()]
    return 100.0 * float(np.mean(pred == np.asarray(truth)))


def dump_snapshot(state: PseudoLabelState, space: LabelSpace, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sample_id"] + [f"class_{c}" for c in space.union])
        for i, row in enumerate(state.current):
            writer.writerow([i] + [repr(float(v)) for v in row])
