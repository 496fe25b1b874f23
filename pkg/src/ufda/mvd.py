"""Cluster-level mutual voting between source APIs and the trained target model.

For union class ``i`` and every source ``m`` owning it, the overlap
``|B_S[m][i] ∩ B_T[i]|`` is normalised by the source cluster (source view)
and by the target cluster (target view); each view keeps its best source and
the mutual score is their mean. Empty clusters score 0.
"""
import csv
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ProtocolError
from .scenario import LabelSpace

UNKNOWN = -1
VIEWS = ("both", "source", "target")


@dataclass
class ClusterTable:
    """Predictions as cluster membership.

    ``source_pred[m, j]`` is the union index source ``m`` assigned to sample
    ``j``; ``target_pred[j]`` likewise for the target model. ``owned[m, i]``
    marks ``i ∈ C_{s_m}``.
    """
    source_pred: np.ndarray  # [M, N]
    target_pred: np.ndarray  # [N]
    owned: np.ndarray  # [M, n_C] bool

    @property
    def n_classes(self) -> int:
        return self.owned.shape[1]

    @property
    def n_sources(self) -> int:
        return self.owned.shape[0]

    def source_cluster(self, m: int, i: int) -> frozenset:
        if not self.owned[m, i]:
            return frozenset()
        return frozenset(np.flatnonzero(self.source_pred[m] == i).tolist())

    def target_cluster(self, i: int) -> frozenset:
        return frozenset(np.flatnonzero(self.target_pred == i).tolist())

    def sizes(self):
        """``(source sizes [M, n_C], target sizes [n_C], overlaps [M, n_C])``, all integer."""
        n_c = self.n_classes
        src = np.stack([np.bincount(p, minlength=n_c) for p in self.source_pred]) * self.owned
        tgt = np.bincount(self.target_pred, minlength=n_c)
        ov = np.zeros_like(src)
        for m, p in enumerate(self.source_pred):
            agree = p == self.target_pred
            ov[m] = np.bincount(p[agree], minlength=n_c)
        return src, tgt, ov * self.owned


def build_clusters(source_votes, target_pred, space: LabelSpace) -> ClusterTable:
    """``source_votes[m]`` holds local indices from source ``m``; ``target_pred`` holds union indices."""
    if len(source_votes) != space.n_sources:
        raise ProtocolError(f"expected {space.n_sources} sources, got {len(source_votes)}")
    target_pred = np.asarray(target_pred, dtype=int)
    n = len(target_pred)
    rows = []
    for m, votes in enumerate(source_votes):
        votes = np.asarray(votes, dtype=int)
        if len(votes) != n:
            raise ProtocolError(f"source {m} labelled {len(votes)} samples, target {n}")
        to_union = space.local_to_union(m)
        if votes.size and (votes.min() < 0 or votes.max() >= len(to_union)):
            raise ProtocolError(f"source {m} voted outside its label set")
        rows.append(to_union[votes])
    if target_pred.size and (target_pred.min() < 0 or target_pred.max() >= space.n_classes):
        raise ProtocolError("target prediction outside Ĉ_T")
    source_pred = np.array(rows, dtype=int).reshape(space.n_sources, n)
    return ClusterTable(source_pred, target_pred, space.membership())


def _ratio(num, den):
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


def per_source_scores(table: ClusterTable):
    """``(d_s[m, i], d_t[m, i])`` before the max over sources; zero where ``i ∉ C_{s_m}``."""
    src, tgt, ov = table.sizes()
    d_s = _ratio(ov, src)
    d_t = _ratio(ov, np.broadcast_to(tgt, ov.shape)) * table.owned
    return d_s, d_t


def voting_scores(table: ClusterTable):
    """Per-class ``(d_s, d_t)``: the best source for each view."""
    d_s, d_t = per_source_scores(table)
    return d_s.max(axis=0), d_t.max(axis=0)


def mutual_scores(d_s, d_t) -> np.ndarray:
    return (np.asarray(d_s, dtype=float) + np.asarray(d_t, dtype=float)) / 2.0


def decide_shared(scores, lam: float) -> np.ndarray:
    """``True`` where the class is kept as shared (score at or above ``lam``)."""
    if not 0.0 <= lam <= 1.0:
        raise ConfigurationError("lambda must lie in [0, 1]")
    return np.asarray(scores) >= lam


def final_predict(target_pred, shared, space: LabelSpace) -> np.ndarray:
    """Global class ids, with samples of rejected classes mapped to ``UNKNOWN``."""
    target_pred = np.asarray(target_pred, dtype=int)
    ids = np.asarray(space.union)[target_pred]
    return np.where(np.asarray(shared)[target_pred], ids, UNKNOWN)


@dataclass
class VotingTable:
    classes: tuple  # global ids, Ĉ_T order
    d_s: np.ndarray
    d_t: np.ndarray
    scores: np.ndarray  # mutual score S_c
    shared: np.ndarray
    view: str = "both"
    lam: float = 0.4

    def rows(self):
        for c, ds, dt, s, sh in zip(self.classes, self.d_s, self.d_t, self.scores, self.shared):
            yield int(c), float(ds), float(dt), float(s), "shared" if sh else "unknown"

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["class_id", "d_s", "d_t", "S_c", "verdict"])
            for c, ds, dt, s, verdict in self.rows():
                writer.writerow([c, repr(ds), repr(dt), repr(s), verdict])

    def to_dict(self):
        return {"view": self.view, "lambda": self.lam,
                "rows": [dict(zip(("class_id", "d_s", "d_t", "S_c", "verdict"), r)) for r in self.rows()]}


def mutual_vote(table: ClusterTable, space: LabelSpace, lam=0.4, view="both") -> VotingTable:
    """Score every union class and decide shared/unknown.

    ``view`` selects which score is thresholded: the mutual mean, or one
    view alone for single-view ablations.
    """
    if view not in VIEWS:
        raise ConfigurationError(f"view must be one of {VIEWS}")
    d_s, d_t = voting_scores(table)
    scores = mutual_scores(d_s, d_t)
    decision = {"both": scores, "source": d_s, "target": d_t}[view]
    return VotingTable(space.union, d_s, d_t, scores, decide_shared(decision, lam), view, lam)
