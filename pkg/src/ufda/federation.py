"""The federated protocol: round scheduling, black-box querying, target
training, mutual voting and evaluation.

The target side talks to sources only through a transport exposing
``label_sets()``, ``query(client_id, batch, mode)`` and ``advance(steps)``
(the round clock); it never sees source data or weights.
"""
import csv
import json
import logging
import time
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import gcld, mvd
from . import pseudo_label as pl
from .config import RunConfig
from .errors import ConfigurationError, InvariantError
from .scenario import LabelSpace, make_scenario, parse_umda_matrix
from .source_client import InProcessTransport, SourceClient

log = logging.getLogger(__name__)

REPORT_SCHEMA = 1


@dataclass
class RoundSchedule:
    rate: float
    epochs: int
    batches_per_epoch: int
    events: list  # (epoch, batch), chronological; may repeat when rate > batches_per_epoch

    def __len__(self):
        return len(self.events)


def schedule_rounds(r: float, epochs: int, batches_per_epoch: int) -> RoundSchedule:
    """Communication events at times ``k / r`` (in epochs), for every ``k`` with ``k / r < epochs``.

    ``r = 1`` gives one event at the start of each epoch, ``r < 1`` one
    event every ``1 / r`` epochs, ``r > 1`` gives ``r`` evenly spaced events
    per epoch, each placed at the batch where it falls.
    """
    if r <= 0:
        raise ConfigurationError("communication rate must be positive")
    if epochs < 1 or batches_per_epoch < 1:
        raise ConfigurationError("epochs and batches_per_epoch must be >= 1")
    rate = Fraction(r).limit_denominator(10 ** 6)
    events = []
    k = 0
    while True:
        t = k / rate
        if t >= epochs:
            break
        epoch = int(t)
        events.append((epoch, int((t - epoch) * batches_per_epoch)))
        k += 1
    return RoundSchedule(float(r), epochs, batches_per_epoch, events)


def query_all(transport, features, mode: str) -> list:
    """Fan a query out to every client, merging answers in client-id order."""
    out = []
    for cid in range(len(transport.label_sets())):
        resp = transport.query(cid, features, mode)
        out.append(resp.labels if mode == "onehot" else resp.probs)
    return out


def make_pseudo_labels(transport, features, space: LabelSpace, kind: str):
    """Returns ``(pseudo-label rows, per-source one-hot votes)``."""
    if kind == "phl":
        votes = query_all(transport, features, "onehot")
        return pl.generate_phl(votes, space), votes
    soft = query_all(transport, features, "soft")
    return pl.generate_psl(soft, space), [np.argmax(p, axis=1) for p in soft]


def evaluate(predictions, truth, space: LabelSpace) -> dict:
    """Mean per-class accuracy (percent) over the shared classes plus one unknown bucket."""
    predictions = np.asarray(predictions)
    truth = np.asarray(truth)
    if predictions.shape != truth.shape:
        raise ConfigurationError("predictions and truth differ in length")
    per_class, skipped = {}, []
    for c in space.shared:
        mask = truth == c
        if not mask.any():
            skipped.append(str(c))
            continue
        per_class[str(c)] = 100.0 * float(np.mean(predictions[mask] == c))
    unknown_mask = np.isin(truth, space.target_unknown)
    if unknown_mask.any():
        per_class["unknown"] = 100.0 * float(np.mean(predictions[unknown_mask] == mvd.UNKNOWN))
    else:
        skipped.append("unknown")
    for name in skipped:
        log.warning("class %s has no target samples; left out of the mean", name)
    metric = float(np.mean(list(per_class.values()))) if per_class else 0.0
    return {"metric": metric, "per_class": per_class, "skipped": skipped}


@dataclass
class ExperimentReport:
    metric: float
    per_class: dict
    skipped: list
    voting: dict
    curve: list
    config: dict
    seed: int
    label_space: dict
    communication: dict
    wall_clock: float = 0.0
    pseudo_snapshots: list = field(default_factory=list)

    def to_dict(self) -> dict:
        """Everything except wall-clock time, which would break byte-identical re-runs."""
        return {"schema_version": REPORT_SCHEMA, "metric": self.metric, "per_class": self.per_class,
                "skipped": self.skipped, "voting": self.voting, "curve": self.curve,
                "config": self.config, "seed": self.seed, "label_space": self.label_space,
                "communication": self.communication}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


@dataclass
class RunArtifacts:
    """Raw end-of-run state, kept so MVD can be re-decided without retraining."""
    space: LabelSpace
    target_pred: np.ndarray  # union indices
    source_votes: list
    truth: np.ndarray
    state: gcld.GcldState


def check_invariants(gs: gcld.GcldState):
    gs.labels.check()
    norms = np.linalg.norm(gs.protos.vectors, axis=1)
    if not np.allclose(norms, 1.0, rtol=0, atol=1e-9):
        raise InvariantError("a prototype drifted off the unit sphere")
    if len(gs.queue) > gs.queue.capacity:
        raise InvariantError("embedding queue exceeded its capacity")


def run_experiment(config: RunConfig, return_artifacts=False):
    """Full pipeline for one configuration; deterministic given ``config.seed``."""
    config.validate()
    started = time.perf_counter()
    sc, tc, fc, modes = config.scenario, config.train, config.federation, config.modes
    seq = np.random.SeedSequence(config.seed)
    scen_rng, src_seq, tgt_rng = seq.spawn(3)
    scenario = make_scenario(parse_umda_matrix(sc.umda_matrix), np.random.default_rng(scen_rng),
                             dim=sc.dim, n_per_class=sc.n_per_class, shift_strength=sc.shift_strength,
                             noise_std=sc.noise_std, anchor_distance=sc.anchor_distance,
                             overlap_policy=sc.overlap_policy)
    space = scenario.space
    clients = [SourceClient(m, ds, np.random.default_rng(s), hidden=fc.source_hidden, lr=fc.source_lr,
                            batch_size=fc.source_batch_size)
               for m, (ds, s) in enumerate(zip(scenario.sources, src_seq.spawn(space.n_sources)))]
    transport = InProcessTransport(clients)
    x_t = scenario.target.features
    rng = np.random.default_rng(tgt_rng)

    hyper = tc.hyper(modes.gcld)
    n_batches = gcld.train.batches_per_epoch(len(x_t), hyper.batch_size)
    if modes.sfda:
        schedule = RoundSchedule(0.0, hyper.epochs, n_batches, [(0, 0)])
    else:
        schedule = schedule_rounds(fc.rounds, hyper.epochs, n_batches)
    pending = Counter(schedule.events)
    pending[(0, 0)] -= 1  # the initial query below is the first event

    transport.advance(fc.source_initial_steps)
    initial, votes = make_pseudo_labels(transport, x_t, space, modes.pseudo)
    latest = {"votes": votes, "events": 1}
    gs = gcld.init_state(x_t.shape[1], initial, hyper, rng, tc.hidden, tc.embed_dim)

    def communicate(epoch, batch):
        for _ in range(pending.pop((epoch, batch), 0)):
            transport.advance(fc.source_steps_per_round)
            fresh, latest["votes"] = make_pseudo_labels(transport, x_t, space, modes.pseudo)
            pl.blend_fresh_labels(gs.labels, fresh, hyper.phi)
            latest["events"] += 1

    truth = scenario.target.evaluation_labels()
    curve, snapshots = [], []
    for epoch in range(hyper.epochs):
        stats = gcld.train_epoch(gs, x_t, hyper, rng, epoch, before_batch=communicate)
        check_invariants(gs)
        curve.append({"epoch": epoch, "lr_end": stats.lr_end, "loss_cls": stats.loss_cls,
                      "loss_cont": stats.loss_cont, "n_w1": stats.n_w1, "n_w0": stats.n_w0,
                      "gmm_means": list(stats.gmm_means), "gmm_vars": list(stats.gmm_vars),
                      "gmm_weights": list(stats.gmm_weights),
                      "pseudo_label_acc": pl.pseudo_label_accuracy(gs.labels, truth, space),
                      "source_steps": clients[0].steps_done})
        if config.dump_pseudo_labels:
            snapshots.append(gs.labels.current.copy())

    target_pred = gs.model.predict(x_t)
    voting = None
    if modes.mvd:
        table = mvd.build_clusters(latest["votes"], target_pred, space)
        vt = mvd.mutual_vote(table, space, fc.lam, modes.mvd_view)
        predictions = mvd.final_predict(target_pred, vt.shared, space)
        voting = vt.to_dict()
    else:
        predictions = np.asarray(space.union)[target_pred]
    metrics = evaluate(predictions, truth, space)

    report = ExperimentReport(
        metric=metrics["metric"], per_class=metrics["per_class"], skipped=metrics["skipped"],
        voting=voting, curve=curve, config=config.to_dict(), seed=config.seed,
        label_space=space.to_dict(),
        communication={"events": latest["events"], "scheduled": len(schedule),
                       "source_steps": clients[0].steps_done},
        wall_clock=time.perf_counter() - started, pseudo_snapshots=snapshots)
    if return_artifacts:
        return report, RunArtifacts(space, target_pred, latest["votes"], truth, gs)
    return report


def revote(artifacts: RunArtifacts, lam: float, view="both") -> dict:
    """Re-run the shared/unknown decision of a finished run at another threshold."""
    table = mvd.build_clusters(artifacts.source_votes, artifacts.target_pred, artifacts.space)
    vt = mvd.mutual_vote(table, artifacts.space, lam, view)
    return evaluate(mvd.final_predict(artifacts.target_pred, vt.shared, artifacts.space),
                    artifacts.truth, artifacts.space)


def write_report(report: ExperimentReport, out_dir) -> Path:
    """Write ``report.json`` plus CSV tables into ``out_dir``; wall-clock goes to ``timing.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json())
    with open(out / "per_class.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["class", "accuracy"])
        for name, acc in report.per_class.items():
            writer.writerow([name, repr(acc)])
    if report.voting is not None:
        with open(out / "voting.csv", "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["class_id", "d_s", "d_t", "S_c", "verdict"])
            for row in report.voting["rows"]:
                writer.writerow([row["class_id"], repr(row["d_s"]), repr(row["d_t"]), repr(row["S_c"]),
                                 row["verdict"]])
    cols = ["epoch", "lr_end", "loss_cls", "loss_cont", "n_w1", "n_w0", "pseudo_label_acc", "source_steps",
            "gmm_mean_low", "gmm_mean_high"]
    with open(out / "diagnostics.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(cols)
        for row in report.curve:
            means = row["gmm_means"] or [None, None]
            writer.writerow([row["epoch"], repr(row["lr_end"]), repr(row["loss_cls"]), repr(row["loss_cont"]),
                             row["n_w1"], row["n_w0"], repr(row["pseudo_label_acc"]), row["source_steps"],
                             "" if means[0] is None else repr(means[0]),
                             "" if means[1] is None else repr(means[1])])
    for e, rows in enumerate(report.pseudo_snapshots):
        with open(out / f"pseudo_labels_epoch{e:03d}.csv", "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            classes = report.label_space["source_sets"]
            union = sorted(set().union(*classes))
            writer.writerow(["sample_id"] + [f"class_{c}" for c in union])
            for i, row in enumerate(rows):
                writer.writerow([i] + [repr(float(v)) for v in row])
    (out / "timing.json").write_text(json.dumps({"wall_clock_s": report.wall_clock}) + "\n")
    return out
