"""Simulated source clients behind a black-box prediction API.

A client owns its labelled data and its model. The only things that leave
it are :class:`QueryResponse` records and its label-set descriptor; the
line-delimited JSON form of the messages (``to_line`` / ``from_line``) is
the wire contract an out-of-process client must honour.
"""
import json
from dataclasses import dataclass, field

import numpy as np

from . import numkit
from .errors import ConfigurationError, DivergenceError, ProtocolError
from .scenario import DomainDataset

MODES = ("onehot", "soft")
SCHEMA_VERSION = 1


@dataclass
class SourceModel:
    """One-hidden-layer encoder followed by a linear head over the local label set."""
    net: numkit.Mlp
    label_set: tuple
    steps_done: int = 0
    opt: numkit.OptimizerState = None

    @property
    def n_local(self) -> int:
        return len(self.label_set)

    def logits(self, x):
        return numkit.forward(self.net, x)[0]


def init_source_model(label_set, dim: int, hidden: int, rng: np.random.Generator,
                      momentum=0.9, lr=0.05) -> SourceModel:
    label_set = tuple(int(c) for c in label_set)
    if not label_set:
        raise ConfigurationError("a source client needs a non-empty label set")
    net = numkit.init_mlp([dim, hidden, len(label_set)], rng)
    return SourceModel(net, label_set, 0, numkit.init_optimizer(net.params(), momentum, lr))


def local_targets(model: SourceModel, labels) -> np.ndarray:
    pos = {c: i for i, c in enumerate(model.label_set)}
    try:
        return np.array([pos[int(y)] for y in labels], dtype=int)
    except KeyError as exc:
        raise ConfigurationError(f"label {exc.args[0]} is not in this client's label set") from None


def batch_loss(model: SourceModel, x, local_y):
    """Mean cross-entropy of ``model`` on a labelled batch."""
    probs = numkit.softmax(model.logits(x))
    return float(np.mean(numkit.cross_entropy(numkit.onehot(local_y, model.n_local), probs)))


def train_local(model: SourceModel, dataset: DomainDataset, steps: int, rng: np.random.Generator,
                lr_schedule=None, batch_size=32) -> SourceModel:
    """Advance ``model`` by ``steps`` minibatch SGD steps of cross-entropy on ``dataset``.

    ``lr_schedule`` maps the client's global step count to a learning rate;
    by default the optimizer's base rate is used throughout.
    """
    if steps < 0:
        raise ConfigurationError("steps must be non-negative")
    if dataset.label_set != model.label_set:
        raise ConfigurationError("dataset does not belong to this client")
    y = local_targets(model, dataset.labels)
    x = dataset.features
    params = model.net.params()
    for _ in range(steps):
        idx = rng.choice(len(x), size=min(batch_size, len(x)), replace=False)
        logits, cache = numkit.forward(model.net, x[idx])
        probs = numkit.softmax(logits)
        loss = np.mean(numkit.cross_entropy(numkit.onehot(y[idx], model.n_local), probs))
        if not np.isfinite(loss):
            raise DivergenceError(f"source loss became {loss}")
        grad_logits = (probs - numkit.onehot(y[idx], model.n_local)) / len(idx)
        grads, _ = numkit.backward(model.net, cache, grad_logits)
        lr = model.opt.lr if lr_schedule is None else lr_schedule(model.steps_done)
        numkit.sgd_step(params, grads, model.opt, lr)
        model.steps_done += 1
    return model


@dataclass
class QueryRequest:
    client_id: int
    mode: str
    batch: np.ndarray

    def to_line(self) -> str:
        return json.dumps({"type": "query", "v": SCHEMA_VERSION, "client_id": self.client_id,
                           "mode": self.mode, "batch": np.asarray(self.batch).tolist()},
                          separators=(",", ":"))

    @classmethod
    def from_line(cls, line: str) -> "QueryRequest":
        rec = _decode(line, "query")
        return cls(int(rec["client_id"]), rec["mode"], np.array(rec["batch"], dtype=float))


@dataclass
class QueryResponse:
    client_id: int
    mode: str
    label_set: tuple
    labels: np.ndarray = None  # local indices, onehot mode
    probs: np.ndarray = None  # local ProbVectors, soft mode
    error: str = None

    def __len__(self):
        payload = self.labels if self.mode == "onehot" else self.probs
        return 0 if payload is None else len(payload)

    def raise_for_error(self):
        if self.error is not None:
            raise ProtocolError(f"client {self.client_id}: {self.error}")
        return self

    def to_line(self) -> str:
        rec = {"type": "response", "v": SCHEMA_VERSION, "client_id": self.client_id,
               "mode": self.mode, "label_set": list(self.label_set)}
        if self.error is not None:
            rec["error"] = self.error
        elif self.mode == "onehot":
            rec["labels"] = np.asarray(self.labels).tolist()
        else:
            rec["probs"] = np.asarray(self.probs).tolist()
        return json.dumps(rec, separators=(",", ":"))

    @classmethod
    def from_line(cls, line: str) -> "QueryResponse":
        rec = _decode(line, "response")
        out = cls(int(rec["client_id"]), rec["mode"], tuple(rec["label_set"]), error=rec.get("error"))
        if "labels" in rec:
            out.labels = np.array(rec["labels"], dtype=int)
        if "probs" in rec:
            out.probs = np.array(rec["probs"], dtype=float)
        return out


def _decode(line: str, kind: str) -> dict:
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"undecodable message: {exc}") from None
    if rec.get("type") != kind or rec.get("v") != SCHEMA_VERSION:
        raise ProtocolError(f"expected a v{SCHEMA_VERSION} {kind} record")
    if rec.get("mode") not in MODES:
        raise ProtocolError(f"unknown mode {rec.get('mode')!r}")
    return rec


def predict(model: SourceModel, request: QueryRequest, client_id=None) -> QueryResponse:
    """Answer a query. Problems come back as an error response, never as an exception."""
    cid = request.client_id if client_id is None else client_id
    if request.mode not in MODES:
        return QueryResponse(cid, request.mode, model.label_set, error=f"unknown mode {request.mode!r}")
    batch = np.asarray(request.batch, dtype=float)
    if batch.ndim != 2 or batch.shape[1] != model.net.input_dim:
        return QueryResponse(cid, request.mode, model.label_set,
                             error=f"expected [B, {model.net.input_dim}] batch, got {batch.shape}")
    logits = model.logits(batch)
    if request.mode == "onehot":
        # np.argmax returns the first maximum, i.e. the lowest local index
        return QueryResponse(cid, "onehot", model.label_set, labels=np.argmax(logits, axis=1))
    return QueryResponse(cid, "soft", model.label_set, probs=numkit.softmax(logits))


class SourceClient:
    """A source party: private data, private model, public query endpoint."""

    def __init__(self, client_id: int, dataset: DomainDataset, rng: np.random.Generator,
                 hidden=32, lr=0.05, momentum=0.9, batch_size=32):
        self.client_id = client_id
        self._data = dataset
        self._rng = rng
        self._batch_size = batch_size
        self._model = init_source_model(dataset.label_set, dataset.dim, hidden, rng, momentum, lr)

    @property
    def label_set(self) -> tuple:
        return self._model.label_set

    def advance(self, steps: int):
        train_local(self._model, self._data, steps, self._rng, batch_size=self._batch_size)

    def handle(self, request: QueryRequest) -> QueryResponse:
        return predict(self._model, request, self.client_id)

    @property
    def steps_done(self) -> int:
        return self._model.steps_done


@dataclass
class InProcessTransport:
    """Routes queries to local :class:`SourceClient` objects.

    With ``wire=True`` every message goes through its line encoding, which
    exercises the same path an out-of-process client would.
    """
    clients: list
    wire: bool = False
    log: list = field(default_factory=list)

    def label_sets(self) -> list:
        return [c.label_set for c in self.clients]

    def query(self, client_id: int, batch, mode="onehot") -> QueryResponse:
        request = QueryRequest(client_id, mode, np.asarray(batch, dtype=float))
        client = self.clients[client_id]
        if self.wire:
            line = request.to_line()
            self.log.append(line)
            reply = client.handle(QueryRequest.from_line(line)).to_line()
            self.log.append(reply)
            response = QueryResponse.from_line(reply)
        else:
            response = client.handle(request)
        response.raise_for_error()
        if len(response) != len(request.batch):
            raise ProtocolError("response length differs from request length")
        return response

    def advance(self, steps: int):
        for client in self.clients:
            client.advance(steps)
