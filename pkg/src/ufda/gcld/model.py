"""Target-side network: shared backbone, classifier, projection head and
their momentum (key) copies."""
from dataclasses import dataclass

import numpy as np

from .. import numkit
from ..errors import ConfigurationError


@dataclass
class TargetModel:
    backbone: numkit.Mlp
    head: numkit.Mlp  # 2-layer projection MLP -> embedding
    classifier: numkit.Mlp  # linear, over Ĉ_T
    key_backbone: numkit.Mlp
    key_head: numkit.Mlp
    key_momentum: float = 0.999

    def __post_init__(self):
        if not 0.0 <= self.key_momentum <= 1.0:
            raise ConfigurationError("key_momentum must lie in [0, 1]")

    @property
    def embed_dim(self) -> int:
        return self.head.output_dim

    def query_params(self) -> list:
        return self.backbone.params() + self.head.params() + self.classifier.params()

    def key_params(self) -> list:
        return self.key_backbone.params() + self.key_head.params()

    def momentum_update(self):
        """``key <- m key + (1 - m) query`` for backbone and head, in place."""
        m = self.key_momentum
        src = self.backbone.params() + self.head.params()
        for pk, pq in zip(self.key_params(), src):
            pk *= m
            pk += (1.0 - m) * pq

    def logits(self, x):
        h, _ = numkit.forward(self.backbone, x)
        return numkit.forward(self.classifier, h)[0]

    def predict(self, x) -> np.ndarray:
        """Argmax position in Ĉ_T for each row of ``x``."""
        return np.argmax(self.logits(x), axis=1)

    def keys(self, x):
        h, _ = numkit.forward(self.key_backbone, x)
        return numkit.l2_normalize(numkit.forward(self.key_head, h)[0])


def init_target_model(dim: int, n_classes: int, rng: np.random.Generator, hidden=64, embed_dim=128,
                      key_momentum=0.999) -> TargetModel:
    backbone = numkit.init_mlp([dim, hidden, hidden], rng, output_activation="relu")
    head = numkit.init_mlp([hidden, hidden, embed_dim], rng)
    classifier = numkit.init_mlp([hidden, n_classes], rng)
    return TargetModel(backbone, head, classifier, backbone.copy(), head.copy(), key_momentum)


@dataclass
class QueryPass:
    """Everything the backward pass needs from one forward pass of the query branch."""
    h: np.ndarray
    logits: np.ndarray
    z: np.ndarray  # un-normalised embedding
    q: np.ndarray  # unit embedding
    caches: tuple


def query_forward(model: TargetModel, x) -> QueryPass:
    h, cb = numkit.forward(model.backbone, x)
    logits, cf = numkit.forward(model.classifier, h)
    z, ch = numkit.forward(model.head, h)
    return QueryPass(h, logits, z, numkit.l2_normalize(z), (cb, cf, ch))


def query_backward(model: TargetModel, qp: QueryPass, grad_logits, grad_q) -> list:
    """Gradients for :meth:`TargetModel.query_params` given upstream gradients."""
    cb, cf, ch = qp.caches
    g_cls, dh = numkit.backward(model.classifier, cf, grad_logits)
    if grad_q is None:
        g_head = [np.zeros_like(p) for p in model.head.params()]
    else:
        g_head, dh_head = numkit.backward(model.head, ch, numkit.l2_normalize_backward(qp.z, grad_q))
        dh = dh + dh_head
    g_bb, _ = numkit.backward(model.backbone, cb, dh)
    return g_bb + g_head + g_cls
