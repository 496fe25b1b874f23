"""One training epoch of the disambiguation loop."""
from dataclasses import dataclass, field

import numpy as np

from .. import numkit
from ..errors import ConfigurationError, DivergenceError
from ..pseudo_label import PseudoLabelState, update_pseudo_targets
from .gmm import bank_entropies, divide_samples, fit_gmm2
from .losses import augment, batch_contrastive_loss, classification_loss
from .memory import EmbeddingQueue, MemoryBank, PrototypeSet, bank_row_update, update_prototypes_batch
from .model import TargetModel, init_target_model, query_backward, query_forward


@dataclass
class GcldHyper:
    epochs: int = 30
    batch_size: int = 64
    lr: float = 0.05
    momentum: float = 0.9
    beta: float = 0.01
    tau: float = 0.07
    gamma: float = 0.99
    delta: float = 0.9
    sigma: float = 0.5
    phi: float = 0.9
    queue_size: int = 512
    key_momentum: float = 0.999
    aug_noise: float = 0.1
    aug_drop: float = 0.1
    bank_temperature: float = 0.07
    use_gcld: bool = True

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigurationError("epochs and batch_size must be >= 1")
        if self.tau <= 0 or self.bank_temperature <= 0:
            raise ConfigurationError("tau and bank_temperature must be positive")
        for name in ("gamma", "delta", "sigma", "phi", "key_momentum", "aug_drop"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1]")


@dataclass
class GcldState:
    model: TargetModel
    labels: PseudoLabelState
    bank: MemoryBank
    protos: PrototypeSet
    queue: EmbeddingQueue
    opt: numkit.OptimizerState
    step: int = 0


def init_state(dim: int, initial_labels, hyper: GcldHyper, rng: np.random.Generator,
               hidden=64, embed_dim=128) -> GcldState:
    n, n_c = np.shape(initial_labels)
    model = init_target_model(dim, n_c, rng, hidden, embed_dim, hyper.key_momentum)
    return GcldState(
        model=model,
        labels=PseudoLabelState.from_labels(initial_labels),
        bank=MemoryBank.random(n, n_c, rng, hyper.delta),
        protos=PrototypeSet.random(n_c, embed_dim, rng, hyper.gamma),
        queue=EmbeddingQueue(hyper.queue_size, embed_dim),
        opt=numkit.init_optimizer(model.query_params(), hyper.momentum, hyper.lr),
    )


@dataclass
class EpochStats:
    epoch: int
    lr_end: float
    loss_cls: float
    loss_cont: float
    n_w1: int = 0
    n_w0: int = 0
    gmm_means: tuple = ()
    gmm_vars: tuple = ()
    gmm_weights: tuple = ()
    gmm_degenerate: bool = False
    extra: dict = field(default_factory=dict)


def batches_per_epoch(n: int, batch_size: int) -> int:
    return -(-n // batch_size)


def train_step(gs: GcldState, x, idx, hyper: GcldHyper, rng: np.random.Generator, lr: float):
    """One minibatch: losses, backprop through the query branch, SGD, key EMA,
    then prototype, memory-bank and queue maintenance. Returns the two losses."""
    model = gs.model
    xq = augment(x, rng, hyper.aug_noise, hyper.aug_drop)
    xk = augment(x, rng, hyper.aug_noise, hyper.aug_drop) if hyper.use_gcld else None
    qp = query_forward(model, xq)
    loss_cls, g_logits, probs = classification_loss(gs.labels.current[idx], qp.logits)
    pred = np.argmax(probs, axis=1)

    loss_cont, g_q = 0.0, None
    if hyper.use_gcld:
        k = model.keys(xk)
        queue_k, queue_y = gs.queue.arrays()
        loss_cont, g_q = batch_contrastive_loss(qp.q, pred, k, pred, queue_k, queue_y, hyper.tau)
        g_q = hyper.beta * g_q
    total = loss_cls + hyper.beta * loss_cont
    if not np.isfinite(total):
        raise DivergenceError(f"target loss became {total}")
    grads = query_backward(model, qp, g_logits, g_q)
    numkit.sgd_step(model.query_params(), grads, gs.opt, lr)
    gs.step += 1

    if hyper.use_gcld:
        model.momentum_update()
        update_prototypes_batch(gs.protos, qp.q, pred)
        bank_row_update(gs.bank, idx, qp.q, gs.protos)
        gs.queue.push(k, pred)
    return loss_cls, loss_cont


def train_epoch(gs: GcldState, features, hyper: GcldHyper, rng: np.random.Generator, epoch: int,
                before_batch=None) -> EpochStats:
    """Run one pass over the target features, then (with GCLD) refit the
    entropy GMM and update the pseudo-labels.

    ``before_batch(epoch, batch_index)`` is called ahead of every minibatch;
    the federation uses it to run communication events.
    """
    n = len(features)
    n_batches = batches_per_epoch(n, hyper.batch_size)
    total_steps = hyper.epochs * n_batches
    order = rng.permutation(n)
    cls_sum = cont_sum = 0.0
    lr = hyper.lr
    for b in range(n_batches):
        if before_batch is not None:
            before_batch(epoch, b)
        idx = order[b * hyper.batch_size:(b + 1) * hyper.batch_size]
        lr = numkit.cosine_lr(min(gs.step, total_steps), total_steps, hyper.lr)
        l_cls, l_cont = train_step(gs, features[idx], idx, hyper, rng, lr)
        cls_sum += l_cls * len(idx)
        cont_sum += l_cont * len(idx)

    stats = EpochStats(epoch, lr, cls_sum / n, cont_sum / n)
    if hyper.use_gcld:
        fit = fit_gmm2(bank_entropies(gs.bank, hyper.bank_temperature))
        in_w1 = divide_samples(fit, hyper.sigma)
        update_pseudo_targets(gs.labels, in_w1, gs.bank.rows, hyper.phi)
        stats.n_w1 = int(in_w1.sum())
        stats.n_w0 = n - stats.n_w1
        stats.gmm_means = tuple(fit.means.tolist())
        stats.gmm_vars = tuple(fit.variances.tolist())
        stats.gmm_weights = tuple(fit.weights.tolist())
        stats.gmm_degenerate = fit.degenerate
        stats.extra["in_w1"] = in_w1
    return stats
