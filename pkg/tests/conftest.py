import numpy as np
import pytest

from ufda import numkit
from ufda.gcld import batch_contrastive_loss, classification_loss, query_forward

KINK_MARGIN = 1e-4
# l2-normalisation curvature grows like 1/|z|^3; below this norm a 1e-5
# central difference is dominated by truncation error
MIN_EMBED_NORM = 1e-2


def central_diff(f, params, h=1e-5):
    """Central finite differences of scalar ``f()`` w.r.t. every entry of every array in ``params``."""
    out = []
    for p in params:
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = p[i]
            p[i] = old + h
            up = f()
            p[i] = old - h
            down = f()
            p[i] = old
            g[i] = (up - down) / (2 * h)
        out.append(g)
    return out


def rel_error(a, b, floor=1e-8):
    """Norm-wise relative error between two lists of arrays."""
    a = np.concatenate([np.ravel(x) for x in a])
    b = np.concatenate([np.ravel(x) for x in b])
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), floor))


def near_kink(*caches, margin=KINK_MARGIN):
    """True when any ReLU pre-activation sits within ``margin`` of zero (FD is invalid there)."""
    for cache in caches:
        for z in cache.preacts:
            if np.any(np.abs(z) < margin):
                return True
    return False


def fd_valid(qp):
    """Whether finite differences around this query pass are meaningful."""
    return not near_kink(*qp.caches) and np.linalg.norm(qp.z, axis=1).min() >= MIN_EMBED_NORM


def target_losses(model, x, targets, q_labels, keys, key_labels, queue, queue_labels, tau):
    """``(L_cls, L_cont)`` of the query branch with all labels held fixed."""
    qp = query_forward(model, x)
    l_cls = classification_loss(targets, qp.logits)[0]
    l_cont = batch_contrastive_loss(qp.q, q_labels, keys, key_labels, queue, queue_labels, tau)[0]
    return l_cls, l_cont


def random_instance(rng, dim=None, n_classes=None, hidden=None, embed=None, batch=None):
    """A small random target model plus batch, keys and queue for gradient checks."""
    from ufda.gcld import init_target_model
    dim = dim or int(rng.integers(2, 6))
    n_classes = n_classes or int(rng.integers(2, 5))
    hidden = hidden or int(rng.integers(3, 7))
    embed = embed or int(rng.integers(2, 17))
    batch = batch or int(rng.integers(2, 7))
    model = init_target_model(dim, n_classes, rng, hidden=hidden, embed_dim=embed)
    x = rng.standard_normal((batch, dim))
    targets = rng.dirichlet(np.ones(n_classes), size=batch)
    n_keys = batch
    n_queue = int(rng.integers(0, 32 - 2 * batch + 1))
    keys = numkit.l2_normalize(rng.standard_normal((n_keys, embed)))
    queue = numkit.l2_normalize(rng.standard_normal((n_queue, embed))) if n_queue else np.zeros((0, embed))
    labels = lambda n: rng.integers(0, n_classes, size=n)
    return dict(model=model, x=x, targets=targets, q_labels=labels(batch), keys=keys,
                key_labels=labels(n_keys), queue=queue, queue_labels=labels(n_queue),
                tau=float(rng.choice([0.07, 0.2, 0.5, 1.0])))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance summary ---------------------------------------------------------

ACCEPTANCE = {}


def record_acceptance(number: int, ok: bool, detail: str):
    ACCEPTANCE[number] = (bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
