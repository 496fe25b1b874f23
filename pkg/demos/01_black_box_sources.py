"""Build a scenario, train three source clients and look at what the target
side is allowed to see: label sets and per-sample answers, nothing else.

    python demos/01_black_box_sources.py
"""
import numpy as np

from ufda import pseudo_label as pl
from ufda.scenario import make_scenario, parse_umda_matrix
from ufda.source_client import InProcessTransport, SourceClient

rng = np.random.default_rng(0)
matrix = parse_umda_matrix([[4, 4, 4, 10], [2, 2, 2, 5]])
scen = make_scenario(matrix, rng)
space = scen.space

print("source label sets:")
for m, labels in enumerate(space.source_sets):
    print(f"  source {m}: {labels}  (private: {space.source_private(m)})")
print("union pseudo-label set:", space.union)
print("shared classes (hidden from the target side):", space.shared)
print("target-only classes (hidden too):", space.target_unknown)

# wire=True pushes every message through its JSON line encoding
clients = [SourceClient(m, ds, np.random.default_rng(10 + m)) for m, ds in enumerate(scen.sources)]
transport = InProcessTransport(clients, wire=True)
transport.advance(200)

x_t = scen.target.features
onehot = [transport.query(m, x_t, "onehot").labels for m in range(space.n_sources)]
soft = [transport.query(m, x_t, "soft").probs for m in range(space.n_sources)]
print("\nfirst request on the wire:", transport.log[0][:90], "...")

phl = pl.generate_phl(onehot, space)
psl = pl.generate_psl(soft, space)
truth = scen.target.evaluation_labels()  # only for this printout
# target-only samples can never match here, and PHL rows often tie (argmax takes the lowest index)
for name, rows in (("PHL", phl), ("PSL", psl)):
    acc = pl.pseudo_label_accuracy(pl.PseudoLabelState.from_labels(rows), truth, space)
    print(f"{name} argmax accuracy on all target samples: {acc:.1f}%")

# a class owned by one source only competes with classes the others agree on
owners = space.membership().sum(axis=0)
print("\nowners per union class:", dict(zip(space.union, owners.tolist())))
