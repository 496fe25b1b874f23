"""A small version of the component ablation: pseudo-label kind, GCLD and
MVD switched on and off over a few seeds. Takes a few minutes.

    python demos/03_ablation.py [n_seeds]
"""
import sys

import numpy as np

from ufda import RunConfig, run_experiment
from ufda.federation import evaluate

n_seeds = int(sys.argv[1]) if len(sys.argv) > 1 else 3
base = RunConfig()
rows = {"PSL": [], "PHL": [], "PHL+GCLD": [], "PHL+GCLD+MVD": []}
for seed in range(n_seeds):
    rows["PSL"].append(run_experiment(base.with_overrides(
        seed=seed, modes={"pseudo": "psl", "gcld": False, "mvd": False})).metric)
    rows["PHL"].append(run_experiment(base.with_overrides(seed=seed, modes={"gcld": False, "mvd": False})).metric)
    report, art = run_experiment(base.with_overrides(seed=seed), return_artifacts=True)
    # MVD is applied after training, so the same run also gives the no-MVD number
    rows["PHL+GCLD"].append(evaluate(np.asarray(art.space.union)[art.target_pred], art.truth, art.space)["metric"])
    rows["PHL+GCLD+MVD"].append(report.metric)
    print(f"seed {seed} done")

for name, vals in rows.items():
    print(f"{name:<14} {np.mean(vals):6.2f}  +- {np.std(vals):.2f}")
