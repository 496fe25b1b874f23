"""Follow one run epoch by epoch: pseudo-label accuracy, the W1/W0 split
found by the entropy GMM, and the final mutual-voting table.

    python demos/02_disambiguation.py [seed]
"""
import sys

from ufda import RunConfig, run_experiment

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
report = run_experiment(RunConfig().with_overrides(seed=seed))

print("epoch  pl-acc   W1    W0   gmm means")
for row in report.curve:
    means = " ".join(f"{m:.3f}" for m in row["gmm_means"])
    print(f"{row['epoch']:>5}  {row['pseudo_label_acc']:6.1f}  {row['n_w1']:>4}  {row['n_w0']:>4}   {means}")

print("\nclass    d_s    d_t    S_c  verdict")
for row in report.voting["rows"]:
    print(f"{row['class_id']:>5}  {row['d_s']:.2f}  {row['d_t']:.2f}  {row['S_c']:.2f}  {row['verdict']}")

print("\nper-class accuracy:", {k: round(v, 1) for k, v in report.per_class.items()})
print(f"mean per-class accuracy: {report.metric:.2f}")
