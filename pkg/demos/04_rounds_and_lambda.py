"""Communication rate and the voting threshold.

More rounds mean the sources train longer and the target re-queries them
more often; lambda only moves the shared/unknown cut, so one trained run
can be re-voted at several values.

    python demos/04_rounds_and_lambda.py
"""
import numpy as np

from ufda import RunConfig, run_experiment
from ufda.federation import revote

base = RunConfig()
for label, over in (("SFDA", {"modes": {"sfda": True}}), ("r=0.2", {"federation": {"rounds": 0.2}}),
                    ("r=1", {}), ("r=5", {"federation": {"rounds": 5.0}})):
    report = run_experiment(base.with_overrides(seed=0, **over))
    print(f"{label:<6} metric {report.metric:6.2f}  events {report.communication['events']:>3}  "
          f"source steps {report.communication['source_steps']}")

_, art = run_experiment(base.with_overrides(seed=0), return_artifacts=True)
for lam in np.linspace(0.1, 0.9, 9):
    print(f"lambda {lam:.1f}: {revote(art, lam)['metric']:6.2f}")
