"""Desk-scale benchmark: 2% treated, one-sided Pareto whales on both arms.

Runs a trimmed version of the extreme-pathology comparison (2 trials instead
of 5) and prints median Core-PEHE per learner. Expect the robust X-Learner
first, the Huber variant second, and the squared-error baselines far behind.
"""

import numpy as np

from rxlearner import load_config, preset_path, run_scenario

cfg = load_config(preset_path("extreme_pathology"))
report = run_scenario(cfg.scenario, cfg.learners, n_trials=2)

medians = {}
for name in cfg.learners:
    vals = [r.core_pehe for r in report.per_trial
            if r.learner == name and r.core_pehe is not None]
    medians[name] = float(np.median(vals))

for name, value in sorted(medians.items(), key=lambda kv: kv[1]):
    print(f"{name:>14}: median core-PEHE {value:.3f}")
