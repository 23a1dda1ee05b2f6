"""Visual intuition on 1-D data: a squared-error fit smears a cluster of
whale outcomes across its neighborhood, while the Welsch fit ignores them.

Writes curve data to robust_curve.csv (x, mu_mse, mu_robust, y, is_outlier);
plot it with any tool, or just read the printed summary.
"""

import numpy as np

from rxlearner import (
    BoostConfig,
    LossSpec,
    emit_curve_data,
    fit_boosted,
    generate_1d_qualitative,
)

data = generate_1d_qualitative(n=400, outlier_count=8, seed=7)
treated = data.treated_idx
Xt, yt = data.features[treated], data.outcome[treated]

cfg = BoostConfig(n_rounds=200)
model_mse = fit_boosted(Xt, yt, LossSpec(kind="squared"), cfg)
model_robust = fit_boosted(Xt, yt, LossSpec(kind="gamma_welsch", gamma=0.2), cfg)

emit_curve_data(data, model_mse, model_robust, "robust_curve.csv")

# the whales sit in x ~ [0.6, 0.8]; measure how far each fit is pulled there
x = data.features[:, 0]
window = (x >= 0.55) & (x <= 0.85) & (data.outlier_mask == 0)
truth = np.sin(2 * np.pi * x) + 2.0  # clean treated response
pull_mse = np.max(model_mse.predict(data.features)[window] - truth[window])
pull_rob = np.max(model_robust.predict(data.features)[window] - truth[window])

print("wrote robust_curve.csv")
print(f"max upward pull near the whale cluster: squared {pull_mse:.2f}, "
      f"welsch {pull_rob:.2f}")
