"""
Group fairness metrics and the cross-group penalty
==================================================

Scores a small imbalanced cohort with a fixed logistic model, then shows how the
three penalty variants respond to the same scores.
"""

from __future__ import annotations

import numpy as np

from fedida import data, metrics, models
from fedida.penalty import ABSOLUTE, SIGNED, SQUARED, penalty_from_scores

# %%
# An imbalanced cohort: four sensitive combinations with different base rates.
cohort = data.generate_synthetic(data.SyntheticSpec(
    prevalences=(0.55, 0.25, 0.15, 0.05), coefficients=(1.0, -0.8, 0.5),
    n=3000, logit_shift=(0.8, 0.0, -0.5, -1.2), seed=0))
index = data.build_subgroup_index(cohort)
print("subgroup sizes:", index.sizes)

# %%
# A fixed predictor. The sensitive columns never enter the model inputs.
params = models.init_params(models.LINEAR, cohort.p_a, seed=0)
params = params.with_vector(np.r_[1.0, -0.8, 0.5, 0.0])
probs = models.forward(params, cohort.a).probs

# %%
# Hard metrics threshold at 0.5; soft metrics average the probabilities.
for mode in (metrics.HARD, metrics.SOFT):
    rep = metrics.fairness_report(probs, cohort.y, index, mode=mode)
    print(f"{mode:>4}: auroc={rep.auroc:.3f} dpd={rep.dpd:.3f} dpr={rep.dpr:.3f} "
          f"dfpr={rep.dfpr:.3f} dppv={rep.dppv:.3f}")

# %%
# The penalty compares same-outcome pairs drawn from different groups.
# The signed variant cancels by symmetry, which is why it is not used for training.
scores = cohort.a @ params.weights[0]
codes = index.labels
for mode in (SIGNED, ABSOLUTE, SQUARED):
    value, _ = penalty_from_scores(scores, cohort.y, codes, mode)
    print(f"{mode:>18}: {value.value:.4f} over {value.pair_count} pairs")
