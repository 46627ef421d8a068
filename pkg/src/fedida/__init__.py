"""Fairness-aware federated learning on tabular data.

Submodules:

- :mod:`fedida.data`       CSV ingestion, subgroup indexing, partitioning, synthetic data
- :mod:`fedida.models`     linear and one-hidden-layer predictors with hand-written gradients
- :mod:`fedida.metrics`    AUROC and group fairness metrics
- :mod:`fedida.penalty`    cross-group fairness penalty and the composite local objective
- :mod:`fedida.rose`       fairness-aware random oversampling
- :mod:`fedida.federated`  local training, aggregation and the four training setups
- :mod:`fedida.tuning`     lambda and gamma search
- :mod:`fedida.experiment` config-driven experiment pipelines used by the CLI
"""

__version__ = "0.1.0"
