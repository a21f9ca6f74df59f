"""detmon: streaming quality monitor for object detectors.

Predicts the binned per-window mAP of a detector from its backbone feature
maps over a sliding window of frames, and raises alerts when the predicted
quality falls below a critical threshold. Ships with ground-truth evaluation,
two baselines, a deterministic synthetic stream generator and a CLI.
"""

__version__ = "0.1.0"
