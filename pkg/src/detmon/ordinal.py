"""Alert view of the ordinal prediction at the critical quality threshold.

With C=5 bins of width 0.2, critical class 2 corresponds to the mAP
threshold 0.4: a window whose ordinal class falls below it is an alert
(positive) case.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

DEFAULT_CRITICAL_CLASS = 2


@dataclass(frozen=True)
class CriticalRule:
    """Alert when the ordinal class is strictly below ``critical_class``."""

    critical_class: int = DEFAULT_CRITICAL_CLASS

    def __post_init__(self):
        if self.critical_class < 1:
            raise ValueError("critical class must be >= 1")


def to_alert(ordinal_class: int, rule: CriticalRule = CriticalRule()) -> bool:
    """True iff the class is on the alert side of the critical threshold."""
    if ordinal_class < 0:
        raise ValueError(f"ordinal class {ordinal_class} out of range")
    return ordinal_class < rule.critical_class


def alert_score(rank_probs: Sequence[float], rule: CriticalRule = CriticalRule()) -> float:
    """Alert probability: one minus the critical rank's probability.

    The class is below the critical class c exactly when P(class >= c) fails,
    so 1 - p_c scores the alert directly. Sweeping a threshold over this
    score traces the same operating points as sweeping the decision
    threshold t through predict + to_alert: the decision "class < c" at
    threshold t is p_c <= t, i.e. alert_score >= 1 - t.
    """
    if rule.critical_class > len(rank_probs):
        raise ValueError(
            f"critical class {rule.critical_class} needs at least "
            f"{rule.critical_class} rank probabilities, got {len(rank_probs)}"
        )
    return 1.0 - float(rank_probs[rule.critical_class - 1])
