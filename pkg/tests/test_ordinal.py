import numpy as np
import pytest

from detmon.ordinal import CriticalRule, alert_score, to_alert
from detmon.tensornet.model import class_from_rank_probs


def test_alert_examples():
    rule = CriticalRule(critical_class=2)
    assert to_alert(1, rule) is True
    assert to_alert(2, rule) is False


def test_critical_one_alerts_only_class_zero():
    rule = CriticalRule(critical_class=1)
    assert to_alert(0, rule) is True
    assert all(not to_alert(c, rule) for c in range(1, 5))


def test_rule_rejects_zero_critical_class():
    with pytest.raises(ValueError):
        CriticalRule(critical_class=0)


def test_alert_score_examples():
    rule = CriticalRule(critical_class=2)
    assert alert_score([0.9, 0.8, 0.1, 0.05], rule) == pytest.approx(0.2)
    assert alert_score([1.0, 1.0, 0.3, 0.1], rule) == 0.0


def test_sweep_equivalence_on_random_cases():
    # Alerting via the thresholded ordinal class at decision threshold t is
    # the same event as the alert score reaching 1 - t.
    rng = np.random.default_rng(42)
    rule = CriticalRule(critical_class=2)
    for _ in range(1000):
        probs = np.sort(rng.uniform(0, 1, size=4))[::-1]
        t = float(rng.uniform(0, 1))
        ordinal_class = class_from_rank_probs(probs, t)
        via_class = to_alert(ordinal_class, rule)
        via_score = alert_score(probs, rule) >= 1.0 - t
        assert via_class == via_score


def test_sweeps_trace_identical_operating_sets():
    rng = np.random.default_rng(7)
    rule = CriticalRule(critical_class=2)
    cases = [np.sort(rng.uniform(0, 1, 4))[::-1] for _ in range(50)]
    grid = np.linspace(0, 1, 101)
    decisions_by_class = {
        tuple(to_alert(class_from_rank_probs(p, t), rule) for p in cases) for t in grid
    }
    decisions_by_score = {
        tuple(alert_score(p, rule) >= 1.0 - t for p in cases) for t in grid
    }
    assert decisions_by_class == decisions_by_score
