"""Train the monitor and both baselines on one synthetic stream, evaluate on
a disjoint-seed stream, and print the comparison table.

Small stream and few epochs so the demo finishes in well under a minute;
the shipped acceptance suite runs the full-size version of this experiment.
"""

import numpy as np

from detmon.baselines import (
    predict_baseline,
    train_baseline,
    window_handcrafted,
    window_pooled_last_layer,
)
from detmon.features import window_features
from detmon.mapeval import label_series
from detmon.metrics import auroc, build_report, roc_curve
from detmon.ordinal import CriticalRule, alert_score, to_alert
from detmon.stream import read_all
from detmon.synthgen import SynthConfig, make_split
from detmon.tensornet import CascadeConfig, predict, train_monitor

WINDOW = 10
config = SynthConfig(frame_count=300)
train_bytes, test_bytes = make_split(config, train_seed=7, test_seed=11)


def load(data):
    header, frames = read_all(data)
    labels = label_series(frames, WINDOW)
    wfs = [wf for _, wf in window_features(frames, WINDOW)]
    return header, frames, labels, wfs


header, train_frames, train_labels, train_wfs = load(train_bytes)
_, test_frames, test_labels, test_wfs = load(test_bytes)
rule = CriticalRule(critical_class=2)

dataset = [(wf, l.ordinal_class) for wf, l in zip(train_wfs, train_labels) if l.defined]
print(f"training on {len(dataset)} labeled windows (scaled-down demo run) ...")
model, losses = train_monitor(
    dataset, CascadeConfig(WINDOW, header.layer_shapes), seed=0, epochs=60
)
print(f"loss: {losses[0]:.4f} (ln 2 at init) -> {losses[-1]:.4f}")

true_cls = [l.ordinal_class for l in test_labels]
alerts = [to_alert(c, rule) for c in true_cls]
preds, scores = [], []
for wf in test_wfs:
    cls, probs = predict(wf, model)
    preds.append(cls)
    scores.append(alert_score(probs, rule))
reports = {"monitor": build_report(preds, true_cls, scores, alerts)}

y_train = [to_alert(l.ordinal_class, rule) for l in train_labels]
for name, extract in (
    ("baseline1", lambda fr: window_handcrafted(fr, header.image_size)),
    ("baseline2", window_pooled_last_layer),
):
    x_train = np.stack([extract(train_frames[i:i + WINDOW]) for i in range(len(train_labels))])
    x_test = np.stack([extract(test_frames[i:i + WINDOW]) for i in range(len(test_labels))])
    baseline, _ = train_baseline(x_train, y_train, name, seed=0, epochs=25)
    probs = predict_baseline(x_test, baseline)
    points = roc_curve(probs, alerts)
    print(f"{name}: AUROC {auroc(points):.3f}")

print()
print(reports["monitor"].to_text("monitor"))
