"""Live monitoring: predictions on a stream that carries no ground truth.

Trains a quick model on a labeled stream, strips the ground truth from a
second stream to simulate deployment, and walks the sliding window emitting
a prediction and alert decision per step, exactly like `detmon monitor`.
"""

import time

from detmon.features import pool_frame, stack_window, window_features
from detmon.mapeval import label_series
from detmon.ordinal import CriticalRule, alert_score, to_alert
from detmon.stream import FrameRecord, read_all
from detmon.synthgen import SynthConfig, make_split
from detmon.tensornet import CascadeConfig, predict, train_monitor

WINDOW = 10
train_bytes, live_bytes = make_split(SynthConfig(frame_count=240), 1, 2)

header, frames = read_all(train_bytes)
labels = label_series(frames, WINDOW)
wfs = [wf for _, wf in window_features(frames, WINDOW)]
dataset = [(wf, l.ordinal_class) for wf, l in zip(wfs, labels) if l.defined]
model, _ = train_monitor(dataset, CascadeConfig(WINDOW, header.layer_shapes), seed=0, epochs=20)

_, live_frames = read_all(live_bytes)
live_frames = [FrameRecord(f.frame_id, f.detections, None, f.features) for f in live_frames]
rule = CriticalRule(critical_class=2)

print("start_frame  class  alert  score   latency")
pooled = []
alerts = 0
for frame in live_frames:
    pooled.append((frame.frame_id, pool_frame(frame)))
    if len(pooled) > WINDOW:
        pooled.pop(0)
    if len(pooled) < WINDOW:
        continue
    t0 = time.perf_counter()
    cls, probs = predict(stack_window([m for _, m in pooled]), model)
    latency_ms = (time.perf_counter() - t0) * 1000
    score = alert_score(probs, rule)
    alert = to_alert(cls, rule)
    alerts += alert
    if alert or frame.frame_id % 40 == 0:
        flag = "ALERT" if alert else "     "
        print(f"{pooled[0][0]:>11}  {cls:>5}  {flag}  {score:.3f}  {latency_ms:6.2f} ms")
print(f"\n{alerts} alert windows out of {len(live_frames) - WINDOW + 1}")
