"""Temporal and spatio-temporal scores on a tiny hand-built split.

Run with ``python3 demos/metrics_walkthrough.py``.
"""

from vql3d.geom3d import Box9
from vql3d.metrics import (ResponseTrack, TemporalInterval, average_precision, stiou, tiou)


def track(qid, start, end, confidence, box):
    return ResponseTrack(qid, TemporalInterval(start, end),
                         {t: box for t in range(start, end + 1)}, confidence)


cube = Box9((5.0, 0.0, 0.0), (1.0, 1.0, 1.0))
nudged = cube.replace(center=(5.5, 0.0, 0.0))

gt = track("kitchen", 10, 29, 1.0, cube)
print("Ground truth occupies frames 10..29 (inclusive).")
for start, end, box in ((10, 29, cube), (20, 39, cube), (10, 29, nudged), (40, 45, cube)):
    pred = track("kitchen", start, end, 0.8, box)
    print(f"  pred {start:>2}..{end:<2} {'nudged' if box is nudged else 'exact '}: "
          f"tIoU {tiou(pred.interval, gt.interval):.3f}, stIoU {stiou(pred, gt):.3f}")

print("\nAverage precision ranks predictions by confidence.")
ranked = [(0.9, True), (0.8, False), (0.7, True)]
print(f"  hits at ranks 1 and 3 with 3 queries: AP = {average_precision(ranked, 3):.4f} (5/9)")
ranked = [(0.9, True), (0.8, True), (0.7, False)]
print(f"  hits at ranks 1 and 2 with 3 queries: AP = {average_precision(ranked, 3):.4f} (2/3)")
