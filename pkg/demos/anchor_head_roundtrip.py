"""Encode a moving box into head tensors, decode it, and look at the loss.

Run with ``python3 demos/anchor_head_roundtrip.py``.
"""

import numpy as np

from vql3d.anchor_head import (HeadOutput, assign_positives, build_grid, decode_track, encode,
                               loss)
from vql3d.geom3d import Box9

grid = build_grid()
print(f"Default grid: {len(grid)} anchors, spacing {grid.spacing} m")

boxes = [Box9((2.0 + 0.3 * t, 0.5, 0.0), (0.6, 0.4, 0.3), (0.2 * t, 0.0, 0.0))
         for t in range(8)]
boxes[0] = None  # object not yet visible

head = HeadOutput.empty(len(boxes), len(grid))
for t, box in enumerate(boxes):
    if box is None:
        continue
    idx = assign_positives(grid, box.center).indices
    for n in idx:
        head.center_offset[t, n], head.size[t, n], head.rotation[t, n] = encode(grid, box, int(n))
        head.presence_logit[t, n] = 12.0
    print(f"  frame {t}: {len(idx)} positive anchors")

track = decode_track(grid, head, "demo")
print(f"\nDecoded track covers frames {track.interval.start_frame}..{track.interval.end_frame}, "
      f"confidence {track.confidence:.6f}")
err = max(np.abs(track.boxes[t].to_array() - boxes[t].to_array()).max()
          for t in track.boxes)
print(f"max parameter error {err:.2e}")

res = loss(head, boxes, grid)
print(f"\nloss on the encoding head: total {res.total:.3e} (finite logits leave a tiny focal term)")
print("  components:", {k: f"{v:.3e}" for k, v in res.components.items()})
head.center_offset += 0.05
res = loss(head, boxes, grid)
print("after a 5 cm offset error:", {k: f"{v:.3e}" for k, v in res.components.items()})
