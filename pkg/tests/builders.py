"""Small constructors shared by the test modules."""

import math

from vql3d.anchor_head import HeadOutput, assign_positives, encode
from vql3d.geom3d import Box9
from vql3d.metrics import ResponseTrack, TemporalInterval

UNIT = Box9((5.0, 0.0, 0.0), (1.0, 1.0, 1.0))


def box_with_iou(iou: float) -> Box9:
    """A unit cube shifted along x so its IoU with ``UNIT`` equals ``iou``."""
    if iou <= 0.0:
        return UNIT.replace(center=(8.0, 0.0, 0.0))
    # Overlap (1 - d) over union (1 + d).
    d = (1.0 - iou) / (1.0 + iou)
    return UNIT.replace(center=(5.0 + d, 0.0, 0.0))


def track(qid: str, start: int, end: int, confidence: float = 1.0, box: Box9 = UNIT,
          per_frame=None) -> ResponseTrack:
    frames = range(start, end + 1)
    boxes = {t: (per_frame[i] if per_frame is not None else box) for i, t in enumerate(frames)}
    return ResponseTrack(qid, TemporalInterval(start, end), boxes, confidence)


def perfect_head(grid, boxes, logit=math.inf):
    """Head tensors encoding ``boxes[t]`` on every positive anchor of frame t."""
    head = HeadOutput.empty(len(boxes), len(grid), logit=-math.inf)
    for t, b in enumerate(boxes):
        if b is None:
            continue
        for n in assign_positives(grid, b.center).indices:
            off, size, rot = encode(grid, b, int(n))
            head.center_offset[t, n] = off
            head.size[t, n] = size
            head.rotation[t, n] = rot
            head.presence_logit[t, n] = logit
    return head
