"""Evaluation and reference pipeline for 3D visual query localization."""

from .anchor_head import (AnchorGrid, HeadOutput, LossWeights, assign_positives, build_grid,
                          decode, decode_track, encode, focal_loss, gradient_check, loss)
from .data_model import (PredictionDocument, SequenceAnnotation, SynthConfig, ValidationError,
                         compute_stats, generate_synthetic, parse_annotations, parse_predictions,
                         sep_distance)
from .geom3d import Box9, giou7, intersection_volume, iou3d, mc_iou_oracle
from .metrics import (MetricReport, ResponseTrack, TemporalInterval, average_precision, score,
                      stiou, tiou)

__all__ = [
    "AnchorGrid", "Box9", "HeadOutput", "LossWeights", "MetricReport", "PredictionDocument",
    "ResponseTrack", "SequenceAnnotation", "SynthConfig", "TemporalInterval", "ValidationError",
    "assign_positives", "average_precision", "build_grid", "compute_stats", "decode",
    "decode_track", "encode", "focal_loss", "generate_synthetic", "giou7", "gradient_check",
    "intersection_volume", "iou3d", "loss", "mc_iou_oracle", "parse_annotations",
    "parse_predictions", "score", "sep_distance", "stiou", "tiou",
]
