"""Detector-agnostic refinement of noisy and incomplete bounding-box annotations.

The toolkit corrects displaced target boxes against model predictions, mines
annotations missing from sparse labels, simulates annotation noise for
benchmarking, evaluates detection quality, and runs a desk-scale surrogate of
the teacher-student training loop. See the individual modules:

- ``geometry``: boxes, overlap distances, NMS, transforms
- ``datamodel``: records, COCO-subset and point-CSV I/O, SVG rendering
- ``noise``: displacement, sparsification, superfluous-box injection
- ``correction``: iterative box correction and label mining
- ``evaluation``: AP50, quality statistics, error breakdown
- ``simloop``: simulated teacher-student refinement loop
- ``cli``: reproducible command-line runs
"""

from .correction import CorrectionConfig, CorrectionReport, correct_boxes, correct_targets, mine_labels
from .datamodel import Annotation, Dataset, Detection, ImageRecord, load_annotations, save_annotations
from .evaluation import ErrorBreakdown, EvalResult, QualityStats, error_breakdown, evaluate_ap50, quality_stats
from .geometry import Box, GeoTransform, center_distance_normalized, giou_distance, iou, iou_distance, nms
from .noise import NoiseConfig, SuperfluousConfig, corrupt_dataset, displace_boxes, inject_superfluous, sparsify
from .simloop import EmaState, LoopConfig, SimDetectorParams, ema_update, run_loop, simulate_predictions

__version__ = "0.1.0"

__all__ = [
    "Annotation",
    "Box",
    "CorrectionConfig",
    "CorrectionReport",
    "Dataset",
    "Detection",
    "EmaState",
    "ErrorBreakdown",
    "EvalResult",
    "GeoTransform",
    "ImageRecord",
    "LoopConfig",
    "NoiseConfig",
    "QualityStats",
    "SimDetectorParams",
    "SuperfluousConfig",
    "center_distance_normalized",
    "correct_boxes",
    "correct_targets",
    "corrupt_dataset",
    "displace_boxes",
    "ema_update",
    "error_breakdown",
    "evaluate_ap50",
    "giou_distance",
    "inject_superfluous",
    "iou",
    "iou_distance",
    "load_annotations",
    "mine_labels",
    "nms",
    "quality_stats",
    "run_loop",
    "save_annotations",
    "simulate_predictions",
    "sparsify",
    "__version__",
]
