"""Detection metrics: AP at IoU 0.5, annotation-quality statistics, error breakdown.

AP follows the all-point interpolation convention: predictions are ranked by
score, greedily matched to ground truth at IoU >= 0.5, and the area under the
precision envelope over recall is reported. Only the ranking of scores
matters, never their values.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .datamodel import Annotation, Dataset, Detection
from .geometry import Box, iou

__all__ = [
    "TP_IOU",
    "BACKGROUND_IOU",
    "ClassCounts",
    "EvalResult",
    "QualityStats",
    "ErrorBreakdown",
    "evaluate_ap50",
    "quality_stats",
    "error_breakdown",
]

# operating point for a true positive
TP_IOU = 0.5
# at or below this overlap a prediction is considered to have hit nothing
BACKGROUND_IOU = 0.1


@dataclass
class ClassCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0


@dataclass
class EvalResult:
    """Per-class average precision plus their mean and TP/FP/FN tallies.

    Classes with no ground-truth instances are excluded from ``per_class_ap``
    and the mean; their predictions still show up as false positives in
    ``counts``.
    """

    per_class_ap: dict[int, float]
    map50: float
    counts: dict[int, ClassCounts] = field(default_factory=dict)


@dataclass
class QualityStats:
    """Bidirectional mean best-match IoU between truth and an annotation set.

    ``gt_to_annotations`` averages, over ground-truth boxes, each box's best
    IoU against the annotations of its image; ``annotations_to_gt`` is the
    reverse direction. An empty side contributes a mean of 0.0 and sets the
    corresponding flag.
    """

    gt_to_annotations: float
    annotations_to_gt: float
    gt_empty: bool = False
    annotations_empty: bool = False


@dataclass
class ErrorBreakdown:
    """Prediction-level error sources at the TP_IOU operating point.

    Each scored prediction lands in exactly one bucket: true positive,
    localization (right class, overlap in (BACKGROUND_IOU, TP_IOU]),
    duplicate (its ground truth was already claimed), background (no overlap
    above BACKGROUND_IOU with any ground truth), or classification (well
    localized, wrong class). ``missed`` counts ground-truth boxes never
    claimed by a true positive.
    """

    true_positives: int = 0
    localization: int = 0
    duplicate: int = 0
    background: int = 0
    classification: int = 0
    missed: int = 0


def _check_image_ids(
    ground_truth: Dataset, predictions: Mapping[str, Sequence[Detection]]
) -> None:
    known = set(ground_truth.image_ids())
    unknown = sorted(set(predictions) - known)
    if unknown:
        raise ValueError(f"predictions reference unknown image ids: {unknown}")


def _average_precision(tp_flags: Sequence[bool], n_gt: int) -> float:
    """Area under the interpolated precision-recall curve."""
    if n_gt == 0 or not tp_flags:
        return 0.0
    precisions: list[float] = []
    recalls: list[float] = []
    tp = 0
    for rank, flag in enumerate(tp_flags, start=1):
        tp += int(flag)
        precisions.append(tp / rank)
        recalls.append(tp / n_gt)
    # precision envelope: best precision at this recall or beyond
    for i in range(len(precisions) - 2, -1, -1):
        precisions[i] = max(precisions[i], precisions[i + 1])
    ap = 0.0
    prev_recall = 0.0
    for recall, precision in zip(recalls, precisions):
        if recall > prev_recall:
            ap += (recall - prev_recall) * precision
            prev_recall = recall
    return ap


def evaluate_ap50(
    ground_truth: Dataset, predictions: Mapping[str, Sequence[Detection]]
) -> EvalResult:
    """Score predictions against ground truth at IoU 0.5.

    Predictions are ranked per class by descending probability (ties keep
    input order) and greedily matched within their image to the unmatched
    ground-truth box of highest IoU, requiring IoU >= TP_IOU; IoU ties go to
    the lower ground-truth index.

    Raises:
        ValueError: if ``predictions`` references image ids absent from
            ``ground_truth``, listing the offenders.
    """
    _check_image_ids(ground_truth, predictions)
    gt_boxes: dict[tuple[str, int], list[Box]] = defaultdict(list)
    gt_total: dict[int, int] = defaultdict(int)
    for rec in ground_truth.images:
        for ann in rec.annotations:
            gt_boxes[(rec.image_id, ann.label)].append(ann.box)
            gt_total[ann.label] += 1

    ranked: dict[int, list[tuple[float, int, str, Box]]] = defaultdict(list)
    order = 0
    for rec in ground_truth.images:
        for det in predictions.get(rec.image_id, ()):
            ranked[det.label].append((det.prob, order, rec.image_id, det.box))
            order += 1

    per_class_ap: dict[int, float] = {}
    counts: dict[int, ClassCounts] = {}
    for label in sorted(set(gt_total) | set(ranked)):
        preds = sorted(ranked.get(label, []), key=lambda r: (-r[0], r[1]))
        matched: dict[str, list[bool]] = {
            img: [False] * len(boxes)
            for (img, lbl), boxes in gt_boxes.items()
            if lbl == label
        }
        tp_flags: list[bool] = []
        for _, _, image_id, box in preds:
            candidates = gt_boxes.get((image_id, label), [])
            flags = matched.get(image_id, [])
            best_iou, best_idx = 0.0, -1
            for gi, gt_box in enumerate(candidates):
                if flags[gi]:
                    continue
                overlap = iou(box, gt_box)
                if overlap > best_iou:
                    best_iou, best_idx = overlap, gi
            if best_idx >= 0 and best_iou >= TP_IOU:
                flags[best_idx] = True
                tp_flags.append(True)
            else:
                tp_flags.append(False)
        n_gt = gt_total.get(label, 0)
        tp = sum(tp_flags)
        counts[label] = ClassCounts(tp=tp, fp=len(tp_flags) - tp, fn=n_gt - tp)
        if n_gt > 0:
            per_class_ap[label] = _average_precision(tp_flags, n_gt)

    map50 = (
        sum(per_class_ap.values()) / len(per_class_ap) if per_class_ap else 0.0
    )
    return EvalResult(per_class_ap=per_class_ap, map50=map50, counts=counts)


def _mean_best_iou(
    sources: Mapping[str, list[Box]], references: Mapping[str, list[Box]]
) -> float:
    best: list[float] = []
    for image_id, boxes in sources.items():
        refs = references.get(image_id, [])
        for box in boxes:
            best.append(max((iou(box, r) for r in refs), default=0.0))
    return sum(best) / len(best) if best else 0.0


def quality_stats(ground_truth: Dataset, annotations: Dataset) -> QualityStats:
    """Measure how well an annotation set covers ground truth, and vice versa.

    Matching is purely geometric; class labels are ignored. The two datasets
    must describe the same images.

    Raises:
        ValueError: if the image id sets differ, listing the offenders.
    """
    gt_ids = set(ground_truth.image_ids())
    ann_ids = set(annotations.image_ids())
    if gt_ids != ann_ids:
        missing = sorted(gt_ids - ann_ids)
        extra = sorted(ann_ids - gt_ids)
        raise ValueError(
            f"image id mismatch: missing from annotations {missing}, "
            f"unknown to ground truth {extra}"
        )
    gt = {
        rec.image_id: [a.box for a in rec.annotations] for rec in ground_truth.images
    }
    ann = {
        rec.image_id: [a.box for a in rec.annotations] for rec in annotations.images
    }
    n_gt = sum(len(b) for b in gt.values())
    n_ann = sum(len(b) for b in ann.values())
    return QualityStats(
        gt_to_annotations=_mean_best_iou(gt, ann),
        annotations_to_gt=_mean_best_iou(ann, gt),
        gt_empty=n_gt == 0,
        annotations_empty=n_ann == 0,
    )


def error_breakdown(
    ground_truth: Dataset,
    predictions: Mapping[str, Sequence[Detection]],
    score_floor: float = 0.5,
) -> ErrorBreakdown:
    """Classify each confident prediction into a single error source.

    Predictions below ``score_floor`` are ignored. The rest are visited in
    descending probability per image and bucketed by the cascade documented
    on :class:`ErrorBreakdown`.

    Raises:
        ValueError: if ``predictions`` references unknown image ids.
    """
    _check_image_ids(ground_truth, predictions)
    result = ErrorBreakdown()
    total_gt = 0
    for rec in ground_truth.images:
        gts = rec.annotations
        total_gt += len(gts)
        claimed = [False] * len(gts)
        dets = [d for d in predictions.get(rec.image_id, ()) if d.prob >= score_floor]
        dets.sort(key=lambda d: -d.prob)
        for det in dets:
            overlaps = [iou(det.box, g.box) for g in gts]
            same_class = [
                (ov, gi)
                for gi, ov in enumerate(overlaps)
                if gts[gi].label == det.label
            ]
            hit = [(ov, gi) for ov, gi in same_class if ov > TP_IOU]
            if hit:
                open_hits = [(ov, gi) for ov, gi in hit if not claimed[gi]]
                if open_hits:
                    _, best = max(open_hits, key=lambda p: (p[0], -p[1]))
                    claimed[best] = True
                    result.true_positives += 1
                else:
                    result.duplicate += 1
                continue
            best_any = max(overlaps, default=0.0)
            if best_any > TP_IOU:
                result.classification += 1
            elif best_any > BACKGROUND_IOU:
                result.localization += 1
            else:
                result.background += 1
    result.missed = total_gt - result.true_positives
    return result
