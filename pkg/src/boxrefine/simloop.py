"""Desk-scale teacher-student surrogate for annotation refinement training.

A real training loop alternates between a teacher model producing predictions
and a student learning from refined targets. Here both are replaced by a
four-parameter simulated detector; the student's parameters respond directly
to the quality of the corrected targets and the teacher trails the student
through an exponential moving average, reproducing the feedback structure of
the full system at negligible cost.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from .correction import CorrectionConfig, CorrectionReport, correct_targets
from .datamodel import Annotation, Dataset, Detection, ImageRecord
from .evaluation import evaluate_ap50
from .geometry import Box, GeoTransform, apply_transform, iou
from .noise import NoiseConfig, constrain_box, corrupt_dataset, derive_rng

__all__ = [
    "SimDetectorParams",
    "EmaState",
    "ema_update",
    "ImprovementSchedule",
    "DEFAULT_SCHEDULE",
    "LoopConfig",
    "Scenario",
    "IterationRecord",
    "simulate_predictions",
    "synthesize_truth",
    "build_scenario",
    "run_loop",
]

# spurious predictions reuse the superfluous-annotation size range
SPURIOUS_MIN_SIDE = 16.0
SPURIOUS_MAX_SIDE = 196.0

# round-tripping a box through a transform and its inverse must stay this tight
ALIGNMENT_TOL = 1e-9


@dataclass(frozen=True)
class SimDetectorParams:
    """The simulated detector, reduced to four interpretable parameters.

    ``localization_sigma`` is the per-coordinate Gaussian jitter in pixels,
    ``recall`` the chance of predicting each true object, ``fp_rate`` the
    expected number of spurious boxes per image, and ``score_sharpness``
    scales confidence: a prediction overlapping truth with IoU q receives
    logit ``score_sharpness * (2q - 1)``.
    """

    localization_sigma: float
    recall: float
    fp_rate: float
    score_sharpness: float

    def __post_init__(self) -> None:
        if self.localization_sigma < 0.0:
            raise ValueError(
                f"localization_sigma must be >= 0, got {self.localization_sigma}"
            )
        if not 0.0 <= self.recall <= 1.0:
            raise ValueError(f"recall must be in [0, 1], got {self.recall}")
        if self.fp_rate < 0.0:
            raise ValueError(f"fp_rate must be >= 0, got {self.fp_rate}")
        if self.score_sharpness <= 0.0:
            raise ValueError(
                f"score_sharpness must be > 0, got {self.score_sharpness}"
            )

    def to_vector(self) -> tuple[float, ...]:
        return (self.localization_sigma, self.recall, self.fp_rate, self.score_sharpness)

    @classmethod
    def from_vector(cls, vec: Sequence[float]) -> "SimDetectorParams":
        if len(vec) != 4:
            raise ValueError(f"expected 4 parameters, got {len(vec)}")
        return cls(*vec)


def simulate_predictions(
    true_boxes: Sequence[Annotation],
    params: SimDetectorParams,
    rng: np.random.Generator,
    width: float,
    height: float,
    num_classes: int,
) -> list[Detection]:
    """Draw one image's worth of predictions from the simulated detector.

    Each true box is emitted with probability ``recall``, its coordinates
    independently jittered by ``localization_sigma``; Poisson(``fp_rate``)
    spurious boxes are added with uniform size, position, and label. Every
    prediction is scored by its best IoU against the true boxes, so with zero
    jitter and full recall the output reproduces the truth with probability
    above one half.
    """
    if num_classes < 1:
        raise ValueError(f"num_classes must be >= 1, got {num_classes}")
    boxes: list[tuple[Box, int]] = []
    for ann in true_boxes:
        if rng.random() >= params.recall:
            continue
        b = ann.box
        s = params.localization_sigma
        x1 = b.x1 + rng.normal(0.0, s)
        x2 = b.x2 + rng.normal(0.0, s)
        y1 = b.y1 + rng.normal(0.0, s)
        y2 = b.y2 + rng.normal(0.0, s)
        jittered = constrain_box(Box.spanning(x1, y1, x2, y2), width, height)
        boxes.append((jittered, ann.label))
    for _ in range(int(rng.poisson(params.fp_rate))):
        w = rng.uniform(SPURIOUS_MIN_SIDE, SPURIOUS_MAX_SIDE)
        h = rng.uniform(SPURIOUS_MIN_SIDE, SPURIOUS_MAX_SIDE)
        cx = rng.uniform(0.0, width)
        cy = rng.uniform(0.0, height)
        label = int(rng.integers(1, num_classes + 1))
        spurious = Box(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
        boxes.append((constrain_box(spurious, width, height), label))
    out: list[Detection] = []
    for box, label in boxes:
        quality = max((iou(box, t.box) for t in true_boxes), default=0.0)
        logit = params.score_sharpness * (2.0 * quality - 1.0)
        out.append(Detection.from_logit(box=box, label=label, logit=logit))
    return out


@dataclass(frozen=True)
class EmaState:
    """Teacher and student parameter vectors coupled by an EMA.

    ``keep_rate`` is the fraction of the old teacher retained per update;
    the remainder comes from the student.
    """

    teacher: tuple[float, ...]
    student: tuple[float, ...]
    keep_rate: float

    def __post_init__(self) -> None:
        if len(self.teacher) != len(self.student):
            raise ValueError(
                f"teacher and student lengths differ: "
                f"{len(self.teacher)} vs {len(self.student)}"
            )
        if not 0.0 <= self.keep_rate <= 1.0:
            raise ValueError(f"keep_rate must be in [0, 1], got {self.keep_rate}")


def ema_update(state: EmaState) -> EmaState:
    """One EMA step: teacher <- keep_rate * teacher + (1 - keep_rate) * student."""
    a = state.keep_rate
    teacher = tuple(a * t + (1.0 - a) * s for t, s in zip(state.teacher, state.student))
    return replace(state, teacher=teacher)


@dataclass(frozen=True)
class ImprovementSchedule:
    """How student quality maps to detector parameters.

    The student interpolates linearly between ``start`` and ``oracle`` as the
    measured target quality goes from 0 to 1: better training targets make a
    better detector.
    """

    start: SimDetectorParams
    oracle: SimDetectorParams

    def at(self, quality: float) -> SimDetectorParams:
        q = min(max(quality, 0.0), 1.0)
        vec = tuple(
            (1.0 - q) * a + q * b
            for a, b in zip(self.start.to_vector(), self.oracle.to_vector())
        )
        return SimDetectorParams.from_vector(vec)


DEFAULT_SCHEDULE = ImprovementSchedule(
    start=SimDetectorParams(
        localization_sigma=8.0, recall=0.65, fp_rate=1.0, score_sharpness=3.0
    ),
    oracle=SimDetectorParams(
        localization_sigma=0.75, recall=0.98, fp_rate=0.1, score_sharpness=8.0
    ),
)


@dataclass(frozen=True)
class LoopConfig:
    """Everything :func:`run_loop` needs besides the scenario itself."""

    iterations: int = 15
    keep_rate: float = 0.95
    correction: CorrectionConfig = field(
        default_factory=lambda: CorrectionConfig(
            distance_limit=0.6, mining_threshold=0.8
        )
    )
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    schedule: ImprovementSchedule = DEFAULT_SCHEDULE

    def __post_init__(self) -> None:
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if not 0.0 <= self.keep_rate <= 1.0:
            raise ValueError(f"keep_rate must be in [0, 1], got {self.keep_rate}")


@dataclass
class Scenario:
    """A hidden truth plus the noisy targets the loop is allowed to see."""

    truth: Dataset
    targets: dict[str, list[Annotation]]


@dataclass
class IterationRecord:
    """One loop iteration: how good the targets and the teacher got."""

    iteration: int
    target_quality: float
    ap50: float
    mined: int


def synthesize_truth(
    num_images: int = 8,
    boxes_per_image: int = 6,
    num_classes: int = 3,
    image_size: tuple[int, int] = (512, 512),
    seed: int = 0,
) -> Dataset:
    """Random ground truth: boxes fully inside the image, uniform labels."""
    width, height = image_size
    images: list[ImageRecord] = []
    for i in range(num_images):
        image_id = f"img_{i:04d}"
        rng = derive_rng(seed, "truth", image_id)
        anns: list[Annotation] = []
        for _ in range(boxes_per_image):
            w = rng.uniform(28.0, 80.0)
            h = rng.uniform(28.0, 80.0)
            cx = rng.uniform(w / 2.0, width - w / 2.0)
            cy = rng.uniform(h / 2.0, height - h / 2.0)
            label = int(rng.integers(1, num_classes + 1))
            anns.append(
                Annotation(
                    box=Box(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0),
                    label=label,
                )
            )
        images.append(
            ImageRecord(image_id=image_id, width=width, height=height, annotations=anns)
        )
    names = [f"class_{i}" for i in range(1, num_classes + 1)]
    return Dataset(class_names=names, images=images)


def build_scenario(truth: Dataset, noise_cfg: NoiseConfig) -> Scenario:
    """Corrupt the truth once to produce the targets the loop will refine."""
    corrupted, _ = corrupt_dataset(truth, noise_cfg)
    return Scenario(
        truth=truth,
        targets={rec.image_id: list(rec.annotations) for rec in corrupted.images},
    )


def _check_alignment(t: GeoTransform, anns: Sequence[Annotation]) -> None:
    inv = t.inverse()
    for ann in anns:
        back = apply_transform(inv, apply_transform(t, ann.box))
        drift = max(
            abs(back.x1 - ann.box.x1),
            abs(back.y1 - ann.box.y1),
            abs(back.x2 - ann.box.x2),
            abs(back.y2 - ann.box.y2),
        )
        if drift > ALIGNMENT_TOL:
            raise RuntimeError(
                f"strong-view alignment drift {drift} exceeds {ALIGNMENT_TOL}"
            )


def _flip_annotations(
    anns: Sequence[Annotation], t: GeoTransform
) -> list[Annotation]:
    return [replace(a, box=apply_transform(t, a.box)) for a in anns]


def _mean_best_iou_to_truth(
    corrected: Mapping[str, Sequence[Annotation]], truth_by_id: Mapping[str, ImageRecord]
) -> float:
    best: list[float] = []
    for image_id, anns in corrected.items():
        truth_boxes = [a.box for a in truth_by_id[image_id].annotations]
        for ann in anns:
            best.append(max((iou(ann.box, tb) for tb in truth_boxes), default=0.0))
    return sum(best) / len(best) if best else 0.0


def run_loop(
    scenario: Scenario,
    cfg: LoopConfig,
    workers: int = 1,
    hook: Callable[
        [int, dict[str, list[Annotation]], dict[str, list[Detection]]], None
    ]
    | None = None,
) -> list[IterationRecord]:
    """Run the teacher-student refinement loop over a scenario.

    Per iteration and image: a weak view (random horizontal flip) is chosen,
    the teacher predicts on it, the noisy targets are refined against those
    predictions, a strong view transform is applied to the refined targets
    and checked for alignment consistency, and everything is mapped back to
    the original frame. Target quality (mean best IoU of refined targets to
    the hidden truth) drives the student, and the teacher follows by EMA.

    Results are bit-identical for any ``workers`` count: every random draw
    comes from a substream keyed by (seed, iteration, image), and reduction
    order is fixed. ``hook``, when given, receives each iteration's refined
    targets and predictions per image.

    Targets with untouched boxes keep their exact original coordinates; only
    boxes the correction actually moved go through view-transform round
    trips.
    """
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    num_classes = scenario.truth.num_classes
    seed = cfg.noise.seed
    truth_by_id = scenario.truth.by_id()
    start_vec = cfg.schedule.start.to_vector()
    state = EmaState(teacher=start_vec, student=start_vec, keep_rate=cfg.keep_rate)
    trace: list[IterationRecord] = []

    def process(
        iteration: int, teacher: SimDetectorParams, rec: ImageRecord
    ) -> tuple[str, list[Annotation], list[Detection], CorrectionReport]:
        rng = derive_rng(seed, "loop", iteration, rec.image_id)
        flip_weak = bool(rng.integers(2))
        flip_strong = bool(rng.integers(2))
        weak = GeoTransform.hflip(float(rec.width)) if flip_weak else None
        truth_view = (
            _flip_annotations(rec.annotations, weak) if weak else rec.annotations
        )
        preds_view = simulate_predictions(
            truth_view, teacher, rng, rec.width, rec.height, num_classes
        )
        targets = scenario.targets[rec.image_id]
        targets_view = _flip_annotations(targets, weak) if weak else list(targets)
        corrected_view, report = correct_targets(
            targets_view, preds_view, cfg.correction
        )
        strong = (
            GeoTransform.hflip(float(rec.width))
            if flip_strong
            else GeoTransform.scale(1.0, 1.0)
        )
        _check_alignment(strong, corrected_view)
        corrected: list[Annotation] = []
        for j, ann in enumerate(corrected_view):
            if j < len(targets_view) and ann is targets_view[j]:
                corrected.append(targets[j])
            elif weak:
                corrected.append(replace(ann, box=apply_transform(weak, ann.box)))
            else:
                corrected.append(ann)
        preds = (
            [replace(p, box=apply_transform(weak, p.box)) for p in preds_view]
            if weak
            else preds_view
        )
        return rec.image_id, corrected, preds, report

    for it in range(cfg.iterations):
        teacher = SimDetectorParams.from_vector(state.teacher)
        images = scenario.truth.images
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(lambda r: process(it, teacher, r), images))
        else:
            results = [process(it, teacher, rec) for rec in images]
        corrected_by_image = {image_id: anns for image_id, anns, _, _ in results}
        preds_by_image = {image_id: preds for image_id, _, preds, _ in results}
        mined = sum(report.mined for _, _, _, report in results)
        quality = _mean_best_iou_to_truth(corrected_by_image, truth_by_id)
        ap50 = evaluate_ap50(scenario.truth, preds_by_image).map50
        if hook is not None:
            hook(it, corrected_by_image, preds_by_image)
        trace.append(
            IterationRecord(
                iteration=it, target_quality=quality, ap50=ap50, mined=mined
            )
        )
        student = cfg.schedule.at(quality)
        state = ema_update(replace(state, student=student.to_vector()))
    return trace
