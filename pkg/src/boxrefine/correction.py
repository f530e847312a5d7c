"""Model-guided target refinement: iterative box correction and label mining.

Box correction treats each class separately. Every target keeps a working
box, initialised from its input box. Each round, every same-class prediction
is assigned to the target whose working box it is nearest to, provided the
prediction lies within ``distance_limit`` of that target's input box; each
working box is then replaced by the softmax-weighted average of its assigned
predictions, weighted by raw logits over ``temperature``. Rounds repeat until
the assignment stops changing, no coordinate moves, or the iteration cap is
hit.

Label mining keeps predictions at or above a probability threshold, removes
near-duplicates among them with class-wise NMS, drops survivors that overlap
an existing same-class target, and appends the rest as new annotations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

from .datamodel import (
    Annotation,
    Detection,
    PROVENANCE_CORRECTED,
    PROVENANCE_MINED,
)
from .geometry import (
    Box,
    center_distance_normalized,
    giou_distance,
    iou,
    iou_distance,
    nms,
)

__all__ = [
    "DISTANCE_IOU",
    "DISTANCE_GIOU",
    "DISTANCE_CENTER",
    "ConfigError",
    "CorrectionConfig",
    "CorrectionReport",
    "correct_boxes",
    "mine_labels",
    "correct_targets",
]

DISTANCE_IOU = "iou"
DISTANCE_GIOU = "giou"
DISTANCE_CENTER = "center-normalized"
_DISTANCES = (DISTANCE_IOU, DISTANCE_GIOU, DISTANCE_CENTER)


class ConfigError(ValueError):
    """Raised for invalid refinement hyperparameters."""


@dataclass(frozen=True)
class CorrectionConfig:
    """Hyperparameters for box correction and label mining.

    ``distance_limit`` (the assignment radius d) and ``mining_threshold``
    (the confidence cutoff tau) double as switches: ``None`` disables the
    respective stage in :func:`correct_targets`. ``fixed_size`` activates the
    fixed-size variant for point-derived targets: box updates average
    prediction centers only and re-expand to a ``fixed_size`` square.
    """

    distance: str = DISTANCE_IOU
    center_norm: float | None = None
    distance_limit: float | None = None
    temperature: float = 0.2
    mining_threshold: float | None = None
    mining_nms_iou: float = 0.5
    dedup_iou: float = 0.5
    max_iterations: int = 50
    convergence_eps: float = 1e-6
    fixed_size: float | None = None

    def validate(self) -> None:
        if self.distance not in _DISTANCES:
            raise ConfigError(
                f"unknown distance {self.distance!r}; valid: {list(_DISTANCES)}"
            )
        if self.distance == DISTANCE_CENTER and (
            self.center_norm is None or self.center_norm <= 0.0
        ):
            raise ConfigError(
                "center-normalized distance requires a positive center_norm"
            )
        if self.distance_limit is not None and self.distance_limit <= 0.0:
            raise ConfigError(
                f"distance_limit must be positive, got {self.distance_limit}"
            )
        if self.temperature <= 0.0:
            raise ConfigError(f"temperature must be positive, got {self.temperature}")
        if self.mining_threshold is not None and not (
            0.0 < self.mining_threshold <= 1.0
        ):
            raise ConfigError(
                f"mining_threshold must be in (0, 1], got {self.mining_threshold}"
            )
        if not 0.0 <= self.mining_nms_iou <= 1.0:
            raise ConfigError(
                f"mining_nms_iou must be in [0, 1], got {self.mining_nms_iou}"
            )
        if not 0.0 <= self.dedup_iou <= 1.0:
            raise ConfigError(f"dedup_iou must be in [0, 1], got {self.dedup_iou}")
        if self.max_iterations < 1:
            raise ConfigError(
                f"max_iterations must be >= 1, got {self.max_iterations}"
            )
        if self.convergence_eps < 0.0:
            raise ConfigError(
                f"convergence_eps must be >= 0, got {self.convergence_eps}"
            )
        if self.fixed_size is not None and self.fixed_size <= 0.0:
            raise ConfigError(f"fixed_size must be positive, got {self.fixed_size}")

    def distance_fn(self) -> Callable[[Box, Box], float]:
        if self.distance == DISTANCE_IOU:
            return iou_distance
        if self.distance == DISTANCE_GIOU:
            return giou_distance
        norm = self.center_norm
        if norm is None or norm <= 0.0:
            raise ConfigError(
                "center-normalized distance requires a positive center_norm"
            )
        return lambda a, b: center_distance_normalized(a, b, norm)


@dataclass
class CorrectionReport:
    """Per-image refinement diagnostics.

    ``assignment_sizes`` lists, in input target order, how many predictions
    backed each target's final box; zero means the target was left alone.
    """

    iterations: int = 0
    converged: bool = True
    assignment_sizes: list[int] = field(default_factory=list)
    mined: int = 0


def _softmax(xs: Sequence[float]) -> list[float]:
    m = max(xs)
    exps = [math.exp(x - m) for x in xs]
    total = sum(exps)
    return [e / total for e in exps]


def _square_about(center: tuple[float, float], side: float) -> Box:
    cx, cy = center
    half = side / 2.0
    return Box(cx - half, cy - half, cx + half, cy + half)


def _correct_class(
    originals: list[Box],
    preds: list[Detection],
    delta: Callable[[Box, Box], float],
    cfg: CorrectionConfig,
) -> tuple[list[Box], list[int], int, bool]:
    """Run assignment/update rounds for one class.

    Returns (final boxes, per-target assignment sizes, update rounds used,
    converged flag).
    """
    if cfg.fixed_size is not None:
        current = [_square_about(b.center, cfg.fixed_size) for b in originals]
    else:
        current = list(originals)
    # eligibility is pinned to the input boxes, not the moving working boxes
    eligible = [
        [delta(orig, p.box) <= cfg.distance_limit for orig in originals]
        for p in preds
    ]
    prev_assign: list[list[int]] | None = None
    iterations = 0
    converged = False
    while True:
        assign: list[list[int]] = [[] for _ in originals]
        for pi, p in enumerate(preds):
            best = min(
                range(len(current)), key=lambda t: (delta(current[t], p.box), t)
            )
            if eligible[pi][best]:
                assign[best].append(pi)
        if assign == prev_assign:
            converged = True
            break
        if iterations >= cfg.max_iterations:
            break
        moved = 0.0
        new_boxes: list[Box] = []
        for t, box in enumerate(current):
            members = assign[t]
            if not members:
                new_boxes.append(box)
                continue
            weights = _softmax([preds[pi].logit / cfg.temperature for pi in members])
            if cfg.fixed_size is not None:
                cx = sum(w * preds[pi].box.center[0] for w, pi in zip(weights, members))
                cy = sum(w * preds[pi].box.center[1] for w, pi in zip(weights, members))
                nb = _square_about((cx, cy), cfg.fixed_size)
            else:
                nb = Box(
                    sum(w * preds[pi].box.x1 for w, pi in zip(weights, members)),
                    sum(w * preds[pi].box.y1 for w, pi in zip(weights, members)),
                    sum(w * preds[pi].box.x2 for w, pi in zip(weights, members)),
                    sum(w * preds[pi].box.y2 for w, pi in zip(weights, members)),
                )
            moved = max(
                moved,
                abs(nb.x1 - box.x1),
                abs(nb.y1 - box.y1),
                abs(nb.x2 - box.x2),
                abs(nb.y2 - box.y2),
            )
            new_boxes.append(nb)
        iterations += 1
        prev_assign = assign
        current = new_boxes
        if moved < cfg.convergence_eps:
            converged = True
            break
    sizes = [len(members) for members in assign]
    return current, sizes, iterations, converged


def correct_boxes(
    targets: Sequence[Annotation],
    preds: Sequence[Detection],
    cfg: CorrectionConfig,
) -> tuple[list[Annotation], CorrectionReport]:
    """Refine target boxes against model predictions of the same class.

    Targets whose box actually moved come back with ``corrected`` provenance;
    untouched targets are returned as the same objects. With no predictions
    at all the targets are returned unchanged.

    Raises:
        ConfigError: if ``cfg`` is invalid or has no ``distance_limit``.
    """
    cfg.validate()
    if cfg.distance_limit is None:
        raise ConfigError("box correction requires a distance_limit")
    report = CorrectionReport(
        iterations=0, converged=True, assignment_sizes=[0] * len(targets)
    )
    if not targets or not preds:
        return list(targets), report
    delta = cfg.distance_fn()
    out_boxes: list[Box] = [t.box for t in targets]
    if cfg.fixed_size is not None:
        out_boxes = [_square_about(b.center, cfg.fixed_size) for b in out_boxes]
    for label in sorted({t.label for t in targets}):
        idx = [i for i, t in enumerate(targets) if t.label == label]
        cls_preds = [p for p in preds if p.label == label]
        if not cls_preds:
            continue
        boxes, sizes, iters, conv = _correct_class(
            [targets[i].box for i in idx], cls_preds, delta, cfg
        )
        for j, i in enumerate(idx):
            out_boxes[i] = boxes[j]
            report.assignment_sizes[i] = sizes[j]
        report.iterations = max(report.iterations, iters)
        report.converged = report.converged and conv
    out: list[Annotation] = []
    for t, b in zip(targets, out_boxes):
        if b == t.box:
            out.append(t)
        else:
            out.append(replace(t, box=b, provenance=PROVENANCE_CORRECTED))
    return out, report


def mine_labels(
    targets: Sequence[Annotation],
    preds: Sequence[Detection],
    cfg: CorrectionConfig,
) -> list[Annotation]:
    """Append confident, non-duplicate predictions as mined annotations.

    Predictions with probability >= ``mining_threshold`` survive class-wise
    NMS at ``mining_nms_iou``; a survivor is dropped if it overlaps any
    same-class target with IoU strictly above ``dedup_iou``. Input targets
    are always retained, in order, ahead of the mined additions.

    Raises:
        ConfigError: if ``cfg`` is invalid or has no ``mining_threshold``.
    """
    cfg.validate()
    if cfg.mining_threshold is None:
        raise ConfigError("label mining requires a mining_threshold")
    confident = [p for p in preds if p.prob >= cfg.mining_threshold]
    survivors = nms(confident, cfg.mining_nms_iou)
    mined = [
        Annotation(box=p.box, label=p.label, provenance=PROVENANCE_MINED)
        for p in survivors
        if not any(
            t.label == p.label and iou(p.box, t.box) > cfg.dedup_iou for t in targets
        )
    ]
    return list(targets) + mined


def correct_targets(
    targets: Sequence[Annotation],
    preds: Sequence[Detection],
    cfg: CorrectionConfig,
) -> tuple[list[Annotation], CorrectionReport]:
    """Box correction followed by label mining, each stage optional.

    A stage runs only when its switch is set: ``distance_limit`` for box
    correction, ``mining_threshold`` for mining. With both unset the input
    comes back untouched.
    """
    cfg.validate()
    if cfg.distance_limit is not None:
        corrected, report = correct_boxes(targets, preds, cfg)
    else:
        corrected = list(targets)
        report = CorrectionReport(assignment_sizes=[0] * len(targets))
    if cfg.mining_threshold is not None:
        extended = mine_labels(corrected, preds, cfg)
        report.mined = len(extended) - len(corrected)
        corrected = extended
    return corrected, report
