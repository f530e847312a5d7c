"""Axis-aligned box arithmetic: overlap distances, suppression, geometric transforms.

Boxes live in continuous pixel coordinates with the origin at the top-left
corner, x growing right and y growing down. A box is the closed rectangle
[x1, x2] x [y1, y2]; zero-width or zero-height boxes are legal and have zero
area.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

if TYPE_CHECKING:
    from .datamodel import Detection

__all__ = [
    "Box",
    "GeoTransform",
    "iou",
    "iou_distance",
    "giou_distance",
    "center_distance_normalized",
    "nms",
    "apply_transform",
    "apply_transforms",
    "invert_transforms",
]


@dataclass(frozen=True)
class Box:
    """Axis-aligned rectangle with corners (x1, y1) top-left, (x2, y2) bottom-right."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self) -> None:
        if not (self.x1 <= self.x2 and self.y1 <= self.y2):
            raise ValueError(
                f"box corners not canonical: ({self.x1}, {self.y1}, {self.x2}, {self.y2})"
            )

    @classmethod
    def spanning(cls, xa: float, ya: float, xb: float, yb: float) -> "Box":
        """Box covering two corner points given in any order."""
        return cls(min(xa, xb), min(ya, yb), max(xa, xb), max(ya, yb))

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)

    def clip(self, width: float, height: float) -> "Box":
        """Clip to the image rectangle [0, width] x [0, height]."""
        return Box(
            min(max(self.x1, 0.0), width),
            min(max(self.y1, 0.0), height),
            min(max(self.x2, 0.0), width),
            min(max(self.y2, 0.0), height),
        )

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two boxes; 0.0 when the union has zero area."""
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def iou_distance(a: Box, b: Box) -> float:
    """1 - IoU, in [0, 1]."""
    return 1.0 - iou(a, b)


def giou_distance(a: Box, b: Box) -> float:
    """1 - GIoU, in [0, 2].

    GIoU subtracts from IoU the fraction of the smallest enclosing box not
    covered by the union, so disjoint boxes are penalised by how far apart
    they sit. When one box contains the other the hull equals the union and
    the value coincides with ``iou_distance``.
    """
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    inter = iw * ih if (iw > 0.0 and ih > 0.0) else 0.0
    union = a.area + b.area - inter
    hull = (max(a.x2, b.x2) - min(a.x1, b.x1)) * (max(a.y2, b.y2) - min(a.y1, b.y1))
    if union <= 0.0 or hull <= 0.0:
        # both boxes degenerate: no overlap signal, no hull to penalise with
        return 1.0
    giou = inter / union - (hull - union) / hull
    return 1.0 - giou


def center_distance_normalized(a: Box, b: Box, norm: float) -> float:
    """Euclidean distance between box centers divided by ``norm``.

    Args:
        a, b: boxes to compare.
        norm: positive length scale, typically the nominal object size.

    Raises:
        ValueError: if ``norm`` is not strictly positive.
    """
    if norm <= 0.0:
        raise ValueError(f"norm must be positive, got {norm}")
    (ax, ay), (bx, by) = a.center, b.center
    return math.hypot(ax - bx, ay - by) / norm


def nms(dets: Sequence["Detection"], iou_threshold: float) -> list["Detection"]:
    """Class-wise greedy non-maximum suppression.

    Detections are visited in descending probability (ties keep input order);
    one survives iff its IoU with every already-kept detection of the same
    class is at or below ``iou_threshold``. Returns survivors in visit order,
    so the output is sorted by descending probability.
    """
    if not 0.0 <= iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold must be in [0, 1], got {iou_threshold}")
    order = sorted(range(len(dets)), key=lambda i: -dets[i].prob)
    kept: list["Detection"] = []
    for i in order:
        d = dets[i]
        if all(
            k.label != d.label or iou(k.box, d.box) <= iou_threshold for k in kept
        ):
            kept.append(d)
    return kept


_TRANSFORM_KINDS = ("hflip", "vflip", "scale")


@dataclass(frozen=True)
class GeoTransform:
    """Invertible box-level transform: horizontal flip, vertical flip, or axis scaling.

    ``params`` holds (width,) for hflip, (height,) for vflip and (sx, sy)
    for scale. Flips are their own inverse; scaling inverts to reciprocal
    factors, so zero factors are rejected.
    """

    kind: str
    params: tuple[float, ...]

    def __post_init__(self) -> None:
        if self.kind not in _TRANSFORM_KINDS:
            raise ValueError(f"unknown transform kind: {self.kind!r}")
        expected = 2 if self.kind == "scale" else 1
        if len(self.params) != expected:
            raise ValueError(
                f"{self.kind} takes {expected} parameter(s), got {len(self.params)}"
            )
        if self.kind == "scale" and (self.params[0] == 0.0 or self.params[1] == 0.0):
            raise ValueError("scale factors must be nonzero")

    @classmethod
    def hflip(cls, width: float) -> "GeoTransform":
        return cls("hflip", (float(width),))

    @classmethod
    def vflip(cls, height: float) -> "GeoTransform":
        return cls("vflip", (float(height),))

    @classmethod
    def scale(cls, sx: float, sy: float) -> "GeoTransform":
        return cls("scale", (float(sx), float(sy)))

    def inverse(self) -> "GeoTransform":
        if self.kind == "scale":
            sx, sy = self.params
            return GeoTransform.scale(1.0 / sx, 1.0 / sy)
        return self


def apply_transform(t: GeoTransform, b: Box) -> Box:
    """Transformed copy of ``b``; corners are re-canonicalised after mapping."""
    if t.kind == "hflip":
        (w,) = t.params
        return Box(w - b.x2, b.y1, w - b.x1, b.y2)
    if t.kind == "vflip":
        (h,) = t.params
        return Box(b.x1, h - b.y2, b.x2, h - b.y1)
    sx, sy = t.params
    return Box.spanning(b.x1 * sx, b.y1 * sy, b.x2 * sx, b.y2 * sy)


def apply_transforms(ts: Sequence[GeoTransform], b: Box) -> Box:
    """Apply a sequence of transforms left to right."""
    for t in ts:
        b = apply_transform(t, b)
    return b


def invert_transforms(ts: Sequence[GeoTransform]) -> list[GeoTransform]:
    """Inverse of a transform sequence: reversed order, each element inverted."""
    return [t.inverse() for t in reversed(ts)]
