"""Detection, segmentation and system-level evaluation.

Conventions:

* Matching is greedy in descending score order (stable for ties); each
  prediction takes the unmatched same-class, same-image ground truth with
  the highest IoU, and counts as TP when that IoU reaches the threshold.
* Precision is 0 when there are no predictions; F1 is 0 when P + R = 0.
* AP is the all-point interpolated area: precision is replaced by its
  running maximum from the right, then summed over each recall step.
  mAP averages AP over classes present in the ground truth.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .fusion import BBox
from .geometry import rasterize_polygon
from .rules import DamageInstance, Verdict

log = logging.getLogger(__name__)

DEFAULT_RASTER = (512, 512)


def _as_xywh(box) -> tuple[float, float, float, float]:
    if isinstance(box, BBox):
        return box.x, box.y, box.w, box.h
    x, y, w, h = box
    return float(x), float(y), float(w), float(h)


def iou_box(a, b) -> float:
    ax, ay, aw, ah = _as_xywh(a)
    bx, by, bw, bh = _as_xywh(b)
    iw = min(ax + aw, bx + bw) - max(ax, bx)
    ih = min(ay + ah, by + bh) - max(ay, by)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    # rounding in the corner arithmetic can push identical boxes past 1
    return min(1.0, inter / (aw * ah + bw * bh - inter))


@dataclass(frozen=True)
class LabeledBox:
    cls: str
    bbox: BBox
    score: Optional[float] = None
    image: str = ""

    def to_dict(self) -> dict:
        d = {"image": self.image, "class": self.cls, "bbox": self.bbox.as_list()}
        if self.score is not None:
            d["score"] = self.score
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "LabeledBox":
        score = d.get("score")
        return cls(str(d["class"]), BBox.from_list(d["bbox"]), None if score is None else float(score), str(d.get("image", "")))


@dataclass(frozen=True)
class MatchResult:
    tp: int
    fp: int
    fn: int

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0


def _ranked(preds: Sequence[LabeledBox]) -> list[LabeledBox]:
    return sorted(preds, key=lambda p: -(p.score or 0.0))


def greedy_match(
    preds: Sequence[LabeledBox], gts: Sequence[LabeledBox], iou_thresh: float = 0.5
) -> tuple[list[LabeledBox], list[bool]]:
    """Score-ranked predictions and a TP flag for each."""
    if not 0 < iou_thresh <= 1:
        raise ValueError("IoU threshold must lie in (0, 1]")
    ranked = _ranked(preds)
    used = [False] * len(gts)
    flags = []
    for p in ranked:
        best, best_iou = -1, -1.0
        for j, g in enumerate(gts):
            if used[j] or g.cls != p.cls or g.image != p.image:
                continue
            iou = iou_box(p.bbox, g.bbox)
            if iou > best_iou:
                best, best_iou = j, iou
        hit = best >= 0 and best_iou >= iou_thresh
        if hit:
            used[best] = True
        flags.append(hit)
    return ranked, flags


def match_and_score(
    preds: Sequence[LabeledBox], gts: Sequence[LabeledBox], iou_thresh: float = 0.5
) -> MatchResult:
    _, flags = greedy_match(preds, gts, iou_thresh)
    tp = sum(flags)
    return MatchResult(tp, len(flags) - tp, len(gts) - tp)


def average_precision(
    preds: Sequence[LabeledBox], gts: Sequence[LabeledBox], iou_thresh: float = 0.5
) -> float:
    """Single-class AP; callers filter by class first."""
    if not gts:
        return 0.0
    ranked, flags = greedy_match(preds, gts, iou_thresh)
    if not ranked:
        return 0.0
    tp = np.cumsum(np.array(flags, dtype=np.int64))
    fp = np.cumsum(~np.array(flags, dtype=bool))
    precision = tp / (tp + fp)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    n_gt = len(gts)
    return math.fsum(float(envelope[k]) / n_gt for k in range(len(flags)) if flags[k])


def average_precision_at_50(preds: Sequence[LabeledBox], gts: Sequence[LabeledBox]) -> float:
    return average_precision(preds, gts, 0.5)


def per_class_ap(
    preds: Sequence[LabeledBox], gts: Sequence[LabeledBox], iou_thresh: float = 0.5
) -> dict[str, float]:
    classes = sorted({g.cls for g in gts})
    return {
        c: average_precision([p for p in preds if p.cls == c], [g for g in gts if g.cls == c], iou_thresh)
        for c in classes
    }


def mean_average_precision(
    preds: Sequence[LabeledBox], gts: Sequence[LabeledBox], iou_thresh: float = 0.5
) -> float:
    aps = per_class_ap(preds, gts, iou_thresh)
    return math.fsum(aps.values()) / len(aps) if aps else 0.0


def optimal_tp(preds: Sequence[LabeledBox], gts: Sequence[LabeledBox], iou_thresh: float = 0.5) -> int:
    """Maximum-cardinality matching by exhaustive search; for small cross-checks only."""
    edges = [
        [j for j, g in enumerate(gts) if g.cls == p.cls and g.image == p.image and iou_box(p.bbox, g.bbox) >= iou_thresh]
        for p in preds
    ]

    def best(i: int, used: frozenset) -> int:
        if i == len(edges):
            return 0
        result = best(i + 1, used)
        for j in edges[i]:
            if j not in used:
                result = max(result, 1 + best(i + 1, used | {j}))
        return result

    return best(0, frozenset())


@dataclass(frozen=True, eq=False)
class RasterMask:
    cls: str
    bits: np.ndarray
    image: str = ""

    def __post_init__(self) -> None:
        bits = np.asarray(self.bits, dtype=bool)
        if bits.ndim != 2:
            raise ValueError("raster mask must be 2-D")
        object.__setattr__(self, "bits", bits)

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @classmethod
    def from_damage(cls, damage: DamageInstance, size=DEFAULT_RASTER, image: str = "") -> "RasterMask":
        w, h = size
        return cls(damage.kind.value, rasterize_polygon(damage.polygon, w, h), image)


def mean_iou(preds: Sequence[RasterMask], gts: Sequence[RasterMask]) -> float:
    """Per-class pixel IoU over the union of instances per image, averaged over classes.

    Classes whose prediction and ground-truth unions are both empty are
    skipped; if every class is skipped the masks agree trivially and the
    result is 1.0.
    """
    shapes = {m.bits.shape for m in (*preds, *gts)}
    if len(shapes) > 1:
        raise ValueError(f"raster dimensions differ: {sorted(shapes)}")
    unions: dict[tuple[str, str], list[np.ndarray]] = {}
    for side, masks in ((0, preds), (1, gts)):
        for m in masks:
            slot = unions.setdefault((m.cls, m.image), [None, None])
            slot[side] = m.bits if slot[side] is None else (slot[side] | m.bits)
    inter: dict[str, int] = {}
    union: dict[str, int] = {}
    for (c, _), (p, g) in sorted(unions.items()):
        shape = (p if p is not None else g).shape
        p = p if p is not None else np.zeros(shape, dtype=bool)
        g = g if g is not None else np.zeros(shape, dtype=bool)
        inter[c] = inter.get(c, 0) + int(np.count_nonzero(p & g))
        union[c] = union.get(c, 0) + int(np.count_nonzero(p | g))
    ious = [inter[c] / union[c] for c in sorted(union) if union[c] > 0]
    return math.fsum(ious) / len(ious) if ious else 1.0


@dataclass(frozen=True)
class VerdictPair:
    predicted: Verdict
    truth: Verdict


def system_accuracy(pairs: Sequence[VerdictPair]) -> float:
    if not pairs:
        raise ValueError("system accuracy needs at least one vehicle")
    return sum(p.predicted == p.truth for p in pairs) / len(pairs)


def match_damages(reported: Sequence[DamageInstance], truth: Sequence[DamageInstance], iou_thresh: float = 0.5) -> int:
    """Count true damages recovered by a same-camera, same-kind report with bbox IoU >= threshold."""
    used = [False] * len(reported)
    found = 0
    for t in truth:
        best, best_iou = -1, -1.0
        for i, r in enumerate(reported):
            if used[i] or r.camera != t.camera or r.kind != t.kind:
                continue
            iou = iou_box(r.bbox, t.bbox)
            if iou > best_iou:
                best, best_iou = i, iou
        if best >= 0 and best_iou >= iou_thresh:
            used[best] = True
            found += 1
    return found


def defect_recall(pairs: Iterable[tuple[Sequence[DamageInstance], Sequence[DamageInstance]]]) -> Optional[float]:
    """(reported, true) damage lists per vehicle -> recall; None with no true damage."""
    found = total = 0
    for reported, truth in pairs:
        found += match_damages(reported, truth)
        total += len(truth)
    return found / total if total else None


ABLATION_COLUMNS = ("mode", "feature_coverage_pct", "defect_detection_pct", "latency_ms", "verification_accuracy_pct")


@dataclass(frozen=True)
class ModeRun:
    """Outcome of one ablation mode, as needed for its table row."""

    mode: str
    population_fingerprint: str
    seed: int
    coverage: "object"  # routing.Coverage
    defect_recall: Optional[float]
    mean_latency_ms: float
    accuracy: float


@dataclass(frozen=True)
class AblationRow:
    mode: str
    coverage_fraction: str
    feature_coverage_pct: float
    defect_detection_pct: Optional[float]
    latency_ms: float
    verification_accuracy_pct: float


class ModeMismatchError(ValueError):
    pass


def ablation_table(runs: Sequence[ModeRun], order: Sequence[str] = ()) -> list[AblationRow]:
    if not runs:
        return []
    ref = runs[0]
    for r in runs[1:]:
        if (r.population_fingerprint, r.seed) != (ref.population_fingerprint, ref.seed):
            raise ModeMismatchError(
                f"mode {r.mode} ran on a different population/seed than mode {ref.mode}"
            )
    rank = {m: i for i, m in enumerate(order)}
    rows = []
    for r in sorted(runs, key=lambda r: rank.get(r.mode, len(rank))):
        frac = r.coverage.fraction
        rows.append(
            AblationRow(
                mode=r.mode,
                coverage_fraction=r.coverage.ratio_text,
                feature_coverage_pct=round(float(frac) * 100, 1),
                defect_detection_pct=None if r.defect_recall is None else round(r.defect_recall * 100, 1),
                latency_ms=round(r.mean_latency_ms, 1),
                verification_accuracy_pct=round(r.accuracy * 100, 1),
            )
        )
    return rows


def format_ablation(rows: Sequence[AblationRow], fmt: str = "text") -> str:
    if fmt == "csv":
        lines = [",".join(ABLATION_COLUMNS)]
        for r in rows:
            dd = "" if r.defect_detection_pct is None else f"{r.defect_detection_pct:.1f}"
            lines.append(
                f"{r.mode},{r.feature_coverage_pct:.1f},{dd},{r.latency_ms:.1f},{r.verification_accuracy_pct:.1f}"
            )
        return "\n".join(lines) + "\n"
    header = ("Case", "Feat. Cov. (%)", "Def. Det. (%)", "Lat (ms)", "VA (%)")
    body = [
        (
            r.mode,
            f"{r.coverage_fraction} -> {r.feature_coverage_pct:.1f}",
            "n/a" if r.defect_detection_pct is None else f"{r.defect_detection_pct:.1f}",
            f"{r.latency_ms:.1f}",
            f"{r.verification_accuracy_pct:.1f}",
        )
        for r in rows
    ]
    widths = [max(len(row[i]) for row in (header, *body)) for i in range(len(header))]
    fmt_row = lambda row: "  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()
    return "\n".join([fmt_row(header), fmt_row(tuple("-" * w for w in widths)), *map(fmt_row, body)]) + "\n"
