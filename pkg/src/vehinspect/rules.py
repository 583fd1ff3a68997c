"""Manifest comparison, damage gating, verdicts and inspection reports."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from .geometry import is_simple_polygon, polygon_area, polygon_bbox
from .routing import SIDE_CAMERAS, CameraId, UnknownTaskError

DEFAULT_MIN_DAMAGE_SCORE = 0.5
DEFAULT_MIN_AREA_FRACTION = 0.0005


class Verdict(str, enum.Enum):
    PASS = "PASS"
    FAIL = "FAIL"

    def __str__(self) -> str:
        return self.value


class DamageKind(str, enum.Enum):
    SCRATCH = "scratch"
    DENT = "dent"
    PAINT_DEFORMITY = "paint_deformity"


@dataclass(frozen=True)
class DamageInstance:
    camera: CameraId
    kind: DamageKind
    polygon: tuple[tuple[float, float], ...]
    score: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "camera", CameraId.parse(str(self.camera)))
        object.__setattr__(self, "kind", DamageKind(self.kind))
        poly = tuple((float(x), float(y)) for x, y in self.polygon)
        object.__setattr__(self, "polygon", poly)
        if len(poly) < 3:
            raise ValueError("damage polygon needs at least 3 vertices")
        if any(not (0.0 <= c <= 1.0) for pt in poly for c in pt):
            raise ValueError("damage polygon vertices must be normalized to [0, 1]")
        if not is_simple_polygon(poly):
            raise ValueError("damage polygon self-intersects")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"damage score must lie in [0, 1], got {self.score}")
        if not 0.0 < self.area_fraction < 1.0:
            raise ValueError(f"damage area fraction {self.area_fraction} outside (0, 1)")

    @property
    def area_fraction(self) -> float:
        return polygon_area(self.polygon)

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        return polygon_bbox(self.polygon)

    def to_dict(self) -> dict:
        return {
            "camera": self.camera.value,
            "kind": self.kind.value,
            "polygon": [list(p) for p in self.polygon],
            "score": self.score,
            "area_fraction": self.area_fraction,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "DamageInstance":
        return cls(
            camera=str(d["camera"]),
            kind=str(d["kind"]),
            polygon=tuple(tuple(p) for p in d["polygon"]),
            score=float(d["score"]),
        )


def check_damage_views(
    damages: Iterable[DamageInstance], damage_views: Sequence[CameraId] = SIDE_CAMERAS
) -> None:
    allowed = set(damage_views)
    for dmg in damages:
        if dmg.camera not in allowed:
            raise ValueError(f"damage reported from {dmg.camera.value}, not a damage view")


@dataclass(frozen=True)
class Mismatch:
    """A named discrepancy that is not a feature-set difference.

    Covers attribute checks (variant badge text, powertrain, logo alignment)
    and operational failures (manifest missing, capture incomplete).
    """

    kind: str
    expected: Optional[str] = None
    observed: Optional[str] = None

    def to_dict(self) -> dict:
        return {"kind": self.kind, "expected": self.expected, "observed": self.observed}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Mismatch":
        return cls(d["kind"], d.get("expected"), d.get("observed"))


@dataclass(frozen=True)
class Discrepancies:
    missing: frozenset[str] = frozenset()
    extra: frozenset[str] = frozenset()
    mismatches: tuple[Mismatch, ...] = ()

    @property
    def empty(self) -> bool:
        return not (self.missing or self.extra or self.mismatches)


def compute_discrepancies(
    expected: Iterable[str],
    detected: Iterable[str],
    vocabulary: Optional[Iterable[str]] = None,
    mismatches: Sequence[Mismatch] = (),
) -> Discrepancies:
    expected = frozenset(expected)
    detected = frozenset(detected)
    if vocabulary is not None:
        vocab = set(vocabulary)
        for label in sorted(expected | detected):
            if label not in vocab:
                raise UnknownTaskError(label)
    return Discrepancies(expected - detected, detected - expected, tuple(mismatches))


def gate_damages(
    raw: Iterable[DamageInstance],
    min_score: float = DEFAULT_MIN_DAMAGE_SCORE,
    min_area_fraction: float = DEFAULT_MIN_AREA_FRACTION,
) -> list[DamageInstance]:
    if not (0 <= min_score <= 1 and 0 <= min_area_fraction <= 1):
        raise ValueError("damage gate thresholds must lie in [0, 1]")
    return [d for d in raw if d.score > min_score and d.area_fraction >= min_area_fraction]


def decide(discrepancies: Discrepancies, damages: Sequence[DamageInstance]) -> Verdict:
    if discrepancies.empty and not damages:
        return Verdict.PASS
    return Verdict.FAIL


@dataclass(frozen=True)
class InspectionReport:
    vehicle_id: str
    vin: str
    sequence: int
    verdict: Verdict
    missing: tuple[str, ...]
    extra: tuple[str, ...]
    mismatches: tuple[Mismatch, ...]
    damages: tuple[DamageInstance, ...]
    fused_scores: Mapping[str, Optional[float]]
    latency_ms: Mapping[str, float]
    trigger_ms: float = 0.0
    unverified: tuple[str, ...] = ()
    reason: Optional[str] = None

    def rederive_verdict(self) -> Verdict:
        if self.reason is not None:
            return Verdict.FAIL
        disc = Discrepancies(frozenset(self.missing), frozenset(self.extra), self.mismatches)
        return decide(disc, self.damages)

    @property
    def consistent(self) -> bool:
        return self.rederive_verdict() == self.verdict

    @property
    def end_to_end_ms(self) -> float:
        return self.latency_ms.get("end_to_end", 0.0)

    def to_dict(self) -> dict:
        return {
            "vehicle_id": self.vehicle_id,
            "vin": self.vin,
            "sequence": self.sequence,
            "trigger_ms": self.trigger_ms,
            "verdict": self.verdict.value,
            "reason": self.reason,
            "missing": list(self.missing),
            "extra": list(self.extra),
            "mismatches": [m.to_dict() for m in self.mismatches],
            "unverified": list(self.unverified),
            "damages": [d.to_dict() for d in self.damages],
            "fused_scores": dict(self.fused_scores),
            "latency_ms": dict(self.latency_ms),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: Mapping) -> "InspectionReport":
        report = cls(
            vehicle_id=d["vehicle_id"],
            vin=d["vin"],
            sequence=int(d["sequence"]),
            trigger_ms=d.get("trigger_ms", 0.0),
            verdict=Verdict(d["verdict"]),
            reason=d.get("reason"),
            missing=tuple(d.get("missing", ())),
            extra=tuple(d.get("extra", ())),
            mismatches=tuple(Mismatch.from_dict(m) for m in d.get("mismatches", ())),
            unverified=tuple(d.get("unverified", ())),
            damages=tuple(DamageInstance.from_dict(x) for x in d.get("damages", ())),
            fused_scores=dict(d.get("fused_scores", {})),
            latency_ms=dict(d.get("latency_ms", {})),
        )
        if not report.consistent:
            raise ValueError(
                f"report for {report.vehicle_id} claims {report.verdict} but its fields imply "
                f"{report.rederive_verdict()}"
            )
        return report

    @classmethod
    def from_json(cls, text: str) -> "InspectionReport":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class VehicleContext:
    vehicle_id: str
    vin: str
    sequence: int = 0
    trigger_ms: float = 0.0


def build_report(
    context: VehicleContext,
    fused_scores: Mapping[str, Optional[float]],
    discrepancies: Discrepancies,
    damages: Sequence[DamageInstance],
    latencies: Mapping[str, float],
    unverified: Iterable[str] = (),
    reason: Optional[str] = None,
) -> InspectionReport:
    verdict = Verdict.FAIL if reason is not None else decide(discrepancies, damages)
    return InspectionReport(
        vehicle_id=context.vehicle_id,
        vin=context.vin,
        sequence=context.sequence,
        trigger_ms=context.trigger_ms,
        verdict=verdict,
        reason=reason,
        missing=tuple(sorted(discrepancies.missing)),
        extra=tuple(sorted(discrepancies.extra)),
        mismatches=tuple(discrepancies.mismatches),
        unverified=tuple(sorted(set(unverified))),
        damages=tuple(damages),
        fused_scores={t: fused_scores[t] for t in sorted(fused_scores)},
        latency_ms=dict(latencies),
    )


def render_text(report: InspectionReport) -> str:
    """Aligned plain-text rendering for operators."""
    rows = [
        ("vehicle", report.vehicle_id),
        ("vin", report.vin),
        ("sequence", str(report.sequence)),
        ("verdict", report.verdict.value),
    ]
    if report.reason:
        rows.append(("reason", report.reason))
    rows.append(("missing", ", ".join(report.missing) or "-"))
    rows.append(("extra", ", ".join(report.extra) or "-"))
    for m in report.mismatches:
        rows.append((f"mismatch:{m.kind}", f"expected {m.expected!s}, observed {m.observed!s}"))
    if report.unverified:
        rows.append(("unverified", ", ".join(report.unverified)))
    rows.append(("damages", str(len(report.damages))))
    for d in report.damages:
        rows.append(
            (f"  {d.camera.value}", f"{d.kind.value} score={d.score:.3f} area={d.area_fraction:.5f}")
        )
    for task, s in report.fused_scores.items():
        rows.append((f"score:{task}", "not seen" if s is None else f"{s:.3f}"))
    for stage, ms in report.latency_ms.items():
        rows.append((f"latency:{stage}", f"{ms:.1f} ms"))
    width = max(len(k) for k, _ in rows)
    return "\n".join(f"{k.ljust(width)}  {v}" for k, v in rows) + "\n"
