"""Per-vehicle evidence files and the perception backend contract.

An evidence file is one JSON object::

    {"vehicle_id": "V00001", "vin": "...", "trigger_ms": 0.0,
     "resolution": [3840, 2160],
     "frames": ["T1", ...],                      # captured cameras, default all 11
     "detections": [{"camera": "T2", "task": "antenna",
                     "bbox": [x, y, w, h], "score": 0.93}, ...],
     "damages": [{"camera": "L2", "kind": "scratch",
                  "polygon": [[x, y], ...], "score": 0.8}, ...],
     "powertrain": "EV",                         # optional classifier output
     "variant_text": "ZX PLUS",                  # optional OCR output
     "logo": {"angle_deg": 0.4, "eccentricity": 0.8, "reliable": true}}

Coordinates are normalized to [0, 1]; ``resolution`` records the native
frame size for traceability only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Protocol, Sequence

from .fusion import Detection
from .orientation import OrientationEstimate
from .routing import ALL_CAMERAS, CameraId
from .rules import DamageInstance

NATIVE_RESOLUTION = (3840, 2160)


class EvidenceError(ValueError):
    def __init__(self, msg: str, line: Optional[int] = None):
        super().__init__(msg if line is None else f"line {line}: {msg}")
        self.line = line


@dataclass(frozen=True)
class Evidence:
    vehicle_id: str
    vin: str
    detections: tuple[Detection, ...] = ()
    damages: tuple[DamageInstance, ...] = ()
    frames: tuple[CameraId, ...] = ALL_CAMERAS
    trigger_ms: float = 0.0
    resolution: tuple[int, int] = NATIVE_RESOLUTION
    powertrain: Optional[str] = None
    variant_text: Optional[str] = None
    logo: Optional[OrientationEstimate] = None

    def to_dict(self) -> dict:
        return {
            "vehicle_id": self.vehicle_id,
            "vin": self.vin,
            "trigger_ms": self.trigger_ms,
            "resolution": list(self.resolution),
            "frames": [c.value for c in self.frames],
            "detections": [d.to_dict() for d in self.detections],
            "damages": [d.to_dict() for d in self.damages],
            "powertrain": self.powertrain,
            "variant_text": self.variant_text,
            "logo": None if self.logo is None else self.logo.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: Mapping) -> "Evidence":
        for key in ("vehicle_id", "vin"):
            if key not in d:
                raise EvidenceError(f"evidence lacks {key!r}")
        logo = d.get("logo")
        try:
            return cls(
                vehicle_id=str(d["vehicle_id"]),
                vin=str(d["vin"]),
                trigger_ms=float(d.get("trigger_ms", 0.0)),
                resolution=tuple(d.get("resolution", NATIVE_RESOLUTION)),
                frames=tuple(CameraId.parse(str(c)) for c in d.get("frames", [c.value for c in ALL_CAMERAS])),
                detections=tuple(Detection.from_dict(x) for x in d.get("detections", ())),
                damages=tuple(DamageInstance.from_dict(x) for x in d.get("damages", ())),
                powertrain=d.get("powertrain"),
                variant_text=d.get("variant_text"),
                logo=None if logo is None else OrientationEstimate.from_dict(logo),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise EvidenceError(f"invalid evidence for {d.get('vehicle_id')!r}: {exc}") from None


def parse_evidence(text: str) -> Evidence:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise EvidenceError(f"{exc.msg} (column {exc.colno})", line=exc.lineno) from None
    if not isinstance(data, dict):
        raise EvidenceError("evidence file must hold a JSON object", line=1)
    return Evidence.from_dict(data)


def load_evidence(path: str | Path) -> Evidence:
    return parse_evidence(Path(path).read_text(encoding="utf-8"))


class PerceptionBackend(Protocol):
    """What the engine asks of a perception implementation, one camera frame at a time.

    Synthetic stubs and real model wrappers both satisfy this; the engine
    never looks behind it.
    """

    def detect(self, camera: CameraId, tasks: Sequence[str]) -> list[Detection]: ...

    def segment(self, camera: CameraId) -> list[DamageInstance]: ...

    def classify_powertrain(self, camera: CameraId) -> Optional[str]: ...

    def read_variant(self, camera: CameraId) -> Optional[str]: ...

    def logo_orientation(self, camera: CameraId) -> Optional[OrientationEstimate]: ...


@dataclass
class EvidenceBackend:
    """Replays a recorded or synthesized :class:`Evidence` record."""

    evidence: Evidence
    _by_camera: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self) -> None:
        for det in self.evidence.detections:
            self._by_camera.setdefault(det.camera, []).append(det)

    def detect(self, camera: CameraId, tasks: Sequence[str]) -> list[Detection]:
        wanted = set(tasks)
        return [d for d in self._by_camera.get(camera, ()) if d.task in wanted]

    def segment(self, camera: CameraId) -> list[DamageInstance]:
        return [d for d in self.evidence.damages if d.camera == camera]

    def classify_powertrain(self, camera: CameraId) -> Optional[str]:
        return self.evidence.powertrain

    def read_variant(self, camera: CameraId) -> Optional[str]:
        return self.evidence.variant_text

    def logo_orientation(self, camera: CameraId) -> Optional[OrientationEstimate]:
        return self.evidence.logo


def write_jsonl(path: str | Path, lines: Iterable[str]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for line in lines:
            fh.write(line)
            fh.write("\n")
