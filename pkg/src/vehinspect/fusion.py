"""View-aware max-pool fusion of per-camera detection scores."""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional

import yaml

from .routing import CameraId, RoutingTable, UnknownTaskError, views_for_task

log = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.5


def _check_unit(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value!r}")


@dataclass(frozen=True)
class BBox:
    """Normalized (x, y, w, h) rectangle, top-left origin."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box needs positive size, got w={self.w}, h={self.h}")
        if self.x < 0 or self.y < 0 or self.x + self.w > 1 + 1e-12 or self.y + self.h > 1 + 1e-12:
            raise ValueError(f"box {self.as_list()} leaves the unit square")

    @classmethod
    def from_list(cls, values) -> "BBox":
        if len(values) != 4:
            raise ValueError(f"bbox needs 4 numbers, got {len(values)}")
        return cls(*(float(v) for v in values))

    def as_list(self) -> list[float]:
        return [self.x, self.y, self.w, self.h]

    @property
    def area(self) -> float:
        return self.w * self.h


@dataclass(frozen=True)
class Detection:
    camera: CameraId
    task: str
    bbox: BBox
    score: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "camera", CameraId.parse(str(self.camera)))
        _check_unit("score", self.score)

    def to_dict(self) -> dict:
        return {
            "camera": self.camera.value,
            "task": self.task,
            "bbox": self.bbox.as_list(),
            "score": self.score,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Detection":
        return cls(
            camera=CameraId.parse(str(d["camera"])),
            task=str(d["task"]),
            bbox=BBox.from_list(d["bbox"]),
            score=float(d["score"]),
        )


class EvidencePool:
    """Detections keyed by (task, camera) for one vehicle.

    Insertion enforces routing: a detection from a camera outside the task's
    assigned views is dropped and logged. Call :meth:`seal` once the vehicle's
    evidence is complete; a sealed pool is read-only.
    """

    def __init__(self, routing: RoutingTable, detections: Iterable[Detection] = ()):
        self.routing = routing
        self._by_key: dict[tuple[str, CameraId], list[Detection]] = {}
        self.rejected: list[Detection] = []
        self._sealed = False
        for det in detections:
            self.add(det)

    def add(self, det: Detection) -> bool:
        if self._sealed:
            raise RuntimeError("evidence pool is sealed")
        views = self.routing.assignments.get(det.task)
        if views is None or det.camera.value not in views:
            log.warning(
                "rejecting %s detection from %s: camera not routed to task",
                det.task,
                det.camera.value,
            )
            self.rejected.append(det)
            return False
        self._by_key.setdefault((det.task, det.camera), []).append(det)
        return True

    def seal(self) -> "EvidencePool":
        self._sealed = True
        return self

    @property
    def sealed(self) -> bool:
        return self._sealed

    def detections(self, task: str, camera: CameraId) -> tuple[Detection, ...]:
        return tuple(self._by_key.get((task, camera), ()))

    def __iter__(self):
        for dets in self._by_key.values():
            yield from dets

    def __len__(self) -> int:
        return sum(len(v) for v in self._by_key.values())


@dataclass(frozen=True)
class ThresholdTable:
    per_task: Mapping[str, float] = field(default_factory=dict)
    default: float = DEFAULT_THRESHOLD

    def __post_init__(self) -> None:
        _check_unit("default threshold", self.default)
        for task, tau in self.per_task.items():
            _check_unit(f"threshold for {task}", tau)
        object.__setattr__(self, "per_task", dict(self.per_task))

    def __getitem__(self, task: str) -> float:
        return self.per_task.get(task, self.default)

    @classmethod
    def from_dict(cls, data: Mapping) -> "ThresholdTable":
        return cls(
            per_task={str(k): float(v) for k, v in (data.get("tasks") or {}).items()},
            default=float(data.get("default", DEFAULT_THRESHOLD)),
        )

    def to_dict(self) -> dict:
        return {"default": self.default, "tasks": dict(self.per_task)}


def load_thresholds(path: str | Path) -> ThresholdTable:
    with Path(path).open(encoding="utf-8") as fh:
        return ThresholdTable.from_dict(yaml.safe_load(fh) or {})


FusedScores = dict  # task -> Optional[float]; None means "never seen"


def fuse_task_score(pool: EvidencePool, table: RoutingTable, task: str) -> Optional[float]:
    """Max confidence over every detection of ``task`` from its assigned views.

    Returns None (not 0.0) when no assigned view produced a detection.
    """
    best: Optional[float] = None
    for camera in views_for_task(table, task):
        for det in pool.detections(task, camera):
            if best is None or det.score > best:
                best = det.score
    return best


def detect_features(
    pool: EvidencePool,
    table: RoutingTable,
    thresholds: ThresholdTable,
    tasks: Optional[Iterable[str]] = None,
) -> tuple[FusedScores, frozenset[str]]:
    """Fuse every feature task and keep those whose score strictly exceeds its threshold."""
    tasks = table.feature_tasks if tasks is None else tuple(tasks)
    scores: FusedScores = {}
    detected = set()
    for task in tasks:
        s = fuse_task_score(pool, table, task)
        scores[task] = s
        if s is not None and s > thresholds[task]:
            detected.add(task)
    return scores, frozenset(detected)


class FusionBarrier:
    """Per-task rendezvous: a task may be fused once all its views have reported.

    Each perception call for a camera reports once, even with zero detections,
    so an empty view still releases the barrier. Thread-safe.
    """

    def __init__(self, routing: RoutingTable, active_views: Iterable[CameraId]):
        active = {CameraId.parse(str(v)) for v in active_views}
        self.routing = routing
        self.pool = EvidencePool(routing)
        self._pending: dict[str, set[CameraId]] = {}
        for task in routing.feature_tasks:
            needed = set(views_for_task(routing, task)) & active
            if needed:
                self._pending[task] = needed
        self._cond = threading.Condition()

    @property
    def tasks(self) -> tuple[str, ...]:
        return tuple(self._pending)

    def deliver(self, camera: CameraId, detections: Iterable[Detection]) -> None:
        with self._cond:
            for det in detections:
                if det.camera != camera:
                    raise ValueError(
                        f"detection from {det.camera.value} delivered on behalf of {camera.value}"
                    )
                self.pool.add(det)
            for waiting in self._pending.values():
                waiting.discard(camera)
            self._cond.notify_all()

    def ready(self, task: str) -> bool:
        with self._cond:
            if task not in self._pending:
                raise UnknownTaskError(task)
            return not self._pending[task]

    def outstanding(self) -> dict[str, tuple[CameraId, ...]]:
        with self._cond:
            return {t: tuple(sorted(v)) for t, v in self._pending.items() if v}

    def wait(self, timeout: Optional[float] = None) -> bool:
        with self._cond:
            return self._cond.wait_for(
                lambda: all(not v for v in self._pending.values()), timeout=timeout
            )

    def fuse(self, thresholds: ThresholdTable) -> tuple[FusedScores, frozenset[str]]:
        with self._cond:
            waiting = {t: v for t, v in self._pending.items() if v}
            if waiting:
                raise RuntimeError(f"fusion barrier not released for {sorted(waiting)}")
            self.pool.seal()
            return detect_features(self.pool, self.routing, thresholds, self._pending)
