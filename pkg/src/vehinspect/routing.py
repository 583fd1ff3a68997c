"""Camera identities and the task-to-view assignment table."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import yaml


class CameraId(str, enum.Enum):
    T1 = "T1"
    T2 = "T2"
    T3 = "T3"
    L1 = "L1"
    L2 = "L2"
    L3 = "L3"
    L4 = "L4"
    R1 = "R1"
    R2 = "R2"
    R3 = "R3"
    R4 = "R4"

    @classmethod
    def parse(cls, label: str) -> "CameraId":
        try:
            return cls(label)
        except ValueError:
            raise ValueError(f"unknown camera id {label!r}") from None

    def __str__(self) -> str:
        return self.value


ALL_CAMERAS: tuple[CameraId, ...] = tuple(CameraId)
SIDE_CAMERAS: tuple[CameraId, ...] = tuple(c for c in CameraId if c.value[0] in "LR")

DEFAULT_VOCABULARY: tuple[str, ...] = (
    "logo",
    "mascot",
    "front_grille",
    "antenna",
    "roof_rails",
    "rear_wiper",
    "wheel_type",
    "damage",
)
DEFAULT_DAMAGE_TASK = "damage"


class UnknownTaskError(KeyError):
    def __init__(self, task: str):
        super().__init__(task)
        self.task = task

    def __str__(self) -> str:
        return f"unknown task {self.task!r}"


class RoutingError(ValueError):
    """Raised when a routing config fails validation."""

    def __init__(self, violations: Sequence["Violation"]):
        self.violations = list(violations)
        lines = "; ".join(v.message for v in self.violations)
        super().__init__(f"invalid routing table: {lines}")


@dataclass(frozen=True)
class Violation:
    kind: str  # unknown_camera | duplicate_camera | unassigned_checklist_task | unknown_task
    task: str
    camera: str | None = None

    @property
    def message(self) -> str:
        if self.kind == "unknown_camera":
            return f"task {self.task!r} references unknown camera {self.camera!r}"
        if self.kind == "duplicate_camera":
            return f"task {self.task!r} lists camera {self.camera!r} more than once"
        if self.kind == "unassigned_checklist_task":
            return f"checklist task {self.task!r} has no view assignment"
        return f"task {self.task!r} is not in the vocabulary"


@dataclass(frozen=True)
class Coverage:
    fraction: Fraction
    covered: tuple[str, ...]
    total: int = 0

    @property
    def ratio_text(self) -> str:
        """Unreduced "covered/total", e.g. 7/7 rather than 1/1."""
        if self.total:
            return f"{len(self.covered)}/{self.total}"
        return f"{self.fraction.numerator}/{self.fraction.denominator}"

    @property
    def percent(self) -> float:
        return float(self.fraction * 100)

    def percent_text(self, digits: int = 1) -> str:
        return f"{self.percent:.{digits}f}"

    def __str__(self) -> str:
        return f"{self.ratio_text} -> {self.percent_text()}%"


@dataclass(frozen=True)
class RoutingTable:
    """Task -> ordered camera views, plus the variant checklist.

    The table keeps raw labels so that malformed configs can still be
    inspected with :func:`validate_table`; :func:`load_routing` refuses to
    return an invalid one.
    """

    assignments: Mapping[str, tuple[str, ...]]
    checklist: tuple[str, ...] = ()
    vocabulary: tuple[str, ...] = DEFAULT_VOCABULARY
    damage_task: str = DEFAULT_DAMAGE_TASK
    name: str = ""
    _inverse: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "assignments", {t: tuple(vs) for t, vs in self.assignments.items()}
        )
        object.__setattr__(self, "checklist", tuple(self.checklist))
        object.__setattr__(self, "vocabulary", tuple(self.vocabulary))
        inverse: dict[str, list[str]] = {}
        for task, views in self.assignments.items():
            for v in dict.fromkeys(views):
                inverse.setdefault(v, []).append(task)
        object.__setattr__(self, "_inverse", {v: tuple(ts) for v, ts in inverse.items()})

    @property
    def tasks(self) -> tuple[str, ...]:
        return tuple(self.assignments)

    @property
    def feature_tasks(self) -> tuple[str, ...]:
        """Assigned tasks that are variant features (everything but damage)."""
        return tuple(t for t in self.assignments if t != self.damage_task)

    def damage_views(self) -> tuple[CameraId, ...]:
        if self.damage_task not in self.assignments:
            return ()
        return views_for_task(self, self.damage_task)

    def observable_tasks(self, views: Iterable[CameraId | str]) -> tuple[str, ...]:
        active = {str(v) for v in views}
        return tuple(
            t for t, vs in self.assignments.items() if any(v in active for v in vs)
        )


def views_for_task(table: RoutingTable, task: str) -> tuple[CameraId, ...]:
    try:
        views = table.assignments[task]
    except KeyError:
        raise UnknownTaskError(task) from None
    return tuple(CameraId.parse(v) for v in views)


def tasks_for_view(table: RoutingTable, view: CameraId | str) -> tuple[str, ...]:
    view = CameraId.parse(str(view))
    return table._inverse.get(view.value, ())


def coverage_fraction(table: RoutingTable, views: Iterable[CameraId | str]) -> Coverage:
    """Share of checklist tasks visible from at least one of ``views``."""
    active = {CameraId.parse(str(v)) for v in views}
    if not active:
        raise ValueError("coverage needs at least one view")
    if not table.checklist:
        raise ValueError("routing table has an empty checklist")
    covered = tuple(
        t for t in table.checklist if active.intersection(views_for_task(table, t))
    )
    return Coverage(Fraction(len(covered), len(table.checklist)), covered, len(table.checklist))


def validate_table(table: RoutingTable) -> list[Violation]:
    violations: list[Violation] = []
    valid = {c.value for c in CameraId}
    vocab = set(table.vocabulary)
    for task, views in table.assignments.items():
        if task not in vocab:
            violations.append(Violation("unknown_task", task))
        seen: set[str] = set()
        for v in views:
            if v not in valid:
                violations.append(Violation("unknown_camera", task, v))
            elif v in seen:
                violations.append(Violation("duplicate_camera", task, v))
            seen.add(v)
    for task in table.checklist:
        if not table.assignments.get(task):
            violations.append(Violation("unassigned_checklist_task", task))
    return violations


def _check_vocabulary(vocabulary: Sequence[str]) -> None:
    if not vocabulary:
        raise ValueError("task vocabulary must not be empty")
    if len(set(vocabulary)) != len(vocabulary):
        raise ValueError("task vocabulary labels must be unique")
    for label in vocabulary:
        if not isinstance(label, str) or not label:
            raise ValueError(f"bad task label {label!r}")


def table_from_dict(data: Mapping, name: str = "") -> RoutingTable:
    vocabulary = tuple(data.get("vocabulary") or DEFAULT_VOCABULARY)
    _check_vocabulary(vocabulary)
    raw = data.get("assignments") or {}
    assignments = {str(t): tuple(str(v) for v in (vs or ())) for t, vs in raw.items()}
    return RoutingTable(
        assignments=assignments,
        checklist=tuple(str(t) for t in data.get("checklist") or ()),
        vocabulary=vocabulary,
        damage_task=str(data.get("damage_task", DEFAULT_DAMAGE_TASK)),
        name=name,
    )


def load_routing(path: str | Path) -> RoutingTable:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or {}
    table = table_from_dict(data, name=path.name)
    problems = validate_table(table)
    if problems:
        raise RoutingError(problems)
    return table


def table_to_dict(table: RoutingTable) -> dict:
    return {
        "vocabulary": list(table.vocabulary),
        "damage_task": table.damage_task,
        "assignments": {t: list(vs) for t, vs in table.assignments.items()},
        "checklist": list(table.checklist),
    }
