"""Per-vehicle inspection flow on a virtual clock.

A trigger starts capture; perception stages for the routed views run
(logically) in parallel; fusion waits on the per-task barrier; the rule
engine issues the report. Timing is simulated: every stage is a FIFO
single-server resource, so vehicles pipeline through the line and the
trace is independent of wall-clock speed.
"""

from __future__ import annotations

import heapq
import math
from concurrent.futures import Executor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Optional, Sequence

import numpy as np
import yaml

from .evidence import Evidence, EvidenceBackend, PerceptionBackend
from .fusion import FusionBarrier, ThresholdTable
from .manifest import ManifestDB, UnknownVINError, lookup
from .orientation import DEFAULT_TOLERANCE_DEG, Alignment, check_alignment
from .population import GRILLE_TASK, LOGO_TASK, MASCOT_TASK
from .routing import ALL_CAMERAS, SIDE_CAMERAS, CameraId, RoutingTable, tasks_for_view, views_for_task
from .rules import (
    DEFAULT_MIN_AREA_FRACTION,
    DEFAULT_MIN_DAMAGE_SCORE,
    InspectionReport,
    Mismatch,
    VehicleContext,
    build_report,
    compute_discrepancies,
    gate_damages,
)
from .seeds import derive_seed

CAPTURE = "capture"
FUSION = "fusion"
RULES = "rules"
PERCEPTION_STAGES = ("branding", "variant", "segmentation", "classification", "ocr")
STAGES = (CAPTURE, *PERCEPTION_STAGES, FUSION, RULES)

# Which detector stage handles which feature task.
DETECTION_STAGE = {
    "logo": "branding",
    "mascot": "branding",
    "front_grille": "branding",
    "antenna": "variant",
    "roof_rails": "variant",
    "rear_wiper": "variant",
    "wheel_type": "variant",
}

REASON_MANIFEST_MISSING = "manifest missing"
REASON_CAPTURE_INCOMPLETE = "capture incomplete"


@dataclass(frozen=True)
class StageLatencyModel:
    """Nominal latency per stage plus optional uniform jitter in [0, spread]."""

    stages: Mapping[str, float] = field(default_factory=dict)
    jitter: Mapping[str, float] = field(default_factory=dict)
    composition: str = "parallel"

    def __post_init__(self) -> None:
        for name, ms in {**self.stages, **self.jitter}.items():
            if name not in STAGES:
                raise ValueError(f"unknown stage {name!r}")
            if ms < 0:
                raise ValueError(f"latency for {name} must be non-negative")
        if self.composition not in ("parallel", "serial"):
            raise ValueError("composition must be 'parallel' or 'serial'")
        object.__setattr__(self, "stages", {s: float(self.stages.get(s, 0.0)) for s in STAGES})
        object.__setattr__(self, "jitter", {s: float(v) for s, v in self.jitter.items()})

    def sample(self, rng: Optional[np.random.Generator]) -> dict[str, float]:
        out = dict(self.stages)
        for stage, spread in self.jitter.items():
            if spread > 0 and rng is not None:
                out[stage] += float(rng.uniform(0.0, spread))
        return out

    def without_jitter(self) -> "StageLatencyModel":
        return replace(self, jitter={})

    @classmethod
    def from_dict(cls, d: Mapping, base: Optional["StageLatencyModel"] = None) -> "StageLatencyModel":
        stages = dict(base.stages) if base else {}
        stages.update({k: float(v) for k, v in (d.get("stages") or {}).items()})
        jitter = dict(base.jitter) if base and "jitter" not in d else {}
        jitter.update({k: float(v) for k, v in (d.get("jitter") or {}).items()})
        composition = d.get("composition", base.composition if base else "parallel")
        return cls(stages, jitter, composition)


ZERO_LATENCY = StageLatencyModel()


@dataclass(frozen=True)
class InspectionMode:
    name: str
    views: frozenset[CameraId]
    segmentation: bool = True


MODES: dict[str, InspectionMode] = {
    "T1": InspectionMode("T1", frozenset({CameraId.T1})),
    "T2": InspectionMode("T2", frozenset({CameraId.T2})),
    "T3": InspectionMode("T3", frozenset({CameraId.T3})),
    "Side": InspectionMode("Side", frozenset(SIDE_CAMERAS)),
    "NoSeg": InspectionMode("NoSeg", frozenset(ALL_CAMERAS), segmentation=False),
    "Full": InspectionMode("Full", frozenset(ALL_CAMERAS)),
}
MODE_ORDER = ("T1", "T2", "T3", "Side", "NoSeg", "Full")


def get_mode(name: str) -> InspectionMode:
    try:
        return MODES[name]
    except KeyError:
        raise ValueError(f"unknown mode {name!r}; choose from {', '.join(MODE_ORDER)}") from None


@dataclass(frozen=True)
class LatencyProfile:
    """Base latency model plus per-mode overrides, loaded from one file."""

    base: StageLatencyModel
    modes: Mapping[str, StageLatencyModel] = field(default_factory=dict)

    def for_mode(self, mode: str) -> StageLatencyModel:
        return self.modes.get(mode, self.base)

    @classmethod
    def from_dict(cls, d: Mapping) -> "LatencyProfile":
        base = StageLatencyModel.from_dict(d)
        modes = {}
        for name, override in (d.get("modes") or {}).items():
            get_mode(name)
            modes[name] = StageLatencyModel.from_dict(override or {}, base=base)
        return cls(base, modes)


def load_latency(path: str | Path) -> LatencyProfile:
    with Path(path).open(encoding="utf-8") as fh:
        return LatencyProfile.from_dict(yaml.safe_load(fh) or {})


@dataclass(frozen=True)
class DamageGate:
    min_score: float = DEFAULT_MIN_DAMAGE_SCORE
    min_area_fraction: float = DEFAULT_MIN_AREA_FRACTION


@dataclass(frozen=True)
class PipelineConfig:
    routing: RoutingTable
    thresholds: ThresholdTable
    manifest: ManifestDB
    latency: StageLatencyModel = ZERO_LATENCY
    mode: InspectionMode = MODES["Full"]
    damage_gate: DamageGate = DamageGate()
    alignment_tolerance_deg: float = DEFAULT_TOLERANCE_DEG
    seed: int = 0


@dataclass(frozen=True)
class TriggerEvent:
    sequence: int
    timestamp_ms: float
    vehicle_id: str


@dataclass(frozen=True)
class StageInterval:
    stage: str
    start_ms: float
    end_ms: float


@dataclass(frozen=True)
class VehicleTrace:
    vehicle_id: str
    sequence: int
    trigger_ms: float
    intervals: tuple[StageInterval, ...]
    verdict_ms: float

    @property
    def end_to_end_ms(self) -> float:
        return self.verdict_ms - self.trigger_ms


class StageScheduler:
    """Virtual-time FIFO servers, one per stage."""

    def __init__(self) -> None:
        self.free_at: dict[str, float] = {s: 0.0 for s in STAGES}

    def occupy(self, stage: str, ready_ms: float, duration_ms: float) -> StageInterval:
        start = max(ready_ms, self.free_at[stage])
        end = start + duration_ms
        self.free_at[stage] = end
        return StageInterval(stage, start, end)

    def schedule(
        self,
        trigger_ms: float,
        executed: Sequence[str],
        latencies: Mapping[str, float],
        composition: str = "parallel",
    ) -> list[StageInterval]:
        """Lay out capture -> perception -> fusion -> rules for one vehicle.

        ``executed`` lists the perception stages that had work. Parallel
        composition starts them all at capture end; serial chains them in
        stage order.
        """
        out = [self.occupy(CAPTURE, trigger_ms, latencies[CAPTURE])]
        ready = out[0].end_ms
        perception_end = ready
        for stage in (s for s in PERCEPTION_STAGES if s in executed):
            iv = self.occupy(stage, ready, latencies[stage])
            out.append(iv)
            perception_end = max(perception_end, iv.end_ms)
            if composition == "serial":
                ready = iv.end_ms
        fuse = self.occupy(FUSION, perception_end, latencies[FUSION])
        rules = self.occupy(RULES, fuse.end_ms, latencies[RULES])
        return out + [fuse, rules]


def _plan(config: PipelineConfig) -> dict:
    """Which views each perception job needs under the config's mode."""
    routing, active = config.routing, config.mode.views
    observable = [t for t in routing.feature_tasks if set(views_for_task(routing, t)) & active]
    detect_views = sorted({v for t in observable for v in views_for_task(routing, t) if v in active})

    def active_views(task: str) -> list[CameraId]:
        if task not in routing.assignments:
            return []
        return [v for v in views_for_task(routing, task) if v in active]

    seg_views = [v for v in routing.damage_views() if v in active] if config.mode.segmentation else []
    stages = {DETECTION_STAGE.get(t, "variant") for t in observable}
    grille_views = active_views(GRILLE_TASK)
    mascot_views = active_views(MASCOT_TASK)
    if seg_views:
        stages.add("segmentation")
    if grille_views:
        stages.add("classification")
    if mascot_views:
        stages.add("ocr")
    return {
        "observable": observable,
        "detect_views": detect_views,
        "seg_views": seg_views,
        "grille_views": grille_views,
        "mascot_views": mascot_views,
        "logo_views": active_views(LOGO_TASK),
        "stages": [s for s in PERCEPTION_STAGES if s in stages],
        "required": sorted(set(detect_views) | set(seg_views)),
    }


def _latency_fields(intervals: Sequence[StageInterval], trigger_ms: float, verdict_ms: float) -> dict:
    fields = {iv.stage: iv.end_ms - iv.start_ms for iv in intervals}
    fields["end_to_end"] = verdict_ms - trigger_ms
    return fields


def run_vehicle(
    trigger: TriggerEvent,
    backend: PerceptionBackend,
    frames: Iterable[CameraId],
    vin: str,
    config: PipelineConfig,
    scheduler: Optional[StageScheduler] = None,
    executor: Optional[Executor] = None,
) -> tuple[InspectionReport, VehicleTrace]:
    """Inspect one vehicle and return its report and stage timeline.

    With an ``executor`` the per-camera perception calls run concurrently
    and fusion blocks on the barrier; otherwise they run inline.
    """
    scheduler = scheduler or StageScheduler()
    plan = _plan(config)
    ctx = VehicleContext(trigger.vehicle_id, vin, trigger.sequence, trigger.timestamp_ms)
    jitter_rng = np.random.default_rng(derive_seed(config.seed, trigger.vehicle_id, "latency"))
    latencies = config.latency.sample(jitter_rng)

    def failed(reason: str, mismatch: Mismatch) -> tuple[InspectionReport, VehicleTrace]:
        intervals = scheduler.schedule(trigger.timestamp_ms, (), latencies, config.latency.composition)
        verdict_ms = intervals[-1].end_ms
        disc = compute_discrepancies((), (), mismatches=(mismatch,))
        report = build_report(
            ctx, {}, disc, (), _latency_fields(intervals, trigger.timestamp_ms, verdict_ms), reason=reason
        )
        trace = VehicleTrace(trigger.vehicle_id, trigger.sequence, trigger.timestamp_ms, tuple(intervals), verdict_ms)
        return report, trace

    captured = set(frames)
    absent = [c for c in plan["required"] if c not in captured]
    if absent:
        return failed(
            REASON_CAPTURE_INCOMPLETE,
            Mismatch("capture_incomplete", " ".join(c.value for c in plan["required"]), " ".join(c.value for c in sorted(captured))),
        )
    try:
        spec = lookup(config.manifest, vin)
    except UnknownVINError:
        return failed(REASON_MANIFEST_MISSING, Mismatch("manifest_missing", vin, None))

    routing = config.routing
    barrier = FusionBarrier(routing, config.mode.views)
    feature_set = set(routing.feature_tasks)

    def perceive(camera: CameraId) -> None:
        tasks = [t for t in tasks_for_view(routing, camera) if t in feature_set]
        barrier.deliver(camera, backend.detect(camera, tasks))

    if executor is not None:
        futures = [executor.submit(perceive, cam) for cam in plan["detect_views"]]
        seg_futures = [executor.submit(backend.segment, cam) for cam in plan["seg_views"]]
        for f in futures:
            f.result()
        raw_damages = [d for f in seg_futures for d in f.result()]
    else:
        for cam in plan["detect_views"]:
            perceive(cam)
        raw_damages = [d for cam in plan["seg_views"] for d in backend.segment(cam)]
    barrier.wait()
    scores, detected = barrier.fuse(config.thresholds)

    observable = set(plan["observable"])
    expected = spec.features & observable
    unverified = set(spec.features - observable)
    mismatches: list[Mismatch] = []

    if plan["grille_views"]:
        pt = backend.classify_powertrain(plan["grille_views"][0])
        if pt is not None and pt != spec.powertrain:
            mismatches.append(Mismatch("powertrain", spec.powertrain, pt))
    else:
        unverified.add("powertrain")
    if plan["mascot_views"]:
        text = None
        if MASCOT_TASK in detected:
            text = backend.read_variant(plan["mascot_views"][0])
        if text is not None and text != spec.variant:
            mismatches.append(Mismatch("variant_name", spec.variant, text))
    else:
        unverified.add("variant_name")
    if plan["logo_views"] and LOGO_TASK in detected:
        reading = backend.logo_orientation(plan["logo_views"][0])
        if reading is not None:
            status = check_alignment(reading, config.alignment_tolerance_deg)
            if status is Alignment.MISALIGNED:
                mismatches.append(
                    Mismatch(
                        "logo_alignment",
                        f"|angle| <= {config.alignment_tolerance_deg:g} deg",
                        f"{reading.angle_deg:.2f} deg",
                    )
                )
            elif status is Alignment.UNRELIABLE:
                unverified.add("logo_alignment")
    elif not plan["logo_views"]:
        unverified.add("logo_alignment")

    disc = compute_discrepancies(expected, detected, routing.vocabulary, mismatches)
    damage_views = set(routing.damage_views())
    accepted = gate_damages(
        [d for d in raw_damages if d.camera in damage_views],
        config.damage_gate.min_score,
        config.damage_gate.min_area_fraction,
    )
    intervals = scheduler.schedule(trigger.timestamp_ms, plan["stages"], latencies, config.latency.composition)
    verdict_ms = intervals[-1].end_ms
    report = build_report(
        ctx,
        scores,
        disc,
        accepted,
        _latency_fields(intervals, trigger.timestamp_ms, verdict_ms),
        unverified=unverified,
    )
    trace = VehicleTrace(trigger.vehicle_id, trigger.sequence, trigger.timestamp_ms, tuple(intervals), verdict_ms)
    return report, trace


def inspect_evidence(
    evidence: Evidence, config: PipelineConfig, sequence: int = 0
) -> tuple[InspectionReport, VehicleTrace]:
    trigger = TriggerEvent(sequence, evidence.trigger_ms, evidence.vehicle_id)
    return run_vehicle(trigger, EvidenceBackend(evidence), evidence.frames, evidence.vin, config)


class OrderedEmitter:
    """Releases reports strictly in trigger-sequence order."""

    def __init__(self, first: int = 0):
        self._next = first
        self._heap: list[tuple[int, InspectionReport]] = []

    def push(self, report: InspectionReport) -> list[InspectionReport]:
        heapq.heappush(self._heap, (report.sequence, report))
        out = []
        while self._heap and self._heap[0][0] == self._next:
            out.append(heapq.heappop(self._heap)[1])
            self._next += 1
        return out

    @property
    def pending(self) -> int:
        return len(self._heap)


@dataclass(frozen=True)
class RunTrace:
    vehicles: tuple[VehicleTrace, ...]

    @property
    def throughput_per_min(self) -> float:
        """Completed vehicles per minute.

        For two or more vehicles this is the completion rate between the first
        and last verdicts, (n - 1) / (t_last - t_first). A single vehicle
        reports 1 / end-to-end latency.
        """
        n = len(self.vehicles)
        if n == 0:
            return 0.0
        times = sorted(v.verdict_ms for v in self.vehicles)
        if n == 1:
            span = self.vehicles[0].end_to_end_ms
            return math.inf if span == 0 else 60_000.0 / span
        span = times[-1] - times[0]
        return math.inf if span == 0 else (n - 1) * 60_000.0 / span

    def rows(self) -> Iterator[tuple]:
        for v in self.vehicles:
            for iv in v.intervals:
                yield (v.sequence, v.vehicle_id, iv.stage, iv.start_ms, iv.end_ms)

    def to_csv(self) -> str:
        lines = ["sequence,vehicle_id,stage,start_ms,end_ms"]
        lines += [f"{s},{vid},{st},{a!r},{b!r}" for s, vid, st, a, b in self.rows()]
        return "\n".join(lines) + "\n"


def run_stream(
    snapshots: Sequence[Evidence],
    cadence_ms: float,
    config: PipelineConfig,
    backends: Optional[Sequence[PerceptionBackend]] = None,
) -> tuple[RunTrace, list[InspectionReport]]:
    """Trigger one vehicle every ``cadence_ms`` and run them through shared stages."""
    if cadence_ms <= 0:
        raise ValueError("cadence must be positive")
    scheduler = StageScheduler()
    emitter = OrderedEmitter()
    reports: list[InspectionReport] = []
    traces: list[VehicleTrace] = []
    for seq, ev in enumerate(snapshots):
        trigger = TriggerEvent(seq, seq * cadence_ms, ev.vehicle_id)
        backend = backends[seq] if backends is not None else EvidenceBackend(ev)
        report, trace = run_vehicle(trigger, backend, ev.frames, ev.vin, config, scheduler)
        traces.append(trace)
        reports.extend(emitter.push(report))
    return RunTrace(tuple(traces)), reports


@dataclass(frozen=True)
class LatencySummary:
    count: int
    p50_ms: float
    p95_ms: float
    max_ms: float
    mean_ms: float
    stage_means_ms: Mapping[str, float]

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "p50_ms": self.p50_ms,
            "p95_ms": self.p95_ms,
            "max_ms": self.max_ms,
            "mean_ms": self.mean_ms,
            "stage_means_ms": dict(self.stage_means_ms),
        }


def measure_latency_budget(trace: RunTrace) -> LatencySummary:
    """Nearest-rank quantiles of end-to-end latency plus per-stage means."""
    if not trace.vehicles:
        raise ValueError("cannot summarize an empty trace")
    e2e = np.array([v.end_to_end_ms for v in trace.vehicles], dtype=float)
    p50, p95 = np.quantile(e2e, [0.5, 0.95], method="inverted_cdf")
    durations: dict[str, list[float]] = {}
    for v in trace.vehicles:
        for iv in v.intervals:
            durations.setdefault(iv.stage, []).append(iv.end_ms - iv.start_ms)
    means = {s: float(np.mean(durations[s])) for s in STAGES if s in durations}
    return LatencySummary(len(e2e), float(p50), float(p95), float(e2e.max()), float(e2e.mean()), means)
