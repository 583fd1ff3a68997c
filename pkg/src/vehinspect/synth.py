"""Seeded stand-ins for the detectors, classifier and OCR.

Every draw comes from a generator seeded by
``derive_seed(profile.seed, vehicle_id, stream)``, so evidence for a vehicle
is a pure function of (vehicle, routing, profile).

Scores follow a normal law truncated to [0, 1] by rejection; a zero spread
returns the mean clipped to [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

import numpy as np
import yaml

from .evidence import Evidence
from .fusion import BBox, Detection
from .orientation import logo_reading
from .population import LOGO_TASK, MASCOT_TASK, GroundTruthVehicle
from .routing import CameraId, RoutingTable, views_for_task
from .rules import DamageInstance
from .seeds import derive_seed

OCR_ALPHABET = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"


@dataclass(frozen=True)
class ScoreDistribution:
    mean: float
    spread: float = 0.0

    def __post_init__(self) -> None:
        if self.spread < 0:
            raise ValueError("score spread must be non-negative")

    def sample(self, rng: np.random.Generator) -> float:
        if self.spread == 0:
            return float(min(1.0, max(0.0, self.mean)))
        for _ in range(1000):
            x = rng.normal(self.mean, self.spread)
            if 0.0 <= x <= 1.0:
                return float(x)
        # mass inside [0, 1] is negligible; fall back to the nearest bound
        return float(min(1.0, max(0.0, self.mean)))


def _rate(name: str, value: float) -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")
    return value


@dataclass(frozen=True)
class NoiseProfile:
    tpr: Mapping[str, float] = field(default_factory=dict)
    default_tpr: float = 1.0
    fpr: Mapping[str, Mapping[str, float]] = field(default_factory=dict)
    default_fpr: float = 0.0
    hit_score: ScoreDistribution = ScoreDistribution(1.0, 0.0)
    false_alarm_score: ScoreDistribution = ScoreDistribution(0.3, 0.1)
    damage_miss_rate: float = 0.0
    powertrain_error_rate: float = 0.0
    ocr_corruption_rate: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        _rate("default_tpr", self.default_tpr)
        _rate("default_fpr", self.default_fpr)
        _rate("damage_miss_rate", self.damage_miss_rate)
        _rate("powertrain_error_rate", self.powertrain_error_rate)
        _rate("ocr_corruption_rate", self.ocr_corruption_rate)
        for task, p in self.tpr.items():
            _rate(f"tpr[{task}]", p)
        for task, per_view in self.fpr.items():
            for view, p in per_view.items():
                _rate(f"fpr[{task}][{view}]", p)

    def tpr_for(self, task: str) -> float:
        return self.tpr.get(task, self.default_tpr)

    def fpr_for(self, task: str, view: CameraId) -> float:
        per_view = self.fpr.get(task, {})
        return per_view.get(view.value, per_view.get("*", self.default_fpr))

    def with_seed(self, seed: int) -> "NoiseProfile":
        return replace(self, seed=int(seed))

    @classmethod
    def from_dict(cls, d: Mapping) -> "NoiseProfile":
        tpr = d.get("tpr", {}) or {}
        fpr = d.get("fpr", {}) or {}
        hit = d.get("hit_score", {"mean": 1.0, "spread": 0.0})
        fa = d.get("false_alarm_score", {"mean": 0.3, "spread": 0.1})
        fpr_tasks = fpr.get("tasks", {}) or {}
        return cls(
            tpr={k: float(v) for k, v in (tpr.get("tasks", {}) or {}).items()},
            default_tpr=float(tpr.get("default", 1.0)),
            fpr={t: {str(v): float(p) for v, p in views.items()} for t, views in fpr_tasks.items()},
            default_fpr=float(fpr.get("default", 0.0)),
            hit_score=ScoreDistribution(float(hit["mean"]), float(hit.get("spread", 0.0))),
            false_alarm_score=ScoreDistribution(float(fa["mean"]), float(fa.get("spread", 0.0))),
            damage_miss_rate=float(d.get("damage_miss_rate", 0.0)),
            powertrain_error_rate=float(d.get("powertrain_error_rate", 0.0)),
            ocr_corruption_rate=float(d.get("ocr_corruption_rate", 0.0)),
            seed=int(d.get("seed", 0)),
        )


def load_noise_profile(path: str | Path) -> NoiseProfile:
    with Path(path).open(encoding="utf-8") as fh:
        return NoiseProfile.from_dict(yaml.safe_load(fh) or {})


def _random_box(rng: np.random.Generator) -> BBox:
    w = float(rng.uniform(0.05, 0.3))
    h = float(rng.uniform(0.05, 0.3))
    x = float(rng.uniform(0.0, 1.0 - w))
    y = float(rng.uniform(0.0, 1.0 - h))
    return BBox(x, y, w, h)


def classify_powertrain_stub(vehicle: GroundTruthVehicle, error_rate: float, seed: int) -> str:
    _rate("error_rate", error_rate)
    rng = np.random.default_rng(derive_seed(seed, vehicle.vehicle_id, "powertrain"))
    if rng.random() < error_rate:
        return "EV" if vehicle.powertrain == "ICE" else "ICE"
    return vehicle.powertrain


def ocr_variant_stub(vehicle: GroundTruthVehicle, corruption_rate: float, seed: int) -> str:
    _rate("corruption_rate", corruption_rate)
    rng = np.random.default_rng(derive_seed(seed, vehicle.vehicle_id, "ocr"))
    text = vehicle.variant
    if not text or rng.random() >= corruption_rate:
        return text
    pos = int(rng.integers(len(text)))
    choices = [c for c in OCR_ALPHABET if c != text[pos]]
    return text[:pos] + choices[int(rng.integers(len(choices)))] + text[pos + 1 :]


def synthesize_evidence(
    vehicle: GroundTruthVehicle,
    routing: RoutingTable,
    noise: NoiseProfile,
    trigger_ms: float = 0.0,
) -> Evidence:
    """Simulated detector output for one vehicle across all routed views.

    For every feature task ``t`` and view ``v`` in its assignment: a true
    feature yields a hit with probability TPR_t, and independently a false
    alarm fires with probability FPR_{t,v}. Unrouted pairs never emit.
    """
    rng = np.random.default_rng(derive_seed(noise.seed, vehicle.vehicle_id, "detections"))
    detections: list[Detection] = []
    for task in routing.feature_tasks:
        present = task in vehicle.features
        tpr = noise.tpr_for(task)
        for view in views_for_task(routing, task):
            u_hit, u_fa = rng.random(), rng.random()
            if present and u_hit < tpr:
                detections.append(Detection(view, task, _random_box(rng), noise.hit_score.sample(rng)))
            if u_fa < noise.fpr_for(task, view):
                detections.append(
                    Detection(view, task, _random_box(rng), noise.false_alarm_score.sample(rng))
                )

    drng = np.random.default_rng(derive_seed(noise.seed, vehicle.vehicle_id, "damages"))
    damages: list[DamageInstance] = []
    for dmg in vehicle.damages:
        if drng.random() < noise.damage_miss_rate:
            continue
        damages.append(DamageInstance(dmg.camera, dmg.kind, dmg.polygon, noise.hit_score.sample(drng)))

    return Evidence(
        vehicle_id=vehicle.vehicle_id,
        vin=vehicle.vin,
        trigger_ms=trigger_ms,
        detections=tuple(detections),
        damages=tuple(damages),
        powertrain=classify_powertrain_stub(vehicle, noise.powertrain_error_rate, noise.seed),
        variant_text=(
            ocr_variant_stub(vehicle, noise.ocr_corruption_rate, noise.seed)
            if MASCOT_TASK in vehicle.features
            else None
        ),
        logo=logo_reading(vehicle.logo_rotation_deg) if LOGO_TASK in vehicle.features else None,
    )
