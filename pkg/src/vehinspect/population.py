"""Synthetic vehicle populations and their manifests."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
import yaml

from .manifest import ManifestDB, VariantSpec, vin_check_digit
from .orientation import DEFAULT_TOLERANCE_DEG
from .routing import RoutingTable
from .rules import DamageInstance, DamageKind, Verdict
from .seeds import derive_seed

LOGO_TASK = "logo"
MASCOT_TASK = "mascot"
GRILLE_TASK = "front_grille"


@dataclass(frozen=True)
class GroundTruthVehicle:
    vehicle_id: str
    vin: str
    features: frozenset[str]
    powertrain: str
    variant: str
    damages: tuple[DamageInstance, ...] = ()
    logo_rotation_deg: float = 0.0
    model: str = ""

    def to_dict(self) -> dict:
        return {
            "vehicle_id": self.vehicle_id,
            "vin": self.vin,
            "model": self.model,
            "variant": self.variant,
            "powertrain": self.powertrain,
            "features": sorted(self.features),
            "logo_rotation_deg": self.logo_rotation_deg,
            "damages": [d.to_dict() for d in self.damages],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "GroundTruthVehicle":
        return cls(
            vehicle_id=str(d["vehicle_id"]),
            vin=str(d["vin"]),
            model=str(d.get("model", "")),
            variant=str(d["variant"]),
            powertrain=str(d["powertrain"]),
            features=frozenset(d["features"]),
            logo_rotation_deg=float(d.get("logo_rotation_deg", 0.0)),
            damages=tuple(DamageInstance.from_dict(x) for x in d.get("damages", ())),
        )


def ground_truth_verdict(
    vehicle: GroundTruthVehicle,
    spec: Optional[VariantSpec],
    alignment_tolerance_deg: float = DEFAULT_TOLERANCE_DEG,
) -> Verdict:
    """PASS iff the car as built matches its manifest and carries no damage."""
    if spec is None or vehicle.damages:
        return Verdict.FAIL
    if vehicle.features != spec.features or vehicle.powertrain != spec.powertrain:
        return Verdict.FAIL
    if MASCOT_TASK in vehicle.features and vehicle.variant != spec.variant:
        return Verdict.FAIL
    if LOGO_TASK in vehicle.features and abs(vehicle.logo_rotation_deg) > alignment_tolerance_deg:
        return Verdict.FAIL
    return Verdict.PASS


@dataclass(frozen=True)
class VariantTemplate:
    model: str
    variant: str
    powertrain: str
    features: frozenset[str]
    wmi: str = "SIM"
    vds: str = "A0000"


def load_catalog(path: str | Path) -> list[VariantTemplate]:
    with Path(path).open(encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or {}
    out = []
    for model in data.get("models", ()):
        for v in model["variants"]:
            out.append(
                VariantTemplate(
                    model=model["name"],
                    variant=v["name"],
                    powertrain=v["powertrain"],
                    features=frozenset(v["features"]),
                    wmi=model.get("wmi", "SIM"),
                    vds=v.get("vds", model.get("vds", "A0000")),
                )
            )
    if not out:
        raise ValueError(f"{path}: catalog defines no variants")
    return out


@dataclass(frozen=True)
class PopulationProfile:
    """Build-defect rates for synthetic vehicles (each an independent per-vehicle probability)."""

    missing_feature_rate: float = 0.0
    extra_feature_rate: float = 0.0
    damage_rate: float = 0.0
    max_damages: int = 2
    powertrain_swap_rate: float = 0.0
    badge_swap_rate: float = 0.0
    logo_misalign_rate: float = 0.0
    misalign_range_deg: tuple[float, float] = (8.0, 20.0)
    damage_area_range: tuple[float, float] = (0.002, 0.02)

    @classmethod
    def from_dict(cls, d: Mapping) -> "PopulationProfile":
        kw = dict(d)
        for key in ("misalign_range_deg", "damage_area_range"):
            if key in kw:
                kw[key] = tuple(kw[key])
        return cls(**kw)


def make_vin(template: VariantTemplate, serial: int) -> str:
    """17-char VIN: WMI(3) + VDS(5) + check digit + year + plant + 6-digit serial."""
    body = (template.wmi + template.vds)[:8].upper()
    tail = "S" + "A" + f"{serial:06d}"
    provisional = body + "0" + tail
    return body + vin_check_digit(provisional) + tail


def random_damage_polygon(
    rng: np.random.Generator, area_range: tuple[float, float], n_vertices: int = 6
) -> tuple[tuple[float, float], ...]:
    """Star-shaped polygon with sorted vertex angles, hence simple."""
    target = rng.uniform(*area_range)
    # area of an n-gon with unit circumradius
    unit_area = 0.5 * n_vertices * math.sin(2 * math.pi / n_vertices)
    r = math.sqrt(target / unit_area)
    cx = rng.uniform(r * 1.3 + 0.01, 1 - r * 1.3 - 0.01)
    cy = rng.uniform(r * 1.3 + 0.01, 1 - r * 1.3 - 0.01)
    step = 2 * math.pi / n_vertices
    # jitter below half a step keeps the vertex angles ordered
    angles = np.arange(n_vertices) * step + rng.uniform(-0.3, 0.3, n_vertices) * step
    radii = r * rng.uniform(0.8, 1.25, n_vertices)
    return tuple(
        (round(float(cx + rr * math.cos(a)), 6), round(float(cy + rr * math.sin(a)), 6))
        for rr, a in zip(radii, angles)
    )


def generate_population(
    catalog: Sequence[VariantTemplate],
    n: int,
    seed: int,
    profile: PopulationProfile,
    routing: RoutingTable,
) -> tuple[ManifestDB, list[GroundTruthVehicle]]:
    if n < 1:
        raise ValueError("population size must be at least 1")
    features_pool = routing.feature_tasks
    damage_views = routing.damage_views()
    specs: list[VariantSpec] = []
    vehicles: list[GroundTruthVehicle] = []
    for i in range(n):
        vehicle_id = f"V{i + 1:05d}"
        rng = np.random.default_rng(derive_seed(seed, vehicle_id, "population"))
        tpl = catalog[int(rng.integers(len(catalog)))]
        vin = make_vin(tpl, i + 1)
        spec = VariantSpec(vin, tpl.model, tpl.variant, tpl.powertrain, tpl.features)
        specs.append(spec)

        features = set(tpl.features)
        if features and rng.random() < profile.missing_feature_rate:
            features.discard(sorted(features)[int(rng.integers(len(features)))])
        absent = [t for t in features_pool if t not in tpl.features]
        if absent and rng.random() < profile.extra_feature_rate:
            features.add(absent[int(rng.integers(len(absent)))])

        powertrain = tpl.powertrain
        if rng.random() < profile.powertrain_swap_rate:
            powertrain = "EV" if powertrain == "ICE" else "ICE"

        variant = tpl.variant
        if MASCOT_TASK in features and rng.random() < profile.badge_swap_rate:
            others = sorted({t.variant for t in catalog if t.model == tpl.model and t.variant != tpl.variant})
            variant = others[int(rng.integers(len(others)))] if others else tpl.variant + " X"

        rotation = 0.0
        if LOGO_TASK in features and rng.random() < profile.logo_misalign_rate:
            lo, hi = profile.misalign_range_deg
            rotation = round(float(rng.uniform(lo, hi)) * (1 if rng.random() < 0.5 else -1), 3)

        damages: list[DamageInstance] = []
        if damage_views and rng.random() < profile.damage_rate:
            for _ in range(int(rng.integers(1, profile.max_damages + 1))):
                cam = damage_views[int(rng.integers(len(damage_views)))]
                kind = list(DamageKind)[int(rng.integers(len(DamageKind)))]
                poly = random_damage_polygon(rng, profile.damage_area_range)
                damages.append(DamageInstance(cam, kind, poly, 1.0))

        vehicles.append(
            GroundTruthVehicle(
                vehicle_id=vehicle_id,
                vin=vin,
                model=tpl.model,
                variant=variant,
                powertrain=powertrain,
                features=frozenset(features),
                damages=tuple(damages),
                logo_rotation_deg=rotation,
            )
        )
    return ManifestDB(specs), vehicles


def population_text(vehicles: Iterable[GroundTruthVehicle]) -> str:
    return "".join(json.dumps(v.to_dict(), separators=(",", ":")) + "\n" for v in vehicles)


def load_population(path: str | Path) -> list[GroundTruthVehicle]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            out.append(GroundTruthVehicle.from_dict(json.loads(line)))
    return out
