"""Config bundles and the population-level simulation harness."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import yaml

from .evidence import Evidence
from .fusion import ThresholdTable, load_thresholds
from .manifest import ManifestDB, UnknownVINError, ingest, lookup
from .metrics import ModeRun, VerdictPair, defect_recall, system_accuracy
from .pipeline import (
    DamageGate,
    LatencyProfile,
    PipelineConfig,
    RunTrace,
    get_mode,
    load_latency,
    measure_latency_budget,
    run_stream,
)
from .population import (
    GroundTruthVehicle,
    PopulationProfile,
    VariantTemplate,
    generate_population,
    ground_truth_verdict,
    load_catalog,
    population_text,
)
from .routing import RoutingTable, coverage_fraction, load_routing
from .rules import InspectionReport, Verdict
from .synth import NoiseProfile, load_noise_profile, synthesize_evidence


class ConfigError(ValueError):
    pass


def packaged_config(name: str) -> Path:
    return Path(str(resources.files("vehinspect") / "configs" / name))


@dataclass(frozen=True)
class RunBundle:
    routing: RoutingTable
    thresholds: ThresholdTable
    latency: LatencyProfile
    noise: NoiseProfile
    catalog: tuple[VariantTemplate, ...]
    population: PopulationProfile = PopulationProfile()
    manifest: Optional[ManifestDB] = None
    damage_gate: DamageGate = DamageGate()
    alignment_tolerance_deg: float = 3.0
    seed: int = 0
    cadence_ms: float = 18_000.0
    source: str = ""

    def with_seed(self, seed: Optional[int]) -> "RunBundle":
        if seed is None:
            return self
        return replace(self, seed=int(seed), noise=self.noise.with_seed(seed))


def load_bundle(path: Optional[str | Path] = None) -> RunBundle:
    """Load and validate every file a bundle references before anything runs."""
    path = Path(path) if path is not None else packaged_config("default.yaml")
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    base = path.parent

    def resolve(key: str, required: bool = True) -> Optional[Path]:
        if key not in data or data[key] is None:
            if required:
                raise ConfigError(f"{path}: missing {key!r} entry")
            return None
        p = base / str(data[key])
        if not p.exists():
            raise ConfigError(f"{path}: {key} file {p} does not exist")
        return p

    try:
        routing = load_routing(resolve("routing"))
        thresholds = load_thresholds(resolve("thresholds"))
        latency = load_latency(resolve("latency"))
        noise = load_noise_profile(resolve("noise"))
        catalog = tuple(load_catalog(resolve("catalog")))
        manifest_path = resolve("manifest", required=False)
        manifest = ingest(manifest_path, routing.vocabulary) if manifest_path else None
        population = PopulationProfile.from_dict(data.get("population") or {})
        gate = DamageGate(**(data.get("damage_gate") or {}))
    except ConfigError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    for tpl in catalog:
        unknown = tpl.features - set(routing.vocabulary)
        if unknown:
            raise ConfigError(f"catalog variant {tpl.variant!r} uses unknown features {sorted(unknown)}")
    seed = int(data.get("seed", noise.seed))
    return RunBundle(
        routing=routing,
        thresholds=thresholds,
        latency=latency,
        noise=noise.with_seed(seed),
        catalog=catalog,
        population=population,
        manifest=manifest,
        damage_gate=gate,
        alignment_tolerance_deg=float(data.get("alignment_tolerance_deg", 3.0)),
        seed=seed,
        cadence_ms=float(data.get("cadence_ms", 18_000.0)),
        source=str(path),
    )


def pipeline_config(
    bundle: RunBundle, manifest: ManifestDB, mode: str = "Full", jitter: bool = True
) -> PipelineConfig:
    latency = bundle.latency.for_mode(mode)
    return PipelineConfig(
        routing=bundle.routing,
        thresholds=bundle.thresholds,
        manifest=manifest,
        latency=latency if jitter else latency.without_jitter(),
        mode=get_mode(mode),
        damage_gate=bundle.damage_gate,
        alignment_tolerance_deg=bundle.alignment_tolerance_deg,
        seed=bundle.seed,
    )


@dataclass
class SimulationResult:
    mode: str
    seed: int
    vehicles: list[GroundTruthVehicle]
    manifest: ManifestDB
    evidence: list[Evidence]
    reports: list[InspectionReport]
    trace: RunTrace
    truth: list[Verdict]
    summary: dict = field(default_factory=dict)

    @property
    def population_fingerprint(self) -> str:
        return hashlib.sha256(population_text(self.vehicles).encode()).hexdigest()


def summarize(
    mode: str,
    seed: int,
    vehicles: Sequence[GroundTruthVehicle],
    reports: Sequence[InspectionReport],
    truth: Sequence[Verdict],
    trace: RunTrace,
) -> dict:
    by_id = {r.vehicle_id: r for r in reports}
    pairs = [VerdictPair(by_id[v.vehicle_id].verdict, t) for v, t in zip(vehicles, truth)]
    recall = defect_recall((by_id[v.vehicle_id].damages, v.damages) for v in vehicles)
    spurious = sum(
        1
        for v, t in zip(vehicles, truth)
        if t is Verdict.PASS
        and (by_id[v.vehicle_id].missing or by_id[v.vehicle_id].extra or by_id[v.vehicle_id].mismatches)
    )
    lat = measure_latency_budget(trace)
    return {
        "mode": mode,
        "seed": seed,
        "vehicles": len(vehicles),
        "pass_reports": sum(r.verdict is Verdict.PASS for r in reports),
        "truth_pass": sum(t is Verdict.PASS for t in truth),
        "system_accuracy": system_accuracy(pairs),
        "defect_recall": recall,
        "spurious_discrepancies": spurious,
        "throughput_per_min": trace.throughput_per_min,
        "latency": lat.to_dict(),
    }


def simulate(
    bundle: RunBundle,
    n: int,
    cadence_ms: Optional[float] = None,
    mode: str = "Full",
    jitter: bool = True,
) -> SimulationResult:
    """Generate a population, synthesize its evidence and run it through the line."""
    cadence = bundle.cadence_ms if cadence_ms is None else float(cadence_ms)
    manifest, vehicles = generate_population(bundle.catalog, n, bundle.seed, bundle.population, bundle.routing)
    evidence = [
        synthesize_evidence(v, bundle.routing, bundle.noise, trigger_ms=i * cadence)
        for i, v in enumerate(vehicles)
    ]
    config = pipeline_config(bundle, manifest, mode, jitter)
    trace, reports = run_stream(evidence, cadence, config)
    truth = []
    for v in vehicles:
        try:
            spec = lookup(manifest, v.vin)
        except UnknownVINError:
            spec = None
        truth.append(ground_truth_verdict(v, spec, bundle.alignment_tolerance_deg))
    summary = summarize(mode, bundle.seed, vehicles, reports, truth, trace)
    return SimulationResult(mode, bundle.seed, vehicles, manifest, evidence, reports, trace, truth, summary)


def ablate(bundle: RunBundle, modes: Sequence[str], n: int) -> list[ModeRun]:
    runs = []
    for mode in modes:
        m = get_mode(mode)
        res = simulate(bundle, n, mode=mode)
        runs.append(
            ModeRun(
                mode=mode,
                population_fingerprint=res.population_fingerprint,
                seed=res.seed,
                coverage=coverage_fraction(bundle.routing, m.views),
                defect_recall=res.summary["defect_recall"],
                mean_latency_ms=res.summary["latency"]["mean_ms"],
                accuracy=res.summary["system_accuracy"],
            )
        )
    return runs


def write_outputs(result: SimulationResult, out: Path) -> dict[str, Path]:
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "reports": out / "reports.jsonl",
        "trace": out / "trace.csv",
        "summary": out / "summary.json",
        "population": out / "population.jsonl",
        "manifest": out / "manifest.jsonl",
    }
    paths["reports"].write_text("".join(r.to_json() + "\n" for r in result.reports), encoding="utf-8")
    paths["trace"].write_text(result.trace.to_csv(), encoding="utf-8")
    paths["summary"].write_text(json.dumps(result.summary, indent=2) + "\n", encoding="utf-8")
    paths["population"].write_text(population_text(result.vehicles), encoding="utf-8")
    paths["manifest"].write_text(result.manifest.export_text(), encoding="utf-8")
    return paths
