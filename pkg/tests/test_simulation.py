import hashlib

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vehinspect.evidence import Evidence, EvidenceError, load_evidence, parse_evidence, write_jsonl
from vehinspect.manifest import lookup, vin_check_digit
from vehinspect.population import (
    GroundTruthVehicle,
    PopulationProfile,
    generate_population,
    ground_truth_verdict,
    load_catalog,
    load_population,
    make_vin,
    population_text,
    random_damage_polygon,
)
from vehinspect.routing import CameraId, views_for_task
from vehinspect.rules import DamageInstance, Verdict
from vehinspect.seeds import derive_seed
from vehinspect.simulation import ConfigError, load_bundle, packaged_config, simulate
from vehinspect.synth import (
    NoiseProfile,
    ScoreDistribution,
    classify_powertrain_stub,
    load_noise_profile,
    ocr_variant_stub,
    synthesize_evidence,
)


def vehicle(features=("logo", "mascot", "front_grille", "antenna"), **kw):
    base = dict(
        vehicle_id="V00001",
        vin="SARDN1A04SA900001",
        features=frozenset(features),
        powertrain="ICE",
        variant="ARDEN LX",
    )
    base.update(kw)
    return GroundTruthVehicle(**base)


def test_derive_seed_matches_sha256():
    digest = hashlib.sha256(b"7:V00003:detections").digest()
    assert derive_seed(7, "V00003", "detections") == int.from_bytes(digest[:8], "big")
    assert derive_seed(7, "V00003", "a") != derive_seed(7, "V00003", "b")


def test_score_distribution_bounds():
    rng = np.random.default_rng(0)
    xs = [ScoreDistribution(0.9, 0.3).sample(rng) for _ in range(2000)]
    assert min(xs) >= 0 and max(xs) <= 1
    assert ScoreDistribution(1.4, 0).sample(rng) == 1.0
    with pytest.raises(ValueError):
        ScoreDistribution(0.5, -0.1)


def test_noise_profile_validation_and_wildcard():
    with pytest.raises(ValueError):
        NoiseProfile(default_tpr=1.2)
    p = NoiseProfile.from_dict({"fpr": {"default": 0.01, "tasks": {"logo": {"*": 0.2, "T3": 0.3}}}})
    assert p.fpr_for("logo", CameraId.T1) == 0.2
    assert p.fpr_for("logo", CameraId.T3) == 0.3
    assert p.fpr_for("antenna", CameraId.T2) == 0.01


def test_noise_free_evidence_hits_every_routed_view(table4):
    v = vehicle()
    ev = synthesize_evidence(v, table4, load_noise_profile(packaged_config("noise_free.yaml")))
    got = {(d.camera, d.task) for d in ev.detections}
    want = {(c, t) for t in v.features for c in views_for_task(table4, t)}
    assert got == want
    assert all(d.score == 1.0 for d in ev.detections)
    assert ev.variant_text == "ARDEN LX" and ev.powertrain == "ICE"
    assert ev.logo is not None and abs(ev.logo.angle_deg) < 0.5


def test_no_mascot_means_no_ocr(table4):
    ev = synthesize_evidence(vehicle(features=("logo",)), table4, NoiseProfile())
    assert ev.variant_text is None


def test_zero_tpr_emits_nothing(table4):
    ev = synthesize_evidence(vehicle(), table4, NoiseProfile(default_tpr=0.0))
    assert ev.detections == ()


def test_false_alarm_rate_empirical(table4):
    noise = NoiseProfile(default_tpr=0.0, default_fpr=0.2)
    n_pairs = hits = 0
    for i in range(400):
        v = vehicle(vehicle_id=f"V{i:05d}", features=())
        ev = synthesize_evidence(v, table4, noise)
        hits += len(ev.detections)
        n_pairs += sum(len(views_for_task(table4, t)) for t in table4.feature_tasks)
    # binomial standard error is about 0.004 here
    assert abs(hits / n_pairs - 0.2) < 0.02


def test_unrouted_pairs_never_emit(table4):
    noise = NoiseProfile(default_fpr=1.0)
    ev = synthesize_evidence(vehicle(), table4, noise)
    for d in ev.detections:
        assert d.camera in views_for_task(table4, d.task)


def test_stub_error_rates():
    v = vehicle()
    flips = sum(classify_powertrain_stub(v, 0.3, s) != "ICE" for s in range(2000))
    assert abs(flips / 2000 - 0.3) < 0.04
    assert ocr_variant_stub(v, 0.0, 1) == "ARDEN LX"
    corrupted = ocr_variant_stub(v, 1.0, 1)
    assert len(corrupted) == len("ARDEN LX")
    assert sum(a != b for a, b in zip(corrupted, "ARDEN LX")) == 1


def test_damage_miss_rate(table4):
    poly = ((0.1, 0.1), (0.2, 0.1), (0.2, 0.2), (0.1, 0.2))
    dmg = DamageInstance(CameraId.L2, "scratch", poly, 1.0)
    v = vehicle(damages=(dmg,))
    assert len(synthesize_evidence(v, table4, NoiseProfile(damage_miss_rate=1.0)).damages) == 0
    assert len(synthesize_evidence(v, table4, NoiseProfile()).damages) == 1


def test_make_vin_has_valid_check_digit(bundle):
    for i, tpl in enumerate(bundle.catalog):
        vin = make_vin(tpl, i + 1)
        assert len(vin) == 17 and vin[8] == vin_check_digit(vin)


@settings(max_examples=50)
@given(st.integers(0, 2**32))
def test_damage_polygons_are_valid(seed):
    rng = np.random.default_rng(seed)
    poly = random_damage_polygon(rng, (0.002, 0.02))
    d = DamageInstance(CameraId.R3, "dent", poly, 1.0)
    assert 0.0015 < d.area_fraction < 0.03


def test_population_defect_rates(bundle):
    profile = PopulationProfile(missing_feature_rate=0.2, extra_feature_rate=0.1, damage_rate=0.15)
    manifest, vehicles = generate_population(bundle.catalog, 1500, 3, profile, bundle.routing)
    missing = sum(bool(lookup(manifest, v.vin).features - v.features) for v in vehicles)
    # fully equipped variants have nothing left to add
    pool = set(bundle.routing.feature_tasks)
    eligible = [v for v in vehicles if pool - lookup(manifest, v.vin).features]
    extra = sum(bool(v.features - lookup(manifest, v.vin).features) for v in eligible)
    damaged = sum(bool(v.damages) for v in vehicles)
    assert abs(missing / 1500 - 0.2) < 0.035
    assert abs(extra / len(eligible) - 0.1) < 0.03
    assert abs(damaged / 1500 - 0.15) < 0.03


def test_ground_truth_verdict(bundle):
    manifest, vehicles = generate_population(bundle.catalog, 5, 0, PopulationProfile(), bundle.routing)
    v = vehicles[0]
    spec = lookup(manifest, v.vin)
    assert ground_truth_verdict(v, spec) is Verdict.PASS
    assert ground_truth_verdict(v, None) is Verdict.FAIL
    from dataclasses import replace

    other = "EV" if v.powertrain == "ICE" else "ICE"
    assert ground_truth_verdict(replace(v, powertrain=other), spec) is Verdict.FAIL
    if "logo" in v.features:
        assert ground_truth_verdict(replace(v, logo_rotation_deg=3.0), spec) is Verdict.PASS
        assert ground_truth_verdict(replace(v, logo_rotation_deg=3.5), spec) is Verdict.FAIL


def test_population_round_trip(tmp_path, bundle):
    _, vehicles = generate_population(bundle.catalog, 30, 9, bundle.population, bundle.routing)
    p = tmp_path / "pop.jsonl"
    p.write_text(population_text(vehicles))
    assert load_population(p) == vehicles


def test_evidence_round_trip(tmp_path, table4):
    ev = synthesize_evidence(vehicle(), table4, load_noise_profile(packaged_config("noise_demo.yaml")), 36000.0)
    assert Evidence.from_dict(ev.to_dict()) == ev
    p = tmp_path / "ev.json"
    write_jsonl(p, [ev.to_json()])
    assert load_evidence(p) == ev


def test_evidence_errors():
    with pytest.raises(EvidenceError) as exc:
        parse_evidence('{"vehicle_id": "V1",\n "vin": }')
    assert exc.value.line == 2
    with pytest.raises(EvidenceError, match="vin"):
        parse_evidence('{"vehicle_id": "V1"}')
    with pytest.raises(EvidenceError):
        parse_evidence('{"vehicle_id": "V1", "vin": "X", "frames": ["Q1"]}')


def test_bundle_loading(bundle, tmp_path):
    assert bundle.routing.name == "table4.cfg"
    assert len(bundle.catalog) == 11 and bundle.manifest is not None
    bad = tmp_path / "b.yaml"
    bad.write_text("routing: nowhere.cfg\n")
    with pytest.raises(ConfigError, match="does not exist"):
        load_bundle(bad)
    bad.write_text("routing: [unclosed\n")
    with pytest.raises(ConfigError):
        load_bundle(bad)


def test_catalog_features_in_vocabulary(bundle):
    for tpl in load_catalog(packaged_config("catalog.yaml")):
        assert tpl.features <= set(bundle.routing.vocabulary)


def test_demo_bundle_is_noisy_but_runs():
    demo = load_bundle(packaged_config("demo.yaml"))
    res = simulate(demo, 200)
    assert 0.0 < res.summary["system_accuracy"] < 1.0
