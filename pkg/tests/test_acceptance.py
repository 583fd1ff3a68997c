"""Acceptance criteria 1-10, one marked group per criterion.

The terminal summary prints one PASS/FAIL line per criterion (see conftest).
"""

import logging
import time
from dataclasses import replace
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
import yaml

from vehinspect.cli import main
from vehinspect.fusion import BBox, Detection, EvidencePool, ThresholdTable, detect_features, fuse_task_score
from vehinspect.manifest import lookup
from vehinspect.metrics import LabeledBox, RasterMask, average_precision_at_50, iou_box, mean_iou
from vehinspect.orientation import estimate_orientation, rasterize_disk, rasterize_rectangle
from vehinspect.pipeline import measure_latency_budget
from vehinspect.routing import ALL_CAMERAS, SIDE_CAMERAS, CameraId, coverage_fraction, views_for_task
from vehinspect.rules import DamageInstance, compute_discrepancies, decide
from vehinspect.simulation import load_bundle, packaged_config, simulate, write_outputs
from vehinspect.synth import NoiseProfile, ScoreDistribution

from oracles import (
    ap_oracle,
    expected_accuracy_closed_form,
    max_score_oracle,
    pixel_iou_oracle,
    set_difference_oracle,
    threshold_oracle,
    verdict_oracle,
)

acceptance = pytest.mark.acceptance
FEATURES = ("logo", "mascot", "front_grille", "antenna", "roof_rails", "rear_wiper", "wheel_type")
BOX = BBox(0.1, 0.1, 0.2, 0.2)


def report(number, ok, detail):
    print(f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})")


# 1 -------------------------------------------------------------------------


@acceptance(1, "fusion oracle equivalence")
def test_fusion_oracle_equivalence(table4, caplog):
    # unrouted detections are logged one by one; keep that out of the timing
    caplog.set_level(logging.ERROR, logger="vehinspect.fusion")
    rng = np.random.default_rng(20240101)
    routed = {t: {c.value for c in views_for_task(table4, t)} for t in FEATURES}
    n_pools = 10_000
    start = time.perf_counter()
    mismatches = 0
    for _ in range(n_pools):
        dets = []
        for _ in range(int(rng.integers(0, 25))):
            task = FEATURES[int(rng.integers(len(FEATURES)))]
            cam = ALL_CAMERAS[int(rng.integers(len(ALL_CAMERAS)))]
            dets.append((cam, task, float(rng.random())))
        taus = {t: float(rng.choice([0.5, rng.random()])) for t in FEATURES}
        pool = EvidencePool(table4, [Detection(c, t, BOX, s) for c, t, s in dets])
        scores, detected = detect_features(pool, table4, ThresholdTable(taus))
        for t in FEATURES:
            want = max_score_oracle([(c.value, tt, s) for c, tt, s in dets], t, routed[t])
            if fuse_task_score(pool, table4, t) != want or scores[t] != want:
                mismatches += 1
        if detected != threshold_oracle(scores, taus, 0.5):
            mismatches += 1
    elapsed = time.perf_counter() - start
    report(1, mismatches == 0 and elapsed < 10, f"{n_pools} pools, {mismatches} mismatches, {elapsed:.2f}s")
    assert mismatches == 0
    assert elapsed < 10.0


# 2 -------------------------------------------------------------------------


@acceptance(2, "rule-engine oracle equivalence")
def test_rule_engine_oracle_equivalence(table4):
    rng = np.random.default_rng(7)
    poly = ((0.1, 0.1), (0.2, 0.1), (0.2, 0.2), (0.1, 0.2))
    damage = DamageInstance(CameraId.L1, "scratch", poly, 0.9)
    n = 10_000
    bad = 0
    for _ in range(n):
        expected = {t for t in FEATURES if rng.random() < 0.5}
        detected = {t for t in FEATURES if rng.random() < 0.5}
        damages = [damage] * int(rng.integers(0, 3)) if rng.random() < 0.3 else []
        d = compute_discrepancies(expected, detected, table4.vocabulary)
        missing, extra = set_difference_oracle(expected, detected)
        if d.missing != missing or d.extra != extra:
            bad += 1
        if decide(d, damages).value != verdict_oracle(missing, extra, damages):
            bad += 1
    report(2, bad == 0, f"{n} triples, {bad} mismatches")
    assert bad == 0


# 3 -------------------------------------------------------------------------


@acceptance(3, "noise-free end-to-end accuracy")
def test_noise_free_end_to_end(bundle):
    res = simulate(bundle, 500)
    s = res.summary
    # each report's set differences must equal the build defects exactly
    exact = 0
    for v, r in zip(res.vehicles, res.reports):
        spec = lookup(res.manifest, v.vin)
        exact += set(r.missing) == spec.features - v.features and set(r.extra) == v.features - spec.features
    report(3, s["system_accuracy"] == 1.0 and s["spurious_discrepancies"] == 0,
           f"Acc_sys={s['system_accuracy']:.3f}, spurious={s['spurious_discrepancies']}, "
           f"truth FAIL={500 - s['truth_pass']}")
    assert s["system_accuracy"] == 1.0
    assert s["spurious_discrepancies"] == 0
    assert exact == 500
    # the population must actually contain defects for this to mean anything
    assert 0 < s["truth_pass"] < 500


# 4 -------------------------------------------------------------------------


@acceptance(4, "latency and throughput")
def test_latency_and_throughput(bundle):
    start = time.perf_counter()
    res = simulate(bundle, 60, cadence_ms=18_000, jitter=False)
    elapsed = time.perf_counter() - start
    e2e = [v.end_to_end_ms for v in res.trace.vehicles]
    thr = res.trace.throughput_per_min
    lat = measure_latency_budget(res.trace)
    ok = all(x == 285.0 for x in e2e) and max(e2e) <= 300 and 3.3 <= thr <= 3.4 and elapsed < 5
    report(4, ok, f"e2e={sorted(set(e2e))} ms, p95={lat.p95_ms} ms, throughput={thr:.3f}/min, wall={elapsed:.2f}s")
    assert all(x == 285.0 for x in e2e)
    assert max(e2e) <= 300.0
    assert len(e2e) >= 50
    assert 3.3 <= thr <= 3.4
    assert elapsed < 5.0


# 5 -------------------------------------------------------------------------


@acceptance(5, "coverage fractions")
def test_coverage_fractions(table4):
    groups = {
        "T1": ([CameraId.T1], Fraction(2, 7), "28.6"),
        "T2": ([CameraId.T2], Fraction(3, 7), "42.9"),
        "T3": ([CameraId.T3], Fraction(5, 7), "71.4"),
        "Side": (SIDE_CAMERAS, Fraction(1, 7), "14.3"),
    }
    got = {name: coverage_fraction(table4, views) for name, (views, _, _) in groups.items()}
    ok = all(got[n].fraction == f and got[n].percent_text() == pct for n, (_, f, pct) in groups.items())
    report(5, ok, ", ".join(f"{n}={got[n].fraction} ({got[n].percent_text()}%)" for n in groups))
    for name, (_, frac, pct) in groups.items():
        assert got[name].fraction == frac
        assert got[name].percent_text() == pct


# 6 -------------------------------------------------------------------------


@acceptance(6, "metric correctness")
def test_iou_analytic():
    cases = [
        ((0, 0, 0.4, 0.4), (0, 0, 0.4, 0.4), 1.0),
        ((0, 0, 0.4, 0.4), (0.4, 0.4, 0.2, 0.2), 0.0),
        ((0, 0, 0.4, 0.2), (0.2, 0, 0.4, 0.2), 1 / 3),
        ((0, 0, 0.5, 0.5), (0.1, 0.1, 0.2, 0.2), 0.04 / 0.25),
        ((0.1, 0.1, 0.2, 0.2), (0.2, 0.2, 0.2, 0.2), 0.01 / 0.07),
    ]
    worst = max(abs(iou_box(a, b) - want) for a, b, want in cases)
    report(6, worst <= 1e-12, f"iou analytic max error {worst:.1e}")
    assert worst <= 1e-12


@acceptance(6, "metric correctness")
def test_ap50_matches_step_area_oracle():
    rng = np.random.default_rng(99)
    n_dumps = 3000
    bad = 0
    for _ in range(n_dumps):
        n_gt = int(rng.integers(1, 5))
        gts = [(f"i{rng.integers(2)}", tuple(rng.uniform(0, 0.6, 2)) + (0.3, 0.3)) for _ in range(n_gt)]
        preds = []
        for _ in range(int(rng.integers(0, 7))):
            if rng.random() < 0.6:
                img, g = gts[int(rng.integers(n_gt))]
                box = (g[0] + rng.normal(0, 0.05), g[1] + rng.normal(0, 0.05), 0.3, 0.3)
                box = (min(max(box[0], 0.0), 0.7), min(max(box[1], 0.0), 0.7), 0.3, 0.3)
            else:
                img, box = f"i{rng.integers(2)}", tuple(rng.uniform(0, 0.6, 2)) + (0.3, 0.3)
            # coarse scores force ties, exercising the stable ordering
            preds.append((img, box, float(rng.integers(1, 6)) / 5))
        got = average_precision_at_50(
            [LabeledBox("c", BBox(*b), s, img) for img, b, s in preds],
            [LabeledBox("c", BBox(*b), None, img) for img, b in gts],
        )
        bad += got != ap_oracle(preds, gts)
    report(6, bad == 0, f"AP@50 vs oracle on {n_dumps} dumps, {bad} mismatches")
    assert bad == 0


@acceptance(6, "metric correctness")
def test_mean_iou_matches_bit_count_oracle():
    rng = np.random.default_rng(5)
    n_cases = 200
    bad = 0
    for _ in range(n_cases):
        pred, gt = {}, {}
        for c in ("scratch", "dent", "other"):
            pred[c] = [rng.random((32, 32)) < rng.uniform(0.05, 0.5) for _ in range(int(rng.integers(0, 3)))]
            gt[c] = [rng.random((32, 32)) < rng.uniform(0.05, 0.5) for _ in range(int(rng.integers(0, 3)))]
        got = mean_iou(
            [RasterMask(c, m) for c, ms in pred.items() for m in ms],
            [RasterMask(c, m) for c, ms in gt.items() for m in ms],
        )
        lists = lambda d: {c: [m.astype(int).tolist() for m in ms] for c, ms in d.items() if ms}
        bad += got != pixel_iou_oracle(lists(pred), lists(gt))
    report(6, bad == 0, f"mIoU vs oracle on {n_cases} rasters, {bad} mismatches")
    assert bad == 0


# 7 -------------------------------------------------------------------------

# Closed-form expectations for the packaged population (seed 0, 2000 cars),
# frozen from the oracle so that a drift in either side is noticed.
FROZEN_EXPECTATION = {0.9: 0.8240637278383656, 0.95: 0.914796631544611}


@acceptance(7, "noise calibration against closed form")
@pytest.mark.parametrize("p", [0.9, 0.95])
def test_noise_calibration(bundle, p):
    routing_raw = yaml.safe_load(packaged_config("table4.cfg").read_text())
    views_per_task = {t: len(v) for t, v in routing_raw["assignments"].items() if t != "damage"}
    noise = NoiseProfile(default_tpr=p, default_fpr=0.0, hit_score=ScoreDistribution(0.82, 0.0), seed=bundle.seed)
    res = simulate(replace(bundle, noise=noise), 2000, jitter=False)

    rows, manifest_features = [], {}
    tol = bundle.alignment_tolerance_deg
    for v in res.vehicles:
        spec = lookup(res.manifest, v.vin)
        both = spec.features & v.features
        # defects the line catches regardless of the detector draw
        caught = (
            bool(v.damages)
            or v.powertrain != spec.powertrain
            or bool(spec.features - v.features)
            or ("mascot" in both and v.variant != spec.variant)
            or ("logo" in both and abs(v.logo_rotation_deg) > tol)
        )
        rows.append((v.vin, v.features, caught))
        manifest_features[v.vin] = spec.features
    expected = expected_accuracy_closed_form(rows, manifest_features, views_per_task, p)
    got = res.summary["system_accuracy"]
    gap = abs(got - expected) * 100
    report(7, gap <= 2.0, f"p={p}: simulated {got:.4f}, closed form {expected:.4f}, gap {gap:.2f} pp")
    assert expected == pytest.approx(FROZEN_EXPECTATION[p], abs=1e-12)
    assert gap <= 2.0


# 8 -------------------------------------------------------------------------


@acceptance(8, "logo orientation recovery")
def test_logo_orientation():
    errors = []
    for angle in range(-30, 31):
        est = estimate_orientation(rasterize_rectangle(160, 160, 120, 40, float(angle)))
        errors.append(abs(est.angle_deg - angle))
        assert est.reliable
    disk = estimate_orientation(rasterize_disk(160, 160, 50))
    report(8, max(errors) <= 0.5 and not disk.reliable, f"max error {max(errors):.3f} deg, disk reliable={disk.reliable}")
    assert max(errors) <= 0.5
    assert not disk.reliable


# 9 -------------------------------------------------------------------------


def _run_bytes(bundle, tmp: Path) -> dict[str, bytes]:
    res = simulate(bundle, 80)
    paths = write_outputs(res, tmp)
    out = {name: p.read_bytes() for name, p in paths.items()}
    out["evidence"] = "".join(e.to_json() + "\n" for e in res.evidence).encode()
    return out


@acceptance(9, "determinism")
def test_determinism_api(tmp_path):
    demo = load_bundle(packaged_config("demo.yaml"))
    a = _run_bytes(demo, tmp_path / "a")
    b = _run_bytes(demo, tmp_path / "b")
    differing = [k for k in a if a[k] != b[k]]
    # a different seed must change something, or the check proves nothing
    c = _run_bytes(demo.with_seed(demo.seed + 1), tmp_path / "c")
    report(9, not differing and c != a, f"{len(a)} artifacts compared, differing={differing}")
    assert not differing
    assert c["evidence"] != a["evidence"]


@acceptance(9, "determinism")
def test_determinism_cli(tmp_path, capsys):
    demo = str(packaged_config("demo.yaml"))
    for name in ("x", "y"):
        assert main(["simulate", "--config", demo, "--n", "40", "--seed", "11", "--out", str(tmp_path / name)]) == 0
        assert main(["ablate", "--config", demo, "--n", "40", "--seed", "11", "--out", str(tmp_path / f"{name}.txt")]) == 0
    capsys.readouterr()
    for f in ("reports.jsonl", "trace.csv", "summary.json", "population.jsonl", "manifest.jsonl"):
        assert (tmp_path / "x" / f).read_bytes() == (tmp_path / "y" / f).read_bytes(), f
    assert (tmp_path / "x.txt").read_bytes() == (tmp_path / "y.txt").read_bytes()


# 10 ------------------------------------------------------------------------


@acceptance(10, "field results documented as non-reproducible")
def test_non_reproducibility_documented():
    readme = (Path(__file__).resolve().parents[1] / "README.md").read_text(encoding="utf-8")
    assert "not reproducible" in readme.lower()
    # the demonstration bundle ships and runs; its figures are not asserted
    res = simulate(load_bundle(packaged_config("demo.yaml")), 100)
    s = res.summary
    report(10, True, f"demo bundle (illustrative only): Acc_sys={s['system_accuracy']:.3f}, "
           f"recall={s['defect_recall'] if s['defect_recall'] is None else round(s['defect_recall'], 3)}")
    assert 0.0 <= s["system_accuracy"] <= 1.0
