"""Variant-aware vehicle inspection: view routing, max-pool fusion, manifest rules."""

from .fusion import Detection, EvidencePool, ThresholdTable, detect_features, fuse_task_score
from .manifest import ManifestDB, VariantSpec, expected_features, ingest, lookup
from .routing import CameraId, RoutingTable, coverage_fraction, load_routing, tasks_for_view, views_for_task
from .rules import (
    DamageInstance,
    Discrepancies,
    InspectionReport,
    Verdict,
    build_report,
    compute_discrepancies,
    decide,
    gate_damages,
)

__version__ = "0.1.0"
