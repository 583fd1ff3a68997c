"""VIN-keyed variant manifests.

Manifest files are JSON Lines: one object per line with ``vin``, ``model``,
``variant``, ``powertrain`` and ``features``; any other keys are kept as
free-form metadata. Blank lines and lines starting with ``#`` are skipped.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping, Optional

from .routing import DEFAULT_VOCABULARY

VIN_PATTERN = re.compile(r"^[A-HJ-NPR-Z0-9]{17}$")
POWERTRAINS = ("ICE", "EV")

_TRANSLITERATION = {
    **{str(d): d for d in range(10)},
    "A": 1, "B": 2, "C": 3, "D": 4, "E": 5, "F": 6, "G": 7, "H": 8,
    "J": 1, "K": 2, "L": 3, "M": 4, "N": 5, "P": 7, "R": 9,
    "S": 2, "T": 3, "U": 4, "V": 5, "W": 6, "X": 7, "Y": 8, "Z": 9,
}
_WEIGHTS = (8, 7, 6, 5, 4, 3, 2, 10, 0, 9, 8, 7, 6, 5, 4, 3, 2)


class ManifestError(ValueError):
    pass


class ManifestParseError(ManifestError):
    def __init__(self, path: str, line: int, msg: str):
        super().__init__(f"{path}:{line}: {msg}")
        self.line = line


class UnknownVINError(KeyError):
    def __init__(self, vin: str):
        super().__init__(vin)
        self.vin = vin

    def __str__(self) -> str:
        return f"no manifest entry for VIN {self.vin}"


def vin_check_digit(vin: str) -> str:
    """North-American check digit (position 9) for a 17-character VIN."""
    total = sum(_TRANSLITERATION[ch] * w for ch, w in zip(vin, _WEIGHTS))
    rem = total % 11
    return "X" if rem == 10 else str(rem)


def validate_vin(vin: str, strict: bool = False) -> str:
    if not isinstance(vin, str) or not VIN_PATTERN.match(vin):
        raise ManifestError(f"malformed VIN {vin!r}")
    if strict and vin[8] != vin_check_digit(vin):
        raise ManifestError(f"VIN {vin} fails check-digit validation")
    return vin


@dataclass(frozen=True)
class VariantSpec:
    vin: str
    model: str
    variant: str
    powertrain: str
    features: frozenset[str]
    metadata: Mapping = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "vin": self.vin,
            "model": self.model,
            "variant": self.variant,
            "powertrain": self.powertrain,
            "features": sorted(self.features),
        }
        for k in sorted(self.metadata):
            out[k] = self.metadata[k]
        return out


def spec_from_dict(
    record: Mapping, vocabulary: Iterable[str] = DEFAULT_VOCABULARY, strict_vin: bool = False
) -> VariantSpec:
    missing = [k for k in ("vin", "model", "variant", "powertrain", "features") if k not in record]
    if missing:
        raise ManifestError(f"record lacks field(s) {', '.join(missing)}")
    vin = validate_vin(record["vin"], strict=strict_vin)
    variant = str(record["variant"])
    if not variant.strip():
        raise ManifestError(f"VIN {vin}: variant name is empty")
    powertrain = str(record["powertrain"])
    if powertrain not in POWERTRAINS:
        raise ManifestError(f"VIN {vin}: powertrain must be ICE or EV, got {powertrain!r}")
    features = record["features"]
    if not isinstance(features, list):
        raise ManifestError(f"VIN {vin}: features must be a list")
    vocab = set(vocabulary)
    unknown = sorted(set(features) - vocab)
    if unknown:
        raise ManifestError(f"VIN {vin}: unknown feature(s) {', '.join(unknown)}")
    meta = {k: v for k, v in record.items() if k not in ("vin", "model", "variant", "powertrain", "features")}
    return VariantSpec(vin, str(record["model"]), variant, powertrain, frozenset(features), meta)


class ManifestDB:
    """Immutable VIN -> VariantSpec mapping."""

    def __init__(self, specs: Iterable[VariantSpec], fingerprint: Optional[str] = None):
        entries: dict[str, VariantSpec] = {}
        for spec in specs:
            if spec.vin in entries:
                raise ManifestError(f"duplicate VIN {spec.vin}")
            entries[spec.vin] = spec
        self._entries = MappingProxyType(entries)
        self.fingerprint = fingerprint or hashlib.sha256(self.export_text().encode()).hexdigest()

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, vin: str) -> bool:
        return vin in self._entries

    def __iter__(self):
        return iter(self._entries.values())

    @property
    def vins(self) -> tuple[str, ...]:
        return tuple(self._entries)

    def content(self) -> dict[str, dict]:
        return {vin: spec.to_dict() for vin, spec in self._entries.items()}

    def export_text(self) -> str:
        return "".join(json.dumps(s.to_dict(), separators=(",", ":")) + "\n" for s in self._entries.values())

    def export(self, path: str | Path) -> None:
        Path(path).write_text(self.export_text(), encoding="utf-8")


def parse_manifest(
    text: str,
    source: str = "<manifest>",
    vocabulary: Iterable[str] = DEFAULT_VOCABULARY,
    strict_vin: bool = False,
) -> ManifestDB:
    vocabulary = tuple(vocabulary)
    specs: list[VariantSpec] = []
    seen: dict[str, int] = {}
    problems: list[str] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        try:
            record = json.loads(stripped)
        except json.JSONDecodeError as exc:
            raise ManifestParseError(source, lineno, exc.msg) from None
        if not isinstance(record, dict):
            raise ManifestParseError(source, lineno, "expected a JSON object")
        try:
            spec = spec_from_dict(record, vocabulary, strict_vin)
        except ManifestError as exc:
            problems.append(f"line {lineno}: {exc}")
            continue
        if spec.vin in seen:
            problems.append(f"line {lineno}: duplicate VIN {spec.vin} (first seen on line {seen[spec.vin]})")
            continue
        seen[spec.vin] = lineno
        specs.append(spec)
    if problems:
        raise ManifestError(f"{source}: " + "; ".join(problems))
    return ManifestDB(specs, fingerprint=hashlib.sha256(text.encode("utf-8")).hexdigest())


def ingest(
    path: str | Path, vocabulary: Iterable[str] = DEFAULT_VOCABULARY, strict_vin: bool = False
) -> ManifestDB:
    path = Path(path)
    return parse_manifest(path.read_text(encoding="utf-8"), str(path), vocabulary, strict_vin)


def lookup(db: ManifestDB, vin: str) -> VariantSpec:
    try:
        return db._entries[vin]
    except KeyError:
        raise UnknownVINError(vin) from None


def expected_features(db: ManifestDB, vin: str) -> frozenset[str]:
    return lookup(db, vin).features
