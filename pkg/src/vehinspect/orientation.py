"""Logo rotation check from second-order central moments of a binary mask.

Angles are measured in the mask's own frame: x along columns, y along rows
(downwards), positive from +x toward +y. The principal axis angle is

    theta = 0.5 * atan2(2 * mu11, mu20 - mu02)

reported in (-90, 90] degrees.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

MIN_PIXELS = 16
DEFAULT_ECCENTRICITY_FLOOR = 0.05
DEFAULT_TOLERANCE_DEG = 3.0


class TooFewPixelsError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class BinaryMask:
    bits: np.ndarray

    def __post_init__(self) -> None:
        bits = np.asarray(self.bits, dtype=bool)
        if bits.ndim != 2 or bits.shape[0] < 1 or bits.shape[1] < 1:
            raise ValueError(f"mask must be a non-empty 2-D grid, got shape {bits.shape}")
        object.__setattr__(self, "bits", bits)

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def count(self) -> int:
        return int(self.bits.sum())

    def upsample(self, factor: int) -> "BinaryMask":
        return BinaryMask(np.kron(self.bits, np.ones((factor, factor), dtype=bool)))


@dataclass(frozen=True)
class OrientationEstimate:
    angle_deg: float
    eccentricity: float
    reliable: bool

    def to_dict(self) -> dict:
        return {
            "angle_deg": self.angle_deg,
            "eccentricity": self.eccentricity,
            "reliable": self.reliable,
        }

    @classmethod
    def from_dict(cls, d) -> "OrientationEstimate":
        return cls(float(d["angle_deg"]), float(d["eccentricity"]), bool(d["reliable"]))


def estimate_orientation(
    mask: BinaryMask, eccentricity_floor: float = DEFAULT_ECCENTRICITY_FLOOR
) -> OrientationEstimate:
    """Principal-axis angle of the set pixels.

    ``eccentricity`` is (l1 - l2) / (l1 + l2) for the eigenvalues of the
    pixel covariance: 0 for rotationally symmetric shapes, approaching 1 for
    thin bars. Below ``eccentricity_floor`` the angle is flagged unreliable.
    """
    rows, cols = np.nonzero(mask.bits)
    if rows.size < MIN_PIXELS:
        raise TooFewPixelsError(f"need at least {MIN_PIXELS} set pixels, got {rows.size}")
    x = cols.astype(float)
    y = rows.astype(float)
    x -= x.mean()
    y -= y.mean()
    mu20 = float(np.dot(x, x))
    mu02 = float(np.dot(y, y))
    mu11 = float(np.dot(x, y))
    angle = 0.5 * math.degrees(math.atan2(2.0 * mu11, mu20 - mu02))
    if angle <= -90.0:
        angle += 180.0
    spread = math.hypot(mu20 - mu02, 2.0 * mu11)
    total = mu20 + mu02
    ecc = spread / total if total > 0 else 0.0
    return OrientationEstimate(angle, ecc, ecc >= eccentricity_floor)


class Alignment(str, enum.Enum):
    ALIGNED = "aligned"
    MISALIGNED = "misaligned"
    UNRELIABLE = "unreliable"


def check_alignment(
    angle: float | OrientationEstimate,
    tolerance_deg: float = DEFAULT_TOLERANCE_DEG,
    reliable: bool = True,
) -> Alignment:
    if tolerance_deg < 0:
        raise ValueError("tolerance must be non-negative")
    if isinstance(angle, OrientationEstimate):
        reliable = reliable and angle.reliable
        angle = angle.angle_deg
    if not reliable:
        return Alignment.UNRELIABLE
    return Alignment.ALIGNED if abs(angle) <= tolerance_deg else Alignment.MISALIGNED


def rasterize_rectangle(
    width: int,
    height: int,
    rect_w: float,
    rect_h: float,
    angle_deg: float = 0.0,
    center: tuple[float, float] | None = None,
) -> BinaryMask:
    """Filled rectangle whose ``rect_w`` side points along ``angle_deg``.

    A pixel is set when its center lies inside the rotated rectangle.
    """
    cx, cy = center if center is not None else (width / 2.0, height / 2.0)
    th = math.radians(angle_deg)
    xs = np.arange(width) + 0.5 - cx
    ys = np.arange(height) + 0.5 - cy
    X, Y = np.meshgrid(xs, ys)
    u = X * math.cos(th) + Y * math.sin(th)
    v = -X * math.sin(th) + Y * math.cos(th)
    return BinaryMask((np.abs(u) <= rect_w / 2.0) & (np.abs(v) <= rect_h / 2.0))


def rasterize_disk(width: int, height: int, radius: float) -> BinaryMask:
    xs = np.arange(width) + 0.5 - width / 2.0
    ys = np.arange(height) + 0.5 - height / 2.0
    X, Y = np.meshgrid(xs, ys)
    return BinaryMask(X * X + Y * Y <= radius * radius)


@lru_cache(maxsize=512)
def logo_reading(rotation_deg: float) -> OrientationEstimate:
    """Orientation estimate for a synthetic 120x40 logo plate rotated by ``rotation_deg``."""
    return estimate_orientation(rasterize_rectangle(160, 160, 120, 40, rotation_deg))
