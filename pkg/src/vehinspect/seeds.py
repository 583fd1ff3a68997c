"""Stable per-vehicle seed derivation.

``derive_seed(master, vehicle_id, stream)`` hashes the three parts with
SHA-256 and keeps the first 8 bytes (big-endian) as an unsigned 64-bit seed.
The value depends only on its arguments, so vehicles can be synthesized in
any order or in parallel and still get the same random streams.
"""

from __future__ import annotations

import hashlib


def derive_seed(master: int, vehicle_id: str, stream: str = "") -> int:
    digest = hashlib.sha256(f"{int(master)}:{vehicle_id}:{stream}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")
