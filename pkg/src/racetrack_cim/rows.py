"""Packed 512-bit memory rows.

A row is a ``uint64`` array whose last axis has :data:`WORDS` entries; word ``j``
holds row bits ``64*j .. 64*j+63``.  Leading axes index independent DBC
instances driven in lock-step.  Operands of width ``w`` occupy ``512 // w``
lanes, lane 0 in the least-significant bits.
"""
from __future__ import annotations

import numpy as np

ROW_BITS = 512
WORDS = ROW_BITS // 64
LANE_WIDTHS = (8, 16, 32, 64)

_LANE_DTYPES = {8: np.dtype("<u1"), 16: np.dtype("<u2"), 32: np.dtype("<u4"), 64: np.dtype("<u8")}
_ALL = np.uint64(0xFFFFFFFFFFFFFFFF)


class LanePackingError(ValueError):
    """Lane width or lane placement is not compatible with a 512-bit row."""


def check_lane_width(width: int) -> int:
    if width not in LANE_WIDTHS:
        raise LanePackingError(f"lane width must be one of {LANE_WIDTHS}, got {width}")
    return width


def lanes_per_row(width: int) -> int:
    return ROW_BITS // check_lane_width(width)


def zeros(batch: int = 1) -> np.ndarray:
    return np.zeros((batch, WORDS), dtype=np.uint64)


def pack_lanes(values, width: int) -> np.ndarray:
    """Pack ``(..., 512 // width)`` lane values into rows of shape ``(..., 8)``.

    Values are reduced modulo ``2**width``.
    """
    n = lanes_per_row(width)
    arr = np.asarray(values)
    if arr.shape[-1] != n:
        raise LanePackingError(f"expected {n} lanes of width {width}, got shape {arr.shape}")
    if arr.dtype == object:
        arr = np.vectorize(lambda v: int(v) % (1 << width), otypes=[np.uint64])(arr)
    lanes = np.ascontiguousarray(arr.astype(np.uint64) if width == 64 else
                                 (arr.astype(np.uint64) & np.uint64((1 << width) - 1)))
    lanes = lanes.astype(_LANE_DTYPES[width])
    return np.ascontiguousarray(lanes).view(np.dtype("<u8")).astype(np.uint64)


def unpack_lanes(rows: np.ndarray, width: int) -> np.ndarray:
    """Inverse of :func:`pack_lanes`; returns ``uint64`` lane values."""
    check_lane_width(width)
    r = np.ascontiguousarray(rows, dtype=np.dtype("<u8"))
    return r.view(_LANE_DTYPES[width]).astype(np.uint64)


def lane_const(value: int, width: int, batch: int | None = None) -> np.ndarray:
    """Row with ``value`` replicated in every lane."""
    row = pack_lanes(np.full(lanes_per_row(width), value % (1 << width), dtype=np.uint64), width)
    if batch is not None:
        row = np.broadcast_to(row, (batch, WORDS)).copy()
    return row


def lane_mask(pred: np.ndarray, width: int) -> np.ndarray:
    """Expand a per-lane boolean ``(..., lanes)`` into a full-lane bit mask row."""
    full = (1 << width) - 1
    return pack_lanes(np.where(pred, np.uint64(full), np.uint64(0)), width)


def to_bits(rows: np.ndarray) -> np.ndarray:
    """Unpack rows to ``(..., 512)`` booleans, bit 0 first."""
    r = np.ascontiguousarray(rows, dtype=np.dtype("<u8"))
    return np.unpackbits(r.view(np.uint8), axis=-1, bitorder="little").astype(bool)


def from_bits(bits) -> np.ndarray:
    b = np.asarray(bits, dtype=np.uint8)
    if b.shape[-1] != ROW_BITS:
        raise LanePackingError(f"expected {ROW_BITS} bits, got {b.shape[-1]}")
    packed = np.packbits(b, axis=-1, bitorder="little")
    return np.ascontiguousarray(packed).view(np.dtype("<u8")).astype(np.uint64)


def from_int(value: int, batch: int | None = None) -> np.ndarray:
    """Row holding the 512-bit integer ``value``."""
    words = [(value >> (64 * j)) & 0xFFFFFFFFFFFFFFFF for j in range(WORDS)]
    row = np.array(words, dtype=np.uint64)[None, :]
    return row if batch is None else np.broadcast_to(row, (batch, WORDS)).copy()


def to_int(row: np.ndarray) -> int:
    row = np.asarray(row).reshape(-1, WORDS)[0]
    return sum(int(w) << (64 * j) for j, w in enumerate(row))


def shift_left(rows: np.ndarray, n: int) -> np.ndarray:
    """Full-row logical shift toward higher bit indices, lane-oblivious."""
    if n == 0:
        return rows.copy()
    if not 0 < n < 64:
        raise ValueError("shift amount must be in 1..63")
    out = rows << np.uint64(n)
    out[..., 1:] |= rows[..., :-1] >> np.uint64(64 - n)
    return out


def shift_right(rows: np.ndarray, n: int) -> np.ndarray:
    """Full-row logical shift toward lower bit indices, lane-oblivious."""
    if n == 0:
        return rows.copy()
    if not 0 < n < 64:
        raise ValueError("shift amount must be in 1..63")
    out = rows >> np.uint64(n)
    out[..., :-1] |= rows[..., 1:] << np.uint64(64 - n)
    return out


def invert(rows: np.ndarray) -> np.ndarray:
    return rows ^ _ALL


def popcount_planes(rows) -> list[np.ndarray]:
    """Bit-sliced population count of a stack of rows.

    Returns ``k = len(rows).bit_length()`` planes ``[b0, b1, ...]`` such that
    the count at each bit position is ``sum(b_j << j)``.
    """
    rows = list(rows)
    planes = [np.zeros_like(rows[0]) for _ in range(len(rows).bit_length())]
    for row in rows:
        carry = row
        for k in range(len(planes)):
            planes[k], carry = planes[k] ^ carry, planes[k] & carry
    return planes
