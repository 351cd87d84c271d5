"""Single-precision floating point on the CIM tile.

Values live in the low half of 64-bit lanes (8 per row).  A product is kept
decomposed as an :class:`FpTriple`: a mantissa whose value 1.0 sits at bit 46,
a biased exponent field at bits 23..30 (bit 31 flags an overflowed result),
and a sign at bit 31.  Rounding is truncation everywhere; subnormal inputs and
results are flushed to zero.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rows as R
from .cim import CimTile
from .config import DeviceConfig
from .intalu import add5, csa_reduce, multiply

FRAC_MASK = 0x7FFFFF
HIDDEN_BIT = 0x800000
EXP_MASK = 0x7F800000
SIGN_MASK = 0x80000000
EXP_OFFSET = 0xC0800000      # -127 in the 9-bit window at bit 23
EXP_INVERT = 0xFF800000
M48 = (1 << 48) - 1
ALL64 = (1 << 64) - 1
ONE_POS = 46                 # bit of the mantissa that weighs 1.0
LANES = 8
FP_CONFIG = DeviceConfig(domains_per_wire=64)


def exponent_overflow(e) -> np.ndarray:
    """Exponent row lanes above the normal range: bit 31 of the 9-bit add, or field 255."""
    e = np.asarray(e, dtype=np.uint64)
    return ((e >> np.uint64(31)) & np.uint64(1)).astype(bool) | (((e >> np.uint64(23)) & np.uint64(0xFF)) == 0xFF)


@dataclass
class FpTriple:
    """Host view of decomposed values: flat ``uint64`` lane arrays."""

    m: np.ndarray
    e: np.ndarray
    s: np.ndarray

    def __len__(self) -> int:
        return self.m.size

    @property
    def exponent(self) -> np.ndarray:
        return (self.e >> np.uint64(23)) & np.uint64(0xFF)

    @property
    def overflow(self) -> np.ndarray:
        return exponent_overflow(self.e)

    def pack(self) -> np.ndarray:
        """Recombine to IEEE single bits (truncating the mantissa); zero mantissa gives signed zero."""
        frac = (self.m >> np.uint64(ONE_POS - 23)) & np.uint64(FRAC_MASK)
        bits = (self.s & np.uint64(SIGN_MASK)) | (self.e & np.uint64(EXP_MASK)) | frac
        bits = np.where(self.m == 0, self.s & np.uint64(SIGN_MASK), bits)
        return bits.astype(np.uint32)

    @classmethod
    def from_bits(cls, bits) -> "FpTriple":
        """Host-side decomposition of IEEE single bit patterns (subnormals flush to zero)."""
        b = np.asarray(bits, dtype=np.uint64).ravel()
        e = b & np.uint64(EXP_MASK)
        m = ((b & np.uint64(FRAC_MASK)) | np.uint64(HIDDEN_BIT)) << np.uint64(ONE_POS - 23)
        zero = e == 0
        m = np.where(zero, np.uint64(0), m)
        return cls(m=m, e=np.where(zero, np.uint64(0), e), s=b & np.uint64(SIGN_MASK))

    @classmethod
    def from_floats(cls, x) -> "FpTriple":
        return cls.from_bits(np.asarray(x, dtype=np.float32).view(np.uint32))

    def negated(self) -> "FpTriple":
        return FpTriple(self.m, self.e, self.s ^ np.uint64(SIGN_MASK))

    def take(self, idx) -> "FpTriple":
        return FpTriple(self.m[idx], self.e[idx], self.s[idx])


def float_bits(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float32).view(np.uint32)


def bits_float(b) -> np.ndarray:
    return np.asarray(b, dtype=np.uint32).view(np.float32)


def check_finite(bits) -> None:
    """Validation mode: reject NaN/Inf encodings."""
    b = np.asarray(bits, dtype=np.uint64)
    if (((b >> np.uint64(23)) & np.uint64(0xFF)) == 0xFF).any():
        raise ValueError("non-finite floating-point input")


# -- microcode ------------------------------------------------------------------

def _zero_flag(tile: CimTile, src: int, reg: int) -> None:
    """Predicate ``reg`` = exponent field of ``src`` is zero (zero or subnormal input)."""
    t, c = tile.alloc(2)
    tile.read(src)
    tile.const_op("and", EXP_MASK)
    tile.write(t)
    tile.store(c, R.lane_const(EXP_MASK, 64))
    nz = add5(tile, [t, c], 9, 23)
    tile.read(nz)
    tile.const_op("xor", SIGN_MASK)
    tile.load_pred(31, reg)
    tile.free(t, c, nz)


def _underflow_flag(tile: CimTile, e: int) -> None:
    """Predicate 2 = the 9-bit exponent sum in row ``e`` is 0 or negative (field >= 384).

    Clobbers predicates 0 and 1.
    """
    tile.read(e)
    tile.load_pred(31, 1)
    tile.lshift(1, "left")
    tile.load_pred(31, 2)
    tile.pred_logic(2, "and", 1, 2)
    _zero_flag(tile, e, 0)
    tile.pred_logic(0, "andnot", 0, 1)
    tile.pred_logic(2, "or", 2, 0)


def fp_multiply(tile: CimTile, a: int, b: int) -> tuple[int, int, int]:
    """Multiply packed singles in rows ``a`` and ``b``; returns rows ``(M, E, S)``."""
    ma, mb = tile.alloc(2)
    for src, dst in ((a, ma), (b, mb)):
        tile.read(src)
        tile.const_op("and", FRAC_MASK)
        tile.const_op("or", HIDDEN_BIT)
        tile.write(dst)
    _zero_flag(tile, a, 1)
    _zero_flag(tile, b, 2)
    tile.pred_logic(3, "or", 1, 2)

    m = multiply(tile, ma, mb, 24, preserve=False)
    # normalize when the product is >= 2.0
    tile.read(m)
    tile.load_pred(47, 0)
    tile.predicated_apply("shift", 0, amount=1, direction="right")
    tile.const_op("and", M48)
    tile.write(m)

    ea, eb, off, one = tile.alloc(4)
    for src, dst in ((a, ea), (b, eb)):
        tile.read(src)
        tile.const_op("and", EXP_MASK)
        tile.write(dst)
    tile.store(off, R.lane_const(EXP_OFFSET, 64))
    tile.store(one, R.zeros())
    tile.set_const(HIDDEN_BIT)
    tile.predicated_apply("write", 0, target=one)
    e = add5(tile, [ea, eb, off, one], 9, 23)
    tile.free(ea, eb, off, one)

    sa, sb = tile.alloc(2)
    for src, dst in ((a, sa), (b, sb)):
        tile.read(src)
        tile.const_op("and", SIGN_MASK)
        tile.write(dst)
    tile.bulk("xor", [sa, sb])
    s = sa
    tile.write(s)
    tile.free(sb)

    # results below the normal range flush to signed zero
    _underflow_flag(tile, e)
    tile.pred_logic(2, "or", 2, 3)
    for row, reg in ((m, 2), (e, 2), (s, 3)):
        tile.read(row)
        tile.predicated_apply("reset", reg)
        tile.write(row)
    return m, e, s


def decompose(tile: CimTile, a: int) -> tuple[int, int, int]:
    """Split a packed single into ``(M, E, S)`` rows with the same layout as a product."""
    _zero_flag(tile, a, 3)
    m, e, s = tile.alloc(3)
    tile.read(a)
    tile.const_op("and", FRAC_MASK)
    tile.const_op("or", HIDDEN_BIT)
    tile.shift_by(ONE_POS - 23, "left")
    tile.write(m)
    tile.read(a)
    tile.const_op("and", EXP_MASK)
    tile.write(e)
    tile.read(a)
    tile.const_op("and", SIGN_MASK)
    tile.write(s)
    for row in (m, e):
        tile.read(row)
        tile.predicated_apply("reset", 3)
        tile.write(row)
    return m, e, s


def find_max(tile: CimTile, rows, w: int = 8, o: int = 23, dest: int | None = None) -> int:
    """Maximum of up to seven ``w``-bit fields at offset ``o`` by MSB-first elimination.

    Each round ORs the window, then cycles every value through the row buffer
    shifted left by one, resetting those with a 0 at the tested bit when some
    value has a 1 there.  Rounds alternate walking the window up and down the
    DBC.  Fields must be masked (no bits outside ``[o, o+w)``).
    """
    rows = list(rows)
    p = o + w
    trd = tile.trd
    base = tile.window
    tile.stage(rows, start=base)
    dbc = tile.dbc
    pos = base
    for i in range(w):
        tile.tr(pos)
        tile.select("or")
        tile.lshift(1, "left")
        tile.load_pred(p, 1)
        up = i % 2 == 0
        dbc.align(pos if up else pos + trd - 1, 0 if up else 1)
        for _ in range(trd):
            tile.rb = dbc.read_row(0 if up else 1)
            tile.lshift(1, "left")
            tile.load_pred(p, 2)
            tile.pred_logic(3, "andnot", 1, 2)
            tile.predicated_apply("reset", 3)
            dbc.shift("up" if up else "down", 1)
            dbc.write_row(1 if up else 0, tile.rb)
        pos = pos + trd if up else pos - trd
    tile.tr(pos)
    tile.select("or")
    tile.shift_by(w, "right")
    if dest is None:
        dest = tile.alloc()
    tile.write(dest)
    return dest


def max_of(tile: CimTile, rows, w: int = 8, o: int = 23) -> int:
    """Tournament of :func:`find_max` over any number of rows, groups of TRD."""
    level = list(rows)
    owned: list[int] = []
    while True:
        if len(level) <= tile.trd:
            out = find_max(tile, level, w, o)
            tile.free(*owned)
            return out
        nxt = []
        for k in range(0, len(level), tile.trd):
            nxt.append(find_max(tile, level[k:k + tile.trd], w, o))
        tile.free(*owned)
        owned = nxt
        level = nxt


def norm_mantissa(tile: CimTile, m: int, mx: int, e: int) -> int:
    """Shift mantissa row ``m`` right by ``max - E`` in place; differences >= 64 flush it to zero."""
    t, one = tile.alloc(2)
    tile.read(e)
    tile.const_op("xor", EXP_INVERT)
    tile.write(t)
    tile.store(one, R.lane_const(HIDDEN_BIT, 64))
    d = add5(tile, [mx, t, one], 9, 23)
    tile.free(t, one)
    for k in range(7, -1, -1):
        tile.read(d)
        tile.lshift(1, "left")
        tile.write(d)
        tile.load_pred(31, 0)
        tile.read(m)
        if k >= 6:
            tile.predicated_apply("reset", 0)
        else:
            amount = 8 if k >= 3 else 1
            for _ in range(1 << (k % 3)):
                tile.predicated_apply("shift", 0, amount=amount, direction="right")
                tile.const_op("and", M48)
        tile.write(m)
    tile.free(d)
    return m


def norm_sum(tile: CimTile, m: int, e: int) -> tuple[int, int]:
    """Turn a 64-bit two's-complement mantissa sum and its exponent into packed singles.

    Returns ``(packed_row, exponent_row)``; bit 31 of the exponent row flags a
    result exponent above the normal range.  An all-zero sum gives +0 and a
    result below the normal range gives signed zero.
    """
    sign, one, mcopy, exp_add = tile.alloc(4)
    tile.read(m)
    for _ in range(4):
        tile.lshift(8, "right")
    tile.load_pred(31, 0)
    tile.const_op("and", SIGN_MASK)
    tile.write(sign)
    # magnitude
    tile.read(m)
    tile.predicated_apply("xor", 0, value=ALL64)
    tile.write(m)
    tile.store(one, R.zeros())
    tile.set_const(1)
    tile.predicated_apply("write", 0, target=one)
    mag = add5(tile, [m, one], 64, 0, dest=m)
    tile.free(one)

    # scan copy: bit 62 of the magnitude sits at predicate position 47; the
    # bits below 15 are brought up from an untouched copy halfway through
    orig = tile.alloc()
    tile.copy(mag, orig)
    tile.read(mag)
    tile.shift_by(62 - 47, "right")
    tile.const_op("and", M48)
    tile.write(mcopy)
    tile.store(exp_add, R.zeros())
    tile.pred_logic(1, "clear", 1)
    for bit in range(62, -1, -1):
        if bit == 62 - 48:
            tile.read(orig)
            tile.shift_by(47 - bit, "left")
            tile.const_op("and", M48)
            tile.write(mcopy)
            tile.free(orig)
        tile.read(mcopy)
        tile.load_pred(47, 2)
        tile.lshift(1, "left")
        tile.const_op("and", M48)
        tile.write(mcopy)
        tile.pred_logic(2, "or", 1, 2)          # seen including this bit
        tile.pred_logic(3, "xor", 2, 1)         # first one at this bit
        tile.pred_logic(1, "copy", 2)
        tile.set_const(((bit - ONE_POS) & 0x1FF) << 23)
        tile.predicated_apply("write", 3, target=exp_add)
        tile.read(mag)
        if bit >= 24:
            tile.predicated_apply("shift", 1, amount=1, direction="right")
            tile.const_op("and", ALL64 >> 1)
        else:
            tile.pred_logic(2, "not", 1)
            tile.predicated_apply("shift", 2, amount=1, direction="left")
        tile.write(mag)
    tile.pred_logic(2, "not", 1)                # sum was zero
    exp = add5(tile, [e, exp_add], 9, 23)
    tile.read(exp)
    tile.predicated_apply("reset", 2)
    tile.write(exp)
    tile.free(mcopy, exp_add)
    _underflow_flag(tile, exp)

    fields = tile.alloc()
    tile.read(exp)
    tile.predicated_apply("reset", 2)
    tile.write(exp)
    tile.const_op("and", EXP_MASK)
    tile.write(fields)
    tile.read(mag)
    tile.const_op("and", FRAC_MASK)
    tile.predicated_apply("reset", 2)
    tile.write(mag)
    tile.bulk("or", [mag, fields, sign])
    out = fields
    tile.write(out)
    tile.free(sign)
    return out, exp


def fp_add(tile: CimTile, operands) -> tuple[int, int]:
    """Sum ``n`` decomposed operands per lane; returns ``(packed_row, exponent_row)``.

    Each operand is either a tuple of row indices ``(M, E, S)`` (consumed) or
    a pair ``(FpTriple, lane_slice)`` of host data that is loaded when needed.
    All mantissas align to the global maximum exponent before the two's
    complement sum, so the result does not depend on operand order.
    """
    operands = list(operands)
    n = len(operands)
    if n < 1:
        raise ValueError("fp_add needs at least one operand")

    def rows_of(k, want_m=True, want_s=True):
        op = operands[k]
        if isinstance(op[0], (int, np.integer)):
            return op
        host, sl = op
        mr = tile.alloc() if want_m else None
        er = tile.alloc()
        sr = tile.alloc() if want_s else None
        if want_m:
            tile.store(mr, R.pack_lanes(host.m[sl].reshape(-1, LANES), 64))
        tile.store(er, R.pack_lanes(host.e[sl].reshape(-1, LANES), 64))
        if want_s:
            tile.store(sr, R.pack_lanes(host.s[sl].reshape(-1, LANES), 64))
        return mr, er, sr

    def masked_exponent(k):
        mr, er, sr = rows_of(k, want_m=False, want_s=False)
        out = tile.alloc()
        tile.read(er)
        tile.const_op("and", EXP_MASK)
        tile.write(out)
        if not isinstance(operands[k][0], (int, np.integer)):
            tile.free(er)
        return out

    # global maximum exponent, streamed in groups of TRD
    pending: list[int] = []
    partial: list[int] = []
    for k in range(n):
        pending.append(masked_exponent(k))
        if len(pending) == tile.trd:
            partial.append(find_max(tile, pending))
            tile.free(*pending)
            pending = []
            if len(partial) == tile.trd:
                merged = find_max(tile, partial)
                tile.free(*partial)
                partial = [merged]
    group = partial + pending
    while len(group) > tile.trd:
        head = find_max(tile, group[:tile.trd])
        tile.free(*group[:tile.trd])
        group = [head] + group[tile.trd:]
    mx = find_max(tile, group)
    tile.free(*group)

    # align, two's complement, and carry-save accumulate
    acc: list[int] = []
    for k in range(n):
        mr, er, sr = rows_of(k)
        ex = tile.alloc()
        tile.read(er)
        tile.const_op("and", EXP_MASK)
        tile.write(ex)
        norm_mantissa(tile, mr, mx, ex)
        comp = ex
        tile.read(sr)
        tile.load_pred(31, 0)
        tile.read(mr)
        tile.predicated_apply("xor", 0, value=ALL64)
        tile.write(mr)
        tile.store(comp, R.zeros())
        tile.set_const(1)
        tile.predicated_apply("write", 0, target=comp)
        tile.free(er, sr)
        acc.extend([mr, comp])
        while len(acc) >= tile.trd:
            group, acc = acc[:tile.trd], acc[tile.trd:]
            acc = list(csa_reduce(tile, group, dests=group[:3])) + acc
            tile.free(*group[3:])
    while len(acc) > tile.trd - 2:
        group, acc = acc[:tile.trd], acc[tile.trd:]
        acc = list(csa_reduce(tile, group, dests=group[:3])) + acc
        tile.free(*group[3:])
    total = add5(tile, acc, 64, 0)
    tile.free(*acc)
    out, exp = norm_sum(tile, total, mx)
    tile.free(total, mx)
    return out, exp


# -- host-level drivers -----------------------------------------------------------

def _rows_of(values: np.ndarray) -> tuple[int, np.ndarray]:
    v = np.asarray(values, dtype=np.uint64).ravel()
    batch = max(1, -(-v.size // LANES))
    pad = np.zeros(batch * LANES, dtype=np.uint64)
    pad[:v.size] = v
    return batch, pad.reshape(batch, LANES)


def run_fp_multiply(a_bits, b_bits, config: DeviceConfig | None = None, max_batch: int = 4096,
                    validate: bool = False):
    """Multiply IEEE single bit patterns lane-parallel; returns ``(FpTriple, ledger)``.

    The ledger is for one chunk of lock-step DBCs (identical for every chunk).
    """
    a = np.asarray(a_bits, dtype=np.uint64).ravel()
    b = np.asarray(b_bits, dtype=np.uint64).ravel()
    if validate:
        check_finite(a)
        check_finite(b)
    n = a.size
    out_m, out_e, out_s = (np.zeros(n, dtype=np.uint64) for _ in range(3))
    ledger = None
    step = max_batch * LANES
    for lo in range(0, max(n, 1), step):
        hi = min(n, lo + step)
        batch, la = _rows_of(a[lo:hi])
        _, lb = _rows_of(b[lo:hi])
        tile = CimTile(config or FP_CONFIG, batch=batch, lane_width=64)
        ra, rb = tile.alloc(2)
        tile.dbc.poke(ra, R.pack_lanes(la, 64))
        tile.dbc.poke(rb, R.pack_lanes(lb, 64))
        m, e, s = fp_multiply(tile, ra, rb)
        k = hi - lo
        out_m[lo:hi] = tile.peek_lanes(m).ravel()[:k]
        out_e[lo:hi] = tile.peek_lanes(e).ravel()[:k]
        out_s[lo:hi] = tile.peek_lanes(s).ravel()[:k]
        ledger = tile.ledger
    return FpTriple(out_m, out_e, out_s), ledger


def run_fp_add(operands: list[FpTriple], config: DeviceConfig | None = None, max_batch: int = 4096):
    """Lane-wise sum of ``n`` equal-length triples; returns ``(bits, flags, ledger)``.

    ``flags`` marks lanes where an input or the result left the normal exponent range.
    """
    n = len(operands[0])
    bits = np.zeros(n, dtype=np.uint32)
    flags = np.zeros(n, dtype=bool)
    for op in operands:
        flags |= op.overflow
    ledger = None
    step = max_batch * LANES
    for lo in range(0, max(n, 1), step):
        hi = min(n, lo + step)
        k = hi - lo
        batch = max(1, -(-k // LANES))
        padded = []
        for op in operands:
            cols = []
            for arr in (op.m, op.e, op.s):
                buf = np.zeros(batch * LANES, dtype=np.uint64)
                buf[:k] = arr[lo:hi]
                cols.append(buf)
            padded.append((FpTriple(*cols), slice(None)))
        tile = CimTile(config or FP_CONFIG, batch=batch, lane_width=64)
        out, exp = fp_add(tile, padded)
        res = tile.peek_lanes(out).ravel()[:k]
        ex = tile.peek_lanes(exp).ravel()[:k]
        bits[lo:hi] = res.astype(np.uint32)
        flags[lo:hi] |= exponent_overflow(ex)
        ledger = tile.ledger
    return bits, flags, ledger
