"""Integer/fixed-point microcode: 7->3 carry-save reduction, bit-serial
five-operand add, and partial-product multiplication."""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from . import rows as R
from .cim import CimTile
from .config import DeviceConfig
from .rows import LanePackingError


class TooManyOperands(ValueError):
    pass


@lru_cache(maxsize=None)
def _column(i: int, width: int) -> np.ndarray:
    return R.lane_const(1 << i, width)


def csa_reduce(tile: CimTile, rows, dests=None) -> tuple[int, int, int]:
    """Reduce up to seven operand rows to sum, carry and super-carry rows.

    The carry is written one bit up and the super carry two bits up, so per
    lane ``S + C + C' == sum(operands) mod 2**lane_width``.  Bits pushed past
    the top of a lane are masked off.
    """
    rows = list(rows)
    if len(rows) > tile.trd:
        raise TooManyOperands(f"csa_reduce takes at most {tile.trd} operands")
    if dests is None:
        dests = tile.alloc(3)
    L = tile.lane_width
    tile.stage(rows)
    tile.tr()
    tile.select("xor")
    tile.write(dests[0])
    tile.select("carry")
    tile.lshift(1, "left")
    tile.const_op("and", ((1 << L) - 1) ^ 1)
    tile.write(dests[1])
    tile.select("super_carry")
    tile.lshift(1, "left")
    tile.lshift(1, "left")
    tile.const_op("and", ((1 << L) - 1) ^ 3)
    tile.write(dests[2])
    return tuple(dests)


def reduce_operands(tile: CimTile, rows, limit: int = 5) -> list[int]:
    """Carry-save reduce groups of seven until at most ``limit`` rows remain.

    Input rows are consumed: each group's outputs overwrite its first three
    rows and the rest are freed.  A trailing group of three or fewer rows is
    carried to the next round unchanged.
    """
    pending = list(rows)
    while len(pending) > limit:
        nxt = []
        for k in range(0, len(pending), tile.trd):
            group = pending[k:k + tile.trd]
            if len(group) > 3:
                nxt.extend(csa_reduce(tile, group, dests=group[:3]))
                tile.free(*group[3:])
            else:
                nxt.extend(group)
        pending = nxt
    return pending


def add5(tile: CimTile, rows, w: int, l: int = 0, dest: int | None = None) -> int:
    """Bit-serial add of up to five operand rows over bits ``[l, l+w)`` of each lane.

    Window slots 0 and 6 hold the super-carry and carry chains; slot 0 ends up
    holding the sum.  No bit at or above ``l + w`` is written, so the result is
    the sum modulo ``2**w`` in that field and zero elsewhere.  Costs ``w``
    TR cycles after staging.
    """
    rows = list(rows)
    if len(rows) > tile.trd - 2:
        raise TooManyOperands(f"add5 takes at most {tile.trd - 2} operands, got {len(rows)}")
    L = tile.lane_width
    u = l + w
    if w < 1 or l < 0 or u > L:
        raise LanePackingError(f"bit range [{l}, {u}) does not fit {L}-bit lanes")
    s = tile.window
    zero = R.zeros()
    tile.store(s, zero)
    for k, r in enumerate(rows):
        tile.copy(r, s + 1 + k)
    for k in range(len(rows), tile.trd - 2):
        tile.store(s + 1 + k, zero)
    tile.store(s + tile.trd - 1, zero)

    dbc = tile.dbc
    dbc.align(s, 0)
    for i in range(l, u):
        with tile.ledger.same_cycle():
            b = dbc.tr_planes()
            col = _column(i, L)
            value = b[0] & col
            mask = col
            if i + 2 < u:
                col2 = _column(i + 2, L)
                value = value | (R.shift_left(b[2] & col, 2) & col2)
                mask = mask | col2
            dbc.write_row(0, value, mask)
            if i + 1 < u:
                col1 = _column(i + 1, L)
                dbc.write_row(1, R.shift_left(b[1] & col, 1) & col1, col1)
    if dest is None:
        dest = tile.alloc()
    tile.copy(s, dest)
    return dest


def multiply(tile: CimTile, a: int, b: int, w: int, dest: int | None = None,
             preserve: bool = True) -> int:
    """Unsigned ``w``-bit multiply per lane giving a ``2w``-bit product.

    Operand A is shifted right so its next bit sits at predicate position 0;
    operand B is shifted left one place per partial product.  With
    ``preserve=False`` the operand rows are used (and clobbered) in place.
    """
    if 2 * w > tile.lane_width:
        raise LanePackingError(f"{w}-bit operands need {2 * w}-bit lanes, tile has {tile.lane_width}")
    if preserve:
        a2, b2 = tile.alloc(2)
        tile.copy(a, a2)
        tile.copy(b, b2)
        a, b = a2, b2
    partials = []
    zero = R.zeros()
    for _ in range(w):
        p = tile.alloc()
        tile.store(p, zero)
        tile.read(a)
        tile.load_pred(0)
        tile.lshift(1, "right")
        tile.write(a)
        tile.read(b)
        tile.predicated_apply("write", target=p)
        tile.lshift(1, "left")
        tile.write(b)
        partials.append(p)
    tile.free(a, b)
    remaining = reduce_operands(tile, partials)
    out = add5(tile, remaining, 2 * w, 0, dest=dest)
    tile.free(*remaining)
    return out


# -- host-level drivers ---------------------------------------------------------

def _lane_layout(values, width: int):
    """Pad flat operand vectors to whole rows; returns (batch, lanes-shaped arrays, count)."""
    arrs = [np.asarray(v, dtype=np.uint64).ravel() for v in values]
    n = arrs[0].size
    lanes = R.lanes_per_row(width)
    batch = max(1, -(-n // lanes))
    out = []
    for a in arrs:
        pad = np.zeros(batch * lanes, dtype=np.uint64)
        pad[:n] = a
        out.append(pad.reshape(batch, lanes))
    return batch, out, n


def _fit_width(bits: int) -> int:
    for width in R.LANE_WIDTHS:
        if width >= bits:
            return width
    raise LanePackingError(f"{bits} bits do not fit a 64-bit lane")


def run_add5(operands, w: int, l: int = 0, config: DeviceConfig | None = None, lane_width: int | None = None):
    """Add up to five equal-length integer vectors lane-parallel; returns ``(sums, ledger)``.

    Sums are the field value ``((sum of fields) mod 2**w)``; operands are
    stored whole, so bits outside the field must be handled by the caller.
    """
    if len(operands) > 5:
        raise TooManyOperands("add5 takes at most 5 operands")
    width = lane_width or _fit_width(l + w)
    batch, lanes, n = _lane_layout(operands, width)
    tile = CimTile(config, batch=batch, lane_width=width)
    rows = []
    for v in lanes:
        r = tile.alloc()
        tile.dbc.poke(r, R.pack_lanes(v, width))
        rows.append(r)
    before = tile.ledger.copy()
    out = add5(tile, rows, w, l)
    result = tile.peek_lanes(out, width).ravel()[:n]
    return (result >> np.uint64(l)), tile.ledger - before


def run_csa(operands, w: int, config: DeviceConfig | None = None):
    """Carry-save reduce up to seven vectors of ``w``-bit values; returns ``(S, C, C', ledger)``.

    ``C`` and ``C'`` are returned as column signals (unweighted), so the
    inputs sum to ``S + 2*C + 4*C'``.  In memory they are stored already
    shifted by one and two places; a carry out of the lane's top bit is lost.
    """
    width = R.check_lane_width(w)
    batch, lanes, n = _lane_layout(operands, width)
    tile = CimTile(config, batch=batch, lane_width=width)
    rows = []
    for v in lanes:
        r = tile.alloc()
        tile.dbc.poke(r, R.pack_lanes(v, width))
        rows.append(r)
    before = tile.ledger.copy()
    outs = csa_reduce(tile, rows)
    res = [tile.peek_lanes(r, width).ravel()[:n] for r in outs]
    return res[0], res[1] >> np.uint64(1), res[2] >> np.uint64(2), tile.ledger - before


def run_multiply(a, b, w: int, config: DeviceConfig | None = None):
    """Unsigned lane-parallel multiply of two vectors of ``w``-bit integers; returns ``(products, ledger)``."""
    width = _fit_width(2 * w)
    if config is None:
        config = DeviceConfig(domains_per_wire=32 if w <= 16 else 64)
    batch, (la, lb), n = _lane_layout([a, b], width)
    mask = np.uint64((1 << w) - 1)
    if (la > mask).any() or (lb > mask).any():
        raise LanePackingError(f"operands exceed {w} bits")
    tile = CimTile(config, batch=batch, lane_width=width)
    ra, rb = tile.alloc(2)
    tile.dbc.poke(ra, R.pack_lanes(la, width))
    tile.dbc.poke(rb, R.pack_lanes(lb, width))
    before = tile.ledger.copy()
    out = multiply(tile, ra, rb, w, preserve=False)
    return tile.peek_lanes(out, width).ravel()[:n], tile.ledger - before
