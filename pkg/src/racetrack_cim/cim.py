"""CIM unit: TR ones-counts to logic/arithmetic signals, row-buffer shifts,
predication, plus :class:`CimTile`, the row-buffer machine microcode runs on."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rows as R
from .config import DeviceConfig
from .device import DomainBlockCluster
from .ledger import CostLedger

PREDICATE_SOURCES = (0, 31, 47)
SIGNALS = ("xor", "carry", "super_carry", "and", "or")


class IllegalPredicateSource(ValueError):
    pass


class RowAllocationError(RuntimeError):
    """Microcode ran out of scratch rows in the DBC."""


@dataclass
class CimSignals:
    ones: np.ndarray
    and_: np.ndarray
    or_: np.ndarray
    xor: np.ndarray
    carry: np.ndarray
    super_carry: np.ndarray

    @property
    def sum(self) -> np.ndarray:
        return self.xor


def derive_signals(ones, operand_count: int, trd: int = 7) -> CimSignals:
    """Truth table of the CIM unit for per-nanowire ones-counts (TRD = 7)."""
    ones = np.asarray(ones, dtype=np.int64)
    if not 1 <= operand_count <= trd:
        raise ValueError(f"operand count must be in 1..{trd}")
    if ones.size and (ones.min() < 0 or ones.max() > trd):
        raise ValueError(f"ones-counts must lie in 0..{trd}")
    u8 = np.uint8
    return CimSignals(
        ones=ones,
        and_=(ones == operand_count).astype(u8),
        or_=(ones >= 1).astype(u8),
        xor=(ones % 2).astype(u8),
        carry=(((ones >= 2) & (ones < 4)) | (ones >= 6)).astype(u8),
        super_carry=(ones >= 4).astype(u8),
    )


def signals_from_planes(planes: list[np.ndarray], operand_count: int, signal: str) -> np.ndarray:
    """Same truth table evaluated on bit-sliced count planes (packed rows)."""
    b = planes + [np.zeros_like(planes[0])] * (3 - len(planes))
    if signal == "xor":
        return b[0].copy()
    if signal == "carry":
        return b[1].copy()
    if signal == "super_carry":
        return b[2].copy()
    if signal == "or":
        out = b[0].copy()
        for p in b[1:]:
            out |= p
        return out
    if signal == "and":
        out = np.full_like(b[0], np.uint64(0xFFFFFFFFFFFFFFFF))
        for k, p in enumerate(b):
            out &= p if (operand_count >> k) & 1 else R.invert(p)
        return out
    raise ValueError(f"unknown signal {signal!r}")


def logical_shift(row: np.ndarray, amount: int, direction: str) -> np.ndarray:
    """Row-buffer shift by 1 or 8 bit positions over the whole 512-bit row."""
    if amount not in (1, 8):
        raise ValueError("the CIM unit shifts by 1 or 8 positions")
    if direction == "left":
        return R.shift_left(row, amount)
    if direction == "right":
        return R.shift_right(row, amount)
    raise ValueError("direction must be 'left' or 'right'")


@dataclass
class PredicationRegister:
    value: np.ndarray          # bool, shape (batch, lanes)
    source_position: int


def load_predicate(row_buffer: np.ndarray, lane: int | None = None, source_position: int = 0,
                   lane_width: int = 64) -> PredicationRegister:
    """Select bit ``source_position`` of one lane (or every lane when ``lane`` is None)."""
    if source_position not in PREDICATE_SOURCES or source_position >= lane_width:
        raise IllegalPredicateSource(f"predicate cannot be loaded from bit {source_position}")
    lanes = R.unpack_lanes(row_buffer, lane_width)
    bits = ((lanes >> np.uint64(source_position)) & np.uint64(1)).astype(bool)
    if lane is not None:
        bits = bits[..., lane:lane + 1]
    return PredicationRegister(bits, source_position)


class CimTile:
    """A CIM-enabled DBC with its row buffer, latched TR result and predication bits.

    Row map: rows ``0 .. D-15`` are scratch/data rows handed out by
    :meth:`alloc`; rows ``D-14 .. D-1`` are the compute region.  Multi-operand
    operations use the TRD-row window starting at :attr:`window`; the
    round-robin max search additionally walks the next TRD rows.
    """

    N_PRED = 4

    def __init__(self, config: DeviceConfig | None = None, batch: int = 1, lane_width: int = 64,
                 trace: bool = False, ledger: CostLedger | None = None):
        self.config = config or DeviceConfig()
        self.trace = [] if trace else None
        self.dbc = DomainBlockCluster(self.config, batch, ledger, self.trace)
        self.batch = batch
        self.lane_width = R.check_lane_width(lane_width)
        self.lanes = R.lanes_per_row(lane_width)
        self.trd = self.config.trd
        self.rb = R.zeros(batch)
        self.pred = np.zeros((self.N_PRED, batch, self.lanes), dtype=bool)
        self._latched: list[np.ndarray] | None = None
        D = self.config.domains_per_wire
        self.window = D - 2 * self.trd
        if self.window < 0:
            raise RowAllocationError("DBC too short for a compute region")
        self._free = list(range(self.window - 1, -1, -1))

    @property
    def ledger(self) -> CostLedger:
        return self.dbc.ledger

    def _event(self, kind, **args):
        if self.trace is not None:
            self.trace.append({"op": kind, **args})

    # -- row allocation ----------------------------------------------------
    def alloc(self, n: int | None = None):
        if n is None:
            if not self._free:
                raise RowAllocationError("no free rows left in the DBC")
            return self._free.pop()
        return [self.alloc() for _ in range(n)]

    def free(self, *rows) -> None:
        for r in rows:
            if r is None or r >= self.window:
                continue
            if r in self._free:
                raise RowAllocationError(f"row {r} freed twice")
            self._free.append(r)
        self._free.sort(reverse=True)

    @property
    def free_rows(self) -> int:
        return len(self._free)

    # -- memory ------------------------------------------------------------
    def read(self, row: int, ap: int = 0) -> np.ndarray:
        self.dbc.align(row, ap)
        self.rb = self.dbc.read_row(ap)
        return self.rb

    def write(self, row: int, ap: int = 0) -> None:
        self.dbc.align(row, ap)
        self.dbc.write_row(ap, self.rb)

    def store(self, row: int, value) -> None:
        """Controller-supplied row (host data or a constant) written through the row buffer."""
        self.rb = np.broadcast_to(np.asarray(value, dtype=np.uint64), (self.batch, R.WORDS)).copy()
        self.write(row)

    def store_lanes(self, row: int, lane_values, width: int | None = None) -> None:
        self.store(row, R.pack_lanes(lane_values, width or self.lane_width))

    def copy(self, src: int, dst: int) -> None:
        if src != dst:
            self.read(src)
            self.write(dst)

    def peek(self, row: int) -> np.ndarray:
        return self.dbc.peek(row)

    def peek_lanes(self, row: int, width: int | None = None) -> np.ndarray:
        return R.unpack_lanes(self.dbc.peek(row), width or self.lane_width)

    # -- transverse read and signals -----------------------------------------
    def tr(self, start: int | None = None) -> list[np.ndarray]:
        """TR over ``trd`` rows from ``start`` (default: the compute window); latches the counts."""
        self.dbc.align(self.window if start is None else start, 0)
        self._latched = self.dbc.tr_planes()
        return self._latched

    def select(self, signal: str, operand_count: int | None = None) -> np.ndarray:
        """Drive the row buffer from the latched TR result."""
        if self._latched is None:
            raise RuntimeError("no TR result latched")
        self.rb = signals_from_planes(self._latched, operand_count or self.trd, signal)
        return self.rb

    def stage(self, rows, pad: int = 0, start: int | None = None) -> None:
        """Place ``rows`` in consecutive window slots, padding the rest with constant ``pad`` rows."""
        start = self.window if start is None else start
        rows = list(rows)
        if len(rows) > self.trd:
            raise ValueError(f"at most {self.trd} operands fit in the TR window")
        for k, r in enumerate(rows):
            self.copy(r, start + k)
        pad_row = R.from_int(-1 % (1 << 512)) if pad else R.zeros()
        for k in range(len(rows), self.trd):
            self.store(start + k, pad_row)

    def bulk(self, op: str, rows) -> np.ndarray:
        """Multi-operand bulk-bitwise ``and``/``or``/``xor`` of up to TRD rows into the row buffer."""
        rows = list(rows)
        self.stage(rows, pad=1 if op == "and" else 0)
        self.tr()
        return self.select(op, self.trd if op == "and" else len(rows))

    # -- row-buffer logic ----------------------------------------------------
    def lshift(self, amount: int, direction: str) -> None:
        self.rb = logical_shift(self.rb, amount, direction)
        self.ledger.charge("logical_shifts")
        self._event("lshift", amount=amount, direction=direction)

    def shift_by(self, n: int, direction: str) -> None:
        """Composite shift from by-8 and by-1 steps."""
        for _ in range(n // 8):
            self.lshift(8, direction)
        for _ in range(n % 8):
            self.lshift(1, direction)

    def const_op(self, op: str, value: int = 0, width: int | None = None, row=None) -> None:
        """Row buffer AND/OR/XOR a per-lane constant (or an explicit constant ``row``).

        Modeled as a two-operand bulk op against a resident constant row, one TR.
        """
        c = R.lane_const(value, width or self.lane_width) if row is None else np.asarray(row, dtype=np.uint64)
        if op == "and":
            self.rb = self.rb & c
        elif op == "or":
            self.rb = self.rb | c
        elif op == "xor":
            self.rb = self.rb ^ c
        else:
            raise ValueError(op)
        self.ledger.charge("trs")
        self._event("const", logic=op, value=value)

    def set_const(self, value: int, width: int | None = None) -> None:
        """Load a controller constant into every lane of the row buffer."""
        self.rb = np.broadcast_to(R.lane_const(value, width or self.lane_width), (self.batch, R.WORDS)).copy()
        self.ledger.tick()
        self._event("set", value=value)

    # -- predication -------------------------------------------------------
    def load_pred(self, position: int, reg: int = 0) -> np.ndarray:
        p = load_predicate(self.rb, None, position, self.lane_width)
        self.pred[reg] = p.value
        self.ledger.tick()
        self._event("pred", position=position, reg=reg)
        return p.value

    def pred_logic(self, dst: int, op: str, a: int, b: int | None = None) -> None:
        """Combine predication bits: ``and``, ``or``, ``xor``, ``andnot`` (a AND NOT b), ``not``, ``copy``, ``clear``."""
        pa = self.pred[a]
        pb = self.pred[b] if b is not None else None
        out = {
            "and": lambda: pa & pb,
            "or": lambda: pa | pb,
            "xor": lambda: pa ^ pb,
            "andnot": lambda: pa & ~pb,
            "not": lambda: ~pa,
            "copy": lambda: pa.copy(),
            "clear": lambda: np.zeros_like(pa),
        }[op]()
        self.pred[dst] = out
        self.ledger.tick()

    def predicated_apply(self, action: str, reg: int = 0, target: int | None = None, *,
                         amount: int = 1, direction: str = "right", value: int = 0) -> None:
        """Perform ``action`` in lanes whose predicate is 1; other lanes idle for the same cycle.

        Actions: ``reset`` (row buffer to 0), ``write`` (row buffer to row
        ``target``), ``shift`` (row buffer by ``amount``), ``xor`` (row buffer
        with constant ``value``), ``set`` (row buffer to constant ``value``).
        """
        pred = self.pred[reg]
        mask = R.lane_mask(pred, self.lane_width)
        if action == "reset":
            self.rb = self.rb & R.invert(mask)
        elif action == "shift":
            shifted = logical_shift(self.rb, amount, direction)
            self.rb = (self.rb & R.invert(mask)) | (shifted & mask)
        elif action == "xor":
            self.rb = self.rb ^ (R.lane_const(value, self.lane_width) & mask)
        elif action == "set":
            c = R.lane_const(value, self.lane_width)
            self.rb = (self.rb & R.invert(mask)) | (c & mask)
        elif action == "write":
            if target is None:
                raise ValueError("write needs a target row")
            self.dbc.align(target, 0)
            with self.ledger.same_cycle():
                self.ledger.charge("predicated_ops")
                self.dbc.write_row(0, self.rb, mask)
            self._event("predicated", action=action, target=target)
            return
        else:
            raise ValueError(f"unknown predicated action {action!r}")
        self.ledger.charge("predicated_ops")
        self._event("predicated", action=action)
