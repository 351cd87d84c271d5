"""Racetrack nanowires and domain-block clusters (DBCs).

A DBC is a single-threaded state machine: primitives on one instance must not
be interleaved.  The first thread that drives a DBC owns it and any other
thread gets :class:`ConcurrentAccessError`.  Independent DBCs may be driven in
parallel.  One :class:`DomainBlockCluster` object can hold ``batch``
lock-step instances that receive the same command stream (SIMD across
subarrays); the ledger then counts the operations of one instance.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

from . import rows as R
from .config import DeviceConfig
from .ledger import CostLedger


class DeviceError(RuntimeError):
    pass


class OverheadExceeded(DeviceError):
    """A shift would move live data past the overhead domains."""


class Misaligned(DeviceError):
    """An access port (or the TR window) faces an overhead domain."""


class ConcurrentAccessError(DeviceError):
    pass


@dataclass
class Nanowire:
    """One nanowire with explicit overhead domains at both ends.

    ``domains`` holds ``overhead + D + overhead`` cells; data domain ``r`` is
    stored at ``overhead + r``.  ``head_offset`` is the number of domains the
    wire has been shifted (positive = up), so data row ``head_offset`` faces
    the access port.
    """

    D: int = 32
    overhead: int = 31
    head_offset: int = 0
    domains: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.domains is None:
            self.domains = np.zeros(self.D + 2 * self.overhead, dtype=np.uint8)

    @property
    def data_domains(self) -> np.ndarray:
        return self.domains[self.overhead:self.overhead + self.D]

    @property
    def overhead_domains(self) -> tuple[np.ndarray, np.ndarray]:
        return self.domains[:self.overhead], self.domains[self.overhead + self.D:]

    def shift(self, count: int) -> None:
        if abs(self.head_offset + count) > self.overhead:
            raise OverheadExceeded(f"head offset {self.head_offset + count} beyond ±{self.overhead}")
        self.head_offset += count

    def _cell(self, port_offset: int) -> int:
        row = self.head_offset + port_offset
        if not 0 <= row < self.D:
            raise Misaligned(f"overhead domain at port (row {row})")
        return self.overhead + row

    def read(self, port_offset: int = 0) -> int:
        return int(self.domains[self._cell(port_offset)])

    def write(self, bit: int, port_offset: int = 0) -> None:
        self.domains[self._cell(port_offset)] = bit & 1

    def transverse_read(self, trd: int) -> int:
        cells = [self._cell(k) for k in range(trd)]
        return int(self.domains[cells].sum())


class DomainBlockCluster:
    """512 nanowires sharing one head offset, with access ports AP0 and AP1.

    AP1 sits ``trd - 1`` domains above AP0, so a transverse read spans ``trd``
    domains inclusive of both ports.  The row aligned at AP0 equals the head
    offset; only data domains are stored, overhead domains read as misaligned.
    """

    def __init__(self, config: DeviceConfig | None = None, batch: int = 1,
                 ledger: CostLedger | None = None, trace: list | None = None):
        self.config = config or DeviceConfig()
        self.D = self.config.domains_per_wire
        self.trd = self.config.trd
        self.overhead = self.config.overhead
        self.batch = batch
        self.data = np.zeros((batch, self.D, R.WORDS), dtype=np.uint64)
        self.head_offset = 0
        self.ledger = ledger if ledger is not None else CostLedger()
        self.trace = trace
        self._owner: int | None = None

    # -- bookkeeping -------------------------------------------------------
    def _claim(self) -> None:
        me = threading.get_ident()
        if self._owner is None:
            self._owner = me
        elif self._owner != me:
            raise ConcurrentAccessError("DBC is owned by another thread")

    def release(self) -> None:
        """Give up thread ownership so another worker may drive this DBC."""
        self._owner = None

    def _event(self, op: str, **args) -> None:
        if self.trace is not None:
            self.trace.append({"op": op, **args})

    def port_row(self, ap: int) -> int:
        if ap not in (0, 1):
            raise ValueError("ap must be 0 or 1")
        return self.head_offset + (self.trd - 1) * ap

    def _checked_row(self, ap: int) -> int:
        row = self.port_row(ap)
        if not 0 <= row < self.D:
            raise Misaligned(f"AP{ap} faces an overhead domain (row {row})")
        return row

    # -- primitives --------------------------------------------------------
    def shift(self, direction: str, count: int = 1) -> None:
        """Move every nanowire by ``count`` domains; ``up`` brings row r+1 to AP0."""
        self._claim()
        if direction not in ("up", "down"):
            raise ValueError("direction must be 'up' or 'down'")
        if count < 0:
            raise ValueError("count must be non-negative")
        if count == 0:
            return
        new = self.head_offset + (count if direction == "up" else -count)
        if abs(new) > self.overhead:
            raise OverheadExceeded(f"head offset {new} beyond ±{self.overhead}")
        self.head_offset = new
        self.ledger.charge("shifts", count)
        self._event("shift", direction=direction, count=count)

    def align(self, row: int, ap: int = 0) -> int:
        """Shift so data row ``row`` faces ``ap``; returns the shift distance."""
        target = row - (self.trd - 1) * ap
        delta = target - self.head_offset
        if delta:
            self.shift("up" if delta > 0 else "down", abs(delta))
        return abs(delta)

    def read_row(self, ap: int = 0) -> np.ndarray:
        self._claim()
        row = self._checked_row(ap)
        self.ledger.charge("reads")
        self._event("read", ap=ap, row=row)
        return self.data[:, row].copy()

    def write_row(self, ap: int, value: np.ndarray, mask: np.ndarray | None = None) -> None:
        """Store ``value`` at the row facing ``ap``; ``mask`` limits the nanowires written."""
        self._claim()
        row = self._checked_row(ap)
        value = np.broadcast_to(np.asarray(value, dtype=np.uint64), (self.batch, R.WORDS))
        if mask is None:
            self.data[:, row] = value
        else:
            self.data[:, row] = (self.data[:, row] & R.invert(mask)) | (value & mask)
        self.ledger.charge("writes")
        self._event("write", ap=ap, row=row)

    def _window(self) -> np.ndarray:
        lo = self.head_offset
        if lo < 0 or lo + self.trd > self.D:
            raise Misaligned("TR window straddles overhead domains")
        return self.data[:, lo:lo + self.trd]

    def tr_planes(self) -> list[np.ndarray]:
        """Transverse read, returned as bit-sliced ones-count planes."""
        self._claim()
        window = self._window()
        planes = R.popcount_planes(window[:, k] for k in range(self.trd))
        self.ledger.charge("trs")
        self._event("tr", row=self.head_offset)
        return planes

    def transverse_read(self) -> np.ndarray:
        """Per-nanowire count of ones between AP0 and AP1 inclusive, shape ``(batch, 512)``."""
        planes = self.tr_planes()
        counts = np.zeros((self.batch, R.ROW_BITS), dtype=np.int64)
        for k, plane in enumerate(planes):
            counts += R.to_bits(plane).astype(np.int64) << k
        return counts

    # -- host access (free of cost, for loading fixtures and inspection) ----
    def peek(self, row: int) -> np.ndarray:
        return self.data[:, row].copy()

    def poke(self, row: int, value) -> None:
        self.data[:, row] = np.broadcast_to(np.asarray(value, dtype=np.uint64), (self.batch, R.WORDS))
