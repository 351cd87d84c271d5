from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass, fields

COUNTERS = ("shifts", "reads", "writes", "trs", "logical_shifts", "predicated_ops", "cycles")


@dataclass
class CostLedger:
    """Operation counts for one DBC.

    Lock-step DBC instances share one ledger; multiply by the instance count
    for aggregate energy.  Ledgers are additive under program concatenation.
    """

    shifts: int = 0
    reads: int = 0
    writes: int = 0
    trs: int = 0
    logical_shifts: int = 0
    predicated_ops: int = 0
    cycles: int = 0

    def __post_init__(self):
        self._in_parallel = False
        self._parallel_charged = False

    def charge(self, counter: str, n: int = 1, cycles: int | None = None) -> None:
        setattr(self, counter, getattr(self, counter) + n)
        c = n if cycles is None else cycles
        if self._in_parallel:
            if not self._parallel_charged:
                self.cycles += 1
                self._parallel_charged = True
        else:
            self.cycles += c

    def tick(self, n: int = 1) -> None:
        """Charge cycles with no device counter (controller or predicate logic)."""
        if self._in_parallel:
            if not self._parallel_charged:
                self.cycles += 1
                self._parallel_charged = True
        else:
            self.cycles += n

    @contextmanager
    def same_cycle(self):
        """Primitives issued inside the block share a single cycle."""
        if self._in_parallel:
            yield self
            return
        self._in_parallel, self._parallel_charged = True, False
        try:
            yield self
        finally:
            self._in_parallel = False

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def copy(self) -> "CostLedger":
        return CostLedger(**self.as_dict())

    def __add__(self, other: "CostLedger") -> "CostLedger":
        return CostLedger(**{k: getattr(self, k) + getattr(other, k) for k in COUNTERS})

    def __sub__(self, other: "CostLedger") -> "CostLedger":
        return CostLedger(**{k: getattr(self, k) - getattr(other, k) for k in COUNTERS})

    def scaled(self, factor: float) -> dict:
        return {k: getattr(self, k) * factor for k in COUNTERS}

    @classmethod
    def from_dict(cls, data: dict) -> "CostLedger":
        return cls(**{k: int(data.get(k, 0)) for k in COUNTERS})
