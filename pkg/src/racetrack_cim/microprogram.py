"""A line-oriented text format for driving a CIM tile, and its interpreter.

One primitive per line; ``#`` starts a comment; row operands are names
declared with ``row``.  See ``docs/microprogram.md`` for the full grammar.
"""
from __future__ import annotations

import shlex
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import intalu
from . import rows as R
from .cim import CimTile
from .config import DeviceConfig
from .ledger import COUNTERS, CostLedger


class MicroprogramError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass
class Instruction:
    lineno: int
    op: str
    args: list[str]
    text: str


def _int(tok: str) -> int:
    return int(tok, 0)


# name -> (min args, max args or None)
ARITY = {
    "device": (0, None), "lanes": (1, 1), "row": (1, None), "load": (2, None),
    "read": (1, 2), "write": (1, 2), "copy": (2, 2), "tr": (0, 1), "select": (1, 2),
    "lshift": (2, 2), "const": (2, 2), "set": (1, 1), "pred": (1, 2), "plogic": (3, 4),
    "papply": (1, None), "stage": (1, 7), "bulk": (2, 8), "add5": (4, 8), "csa": (4, 10),
    "mul": (4, 4), "print": (1, None), "shift": (1, 2),
}
HEADER_OPS = ("device", "lanes")


def parse(text: str) -> list[Instruction]:
    prog = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = shlex.split(line)
        op, args = toks[0].lower(), toks[1:]
        if op not in ARITY:
            raise MicroprogramError(lineno, f"unknown primitive {op!r}")
        lo, hi = ARITY[op]
        if len(args) < lo or (hi is not None and len(args) > hi):
            raise MicroprogramError(lineno, f"{op} takes {lo}..{hi if hi is not None else 'n'} arguments, got {len(args)}")
        prog.append(Instruction(lineno, op, args, raw.strip()))
    return prog


@dataclass
class RunResult:
    steps: list = field(default_factory=list)
    outputs: dict = field(default_factory=dict)
    ledger: CostLedger = field(default_factory=CostLedger)
    config: dict = field(default_factory=dict)
    lane_width: int = 64

    def tr_events(self) -> int:
        return sum(1 for s in self.steps for e in s["events"] if e["op"] == "tr")

    def to_dict(self) -> dict:
        return {"config": self.config, "lane_width": self.lane_width, "steps": self.steps,
                "outputs": self.outputs, "ledger": self.ledger.as_dict()}


def fold_steps(steps) -> CostLedger:
    """Sum the per-step ledger deltas recorded in a trace."""
    total = CostLedger()
    for s in steps:
        total = total + CostLedger.from_dict(s["cost"])
    return total


class Interpreter:
    def __init__(self, config: DeviceConfig | None = None, seed: int = 0, batch: int = 1):
        self.base_config = config or DeviceConfig()
        self.rng = np.random.default_rng(seed)
        self.batch = batch

    def run(self, program: str | list[Instruction]) -> RunResult:
        prog = parse(program) if isinstance(program, str) else program
        cfg = self.base_config.to_dict()
        lane = 64
        body = []
        for ins in prog:
            if ins.op == "device" and not body:
                for kv in ins.args:
                    k, _, v = kv.partition("=")
                    key = {"D": "domains_per_wire"}.get(k, k)
                    if key not in cfg:
                        raise MicroprogramError(ins.lineno, f"unknown device field {k!r}")
                    cfg[key] = _int(v)
            elif ins.op == "lanes" and not body:
                lane = _int(ins.args[0])
            elif ins.op in HEADER_OPS:
                raise MicroprogramError(ins.lineno, f"{ins.op} must precede all primitives")
            else:
                body.append(ins)
        try:
            config = DeviceConfig.from_dict(cfg)
            tile = CimTile(config, batch=self.batch, lane_width=lane, trace=True)
        except ValueError as e:
            raise MicroprogramError(prog[0].lineno if prog else 0, str(e)) from e
        self.tile, self.names = tile, {}
        result = RunResult(config=config.to_dict(), lane_width=lane)
        for ins in body:
            before = tile.ledger.copy()
            mark = len(tile.trace)
            self._exec(ins, result)
            delta = tile.ledger - before
            result.steps.append({"line": ins.lineno, "text": ins.text,
                                 "events": tile.trace[mark:], "cost": delta.as_dict()})
        result.ledger = tile.ledger.copy()
        return result

    def _row(self, ins: Instruction, name: str) -> int:
        if name not in self.names:
            raise MicroprogramError(ins.lineno, f"undeclared row {name!r}")
        return self.names[name]

    def _rows(self, ins, names):
        return [self._row(ins, n) for n in names]

    def _exec(self, ins: Instruction, result: RunResult) -> None:
        t, a, op = self.tile, ins.args, ins.op
        try:
            if op == "row":
                for n in a:
                    if n in self.names:
                        raise MicroprogramError(ins.lineno, f"row {n!r} declared twice")
                    self.names[n] = t.alloc()
            elif op == "load":
                r = self._row(ins, a[0])
                if a[1] == "random":
                    bits = _int(a[2]) if len(a) > 2 else t.lane_width
                    vals = self.rng.integers(0, 1 << bits, size=(t.batch, t.lanes), dtype=np.uint64,
                                             endpoint=False) if bits < 64 else \
                        self.rng.integers(0, 1 << 63, size=(t.batch, t.lanes), dtype=np.uint64) * 2
                else:
                    vals = np.zeros((t.batch, t.lanes), dtype=np.uint64)
                    given = np.array([_int(v) for v in a[1:]], dtype=np.uint64)
                    if given.size > t.lanes:
                        raise MicroprogramError(ins.lineno, f"{given.size} values for {t.lanes} lanes")
                    vals[:, :given.size] = given
                t.store_lanes(r, vals)
            elif op == "read":
                t.read(self._row(ins, a[0]), _int(a[1]) if len(a) > 1 else 0)
            elif op == "write":
                t.write(self._row(ins, a[0]), _int(a[1]) if len(a) > 1 else 0)
            elif op == "copy":
                t.copy(*self._rows(ins, a))
            elif op == "shift":
                t.dbc.shift(a[0], _int(a[1]) if len(a) > 1 else 1)
            elif op == "tr":
                t.tr(self._row(ins, a[0]) if a else None)
            elif op == "select":
                t.select(a[0], _int(a[1]) if len(a) > 1 else None)
            elif op == "lshift":
                t.lshift(_int(a[0]), a[1])
            elif op == "const":
                t.const_op(a[0], _int(a[1]))
            elif op == "set":
                t.set_const(_int(a[0]))
            elif op == "pred":
                t.load_pred(_int(a[0]), _int(a[1]) if len(a) > 1 else 0)
            elif op == "plogic":
                t.pred_logic(_int(a[0]), a[1], _int(a[2]), _int(a[3]) if len(a) > 3 else None)
            elif op == "papply":
                kw = dict(x.split("=", 1) for x in a[1:] if "=" in x)
                reg = _int(kw.pop("reg", "0"))
                target = self._row(ins, kw.pop("target")) if "target" in kw else None
                extra = {k: (v if k == "direction" else _int(v)) for k, v in kw.items()}
                t.predicated_apply(a[0], reg, target, **extra)
            elif op == "stage":
                t.stage(self._rows(ins, a))
            elif op == "bulk":
                t.bulk(a[0], self._rows(ins, a[1:]))
            elif op == "add5":
                w, l, dest = _int(a[0]), _int(a[1]), self._row(ins, a[2])
                intalu.add5(t, self._rows(ins, a[3:]), w, l, dest=dest)
            elif op == "csa":
                dests = self._rows(ins, a[:3])
                intalu.csa_reduce(t, self._rows(ins, a[3:]), dests=dests)
            elif op == "mul":
                w, dest = _int(a[0]), self._row(ins, a[1])
                intalu.multiply(t, self._row(ins, a[2]), self._row(ins, a[3]), w, dest=dest)
            elif op == "print":
                for n in a:
                    result.outputs[n] = t.peek_lanes(self._row(ins, n)).tolist()
        except MicroprogramError:
            raise
        except (KeyError, TypeError) as e:
            raise MicroprogramError(ins.lineno, f"bad arguments: {e}") from e


BUILTIN = {
    "add5": """\
# five random 8-bit operands per 16-bit lane, summed bit-serially over w=8 bits
device D=32
lanes 16
row a b c d e sum
load a random 8
load b random 8
load c random 8
load d random 8
load e random 8
add5 8 0 sum a b c d e
print a b c d e sum
""",
    "multiply": """\
# 8-bit unsigned multiply into 16-bit lanes
device D=32
lanes 16
row x y p
load x random 8
load y random 8
mul 8 p x y
print x y p
""",
    "csa": """\
# seven operands compressed to sum, carry and super-carry rows in one TR
lanes 16
row s c c2 a0 a1 a2 a3 a4 a5 a6
load a0 random 12
load a1 random 12
load a2 random 12
load a3 random 12
load a4 random 12
load a5 random 12
load a6 random 12
csa s c c2 a0 a1 a2 a3 a4 a5 a6
print s c c2
""",
}


def load_program(name_or_path: str) -> str:
    if name_or_path in BUILTIN:
        return BUILTIN[name_or_path]
    return Path(name_or_path).read_text()
