"""Oracle-equivalence suites behind the ``verify`` subcommand.

Each case compares simulator output with an independent host oracle and
records the first mismatching input as a reproducer.  Seeds fully determine
the case list.
"""
from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass, field

import numpy as np

from . import fp, intalu, kernels
from . import oracles as O
from . import rows as R
from .config import DeviceConfig
from .device import DomainBlockCluster, OverheadExceeded

ALL64 = (1 << 64) - 1
SUITES = ("device", "int", "fp", "kernels")


@dataclass
class CaseResult:
    suite: str
    name: str
    passed: int = 0
    total: int = 0
    reproducer: dict | None = None

    @property
    def ok(self) -> bool:
        return self.passed == self.total

    def check(self, got, want, inputs: dict) -> None:
        got, want = np.asarray(got), np.asarray(want)
        eq = np.broadcast_to(got == want, np.broadcast(got, want).shape)
        if eq.ndim > 1:
            eq = eq.reshape(eq.shape[0], -1).all(axis=1)
        eq = np.atleast_1d(eq)
        self.total += eq.size
        self.passed += int(eq.sum())
        if self.reproducer is None and not eq.all():
            k = int(np.argmin(eq))
            self.reproducer = {key: _jsonable(np.atleast_1d(v)[k] if np.ndim(v) else v)
                               for key, v in inputs.items()}
            self.reproducer["got"] = _jsonable(np.atleast_1d(got)[k] if got.ndim else got)
            self.reproducer["want"] = _jsonable(np.atleast_1d(want)[k] if want.ndim else want)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ok"] = self.ok
        return d


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def _rand_uint(rng, bits: int, size) -> np.ndarray:
    if bits == 64:
        return rng.integers(0, 1 << 63, size=size, dtype=np.uint64) * np.uint64(2) \
            + rng.integers(0, 2, size=size, dtype=np.uint64)
    return rng.integers(0, 1 << bits, size=size, dtype=np.uint64)


def random_floats(rng, size, spread: float = 8.0) -> np.ndarray:
    """Finite normal singles, log-uniform magnitude in ``2**±spread``, random sign."""
    mag = np.exp2(rng.uniform(-spread, spread, size=size))
    sign = rng.choice(np.array([-1.0, 1.0]), size=size)
    return (mag * sign).astype(np.float32)


# -- device ------------------------------------------------------------------

def device_cases(rng, trials: int) -> list[CaseResult]:
    cfg = DeviceConfig()
    shift = CaseResult("device", "shift_reversible")
    for _ in range(max(1, trials // 100)):
        dbc = DomainBlockCluster(cfg, batch=4)
        data = _rand_uint(rng, 64, (4, cfg.domains_per_wire, R.WORDS))
        dbc.data[:] = data
        n = int(rng.integers(0, cfg.overhead + 1))
        dbc.shift("up", n)
        dbc.shift("down", n)
        shift.check(np.array([np.array_equal(dbc.data, data) and dbc.head_offset == 0]), True, {"count": n})

    tr = CaseResult("device", "tr_popcount_exhaustive")
    patterns = np.array(list(itertools.product((0, 1), repeat=cfg.trd)), dtype=np.uint64)
    dbc = DomainBlockCluster(cfg, batch=patterns.shape[0])
    for k in range(cfg.trd):
        rowval = np.where(patterns[:, k:k + 1] == 1, np.uint64(ALL64), np.uint64(0))
        dbc.data[:, k] = np.broadcast_to(rowval, (patterns.shape[0], R.WORDS))
    counts = dbc.transverse_read()[:, 0]
    tr.check(counts, patterns.sum(axis=1).astype(np.int64), {"pattern": patterns.astype(np.int64)})

    guard = CaseResult("device", "overhead_guard")
    dbc = DomainBlockCluster(cfg)
    try:
        dbc.shift("up", cfg.overhead + 1)
        raised = False
    except OverheadExceeded:
        raised = True
    guard.check(np.array([raised]), True, {"count": cfg.overhead + 1})

    rw = CaseResult("device", "write_read_roundtrip")
    dbc = DomainBlockCluster(cfg, batch=8)
    for _ in range(max(1, trials // 100)):
        row = int(rng.integers(0, cfg.domains_per_wire))
        val = _rand_uint(rng, 64, (8, R.WORDS))
        dbc.align(row, 0)
        dbc.write_row(0, val)
        dbc.align(int(rng.integers(0, cfg.domains_per_wire - cfg.trd)), 0)
        dbc.align(row, 0)
        rw.check(np.array([np.array_equal(dbc.read_row(0), val)]), True, {"row": row})
    return [shift, tr, guard, rw]


# -- integer ALU ----------------------------------------------------------------

def int_cases(rng, trials: int, widths=(8, 16, 32, 64)) -> list[CaseResult]:
    out = []
    mul = CaseResult("int", "multiply_w8_exhaustive")
    a, b = np.meshgrid(np.arange(256, dtype=np.uint64), np.arange(256, dtype=np.uint64))
    a, b = a.ravel(), b.ravel()
    got, _ = intalu.run_multiply(a, b, 8)
    mul.check(got, O.int_multiply(a, b, 8), {"a": a, "b": b})
    out.append(mul)

    for w in (16, 24, 32):
        c = CaseResult("int", f"multiply_w{w}")
        a = _rand_uint(rng, w, trials)
        b = _rand_uint(rng, w, trials)
        got, _ = intalu.run_multiply(a, b, w)
        c.check(got, O.int_multiply(a, b, w), {"a": a, "b": b})
        out.append(c)

    for w in widths:
        c = CaseResult("int", f"add5_w{w}")
        for n in range(1, 6):
            ops = [_rand_uint(rng, w, trials) for _ in range(n)]
            got, _ = intalu.run_add5(ops, w)
            c.check(got, O.int_add(ops, w), {f"x{k}": v for k, v in enumerate(ops)})
        out.append(c)

    for w in widths:
        c = CaseResult("int", f"csa_w{w}")
        ops = [_rand_uint(rng, w - 3, trials) for _ in range(7)]
        s, cy, sc, _ = intalu.run_csa(ops, w)
        lhs = O.int_add(ops, w)
        rhs = O.int_add([s, cy << np.uint64(1), sc << np.uint64(2)], w)
        c.check(rhs, lhs, {f"x{k}": v for k, v in enumerate(ops)})
        out.append(c)

    col = CaseResult("int", "csa_column_identity")
    for ones in range(8):
        ops = [np.array([1 if k < ones else 0], dtype=np.uint64) for k in range(7)]
        s, cy, sc, _ = intalu.run_csa(ops, 8)
        got = int(s[0] & 1), int(cy[0] & 1), int(sc[0] & 1)
        col.check(np.array([got == O.column_split(ones)]), True, {"ones": ones})
    out.append(col)
    return out


# -- floating point ---------------------------------------------------------------

def fp_cases(rng, trials: int, add_sizes=(2, 7, 9)) -> list[CaseResult]:
    mul = CaseResult("fp", "fp_multiply")
    a = random_floats(rng, trials, 40).view(np.uint32)
    b = random_floats(rng, trials, 40).view(np.uint32)
    tri, _ = fp.run_fp_multiply(a, b)
    want, in_range = O.fp_multiply_chopped(a, b)
    got = np.where(in_range, tri.pack(), 0)
    mul.check(np.stack([got, tri.overflow], 1), np.stack([np.where(in_range, want, 0), ~in_range], 1),
              {"a": a, "b": b})

    out = [mul]
    for n in add_sizes:
        c = CaseResult("fp", f"fp_add_n{n}")
        count = max(1, trials // n)
        xs = [random_floats(rng, count).view(np.uint32) for _ in range(n)]
        ys = [random_floats(rng, count).view(np.uint32) for _ in range(n)]
        trips = [fp.run_fp_multiply(x, y)[0] for x, y in zip(xs, ys)]
        bits, flags, _ = fp.run_fp_add(trips)
        want = np.zeros(count, dtype=np.uint32)
        wflag = np.zeros(count, dtype=bool)
        for t in range(count):
            prods = [O.fp_multiply_triple(int(x[t]), int(y[t])) for x, y in zip(xs, ys)]
            wb, wf = O.fp_sum([p[:3] for p in prods])
            want[t], wflag[t] = wb, wf or any(p[3] for p in prods)
        c.check(np.stack([bits, flags], 1), np.stack([want, wflag], 1),
                {"a": np.stack(xs, 1), "b": np.stack(ys, 1)})
        out.append(c)
    return out


# -- kernels ------------------------------------------------------------------------

def kernel_cases(rng, trials: int) -> list[CaseResult]:
    count = max(8, min(trials, 512))
    relu = CaseResult("kernels", "relu")
    x = random_floats(rng, count)
    got, _ = kernels.relu(x)
    relu.check(got.view(np.uint32), np.maximum(x, 0).astype(np.float32).view(np.uint32), {"x": x})

    pool = CaseResult("kernels", "max_pool")
    v = np.abs(random_floats(rng, (count, 4)))
    got, _ = kernels.max_pool(v)
    pool.check(got, O.max_pool(v), {"values": v})

    rot = CaseResult("kernels", "rotate180_involution")
    for k in (3, 5, 7, 9, 11):
        w = random_floats(rng, (2, k, k))
        once, _ = kernels.rotate180(w)
        twice, _ = kernels.rotate180(once)
        rot.check(once.reshape(2, -1), O.rotate180(w).reshape(2, -1), {"k": np.array([k, k])})
        rot.check(twice.reshape(2, -1), w.reshape(2, -1), {"k": np.array([k, k])})

    conv = CaseResult("kernels", "conv_window")
    n = max(1, count // 8)
    w = random_floats(rng, (n, 36))
    x = random_floats(rng, (n, 36))
    got, flags, _ = kernels.conv_window(w, x)
    want = np.array([O.fp_sum([O.fp_multiply_triple(int(a), int(b))[:3]
                               for a, b in zip(w[t].view(np.uint32), x[t].view(np.uint32))])[0]
                     for t in range(n)], dtype=np.uint32)
    conv.check(got.view(np.uint32), want, {"weights": w, "inputs": x})
    return [relu, pool, rot, conv]


CASES = {"device": device_cases, "int": int_cases, "fp": fp_cases, "kernels": kernel_cases}


def run_suites(suite: str = "all", seed: int = 0, trials: int = 1000) -> dict:
    """Run one suite (or ``all``); results are in a fixed canonical order."""
    names = SUITES if suite == "all" else (suite,)
    for s in names:
        if s not in CASES:
            raise ValueError(f"unknown suite {s!r}; choose from {SUITES + ('all',)}")
    results = []
    for s in names:
        rng = np.random.default_rng([seed, SUITES.index(s)])
        results.extend(CASES[s](rng, trials))
    return {"seed": seed, "trials": trials, "suite": suite,
            "ok": all(r.ok for r in results),
            "cases": [r.to_dict() for r in results]}
