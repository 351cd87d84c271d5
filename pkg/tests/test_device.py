import threading

import numpy as np
import pytest
from hypothesis import given, strategies as st

from racetrack_cim import rows as R
from racetrack_cim.config import DeviceConfig
from racetrack_cim.device import (ConcurrentAccessError, DomainBlockCluster, Misaligned,
                                  Nanowire, OverheadExceeded)
from racetrack_cim.ledger import COUNTERS


def _row(v):
    return R.from_int(v)


def test_shift_up_down_restores():
    dbc = DomainBlockCluster()
    dbc.align(5)
    dbc.write_row(0, _row(0xABC))
    before = dbc.read_row(0)
    dbc.shift("up", 1)
    dbc.shift("down", 1)
    assert np.array_equal(dbc.read_row(0), before)


def test_shift_past_overhead():
    dbc = DomainBlockCluster()
    dbc.shift("up", dbc.overhead)
    with pytest.raises(OverheadExceeded):
        dbc.shift("up", 1)
    assert dbc.head_offset == dbc.overhead


def test_shift_up_brings_next_row():
    """Write-then-read sweep: after aligning r, one shift up faces r+1."""
    dbc = DomainBlockCluster()
    for r in range(dbc.D):
        dbc.poke(r, _row(r + 1))
    for r in range(dbc.D - 1):
        dbc.align(r, 0)
        dbc.shift("up", 1)
        assert R.to_int(dbc.read_row(0)[0]) == r + 2


def test_round_trip_every_row_both_ports():
    dbc = DomainBlockCluster()
    for r in range(dbc.D):
        for ap in (0, 1):
            if r - (dbc.trd - 1) * ap < -dbc.overhead:
                continue
            dbc.align(r, ap)
            dbc.write_row(ap, _row((r << 8) | ap))
            dbc.align((r + 11) % dbc.D, 0)
            dbc.align(r, 0)
            assert R.to_int(dbc.read_row(0)[0]) == (r << 8) | ap


def test_ap1_reads_row_plus_trd_minus_one():
    dbc = DomainBlockCluster()
    for r in range(dbc.D):
        dbc.poke(r, _row(1000 + r))
    for r in range(dbc.D - dbc.trd + 1):
        dbc.align(r, 0)
        assert R.to_int(dbc.read_row(1)[0]) == 1000 + r + dbc.trd - 1


def test_fresh_dbc_reads_zero():
    assert R.to_int(DomainBlockCluster().read_row(0)[0]) == 0


def test_read_from_overhead_is_misaligned():
    dbc = DomainBlockCluster()
    dbc.shift("down", 1)
    with pytest.raises(Misaligned):
        dbc.read_row(0)
    with pytest.raises(Misaligned):
        dbc.tr_planes()


@pytest.mark.parametrize("pattern,count", [("1111111", 7), ("0000000", 0), ("1010110", 4)])
def test_transverse_read_examples(pattern, count):
    dbc = DomainBlockCluster()
    for k, c in enumerate(pattern):
        dbc.poke(k, R.from_int((1 << 512) - 1 if c == "1" else 0))
    counts = dbc.transverse_read()
    assert (counts == count).all()


def test_transverse_read_exhaustive():
    pats = np.array([[(p >> k) & 1 for k in range(7)] for p in range(128)], dtype=np.uint64)
    dbc = DomainBlockCluster(batch=128)
    for k in range(7):
        dbc.data[:, k] = np.where(pats[:, k:k + 1] == 1, np.uint64(2**64 - 1), np.uint64(0))
    assert np.array_equal(dbc.transverse_read()[:, 300], pats.sum(axis=1).astype(np.int64))


@given(st.lists(st.tuples(st.sampled_from(["up", "down"]), st.integers(0, 10)), max_size=12))
def test_random_shift_sequences_reversible(moves):
    dbc = DomainBlockCluster(DeviceConfig(domains_per_wire=16))
    dbc.data[:] = np.arange(16 * 8, dtype=np.uint64).reshape(1, 16, 8)
    snapshot = dbc.data.copy()
    done = []
    for d, n in moves:
        try:
            dbc.shift(d, n)
            done.append((d, n))
        except OverheadExceeded:
            pass
        assert abs(dbc.head_offset) <= dbc.overhead
    for d, n in reversed(done):
        dbc.shift("down" if d == "up" else "up", n)
    assert dbc.head_offset == 0
    assert np.array_equal(dbc.data, snapshot)


@pytest.mark.parametrize("op,counter", [
    (lambda d: d.shift("up", 1), "shifts"),
    (lambda d: d.read_row(0), "reads"),
    (lambda d: d.write_row(0, R.zeros()), "writes"),
    (lambda d: d.tr_planes(), "trs"),
])
def test_ledger_monotone(op, counter):
    dbc = DomainBlockCluster()
    before = dbc.ledger.copy()
    op(dbc)
    delta = (dbc.ledger - before).as_dict()
    assert delta[counter] >= 1
    assert all(delta[k] == 0 for k in COUNTERS if k not in (counter, "cycles"))


def test_masked_write_keeps_other_wires():
    dbc = DomainBlockCluster()
    dbc.poke(0, R.from_int(0xFF00))
    dbc.write_row(0, R.from_int(0x0F0F), R.from_int(0x00FF))
    assert R.to_int(dbc.peek(0)[0]) == 0xFF0F


def test_owned_by_one_thread():
    dbc = DomainBlockCluster()
    dbc.read_row(0)
    err = []

    def other():
        try:
            dbc.read_row(0)
        except ConcurrentAccessError as e:
            err.append(e)

    t = threading.Thread(target=other)
    t.start()
    t.join()
    assert err
    dbc.release()
    t = threading.Thread(target=lambda: dbc.read_row(0))
    t.start()
    t.join()


def test_nanowire_model():
    w = Nanowire(D=8, overhead=3)
    w.write(1, 0)
    w.shift(2)
    assert w.read(-2) == 1
    assert w.transverse_read(3) in (0, 1)
    with pytest.raises(OverheadExceeded):
        w.shift(2)
