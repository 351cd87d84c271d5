import numpy as np
import pytest
from hypothesis import given, strategies as st

from racetrack_cim import rows as R
from racetrack_cim.cim import CimTile
from racetrack_cim.config import DeviceConfig
from racetrack_cim.intalu import (TooManyOperands, add5, csa_reduce, multiply, run_add5, run_csa,
                                  run_multiply)


def test_add5_example():
    assert run_add5([[1], [2], [3], [4], [5]], 8)[0].tolist() == [15]


@given(st.sampled_from([8, 16, 32, 64]), st.data())
def test_add5_identity(w, data):
    x = data.draw(st.integers(0, (1 << w) - 1))
    got, _ = run_add5([[x], [0], [0], [0], [0]], w)
    assert int(got[0]) == x


@given(st.sampled_from([8, 16, 32, 64]), st.integers(1, 5), st.data())
def test_add5_matches_host(w, n, data):
    vals = [data.draw(st.lists(st.integers(0, (1 << w) - 1), min_size=3, max_size=3)) for _ in range(n)]
    got, _ = run_add5(vals, w)
    want = [sum(col) % (1 << w) for col in zip(*vals)]
    assert got.tolist() == want


def test_add5_tr_count_is_w():
    for w in (8, 16, 32):
        _, led = run_add5([[1], [2]], w)
        assert led.trs == w


def test_add5_exponent_field_only():
    tile = CimTile(DeviceConfig(domains_per_wire=64), lane_width=64)
    a, b = tile.alloc(2)
    va = (100 << 23) | 0x12345
    vb = (27 << 23) | 0x7FFFF
    tile.store_lanes(a, [va] * 8)
    tile.store_lanes(b, [vb] * 8)
    out = add5(tile, [a, b], 8, 23)
    got = int(tile.peek_lanes(out)[0, 0])
    assert got >> 23 == 127
    assert got & ((1 << 23) - 1) == 0
    assert int(tile.peek_lanes(a)[0, 0]) == va and int(tile.peek_lanes(b)[0, 0]) == vb


def test_add5_rejects_six():
    with pytest.raises(TooManyOperands):
        run_add5([[1]] * 6, 8)


def test_csa_examples():
    s, c, c2, led = run_csa([[0]] * 7, 8)
    assert (s[0], c[0], c2[0]) == (0, 0, 0)
    s, c, c2, _ = run_csa([[1]] * 7, 8)
    assert (s[0], c[0] << 1, c2[0] << 2) == (1, 2, 4)
    assert led.trs >= 1


@given(st.lists(st.lists(st.integers(0, (1 << 13) - 1), min_size=4, max_size=4), min_size=7, max_size=7))
def test_csa_sum_preserved(ops):
    s, c, c2, _ = run_csa(ops, 16)
    want = [sum(col) for col in zip(*ops)]
    assert (s + 2 * c + 4 * c2).tolist() == want


def test_csa_single_tr():
    tile = CimTile(lane_width=16, trace=True)
    rows = tile.alloc(7)
    csa_reduce(tile, rows)
    assert sum(e["op"] == "tr" for e in tile.trace) == 1


def test_multiply_small():
    assert run_multiply([3], [5], 8)[0].tolist() == [15]


@pytest.mark.parametrize("w", [16, 24, 32])
def test_multiply_random(w, rng):
    a = rng.integers(0, 1 << w, 200, dtype=np.uint64)
    b = rng.integers(0, 1 << w, 200, dtype=np.uint64)
    got, _ = run_multiply(a, b, w)
    assert np.array_equal(got, a * b)


def test_multiply_mantissas(rng):
    a = rng.integers(0x800000, 0x1000000, 300, dtype=np.uint64)
    b = rng.integers(0x800000, 0x1000000, 300, dtype=np.uint64)
    got, _ = run_multiply(a, b, 24)
    assert [int(x) for x in got] == [int(x) * int(y) for x, y in zip(a, b)]


def test_multiply_preserves_operands():
    tile = CimTile(lane_width=16)
    a, b = tile.alloc(2)
    tile.store_lanes(a, [7] * 32)
    tile.store_lanes(b, [9] * 32)
    p = multiply(tile, a, b, 8)
    assert (tile.peek_lanes(p) == 63).all()
    assert (tile.peek_lanes(a) == 7).all() and (tile.peek_lanes(b) == 9).all()


@given(st.integers(1, 32), st.data())
def test_lane_independence(k, data):
    a = data.draw(st.lists(st.integers(0, 255), min_size=k, max_size=k))
    b = data.draw(st.lists(st.integers(0, 255), min_size=k, max_size=k))
    packed, _ = run_multiply(a, b, 8)
    singles = [int(run_multiply([x], [y], 8)[0][0]) for x, y in zip(a[:3], b[:3])]
    assert packed.tolist()[:3] == singles
    assert packed.tolist() == [x * y for x, y in zip(a, b)]


def test_multiply_operand_range_checked():
    with pytest.raises(R.LanePackingError):
        run_multiply([256], [1], 8)


def test_multiply_cycles_data_independent():
    _, l1 = run_multiply([0], [0], 8)
    _, l2 = run_multiply([255], [255], 8)
    assert l1 == l2
