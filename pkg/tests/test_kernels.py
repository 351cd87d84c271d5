import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from racetrack_cim import kernels as K
from racetrack_cim import oracles as O
from racetrack_cim.fp import float_bits
from racetrack_cim.verify import random_floats


def test_conv_window_ones():
    out, flags, _ = K.conv_window(np.ones(9), np.ones(9))
    assert out == 9.0 and not flags


def test_conv_window_zero_weights():
    out, _, _ = K.conv_window(np.zeros(9), random_floats(np.random.default_rng(0), 9))
    assert float_bits(out) == 0


def test_conv_window_matches_desk_oracle(rng):
    w = random_floats(rng, (16, 36))
    x = random_floats(rng, (16, 36))
    out, _, _ = K.conv_window(w, x)
    for t in range(16):
        want, _ = O.fp_sum([O.fp_multiply_triple(int(a), int(b))[:3]
                            for a, b in zip(float_bits(w[t]), float_bits(x[t]))])
        assert int(float_bits(out[t])) == want


def test_conv_window_order_invariant(rng):
    w = random_floats(rng, (4, 27))
    x = random_floats(rng, (4, 27))
    perm = rng.permutation(27)
    a, _, _ = K.conv_window(w, x)
    b, _, _ = K.conv_window(w[:, perm], x[:, perm])
    assert np.array_equal(float_bits(a), float_bits(b))


def test_relu_examples(rng):
    out, _ = K.relu([-2.5, 3.0, -0.0, 0.0])
    assert out.tolist() == [0.0, 3.0, 0.0, 0.0]
    assert float_bits(out[2]) == 0
    x = random_floats(rng, 100)
    assert np.array_equal(K.relu(x)[0], np.maximum(x, 0))


def test_max_pool_examples():
    assert K.max_pool([0.0, 1.5, 0.25, 3.0])[0] == 3.0
    assert K.max_pool([2.0, 2.0, 2.0])[0] == 2.0
    assert K.max_pool([0.75])[0] == 0.75


def test_max_pool_rejects_negative():
    with pytest.raises(K.PreconditionError):
        K.max_pool([1.0, -1.0])


def test_max_pool_wide_groups(rng):
    v = np.abs(random_floats(rng, (10, 16)))
    assert np.array_equal(K.max_pool(v)[0], v.max(axis=1))


@pytest.mark.parametrize("k", [1, 3, 5, 7, 9, 11])
def test_rotate180(k, rng):
    w = random_floats(rng, (2, k, k))
    once, _ = K.rotate180(w)
    assert np.array_equal(once, O.rotate180(w))
    assert np.array_equal(K.rotate180(once)[0], w)


def test_rotate180_identity_matrix():
    out, _ = K.rotate180(np.eye(3, dtype=np.float32))
    assert np.array_equal(out, np.eye(3)[::-1, ::-1])


def test_weight_update_examples():
    w = np.array([1.0, 0.0, 2.0], dtype=np.float32)
    assert np.array_equal(K.weight_update(w, 1.0, np.zeros(3))[0], w)
    assert K.weight_update(np.zeros(3), 1.0, [1.0, -2.0, 0.5])[0].tolist() == [-1.0, 2.0, -0.5]
    got, flags, _ = K.weight_update(w, [1, 1, 0.5], [0, 3, 1])
    assert got.tolist() == [1.0, -3.0, 1.5] and not flags.any()


@given(st.lists(st.floats(-100, 100, width=32), min_size=1, max_size=8))
def test_weight_update_zero_rate_is_identity(ws):
    w = np.array(ws, dtype=np.float32)
    w[np.abs(w) < 1e-30] = 0
    got, _, _ = K.weight_update(w, 0.0, np.ones_like(w))
    assert np.array_equal(float_bits(got), float_bits(w + np.float32(0)))


def test_im2col_layout_is_unique():
    x = np.arange(2 * 4 * 4, dtype=np.float32).reshape(2, 4, 4)
    cols = K.im2col(x, 3)
    assert cols.shape == (2, 2, 18)
    assert cols[1, 0].tolist() == [x[n, 1 + j, t] for n, j, t in itertools.product(range(2), range(3), range(3))]


def test_conv2d_close_to_float(rng):
    x = random_floats(rng, (2, 6, 6), 2)
    k = random_floats(rng, (3, 2, 3, 3), 2)
    out, flags, _ = K.conv2d(x, k)
    ref = O.conv2d(x, k)
    assert out.shape == (3, 4, 4) and not flags.any()
    scale = np.abs(np.einsum("mnij,nhw->mhw", np.abs(k), np.ones((2, 4, 4))) * np.abs(x).max())
    assert (np.abs(out - ref) <= 18 * 2.0**-22 * scale).all()


def test_input_gradient_matches_reference(rng):
    delta = random_floats(rng, (2, 4, 4), 1)
    k = random_floats(rng, (2, 3, 3, 3), 1)
    got, _, _ = K.input_gradient(delta, k)
    ref = O.conv2d(delta, k[:, :, ::-1, ::-1].transpose(1, 0, 2, 3), pad=2)
    assert got.shape == (3, 6, 6)
    assert np.allclose(got, ref, rtol=1e-4, atol=1e-4)


def test_max_pool2d():
    x = np.arange(16, dtype=np.float32).reshape(1, 4, 4)
    out, _ = K.max_pool2d(x)
    assert out.tolist() == [[[5.0, 7.0], [13.0, 15.0]]]
