"""CNN building blocks composed from the FP microcode."""
from __future__ import annotations

import numpy as np

from . import rows as R
from .cim import CimTile
from .config import DeviceConfig
from .fp import (FP_CONFIG, LANES, SIGN_MASK, FpTriple, bits_float, decompose, exponent_overflow,
                 float_bits, fp_add, fp_multiply, max_of, run_fp_add, run_fp_multiply)
from .ledger import CostLedger


class PreconditionError(ValueError):
    pass


def _lane_rows(values: np.ndarray, width: int = 64) -> tuple[int, np.ndarray]:
    v = np.asarray(values, dtype=np.uint64).ravel()
    lanes = R.lanes_per_row(width)
    batch = max(1, -(-v.size // lanes))
    pad = np.zeros(batch * lanes, dtype=np.uint64)
    pad[:v.size] = v
    return batch, R.pack_lanes(pad.reshape(batch, lanes), width)


def conv_window(weights, inputs, config: DeviceConfig | None = None):
    """Dot product of each window: ``weights``/``inputs`` are ``(..., K)`` float32.

    Products stay decomposed between the multiply and the multi-operand add.
    Returns ``(result float32 (...), flags (...), ledger)`` with one multiply
    ledger per term plus the add ledger.
    """
    w = np.asarray(weights, dtype=np.float32)
    x = np.asarray(inputs, dtype=np.float32)
    if w.shape != x.shape:
        raise ValueError("weights and inputs must have the same shape")
    lead, K = w.shape[:-1], w.shape[-1]
    wf = w.reshape(-1, K)
    xf = x.reshape(-1, K)
    prod, mul_ledger = run_fp_multiply(float_bits(wf.T), float_bits(xf.T), config)
    n = wf.shape[0]
    terms = [prod.take(slice(j * n, (j + 1) * n)) for j in range(K)]
    bits, flags, add_ledger = run_fp_add(terms, config)
    ledger = CostLedger()
    if mul_ledger is not None:
        for _ in range(K):
            ledger = ledger + mul_ledger
    ledger = ledger + add_ledger
    return bits_float(bits).reshape(lead), flags.reshape(lead), ledger


def relu(values, config: DeviceConfig | None = None):
    """Sign-predicated reset of packed singles; returns ``(float32 array, ledger)``."""
    x = np.asarray(values, dtype=np.float32)
    batch, row = _lane_rows(float_bits(x))
    tile = CimTile(config or FP_CONFIG, batch=batch, lane_width=64)
    r = tile.alloc()
    tile.dbc.poke(r, row)
    tile.read(r)
    tile.load_pred(31)
    tile.predicated_apply("reset")
    tile.write(r)
    out = tile.peek_lanes(r).ravel()[:x.size].astype(np.uint32)
    return bits_float(out).reshape(x.shape), tile.ledger


def max_pool(values, validate: bool = True, config: DeviceConfig | None = None):
    """Maximum along the last axis of non-negative float32 values.

    Uses the elimination search on whole packed values (31 bits at offset 0),
    which orders correctly only when every sign bit is 0.
    """
    x = np.asarray(values, dtype=np.float32)
    bits = float_bits(x).astype(np.uint64)
    if validate and (bits & np.uint64(SIGN_MASK)).any():
        raise PreconditionError("max_pool requires non-negative inputs")
    lead, G = x.shape[:-1], x.shape[-1]
    flat = bits.reshape(-1, G)
    n = flat.shape[0]
    batch = max(1, -(-n // LANES))
    tile = CimTile(config or FP_CONFIG, batch=batch, lane_width=64)
    src = []
    for g in range(G):
        r = tile.alloc()
        tile.store(r, _lane_rows(flat[:, g])[1])
        src.append(r)
    out = max_of(tile, src, w=31, o=0)
    res = tile.peek_lanes(out).ravel()[:n].astype(np.uint32)
    return bits_float(res).reshape(lead), tile.ledger


def rotate180(weights, config: DeviceConfig | None = None):
    """Rotate ``(..., k, k)`` float32 kernels by 180 degrees in memory.

    Row ``i`` of a kernel is one memory row with element ``j`` in 32-bit lane
    ``j``.  Each element is masked off with AND, logically shifted to lane
    ``k-1-j`` and OR-combined into the output row ``k-1-i``.
    """
    w = np.asarray(weights, dtype=np.float32)
    k = w.shape[-1]
    if w.shape[-2] != k or not 1 <= k <= 16:
        raise ValueError("expected square kernels with k <= 16")
    lead = w.shape[:-2]
    flat = float_bits(w.reshape(-1, k, k)).astype(np.uint64)
    batch = flat.shape[0]
    cfg = config or DeviceConfig(domains_per_wire=32 if 2 * k + 1 <= 18 else 64)
    tile = CimTile(cfg, batch=batch, lane_width=32)
    src = tile.alloc(k)
    dst = tile.alloc(k)
    tmp = tile.alloc()
    for i in range(k):
        lanes = np.zeros((batch, 16), dtype=np.uint64)
        lanes[:, :k] = flat[:, i, :]
        tile.dbc.poke(src[i], R.pack_lanes(lanes, 32))
    for i in range(k):
        out = dst[k - 1 - i]
        tile.store(out, R.zeros())
        for j in range(k):
            lane_sel = np.zeros(16, dtype=np.uint64)
            lane_sel[j] = 0xFFFFFFFF
            tile.read(src[i])
            tile.const_op("and", row=R.pack_lanes(lane_sel, 32))
            move = (k - 1 - 2 * j) * 32
            if move:
                tile.shift_by(abs(move), "left" if move > 0 else "right")
            tile.write(tmp)
            tile.bulk("or", [out, tmp])
            tile.write(out)
    res = np.stack([tile.peek_lanes(dst[i], 32)[:, :k] for i in range(k)], axis=1)
    return bits_float(res.astype(np.uint32)).reshape(lead + (k, k)), tile.ledger


def weight_update(w, lr, dw, config: DeviceConfig | None = None):
    """``W' = W - lr * dW`` lane-wise; returns ``(float32, flags, ledger)``."""
    W = np.asarray(w, dtype=np.float32)
    shape = W.shape
    lr_arr = np.broadcast_to(np.asarray(lr, dtype=np.float32), shape)
    dW = np.asarray(dw, dtype=np.float32)
    batch, rw = _lane_rows(float_bits(W))
    _, rl = _lane_rows(float_bits(lr_arr))
    _, rd = _lane_rows(float_bits(dW))
    tile = CimTile(config or FP_CONFIG, batch=batch, lane_width=64)
    a, b, c = tile.alloc(3)
    tile.dbc.poke(a, rw)
    tile.dbc.poke(b, rl)
    tile.dbc.poke(c, rd)
    pm, pe, ps = fp_multiply(tile, b, c)
    product_flags = exponent_overflow(tile.peek_lanes(pe).ravel()[:W.size])
    tile.read(ps)
    tile.const_op("xor", SIGN_MASK)
    tile.write(ps)
    wm, we, ws = decompose(tile, a)
    out, exp = fp_add(tile, [(pm, pe, ps), (wm, we, ws)])
    bits = tile.peek_lanes(out).ravel()[:W.size].astype(np.uint32)
    ex = tile.peek_lanes(exp).ravel()[:W.size]
    flags = exponent_overflow(ex) | product_flags
    return bits_float(bits).reshape(shape), flags.reshape(shape), tile.ledger


# -- layer helpers --------------------------------------------------------------

def im2col(x: np.ndarray, k: int, pad: int = 0) -> np.ndarray:
    """``(N, H, W)`` -> ``(H_out, W_out, N*k*k)`` windows ordered (n, j, t)."""
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    N, H, W = x.shape
    Ho, Wo = H - k + 1, W - k + 1
    cols = np.empty((Ho, Wo, N, k, k), dtype=x.dtype)
    for j in range(k):
        for t in range(k):
            cols[:, :, :, j, t] = x[:, j:j + Ho, t:t + Wo].transpose(1, 2, 0)
    return cols.reshape(Ho, Wo, N * k * k)


def conv2d(x, kernels, pad: int = 0, config: DeviceConfig | None = None):
    """Valid (or zero-padded) convolution ``(N,H,W) * (M,N,k,k) -> (M,H_out,W_out)``."""
    x = np.asarray(x, dtype=np.float32)
    K = np.asarray(kernels, dtype=np.float32)
    M, N, k, _ = K.shape
    cols = im2col(x, k, pad)
    Ho, Wo, L = cols.shape
    w = np.broadcast_to(K.reshape(M, 1, 1, L), (M, Ho, Wo, L))
    xi = np.broadcast_to(cols[None], (M, Ho, Wo, L))
    return conv_window(w, xi, config)


def max_pool2d(x, size: int = 2, config: DeviceConfig | None = None):
    x = np.asarray(x, dtype=np.float32)
    C, H, W = x.shape
    Ho, Wo = H // size, W // size
    g = x[:, :Ho * size, :Wo * size].reshape(C, Ho, size, Wo, size).transpose(0, 1, 3, 2, 4)
    return max_pool(g.reshape(C, Ho, Wo, size * size), config=config)


def input_gradient(delta, kernels, config: DeviceConfig | None = None):
    """Propagate a loss map ``(M, H, W)`` back through ``(M, N, k, k)`` kernels.

    Composed from :func:`rotate180` and a full-padded :func:`conv2d` with the
    channel axes swapped; per-channel sums are the multi-operand add.
    """
    K = np.asarray(kernels, dtype=np.float32)
    M, N, k, _ = K.shape
    rot, _ = rotate180(K)
    return conv2d(delta, rot.transpose(1, 0, 2, 3), pad=k - 1, config=config)
