"""Host-side reference semantics, written independently of the microcode.

These define ground truth for the verification suites: integer results come
from Python/numpy integer arithmetic, floating-point results from exact
float64 products and integer desk arithmetic under truncation semantics.
"""
from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1


def int_multiply(a, b, w: int) -> np.ndarray:
    a = np.asarray(a, dtype=np.uint64)
    b = np.asarray(b, dtype=np.uint64)
    return a * b   # 2w <= 64 bits, exact


def int_add(operands, w: int) -> np.ndarray:
    total = np.zeros_like(np.asarray(operands[0], dtype=np.uint64))
    for op in operands:
        total = total + np.asarray(op, dtype=np.uint64)    # wraps mod 2**64
    if w == 64:
        return total
    return total & np.uint64((1 << w) - 1)


def column_split(ones: int) -> tuple[int, int, int]:
    """Sum, carry and super-carry bits of a column holding ``ones`` set bits."""
    return ones & 1, (ones >> 1) & 1, (ones >> 2) & 1


# -- floating point -------------------------------------------------------------

def _fields(bits: int) -> tuple[int, int, int]:
    return bits >> 31, (bits >> 23) & 0xFF, bits & 0x7FFFFF


def fp_multiply_triple(a_bits: int, b_bits: int) -> tuple[int, int, int, bool]:
    """Scalar decomposed product ``(m, e_row, s_row, out_of_range)``.

    Mantissa: exact 48-bit significand product, halved (chopped) when >= 2.0,
    with 1.0 at bit 46.  Exponent: 9-bit biased sum at bit 23.  Zero or
    subnormal inputs give an all-zero triple; results below the normal range
    keep only their sign.
    """
    sa, ea, fa = _fields(a_bits)
    sb, eb, fb = _fields(b_bits)
    if ea == 0 or eb == 0:
        return 0, 0, 0, False
    p = ((1 << 23) | fa) * ((1 << 23) | fb)
    inc = 0
    if p >> 47:
        p >>= 1
        inc = 1
    field = (ea + eb - 127 + inc) % 512
    if field == 0 or field >= 384:                  # below the normal range: signed zero
        return 0, 0, (sa ^ sb) << 31, False
    return p, field << 23, (sa ^ sb) << 31, bool(field >> 8) or field == 255


def fp_multiply_chopped(a, b) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized truncation oracle from the exact float64 product.

    Returns ``(bits, in_range)``: the product chopped toward zero to a 24-bit
    significand, as float32 bits; ``in_range`` is False where the exponent
    overflows.  Zero/subnormal inputs give +0; results below the normal range
    give signed zero.
    """
    a = np.asarray(a, dtype=np.uint32)
    b = np.asarray(b, dtype=np.uint32)
    fa, fb = a.view(np.float32).astype(np.float64), b.view(np.float32).astype(np.float64)
    zero = ((a >> 23) & 0xFF == 0) | ((b >> 23) & 0xFF == 0)
    prod = fa * fb                                  # exact: 48-bit significand
    pb = prod.view(np.uint64) & ~np.uint64((1 << 29) - 1)   # keep 23 fraction bits
    chopped = pb.view(np.float64)
    mant, exp2 = np.frexp(np.abs(chopped))         # value = mant * 2**exp2, mant in [0.5, 1)
    biased = exp2 - 1 + 127
    in_range = zero | (biased <= 254)
    under = ~zero & (biased < 1)
    sign = ((a ^ b) & np.uint32(0x80000000)).astype(np.uint32)
    with np.errstate(over="ignore"):
        normal = chopped.astype(np.float32).view(np.uint32)
    bits = np.where(zero, 0, np.where(under, sign, normal)).astype(np.uint32)
    return bits, in_range


def fp_sum(triples) -> tuple[int, bool]:
    """Desk oracle for the multi-operand add of decomposed operands.

    ``triples``: ``(m, e_row, s_row)`` integers with the mantissa's 1.0 at
    bit 46.  Every mantissa is aligned to the largest exponent (shift right,
    low bits chopped, shifts of 64 or more give zero), negated in 64-bit two's
    complement when the sign is set, and summed mod 2**64.  The sum is
    renormalized by locating its leading one.
    Returns ``(float32_bits, out_of_range)``.
    """
    fields = [(e >> 23) & 0xFF for _, e, _ in triples]
    mx = max(fields)
    total = 0
    for (m, _, s), f in zip(triples, fields):
        d = mx - f
        v = m >> d if d < 64 else 0
        if s >> 31 & 1:
            v = -v
        total = (total + v) & MASK64
    if total == 0:
        return 0, False
    neg = total >> 63
    mag = ((-total) & MASK64) if neg else total
    lead = mag.bit_length() - 1
    frac = (mag >> (lead - 23)) if lead >= 23 else (mag << (23 - lead))
    field = (mx + lead - 46) % 512
    if field == 0 or field >= 384:
        return neg << 31, False
    bits = (neg << 31) | ((field & 0xFF) << 23) | (frac & 0x7FFFFF)
    return bits, bool(field >> 8) or field == 255


def decompose(bits: int) -> tuple[int, int, int]:
    s, e, f = _fields(bits)
    if e == 0:
        return 0, 0, s << 31
    return ((1 << 23) | f) << 23, e << 23, s << 31


def sequential_float32_sum(values) -> np.float32:
    """IEEE round-to-nearest running sum in float32."""
    acc = np.float32(0)
    for v in np.asarray(values, dtype=np.float32):
        acc = np.float32(acc + v)
    return acc


def max_pool(values) -> np.ndarray:
    return np.max(np.asarray(values), axis=-1)


def rotate180(w) -> np.ndarray:
    return np.asarray(w)[..., ::-1, ::-1]


def conv2d(x, k, pad: int = 0) -> np.ndarray:
    """Reference float64 'valid' cross-correlation; x (N,H,W), k (M,N,kh,kw)."""
    x = np.pad(np.asarray(x, dtype=np.float64), ((0, 0), (pad, pad), (pad, pad)))
    k = np.asarray(k, dtype=np.float64)
    M, N, kh, kw = k.shape
    H, W = x.shape[1] - kh + 1, x.shape[2] - kw + 1
    out = np.zeros((M, H, W))
    for i in range(kh):
        for j in range(kw):
            out += np.einsum("mn,nhw->mhw", k[:, :, i, j], x[:, i:i + H, j:j + W])
    return out
