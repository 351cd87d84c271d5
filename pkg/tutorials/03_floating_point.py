"""Single-precision multiply and multi-operand add, with truncation.

The result of ``fp_add`` is compared to a float32 sum; the in-memory
version truncates, so small differences are expected.
"""
# %%
import numpy as np

from racetrack_cim import run_fp_add, run_fp_multiply
from racetrack_cim.fp import bits_float, float_bits

rng = np.random.default_rng(2)
a = rng.standard_normal(1000).astype(np.float32)
b = rng.standard_normal(1000).astype(np.float32)

# %% A product stays decomposed as (mantissa, exponent, sign) rows.
prod, ledger = run_fp_multiply(float_bits(a), float_bits(b))
print("multiply cost:", ledger.as_dict())

# %% Summing n products: groups of seven share a max exponent.
n = 9
xs = rng.standard_normal((n, 256)).astype(np.float32)
ys = rng.standard_normal((n, 256)).astype(np.float32)
terms = [run_fp_multiply(float_bits(x), float_bits(y))[0] for x, y in zip(xs, ys)]
bits, flags, ledger = run_fp_add(terms)
got = bits_float(bits)
ref = (xs.astype(np.float64) * ys).sum(axis=0)
err = np.abs(got - ref) / np.maximum(np.abs(xs * ys).sum(axis=0), 1e-30)
print(f"n={n}: max error relative to sum|p| = {err.max():.2e} (bound {n * 2**-23:.2e})")
print("flagged lanes:", int(flags.sum()))
