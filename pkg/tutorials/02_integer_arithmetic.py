"""Integer addition and multiplication built from transverse reads.

Every result is checked against plain numpy.
"""
# %%
import numpy as np

from racetrack_cim import run_add5, run_csa, run_multiply

rng = np.random.default_rng(1)

# %% Five 16-bit vectors, added lane-parallel.
ops = [rng.integers(0, 2**16, 200, dtype=np.uint64) for _ in range(5)]
sums, ledger = run_add5(ops, w=16)
want = sum(o.astype(object) for o in ops)
assert all(int(s) == int(x) % 2**16 for s, x in zip(sums, want))
print("add5 w=16:", ledger.trs, "TRs,", ledger.cycles, "cycles")

# %% Carry-save: seven operands shrink to three rows in a single TR.
seven = [rng.integers(0, 2**12, 200, dtype=np.uint64) for _ in range(7)]
s, c, c2, ledger = run_csa(seven, w=16)
assert (s + 2 * c + 4 * c2 == sum(seven)).all()
print("csa:", ledger.trs, "TR")

# %% Multiplication is partial products plus the same reduction.
for w in (8, 16, 24, 32):
    a = rng.integers(0, 2**w, 64, dtype=np.uint64)
    b = rng.integers(0, 2**w, 64, dtype=np.uint64)
    p, ledger = run_multiply(a, b, w)
    assert [int(x) for x in p] == [int(x) * int(y) for x, y in zip(a, b)]
    print(f"w={w:2d} multiply: {ledger.cycles} cycles")
