"""Shifting, reading and transverse-reading a domain-block cluster.

Run with ``python3 tutorials/01_device_basics.py``.
"""
# %%
import numpy as np

from racetrack_cim import DeviceConfig, DomainBlockCluster, OverheadExceeded
from racetrack_cim import rows as R

cfg = DeviceConfig(domains_per_wire=32)
dbc = DomainBlockCluster(cfg)
print("data domains:", cfg.domains_per_wire, "overhead per end:", cfg.overhead)

# %% Rows are 512 bits, stored as eight uint64 words.
rng = np.random.default_rng(0)
row = rng.integers(0, 2**63, size=(1, R.WORDS), dtype=np.uint64)
dbc.align(5, 0)
dbc.write_row(0, row)
print("ledger after align+write:", dbc.ledger.as_dict())

# %% Reading it back needs the row under a port again.
dbc.shift("down", 3)
dbc.align(5, 0)
assert (dbc.read_row(0) == row).all()

# %% Shifting past the overhead domains loses data, so the device refuses.
try:
    dbc.shift("up", cfg.overhead + cfg.domains_per_wire)
except OverheadExceeded as e:
    print("refused:", e)

# %% A transverse read counts ones across the TRD domains between the ports.
for k in range(cfg.trd):
    dbc.poke(k, R.from_int((1 << k) - 1))
dbc.align(0, 0)
counts = dbc.transverse_read()
print("ones per nanowire, first 8 wires:", counts.ravel()[:8])
