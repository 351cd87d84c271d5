"""Latency and energy of whole networks, and how parallelism moves them."""
# %%
from racetrack_cim.costmodel import NETWORKS, calibration_report, map_workload

# %% Lenet-5 in each arithmetic mode.
for mode in ("ternary", "integer", "fp32"):
    rep = map_workload(NETWORKS["lenet5"](), mode, name="lenet5")
    print(f"{mode:8s} {rep.throughput_fps:12.1f} FPS  {rep.energy_j * 1e6:9.3f} uJ")

# %% Doubling the DBCs halves latency; energy is unchanged.
lo = map_workload(NETWORKS["alexnet"](), "integer", parallel_dbcs=64)
hi = map_workload(NETWORKS["alexnet"](), "integer", parallel_dbcs=128)
print("latency ratio", lo.latency_s / hi.latency_s, "energy ratio", lo.energy_j / hi.energy_j)

# %% Per-layer breakdown as CSV.
print(lo.layers_csv()[:400])

# %% Comparison with published reference throughput.
cal = calibration_report()
for e in cal["entries"]:
    print(e)
