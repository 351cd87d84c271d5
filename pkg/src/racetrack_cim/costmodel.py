"""Fold operation ledgers into latency/energy and map CNN layers onto microcode costs."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .ledger import COUNTERS, CostLedger

PJ = 1e-12
NS = 1e-9


class UnsupportedLayer(ValueError):
    def __init__(self, index: int, kind: str):
        super().__init__(f"layer {index}: unsupported layer type {kind!r}")
        self.index = index
        self.kind = kind


_PROVENANCE = {
    "e_write": "0.1 pJ per RM write (reported RM write energy)",
    "t_access": "1 ns RM access latency (reported)",
    "e_read": "assumed: half of a write",
    "e_shift": "assumed: half of a write per one-domain shift",
    "e_tr": "assumed: equal to a write (TR current through TRD domains)",
    "t_shift": "assumed: one domain per 1 ns cycle",
    "t_tr": "assumed: equal to an access",
    "t_cim": "assumed: one row-buffer logic step per 1 ns cycle",
    "e_cim_op": "assumed: 0.05 pJ per CIM logic step (stand-in for synthesis data)",
    "cim_static_power": "assumed: 10 uW per active CIM tile (stand-in for synthesis data)",
}


@dataclass
class DeviceParams:
    """Per-operation device costs.  Energies in joules per counted event, times in seconds."""

    e_write: float = 0.1 * PJ
    e_read: float = 0.05 * PJ
    e_shift: float = 0.05 * PJ
    e_tr: float = 0.1 * PJ
    e_cim_op: float = 0.05 * PJ
    t_access: float = 1 * NS
    t_shift: float = 1 * NS
    t_tr: float = 1 * NS
    t_cim: float = 1 * NS
    cim_static_power: float = 1e-5
    provenance: dict = field(default_factory=lambda: dict(_PROVENANCE))

    def __post_init__(self):
        for k, v in self.values().items():
            if v < 0:
                raise ValueError(f"{k} must be non-negative")
            if not self.provenance.get(k):
                raise ValueError(f"parameter {k} needs a provenance note")

    def values(self) -> dict:
        return {k: v for k, v in asdict(self).items() if k != "provenance"}

    @classmethod
    def from_json(cls, path) -> "DeviceParams":
        data = json.loads(Path(path).read_text())
        prov = dict(_PROVENANCE)
        prov.update(data.pop("provenance", {}))
        return cls(provenance=prov, **data)

    def to_dict(self) -> dict:
        return asdict(self)


def op_energy(params: DeviceParams) -> dict:
    """Energy of one counted event for each ledger counter."""
    return {
        "shifts": params.e_shift,
        "reads": params.e_read,
        "writes": params.e_write,
        "trs": params.e_tr,
        "logical_shifts": params.e_cim_op,
        "predicated_ops": params.e_cim_op,
        "cycles": 0.0,
    }


def op_time(params: DeviceParams) -> dict:
    return {
        "shifts": params.t_shift,
        "reads": params.t_access,
        "writes": params.t_access,
        "trs": params.t_tr,
        "logical_shifts": params.t_cim,
        "predicated_ops": params.t_cim,
        "cycles": 0.0,
    }


def fold_costs(ledger: CostLedger | dict, params: DeviceParams | None = None,
               instances: float = 1, parallel_dbcs: float = 1) -> dict:
    """Latency and dynamic energy of ``instances`` copies of a ledger spread over ``parallel_dbcs`` DBCs.

    Latency is the sequential sum along one DBC times the number of rounds
    (``instances / parallel_dbcs``, unrounded: steady-state throughput).
    Energy sums over every instance.  Static power is accounted separately
    by :func:`map_workload`.
    """
    params = params or DeviceParams()
    counts = ledger.as_dict() if isinstance(ledger, CostLedger) else dict(ledger)
    t = op_time(params)
    e = op_energy(params)
    per_latency = sum(counts.get(k, 0) * t[k] for k in COUNTERS)
    per_energy = sum(counts.get(k, 0) * e[k] for k in COUNTERS)
    return {"latency": per_latency * instances / parallel_dbcs, "energy": per_energy * instances}


# -- workload description ------------------------------------------------------

@dataclass
class TensorSpec:
    """One layer.  ``kind`` is ``conv``, ``fc``, ``pool`` or ``relu``."""

    kind: str
    N: int = 1
    M: int = 1
    R_in: int = 1
    C_in: int = 1
    k: int = 1
    stride: int = 1
    pad: int = 0

    @property
    def R_out(self) -> int:
        if self.kind == "pool":
            return (self.R_in - self.k) // self.stride + 1
        return (self.R_in + 2 * self.pad - self.k) // self.stride + 1

    @property
    def C_out(self) -> int:
        if self.kind == "pool":
            return (self.C_in - self.k) // self.stride + 1
        return (self.C_in + 2 * self.pad - self.k) // self.stride + 1

    @property
    def outputs(self) -> int:
        if self.kind == "fc":
            return self.M
        if self.kind == "pool":
            return self.N * self.R_out * self.C_out
        if self.kind == "relu":
            return self.N * self.R_in * self.C_in
        return self.M * self.R_out * self.C_out

    @property
    def terms(self) -> int:
        """Multiply-accumulate terms per output."""
        if self.kind == "fc":
            return self.N
        if self.kind == "conv":
            return self.k * self.k * self.N
        return self.k * self.k if self.kind == "pool" else 1

    @property
    def flops(self) -> int:
        if self.kind in ("conv", "fc"):
            return 2 * self.terms * self.outputs
        return 0

    @classmethod
    def from_dict(cls, d: dict) -> "TensorSpec":
        return cls(**d)


def _conv(N, M, size, k, stride=1, pad=0):
    return TensorSpec("conv", N, M, size, size, k, stride, pad)


def _pool(N, size, k=2, stride=2):
    return TensorSpec("pool", N, N, size, size, k, stride)


def lenet5() -> list[TensorSpec]:
    return [_conv(1, 6, 32, 5), TensorSpec("relu", 6, 6, 28, 28), _pool(6, 28),
            _conv(6, 16, 14, 5), TensorSpec("relu", 16, 16, 10, 10), _pool(16, 10),
            TensorSpec("fc", 400, 120), TensorSpec("fc", 120, 84), TensorSpec("fc", 84, 10)]


def alexnet() -> list[TensorSpec]:
    return [_conv(3, 96, 227, 11, 4), _pool(96, 55, 3, 2),
            _conv(96, 256, 27, 5, 1, 2), _pool(256, 27, 3, 2),
            _conv(256, 384, 13, 3, 1, 1), _conv(384, 384, 13, 3, 1, 1),
            _conv(384, 256, 13, 3, 1, 1), _pool(256, 13, 3, 2),
            TensorSpec("fc", 9216, 4096), TensorSpec("fc", 4096, 4096), TensorSpec("fc", 4096, 1000)]


def vgg16() -> list[TensorSpec]:
    layers, size, ch = [], 224, 3
    for width, reps in ((64, 2), (128, 2), (256, 3), (512, 3), (512, 3)):
        for _ in range(reps):
            layers.append(_conv(ch, width, size, 3, 1, 1))
            ch = width
        layers.append(_pool(ch, size))
        size //= 2
    layers += [TensorSpec("fc", 25088, 4096), TensorSpec("fc", 4096, 4096), TensorSpec("fc", 4096, 1000)]
    return layers


NETWORKS = {"lenet5": lenet5, "alexnet": alexnet, "vgg16": vgg16}


def load_network(path) -> list[TensorSpec]:
    data = json.loads(Path(path).read_text())
    layers = data["layers"] if isinstance(data, dict) else data
    return [TensorSpec.from_dict(d) for d in layers]


# -- per-operation ledgers measured on the simulator -----------------------------

@lru_cache(maxsize=None)
def _measured(op: str, arg: int = 0) -> CostLedger:
    # ledgers are data independent (lock-step predication), so one lane of zeros suffices
    from . import fp, intalu, rows as R
    from .cim import CimTile

    if op == "int_mul":
        return intalu.run_multiply([0], [0], arg)[1]
    if op == "csa":
        return intalu.run_csa([[0]] * 7, arg)[3]
    if op == "add5":
        return intalu.run_add5([[0]] * 5, arg)[1]
    if op == "fp_mul":
        return fp.run_fp_multiply([0], [0])[1]
    if op == "fp_add":
        return fp.run_fp_add([fp.FpTriple.from_bits([0])] * arg)[2]
    if op == "find_max":
        tile = CimTile(fp.FP_CONFIG, lane_width=64)
        rows = tile.alloc(7)
        fp.find_max(tile, rows, w=arg, o=31 - arg)
        return tile.ledger
    if op == "relu":
        tile = CimTile(fp.FP_CONFIG, lane_width=64)
        r = tile.alloc()
        tile.read(r)
        tile.load_pred(31)
        tile.predicated_apply("reset")
        tile.write(r)
        return tile.ledger
    if op == "ternary_term":
        # select / negate one activation row by a ternary weight: two predicated ops + companion row
        tile = CimTile(None, lane_width=16)
        x, c = tile.alloc(2)
        tile.read(x)
        tile.load_pred(0, 0)
        tile.predicated_apply("reset", 0)
        tile.load_pred(0, 1)
        tile.predicated_apply("xor", 1, value=0xFFFF)
        tile.write(x)
        tile.store(c, R.zeros())
        tile.set_const(1)
        tile.predicated_apply("write", 1, target=c)
        return tile.ledger
    raise KeyError(op)


_FP_ADD_SAMPLES = (7, 14, 21, 28)


@lru_cache(maxsize=None)
def _fp_add_fit() -> dict:
    """Per-counter affine fit of the fp_add ledger in the operand count."""
    xs = np.array(_FP_ADD_SAMPLES, dtype=float)
    fit = {}
    for key in COUNTERS:
        ys = np.array([getattr(_measured("fp_add", n), key) for n in _FP_ADD_SAMPLES], dtype=float)
        fit[key] = np.polyfit(xs, ys, 1)
    return fit


def fp_add_ledger(n: int) -> dict:
    if n <= 7 or n in _FP_ADD_SAMPLES:
        return _measured("fp_add", n).as_dict()
    return {k: max(0.0, float(np.polyval(c, n))) for k, c in _fp_add_fit().items()}


def reduction_ledger(terms: int, width: int) -> dict:
    """Carry-save reduce ``terms`` rows then add5: ``ceil((terms-5)/4)`` CSA steps."""
    csa = _measured("csa", width).as_dict()
    add = _measured("add5", width).as_dict()
    steps = max(0, math.ceil((terms - 5) / 4))
    return {k: steps * csa[k] + add[k] for k in COUNTERS}


def _combine(*parts) -> dict:
    out = {k: 0.0 for k in COUNTERS}
    for weight, led in parts:
        d = led.as_dict() if isinstance(led, CostLedger) else led
        for k in COUNTERS:
            out[k] += weight * d.get(k, 0)
    return out


MODES = ("ternary", "integer", "fp32")
LANES = {"ternary": 32, "integer": 32, "fp32": 8}


def layer_work(layer: TensorSpec, mode: str) -> list[tuple[float, dict]]:
    """(row-operation instances, per-instance ledger) pairs for one layer."""
    lanes = LANES[mode]
    outs, K = layer.outputs, layer.terms
    if layer.kind in ("conv", "fc"):
        if mode == "fp32":
            return [(outs * K / lanes, _measured("fp_mul").as_dict()),
                    (outs / lanes, fp_add_ledger(K))]
        if mode == "integer":
            return [(outs * K / lanes, _measured("int_mul", 8).as_dict()),
                    (outs / lanes, reduction_ledger(K, 32))]
        return [(outs * K / lanes, _measured("ternary_term").as_dict()),
                (outs / lanes, reduction_ledger(2 * K, 16))]
    if layer.kind == "pool":
        w = 31 if mode == "fp32" else 8
        return [(outs * math.ceil(max(K - 1, 1) / 6) / lanes, _measured("find_max", w).as_dict())]
    if layer.kind == "relu":
        return [(outs / lanes, _measured("relu").as_dict())]
    raise KeyError(layer.kind)


@dataclass
class WorkloadReport:
    network: str
    mode: str
    parallel_dbcs: float
    latency_s: float
    energy_j: float
    throughput_fps: float
    gflops: float
    power_w: float
    efficiency: float
    flops: int
    layers: list = field(default_factory=list)
    params: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def layers_csv(self) -> str:
        buf = io.StringIO()
        cols = ["index", "kind", "outputs", "terms", "flops", "instances", "latency_s", "energy_j"]
        writer = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        writer.writeheader()
        for row in self.layers:
            writer.writerow({c: row[c] for c in cols})
        return buf.getvalue()


def map_workload(net: list[TensorSpec], mode: str = "fp32", parallel_dbcs: float = 1,
                 params: DeviceParams | None = None, name: str = "custom") -> WorkloadReport:
    """Cost one inference of ``net`` in ``mode`` on ``parallel_dbcs`` CIM DBCs."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    params = params or DeviceParams()
    for i, layer in enumerate(net):
        if layer.kind not in ("conv", "fc", "pool", "relu"):
            raise UnsupportedLayer(i, layer.kind)
    rows, latency, energy, flops = [], 0.0, 0.0, 0
    static_w = params.cim_static_power * parallel_dbcs
    for i, layer in enumerate(net):
        lat = en = inst = 0.0
        for instances, led in layer_work(layer, mode):
            c = fold_costs(led, params, instances, parallel_dbcs)
            lat += c["latency"]
            en += c["energy"]
            inst += instances
        en += static_w * lat
        rows.append({"index": i, "kind": layer.kind, "outputs": layer.outputs, "terms": layer.terms,
                     "flops": layer.flops, "instances": inst, "latency_s": lat, "energy_j": en})
        latency += lat
        energy += en
        flops += layer.flops
    fps = 1.0 / latency if latency else float("inf")
    power = energy / latency if latency else 0.0
    gflops = flops / latency / 1e9 if latency else 0.0
    thr = gflops if mode == "fp32" else fps
    return WorkloadReport(network=name, mode=mode, parallel_dbcs=parallel_dbcs, latency_s=latency,
                          energy_j=energy, throughput_fps=fps, gflops=gflops, power_w=power,
                          efficiency=thr / power if power else 0.0, flops=flops, layers=rows,
                          params=params.to_dict())


# Reference figures for calibration reports (not reproduction targets).
REFERENCE = {
    ("lenet5", "ternary"): {"throughput_fps": 32075, "power_w": 0.028},
    ("alexnet", "ternary"): {"throughput_fps": 490, "power_w": 0.93},
    ("lenet5", "integer"): {"throughput_fps": 163, "power_w": 0.006},
    ("alexnet", "integer"): {"throughput_fps": 90.5, "power_w": 4.99},
    ("alexnet", "fp32"): {"gflops": 50.72, "power_w": 5.65},
    ("vgg16", "fp32"): {"gflops": 81.95, "power_w": 5.7},
}


def calibrate_parallelism(net: str = "lenet5", mode: str = "ternary", target_fps: float = 32075,
                          params: DeviceParams | None = None) -> int:
    """Smallest integer DBC count whose modeled throughput is closest to ``target_fps``."""
    base = map_workload(NETWORKS[net](), mode, 1, params, name=net).throughput_fps
    return max(1, round(target_fps / base))


def calibration_report(params: DeviceParams | None = None, parallel_dbcs: int | None = None) -> dict:
    """Model every reference (network, mode) pair at one parallelism and compare.

    Reported, not asserted: the reference figures depend on parameters and
    parallelism that are not fully published.
    """
    params = params or DeviceParams()
    if parallel_dbcs is None:
        parallel_dbcs = calibrate_parallelism(params=params)
    entries = []
    for (net, mode), ref in REFERENCE.items():
        r = map_workload(NETWORKS[net](), mode, parallel_dbcs, params, name=net)
        metric = "gflops" if "gflops" in ref else "throughput_fps"
        model = getattr(r, metric)
        entries.append({"network": net, "mode": mode, "metric": metric, "model": model,
                        "reference": ref[metric], "ratio": model / ref[metric],
                        "model_power_w": r.power_w, "reference_power_w": ref["power_w"],
                        "energy_j": r.energy_j})
    energies = {m: map_workload(lenet5(), m, parallel_dbcs, params).energy_j for m in MODES}
    return {"parallel_dbcs": parallel_dbcs, "calibrated_on": "lenet5/ternary", "entries": entries,
            "mode_ordering_holds": energies["ternary"] <= energies["integer"] <= energies["fp32"],
            "params": params.to_dict()}
