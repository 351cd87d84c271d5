import csv
import io
import json

import pytest
from hypothesis import given, strategies as st

from racetrack_cim import costmodel as CM
from racetrack_cim.ledger import COUNTERS, CostLedger

ledgers = st.builds(CostLedger, *[st.integers(0, 10**5) for _ in COUNTERS])


def test_empty_ledger_costs_nothing():
    assert CM.fold_costs(CostLedger()) == {"latency": 0.0, "energy": 0.0}


def test_single_write_defaults():
    c = CM.fold_costs(CostLedger(writes=1, cycles=1))
    assert c["latency"] == pytest.approx(1e-9)
    assert c["energy"] == pytest.approx(0.1e-12)


@given(ledgers, ledgers)
def test_fold_is_additive(a, b):
    ab, fa, fb = CM.fold_costs(a + b), CM.fold_costs(a), CM.fold_costs(b)
    assert ab["energy"] == pytest.approx(fa["energy"] + fb["energy"])
    assert ab["latency"] == pytest.approx(fa["latency"] + fb["latency"])


@given(ledgers, st.sampled_from(COUNTERS), st.integers(1, 100),
       st.sampled_from(["e_write", "e_read", "e_shift", "e_tr", "e_cim_op"]))
def test_energy_monotone(led, counter, extra, param):
    base = CM.fold_costs(led)["energy"]
    more = led.as_dict()
    more[counter] += extra
    assert CM.fold_costs(more)["energy"] >= base
    bumped = CM.DeviceParams(**{param: getattr(CM.DeviceParams(), param) * 2})
    assert CM.fold_costs(led, bumped)["energy"] >= base


def test_params_validation(tmp_path):
    with pytest.raises(ValueError):
        CM.DeviceParams(e_write=-1.0)
    with pytest.raises(ValueError):
        CM.DeviceParams(provenance={})
    p = tmp_path / "p.json"
    p.write_text(json.dumps({"e_write": 2e-13, "provenance": {"e_write": "measured"}}))
    params = CM.DeviceParams.from_json(p)
    assert params.e_write == 2e-13 and params.provenance["e_write"] == "measured"


def test_doubling_parallelism_halves_latency():
    net = [CM.TensorSpec("conv", 3, 8, 16, 16, 3)]
    one = CM.map_workload(net, "fp32", 4)
    two = CM.map_workload(net, "fp32", 8)
    assert two.latency_s == pytest.approx(one.latency_s / 2)
    dyn_one = one.energy_j - 1e-5 * 4 * one.latency_s
    dyn_two = two.energy_j - 1e-5 * 8 * two.latency_s
    assert dyn_two == pytest.approx(dyn_one)
    assert two.energy_j == pytest.approx(one.energy_j)


def test_one_layer_hand_count():
    net = [CM.TensorSpec("conv", 1, 1, 3, 3, 3)]     # one output, nine terms
    rep = CM.map_workload(net, "fp32", 1)
    mul = CM.fold_costs(CM._measured("fp_mul"), instances=9 / 8)
    add = CM.fold_costs(CM.fp_add_ledger(9), instances=1 / 8)
    assert rep.layers[0]["instances"] == pytest.approx(9 / 8 + 1 / 8)
    assert rep.latency_s == pytest.approx(mul["latency"] + add["latency"])
    assert rep.flops == 18


def test_relu_layer_counts():
    rep = CM.map_workload([CM.TensorSpec("relu", 2, 2, 4, 4)], "integer", 1)
    assert rep.layers[0]["instances"] == pytest.approx(32 / 32)


def test_alexnet_flops():
    net = CM.alexnet()
    want = sum(2 * l.k ** 2 * l.N * l.M * l.R_out * l.C_out for l in net if l.kind == "conv")
    want += sum(2 * l.N * l.M for l in net if l.kind == "fc")
    rep = CM.map_workload(net, "fp32", 64, name="alexnet")
    assert rep.flops == want
    assert rep.gflops == pytest.approx(want / rep.latency_s / 1e9)
    assert net[0].R_out == 55


def test_vgg16_gflops_consistent():
    rep = CM.map_workload(CM.vgg16(), "fp32", 64)
    assert rep.gflops == pytest.approx(rep.flops / rep.latency_s / 1e9)
    assert rep.power_w == pytest.approx(rep.energy_j / rep.latency_s)


@pytest.mark.parametrize("net", sorted(CM.NETWORKS))
def test_mode_ordering(net):
    e = [CM.map_workload(CM.NETWORKS[net](), m, 16).energy_j for m in CM.MODES]
    assert e[0] <= e[1] <= e[2]


def test_unsupported_layer():
    with pytest.raises(CM.UnsupportedLayer) as err:
        CM.map_workload([CM.TensorSpec("relu", 1, 1, 2, 2), CM.TensorSpec("avgpool", 1, 1, 4, 4, 2)])
    assert err.value.index == 1


def test_report_outputs():
    rep = CM.map_workload(CM.lenet5(), "ternary", 62, name="lenet5")
    d = json.loads(rep.to_json())
    assert d["network"] == "lenet5" and d["parallel_dbcs"] == 62
    assert d["throughput_fps"] > 0 and d["efficiency"] > 0
    rows = list(csv.DictReader(io.StringIO(rep.layers_csv())))
    assert len(rows) == len(CM.lenet5())
    assert float(rows[0]["flops"]) == 2 * 25 * 6 * 28 * 28


def test_network_json(tmp_path):
    p = tmp_path / "net.json"
    p.write_text(json.dumps({"layers": [{"kind": "fc", "N": 10, "M": 4}]}))
    net = CM.load_network(p)
    assert net[0].outputs == 4 and net[0].terms == 10


def test_calibration_report():
    rep = CM.calibration_report()
    lenet = next(e for e in rep["entries"] if e["network"] == "lenet5" and e["mode"] == "ternary")
    assert 0.5 <= lenet["ratio"] <= 2
    assert rep["mode_ordering_holds"]
