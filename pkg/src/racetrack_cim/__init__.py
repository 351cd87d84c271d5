"""Racetrack-memory compute-in-memory simulator.

Bit-accurate model of domain-block clusters with transverse reads, the CIM
row-buffer logic built on them, integer and floating-point microcode, CNN
kernels, and a cost model that folds operation counts into latency/energy.
"""
from .config import DeviceConfig, load_config
from .ledger import CostLedger
from .device import (ConcurrentAccessError, DeviceError, DomainBlockCluster, Misaligned,
                     Nanowire, OverheadExceeded)
from .cim import CimTile, IllegalPredicateSource, RowAllocationError, derive_signals
from .intalu import TooManyOperands, add5, csa_reduce, multiply, run_add5, run_csa, run_multiply
from .fp import FpTriple, fp_add, fp_multiply, find_max, run_fp_add, run_fp_multiply
from .kernels import (PreconditionError, conv2d, conv_window, input_gradient, max_pool,
                      max_pool2d, relu, rotate180, weight_update)
from .costmodel import DeviceParams, TensorSpec, UnsupportedLayer, fold_costs, map_workload

__version__ = "0.1.0"

__all__ = [
    "DeviceConfig", "load_config", "CostLedger", "DomainBlockCluster", "Nanowire",
    "DeviceError", "OverheadExceeded", "Misaligned", "ConcurrentAccessError",
    "CimTile", "IllegalPredicateSource", "RowAllocationError", "derive_signals",
    "TooManyOperands", "add5", "csa_reduce", "multiply", "run_add5", "run_csa", "run_multiply",
    "FpTriple", "fp_add", "fp_multiply", "find_max", "run_fp_add", "run_fp_multiply",
    "PreconditionError", "conv2d", "conv_window", "input_gradient", "max_pool", "max_pool2d",
    "relu", "rotate180", "weight_update",
    "DeviceParams", "TensorSpec", "UnsupportedLayer", "fold_costs", "map_workload",
]
