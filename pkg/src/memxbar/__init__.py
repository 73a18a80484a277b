"""Simulator for neural networks built from memristive crossbar arrays.

Covers the device and activation models, the layered crossbar circuit and
its time integration, and the inference, reading and writing protocols.
"""
from .activation import Activation, scaled_sigmoid, tanh
from .circuit import (CircuitState, SegmentSignal, Trace, build_circuit, circuit_from_weights,
                      effective_weights, forward_potentials, integrate, set_switches, split_weight)
from .device import DeviceModel, RealizabilityError, arctan_device, flux_for
from .oracle import AnnSpec, ann_forward
from .protocols import (Path, infer, path_switches, read_all, read_one, select_gains, write_all,
                        write_one, write_weights)
from .signals import BlockSignal, block_value, check_parity, decode, encode

__version__ = "0.1.0"
