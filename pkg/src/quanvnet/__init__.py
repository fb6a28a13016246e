"""Trainable quanvolutional neural networks over Threshold, FRQI and NEQR encodings."""

from .encoders import Encoder, ImagePatch, ThresholdConfig, decode_neqr, encode_frqi, encode_neqr, encode_threshold
from .quanvolution import FilterSpec, extract_patches, forward, generate_random_circuit, parameter_shift_grad
from .simulator import Circuit, GateKind, GateOp, QuantumState, apply_circuit, pauli_z_expectations, zero_state

__version__ = "0.1.0"

__all__ = [
    "Circuit",
    "Encoder",
    "FilterSpec",
    "GateKind",
    "GateOp",
    "ImagePatch",
    "QuantumState",
    "ThresholdConfig",
    "apply_circuit",
    "decode_neqr",
    "encode_frqi",
    "encode_neqr",
    "encode_threshold",
    "extract_patches",
    "forward",
    "generate_random_circuit",
    "parameter_shift_grad",
    "pauli_z_expectations",
    "zero_state",
]
