"""Closed-form resource counts (patches, qubits, gates, head parameters).

The formula counter follows hardware-style bookkeeping in which every
multi-controlled NOT is decomposed; :func:`actual_gate_count` instead reports
the length of a simulated circuit, where such gates are single primitives.
The two are not expected to agree.

Conventions needed to match the published resource table for NEQR:

* ``W(n) = H(n) + n * 2**(2n+1) + 2**(2n) * 8 * mcx_cost(n)``
* ``H(n) = 2n`` Hadamards for ``n = 1`` and 0 for ``n >= 2``
* ``mcx_cost(1) = 15`` (Toffoli), ``mcx_cost(n) = 3 * 2**(2n+1) - 5`` otherwise
"""

from __future__ import annotations

from dataclasses import dataclass

from .encoders import Encoder, num_qubits
from .errors import ConfigurationError
from .simulator import Circuit

NUM_CLASSES = 10
IMAGE_EDGE = 14


@dataclass(frozen=True)
class ResourceCount:
    encoder: Encoder
    n: int
    stride: int
    rotations: int
    N: int
    Q: int
    G: int
    P: int
    W: int | None = None

    @property
    def gate_is_bound(self) -> bool:
        return self.encoder is Encoder.NEQR


def patch_count(image_h: int, image_w: int, filter_edge: int, stride: int) -> int:
    if filter_edge > min(image_h, image_w):
        raise ConfigurationError("filter larger than image")
    if stride < 1:
        raise ConfigurationError("stride must be >= 1")
    return ((image_h - filter_edge) // stride + 1) * ((image_w - filter_edge) // stride + 1)


def _check_n(n: int) -> None:
    if n not in (1, 2):
        raise ConfigurationError(f"gate formulas are defined for n in (1, 2), got {n}")


def mcx_cost(n: int) -> int:
    """Gates in one decomposed 2n-controlled NOT."""
    _check_n(n)
    return 15 if n == 1 else 3 * 2 ** (2 * n + 1) - 5


def neqr_worst_case(n: int) -> int:
    _check_n(n)
    hadamards = 2 * n if n == 1 else 0
    nots = n * 2 ** (2 * n + 1)
    return hadamards + nots + 2 ** (2 * n) * 8 * mcx_cost(n)


def gate_count(encoder: Encoder | str, n: int, N: int, R: int) -> tuple[int, int | None]:
    """``(G, W)``; ``G`` is exact for FRQI/Threshold and an upper bound for NEQR."""
    encoder = Encoder.parse(encoder)
    _check_n(n)
    if R < 0 or N < 0:
        raise ConfigurationError("N and R must be non-negative")
    if encoder is Encoder.FRQI:
        return N * (2 ** (4 * n) + R), None
    if encoder is Encoder.THRESHOLD:
        return N * (2 ** (2 * n) + R), None
    w = neqr_worst_case(n)
    return N * (R + w), w


def qubit_count(encoder: Encoder | str, n: int) -> int:
    _check_n(n)
    return num_qubits(encoder, n)


def classical_param_count(N: int, Q: int, C: int = NUM_CLASSES) -> int:
    return N * Q * C


def actual_gate_count(circuit: Circuit) -> int:
    return len(circuit.ops)


def resources(
    encoder: Encoder | str,
    filter_edge: int,
    stride: int,
    rotations: int,
    image_edge: int = IMAGE_EDGE,
) -> ResourceCount:
    encoder = Encoder.parse(encoder)
    n = filter_edge.bit_length() - 1
    if 1 << n != filter_edge:
        raise ConfigurationError(f"filter edge {filter_edge} is not a power of two")
    N = patch_count(image_edge, image_edge, filter_edge, stride)
    Q = qubit_count(encoder, n)
    G, W = gate_count(encoder, n, N, rotations)
    return ResourceCount(encoder, n, stride, rotations, N, Q, G, classical_param_count(N, Q), W)
