"""Quanvolutional layer: patch extraction, random variational circuits,
feature maps and parameter-shift gradients.

The forward pass only simulates the qubits the variational circuit touches.
Every encoded state is split by the basis bits outside that support; each
piece evolves independently, and qubits outside the support contribute a
constant <Z> that is computed once per batch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .encoders import ImagePatch
from .errors import ConfigurationError, ContractError
from .prng import SplitMix64
from .simulator import (
    Circuit,
    GateKind,
    GateOp,
    QuantumState,
    apply_circuit_batch,
    remap_circuit,
    z_signs,
)

AXES = ("X", "Y", "Z")
_AXIS_KIND = {"X": GateKind.RX, "Y": GateKind.RY, "Z": GateKind.RZ}
SHIFT = math.pi / 2
_MAX_BATCH_ELEMENTS = 1 << 22  # amplitudes per simulator pass


@dataclass(frozen=True)
class FilterSpec:
    filter_edge: int
    stride: int

    def __post_init__(self) -> None:
        if self.filter_edge < 2 or self.filter_edge & (self.filter_edge - 1):
            raise ConfigurationError(f"filter edge {self.filter_edge} is not a power of two >= 2")
        if self.stride < 1:
            raise ConfigurationError("stride must be >= 1")

    @property
    def n(self) -> int:
        return self.filter_edge.bit_length() - 1

    def grid(self, height: int, width: int) -> tuple[int, int]:
        if height < self.filter_edge or width < self.filter_edge:
            raise ConfigurationError(
                f"image {height}x{width} smaller than filter {self.filter_edge}"
            )
        return (
            (height - self.filter_edge) // self.stride + 1,
            (width - self.filter_edge) // self.stride + 1,
        )


def extract_patches(image: np.ndarray, spec: FilterSpec) -> list[ImagePatch]:
    """Patches in row-major order over the output grid."""
    image = np.asarray(image)
    if image.ndim != 2:
        raise ContractError("image must be 2-D")
    rows, cols = spec.grid(*image.shape)
    f, s = spec.filter_edge, spec.stride
    return [
        ImagePatch(spec.n, image[r * s : r * s + f, c * s : c * s + f])
        for r in range(rows)
        for c in range(cols)
    ]


# -- random circuit ----------------------------------------------------------


@dataclass(frozen=True)
class Rotation:
    axis: str
    target: int
    slot: int


@dataclass(frozen=True)
class Cnot:
    control: int
    target: int


@dataclass(frozen=True)
class VariationalCircuitSpec:
    seed: int
    num_qubits: int
    num_rotations: int
    gates: tuple[Rotation | Cnot, ...]
    angles: tuple[float, ...]
    trainable: bool = True

    def __post_init__(self) -> None:
        if len(self.angles) != self.num_rotations:
            raise ContractError("one angle per rotation required")
        if not all(math.isfinite(a) for a in self.angles):
            raise ContractError("angles must be finite")

    @property
    def theta(self) -> np.ndarray:
        return np.array(self.angles, dtype=np.float64)

    @property
    def num_cnots(self) -> int:
        return sum(isinstance(g, Cnot) for g in self.gates)

    def with_angles(self, theta: Sequence[float]) -> "VariationalCircuitSpec":
        return replace(self, angles=tuple(float(t) for t in theta))

    def with_trainable(self, trainable: bool) -> "VariationalCircuitSpec":
        return replace(self, trainable=trainable)

    def circuit(self) -> Circuit:
        ops = []
        for g in self.gates:
            if isinstance(g, Rotation):
                ops.append(GateOp(_AXIS_KIND[g.axis], (g.target,), slot=g.slot))
            else:
                ops.append(GateOp(GateKind.CNOT, (g.target,), ((g.control, True),)))
        return Circuit(self.num_qubits, ops, self.num_rotations)


def cnot_count(num_rotations: int) -> int:
    """round(0.4 * R), halves rounded up."""
    return (4 * num_rotations + 5) // 10


def generate_random_circuit(
    seed: int, num_qubits: int, num_rotations: int, trainable: bool = True
) -> VariationalCircuitSpec:
    if num_rotations < 0 or num_qubits < 1:
        raise ConfigurationError("need num_qubits >= 1 and num_rotations >= 0")
    ncnot = cnot_count(num_rotations)
    if ncnot and num_qubits < 2:
        raise ConfigurationError("CNOT placement needs at least two qubits")
    rng = SplitMix64(seed)
    gates: list[Rotation | Cnot] = []
    angles = []
    for slot in range(num_rotations):
        axis = AXES[rng.below(3)]
        target = rng.below(num_qubits)
        angles.append(rng.uniform() * 2.0 * math.pi)
        gates.append(Rotation(axis, target, slot))
    for _ in range(ncnot):
        control = rng.below(num_qubits)
        target = rng.below(num_qubits - 1)
        if target >= control:
            target += 1
        gates.append(Cnot(control, target))
    rng.shuffle(gates)
    return VariationalCircuitSpec(
        seed, num_qubits, num_rotations, tuple(gates), tuple(angles), trainable
    )


# -- batched evaluation --------------------------------------------------------


class PatchBatch:
    """Encoded states prepared for repeated evaluation under one circuit layout."""

    def __init__(self, states: Sequence[QuantumState], spec: VariationalCircuitSpec) -> None:
        q = spec.num_qubits
        if any(s.num_qubits != q for s in states):
            raise ContractError(f"every state must have {q} qubits")
        circuit = spec.circuit()
        support = circuit.support()
        self.num_patches = len(states)
        self.num_qubits = q
        self.support = support
        self.compact = remap_circuit(circuit, support)
        k = self.compact.num_qubits

        parts = [s.nonzero() for s in states]
        idx = np.concatenate([p[0] for p in parts]) if parts else np.zeros(0, np.int64)
        amp = np.concatenate([p[1] for p in parts]) if parts else np.zeros(0, complex)
        owner = np.repeat(np.arange(len(states)), [p[0].size for p in parts])
        sub = np.zeros(idx.shape, dtype=np.int64)
        smask = 0
        for j, qb in enumerate(support):
            sub |= ((idx >> qb) & 1) << j
            smask |= 1 << qb
        rest = idx & ~smask
        keys, inv = np.unique((owner << q) | rest, return_inverse=True)
        self.blocks = np.zeros((keys.size, 1 << k), dtype=np.complex128)
        self.blocks[inv, sub] = amp
        self.block_owner = keys >> q
        weights = np.sum(np.abs(self.blocks) ** 2, axis=1)

        self.static = np.zeros((len(states), q))
        rest_keys = keys & ((1 << q) - 1)
        for qb in range(q):
            if qb in support:
                continue
            sign = 1.0 - 2.0 * ((rest_keys >> qb) & 1)
            self.static[:, qb] = np.bincount(
                self.block_owner, weights=weights * sign, minlength=len(states)
            )
        self._signs = z_signs(k)[:, : len(support)]

    def expectations_many(self, param_rows: np.ndarray) -> np.ndarray:
        """<Z> for every row of parameters: ``(K, R) -> (K, patches, Q)``."""
        param_rows = np.atleast_2d(np.asarray(param_rows, dtype=np.float64))
        nrows, nblocks = param_rows.shape[0], self.blocks.shape[0]
        out = np.repeat(self.static[None], nrows, axis=0)
        if not self.support or nblocks == 0:
            return out
        per_pass = max(1, _MAX_BATCH_ELEMENTS // max(1, self.blocks.size))
        cols = list(self.support)
        for start in range(0, nrows, per_pass):
            chunk = param_rows[start : start + per_pass]
            psi = np.tile(self.blocks, (chunk.shape[0], 1))
            params = np.repeat(chunk, nblocks, axis=0)
            evolved = apply_circuit_batch(psi, self.compact, params)
            z = (np.abs(evolved) ** 2) @ self._signs
            z = z.reshape(chunk.shape[0], nblocks, -1)
            acc = np.zeros((chunk.shape[0], self.num_patches, len(cols)))
            np.add.at(acc, (slice(None), self.block_owner), z)
            out[start : start + chunk.shape[0]][:, :, cols] = acc
        return out

    def expectations(self, theta: Sequence[float]) -> np.ndarray:
        """``(patches, Q)`` array of <Z> values."""
        return self.expectations_many(np.asarray(theta, dtype=np.float64)[None])[0]

    def shift_derivatives(self, theta: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
        """``(E, dE)`` with ``dE[j] = (E(t_j + pi/2) - E(t_j - pi/2)) / 2``.

        ``E`` has shape ``(patches, Q)``, ``dE`` ``(R, patches, Q)``.
        """
        theta = np.asarray(theta, dtype=np.float64)
        r = theta.size
        rows = np.repeat(theta[None], 2 * r + 1, axis=0)
        for j in range(r):
            rows[1 + 2 * j, j] += SHIFT
            rows[2 + 2 * j, j] -= SHIFT
        ev = self.expectations_many(rows)
        return ev[0], (ev[1::2] - ev[2::2]) / 2.0


# -- public layer operations ---------------------------------------------------


@dataclass(frozen=True)
class FeatureMap:
    values: np.ndarray  # (channels, height, width)

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]

    def flatten(self) -> np.ndarray:
        """Channel-major, then row-major over the grid."""
        return self.values.reshape(-1)


def forward(
    encoded_patches: Sequence[QuantumState],
    circuit: VariationalCircuitSpec,
    grid: tuple[int, int],
) -> FeatureMap:
    height, width = grid
    if len(encoded_patches) != height * width:
        raise ContractError(f"{len(encoded_patches)} patches do not fill a {height}x{width} grid")
    ev = PatchBatch(encoded_patches, circuit).expectations(circuit.theta)
    return FeatureMap(ev.T.reshape(circuit.num_qubits, height, width).copy())


def parameter_shift_grad(
    encoded_patch: QuantumState,
    circuit: VariationalCircuitSpec,
    upstream: Sequence[float],
) -> np.ndarray:
    """d(upstream . <Z>)/d(theta) for a single patch."""
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (circuit.num_qubits,):
        raise ContractError(f"upstream must have length {circuit.num_qubits}")
    _, d = PatchBatch([encoded_patch], circuit).shift_derivatives(circuit.theta)
    return d[:, 0, :] @ upstream
