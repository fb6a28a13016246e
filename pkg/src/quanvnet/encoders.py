"""Quantum image encodings for square ``2**n x 2**n`` grayscale patches.

Register layout (all encoders use row-major pixel enumeration, so pixel
``i = row * 2**n + col``):

* Threshold: qubit ``i`` holds pixel ``i``; ``2**(2n)`` qubits.
* FRQI: qubits ``0..2n-1`` hold the position ``i``, qubit ``2n`` the color,
  and for ``n >= 2`` qubits ``2n+1 ..`` are ``2n-1`` work qubits that carry
  the AND of the position controls.  ``n = 1`` needs no work qubits.
* NEQR: qubits ``0..2n-1`` hold the position ``Y * 2**n + X`` (``Y`` in the
  high bits, so it equals the pixel index), qubit ``2n + b`` holds bit ``b``
  of the gray value.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, ContractError, DecodeError
from .minimizer import BoolFunction, implicants_to_gates, minimize_cover
from .simulator import (
    Circuit,
    GateKind,
    GateOp,
    QuantumState,
    apply_circuit,
    apply_circuit_batch,
    zero_state,
)

COLOR_BITS = 8
SUPPORTED_N = (1, 2)


class Encoder(enum.IntEnum):
    THRESHOLD = 0
    FRQI = 1
    NEQR = 2

    @classmethod
    def parse(cls, name: "str | int | Encoder") -> "Encoder":
        if isinstance(name, cls):
            return name
        if isinstance(name, int):
            return cls(name)
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise ConfigurationError(f"unknown encoder {name!r}") from None


@dataclass(frozen=True)
class ImagePatch:
    n: int
    pixels: tuple[int, ...]

    def __init__(self, n: int, pixels: Sequence[int] | np.ndarray) -> None:
        values = tuple(int(p) for p in np.asarray(pixels).reshape(-1))
        if n < 1:
            raise ConfigurationError("patch edge exponent n must be >= 1")
        if len(values) != 1 << (2 * n):
            raise ContractError(f"patch with n={n} needs {1 << 2 * n} pixels")
        if any(p < 0 or p > 255 for p in values):
            raise ContractError("pixel values must lie in [0, 255]")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "pixels", values)

    @property
    def edge(self) -> int:
        return 1 << self.n

    def as_array(self) -> np.ndarray:
        return np.array(self.pixels, dtype=np.int64).reshape(self.edge, self.edge)


@dataclass(frozen=True)
class ThresholdConfig:
    t: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.t <= 255:
            raise ConfigurationError(f"threshold {self.t} outside [0, 255]")


def num_qubits(encoder: Encoder | str, n: int) -> int:
    encoder = Encoder.parse(encoder)
    if encoder is Encoder.THRESHOLD:
        return 1 << (2 * n)
    if encoder is Encoder.FRQI:
        return 2 * n + 1 + (2 * n - 1 if n >= 2 else 0)
    return COLOR_BITS + 2 * n


def _check_n(n: int, allow_any_n: bool) -> None:
    if n not in SUPPORTED_N and not allow_any_n:
        raise ConfigurationError(
            f"n={n} is not a supported filter size; pass allow_any_n=True to force"
        )


# -- Threshold ---------------------------------------------------------------


def threshold_bits(patch: ImagePatch, cfg: ThresholdConfig = ThresholdConfig()) -> list[int]:
    return [1 if p > cfg.t else 0 for p in patch.pixels]


def encode_threshold(
    patch: ImagePatch, cfg: ThresholdConfig = ThresholdConfig()
) -> tuple[Circuit, QuantumState]:
    q = num_qubits(Encoder.THRESHOLD, patch.n)
    ops = [GateOp(GateKind.X, (i,)) for i, c in enumerate(threshold_bits(patch, cfg)) if c]
    circuit = Circuit(q, ops)
    return circuit, apply_circuit(zero_state(q), circuit)


# -- FRQI --------------------------------------------------------------------


def pixels_to_frqi_angles(patch: ImagePatch) -> np.ndarray:
    """Linear map of [0, 255] onto [0, pi/2]."""
    return np.array(patch.pixels, dtype=np.float64) / 255.0 * (np.pi / 2.0)


def _frqi_layout(n: int) -> list[tuple[GateOp, int, float]]:
    """Gate sequence with angle placeholders.

    Each entry is ``(gate, pixel, coef)``; for rotations the real angle is
    ``coef * theta[pixel]`` and ``gate`` carries a dummy angle, otherwise
    ``pixel`` is -1.
    """
    npos = 2 * n
    color = npos
    out: list[tuple[GateOp, int, float]] = [
        (GateOp(GateKind.H, (q,)), -1, 0.0) for q in range(npos)
    ]

    def rot(controls, pixel, coef):
        out.append((GateOp(GateKind.CRY, (color,), controls, angle=0.0), pixel, coef))

    for i in range(1 << npos):
        ctrl = [(q, bool((i >> q) & 1)) for q in range(npos)]
        if n == 1:
            # doubly controlled RY(2t) from singly controlled RY(+-t)
            (c0, p0), (c1, p1) = ctrl
            rot(((c1, p1),), i, 1.0)
            out.append((GateOp(GateKind.CNOT, (c1,), ((c0, p0),)), -1, 0.0))
            rot(((c1, p1),), i, -1.0)
            out.append((GateOp(GateKind.CNOT, (c1,), ((c0, p0),)), -1, 0.0))
            rot(((c0, p0),), i, 1.0)
            continue
        work = list(range(npos + 1, npos + npos))
        ladder = [GateOp(GateKind.MCX, (work[0],), (ctrl[0], ctrl[1]))]
        for k in range(2, npos):
            ladder.append(GateOp(GateKind.MCX, (work[k - 1],), ((work[k - 2], True), ctrl[k])))
        out += [(g, -1, 0.0) for g in ladder]
        rot(((work[-1], True),), i, 2.0)
        out += [(g, -1, 0.0) for g in reversed(ladder)]
    return out


def _frqi_ops(n: int, thetas: np.ndarray) -> list[GateOp]:
    return [
        gate if pixel < 0
        else GateOp(gate.kind, gate.targets, gate.controls, angle=coef * float(thetas[pixel]))
        for gate, pixel, coef in _frqi_layout(n)
    ]


def frqi_template(n: int) -> tuple[Circuit, np.ndarray, np.ndarray]:
    """FRQI circuit with one parameter slot per rotation.

    Returns ``(circuit, pixel, coef)`` such that slot ``s`` must be bound to
    ``coef[s] * theta[pixel[s]]``.
    """
    ops, pixels, coefs = [], [], []
    for gate, pixel, coef in _frqi_layout(n):
        if pixel < 0:
            ops.append(gate)
            continue
        ops.append(GateOp(gate.kind, gate.targets, gate.controls, slot=len(pixels)))
        pixels.append(pixel)
        coefs.append(coef)
    circuit = Circuit(num_qubits(Encoder.FRQI, n), ops, len(pixels))
    return circuit, np.array(pixels, dtype=np.int64), np.array(coefs)


def frqi_states(patches: Sequence[ImagePatch], *, allow_any_n: bool = False) -> list[QuantumState]:
    """Batched FRQI state preparation; same gates as :func:`encode_frqi`."""
    if not patches:
        return []
    n = patches[0].n
    _check_n(n, allow_any_n)
    if any(p.n != n for p in patches):
        raise ContractError("all patches in a batch must share n")
    circuit, pixel, coef = frqi_template(n)
    thetas = np.stack([pixels_to_frqi_angles(p) for p in patches])
    params = thetas[:, pixel] * coef
    psi = np.zeros((len(patches), 1 << circuit.num_qubits), dtype=np.complex128)
    psi[:, 0] = 1.0
    out = apply_circuit_batch(psi, circuit, params)
    return [QuantumState(circuit.num_qubits, dense=row) for row in out]


def frqi_circuit(patch: ImagePatch, *, allow_any_n: bool = False) -> Circuit:
    _check_n(patch.n, allow_any_n)
    q = num_qubits(Encoder.FRQI, patch.n)
    return Circuit(q, _frqi_ops(patch.n, pixels_to_frqi_angles(patch)))


def encode_frqi(patch: ImagePatch, *, allow_any_n: bool = False) -> tuple[Circuit, QuantumState]:
    circuit = frqi_circuit(patch, allow_any_n=allow_any_n)
    state = apply_circuit(zero_state(circuit.num_qubits), circuit, path="dense")
    return circuit, state


def frqi_closed_form(patch: ImagePatch) -> np.ndarray:
    """Amplitudes of ``2**-n sum_i (cos t_i |0> + sin t_i |1>) |i>`` on the full
    FRQI register, work qubits in ``|0>``."""
    n = patch.n
    thetas = pixels_to_frqi_angles(patch)
    vec = np.zeros(1 << num_qubits(Encoder.FRQI, n), dtype=np.complex128)
    npix = 1 << (2 * n)
    scale = 1.0 / (1 << n)
    for i in range(npix):
        vec[i] = scale * np.cos(thetas[i])
        vec[i | npix] = scale * np.sin(thetas[i])
    return vec


# -- NEQR --------------------------------------------------------------------


def neqr_bitplanes(patch: ImagePatch) -> np.ndarray:
    """``(8, 2**n, 2**n)`` array; plane ``b`` holds bit ``b`` of every pixel."""
    grid = patch.as_array()
    return np.stack([(grid >> b) & 1 for b in range(COLOR_BITS)]).astype(np.uint8)


def neqr_circuit(patch: ImagePatch, minimize: bool = True) -> Circuit:
    _check_n(patch.n, allow_any_n=False)
    npos = 2 * patch.n
    positions = list(range(npos))
    ops = [GateOp(GateKind.H, (q,)) for q in positions]
    for b in range(COLOR_BITS):
        target = npos + b
        onset = [pos for pos, p in enumerate(patch.pixels) if (p >> b) & 1]
        if minimize:
            cover = minimize_cover(BoolFunction(npos, onset))
            ops += implicants_to_gates(cover, target, positions)
        else:
            for pos in onset:
                ctrl = tuple((q, bool((pos >> q) & 1)) for q in positions)
                ops.append(GateOp(GateKind.MCX, (target,), ctrl))
    return Circuit(num_qubits(Encoder.NEQR, patch.n), ops)


def encode_neqr(patch: ImagePatch, minimize: bool = True) -> tuple[Circuit, QuantumState]:
    circuit = neqr_circuit(patch, minimize)
    return circuit, apply_circuit(zero_state(circuit.num_qubits), circuit)


def decode_neqr(state: QuantumState, n: int) -> ImagePatch:
    npos = 2 * n
    npix = 1 << npos
    if state.num_qubits != COLOR_BITS + npos:
        raise DecodeError(f"expected {COLOR_BITS + npos} qubits, got {state.num_qubits}")
    idx, amp = state.nonzero()
    if idx.size != npix:
        raise DecodeError(f"NEQR state needs {npix} nonzero amplitudes, found {idx.size}")
    if not np.allclose(np.abs(amp), 1.0 / (1 << n), atol=1e-9, rtol=0):
        raise DecodeError("NEQR amplitudes are not of equal magnitude 2**-n")
    pixels = [-1] * npix
    for i in idx.tolist():
        pos, gray = i & (npix - 1), i >> npos
        if pixels[pos] != -1:
            raise DecodeError(f"position {pos} appears twice")
        pixels[pos] = gray
    return ImagePatch(n, pixels)


# -- dispatch ----------------------------------------------------------------


def encode(
    encoder: Encoder | str,
    patch: ImagePatch,
    *,
    threshold: int = 0,
    minimize: bool = True,
) -> tuple[Circuit, QuantumState]:
    encoder = Encoder.parse(encoder)
    if encoder is Encoder.THRESHOLD:
        return encode_threshold(patch, ThresholdConfig(threshold))
    if encoder is Encoder.FRQI:
        return encode_frqi(patch)
    return encode_neqr(patch, minimize)


def encode_state(encoder: Encoder | str, patch: ImagePatch, **kwargs) -> QuantumState:
    return encode(encoder, patch, **kwargs)[1]


def encode_states(
    encoder: Encoder | str,
    patches: Sequence[ImagePatch],
    *,
    threshold: int = 0,
    minimize: bool = True,
) -> list[QuantumState]:
    """Encoded states for many patches; FRQI runs batched."""
    encoder = Encoder.parse(encoder)
    if encoder is Encoder.FRQI:
        return frqi_states(patches)
    return [encode_state(encoder, p, threshold=threshold, minimize=minimize) for p in patches]
