"""Exact state-vector simulation for the small circuits used by the encoders
and the variational layer.

Bit convention (global): qubit ``k`` is bit ``k`` of the basis index, so the
state ``|q_{Q-1} ... q_1 q_0>`` has index ``sum(q_k << k)``.

States come in two layouts.  Dense states hold all ``2**Q`` amplitudes; sparse
states hold sorted ``(index, amplitude)`` arrays with nonzero amplitudes only.
Basis-state encodings (Threshold, NEQR) stay sparse, FRQI goes dense.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, ContractError

MAX_QUBITS = 24
SPARSE_FRACTION = 8  # sparse when nnz <= dim / SPARSE_FRACTION
DROP_TOL = 1e-14  # sparse entries below this magnitude are discarded

_INV_SQRT2 = 1.0 / np.sqrt(2.0)


class GateKind(str, enum.Enum):
    H = "H"
    X = "X"
    RX = "RX"
    RY = "RY"
    RZ = "RZ"
    CNOT = "CNOT"
    CRY = "CRY"
    MCX = "MCX"


ROTATIONS = frozenset({GateKind.RX, GateKind.RY, GateKind.RZ, GateKind.CRY})
_FLIPS = frozenset({GateKind.X, GateKind.CNOT, GateKind.MCX})


@dataclass(frozen=True)
class GateOp:
    """One gate.

    ``controls`` holds ``(qubit, polarity)`` pairs; polarity ``True`` fires on
    ``|1>``, ``False`` on ``|0>``.  Rotations carry either a fixed ``angle`` or
    a ``slot`` index into the parameter vector passed to :func:`apply_circuit`.
    """

    kind: GateKind
    targets: tuple[int, ...]
    controls: tuple[tuple[int, bool], ...] = ()
    angle: float | None = None
    slot: int | None = None

    def __post_init__(self) -> None:
        kind = GateKind(self.kind)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        object.__setattr__(
            self, "controls", tuple((int(q), bool(p)) for q, p in self.controls)
        )
        if not self.targets:
            raise ContractError(f"{kind.value} gate needs a target")
        if kind is not GateKind.MCX and len(self.targets) != 1:
            raise ContractError(f"{kind.value} gate takes exactly one target")
        qubits = list(self.targets) + [q for q, _ in self.controls]
        if len(set(qubits)) != len(qubits):
            raise ContractError("targets and controls must be disjoint")
        if kind in (GateKind.H, GateKind.X, GateKind.RX, GateKind.RY, GateKind.RZ):
            if self.controls:
                raise ContractError(f"{kind.value} gate takes no controls")
        if kind is GateKind.CNOT and len(self.controls) != 1:
            raise ContractError("CNOT takes exactly one control")
        if kind is GateKind.CRY and not self.controls:
            raise ContractError("CRY needs at least one control")
        if kind in ROTATIONS:
            if (self.angle is None) == (self.slot is None):
                raise ContractError("rotation needs exactly one of angle / slot")
        elif self.angle is not None or self.slot is not None:
            raise ContractError(f"{kind.value} gate carries no angle")

    @property
    def qubits(self) -> tuple[int, ...]:
        return self.targets + tuple(q for q, _ in self.controls)


@dataclass(frozen=True)
class Circuit:
    num_qubits: int
    ops: tuple[GateOp, ...] = ()
    num_trainable_params: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "ops", tuple(self.ops))
        seen: set[int] = set()
        for op in self.ops:
            if any(q < 0 or q >= self.num_qubits for q in op.qubits):
                raise ContractError(f"{op} acts outside {self.num_qubits} qubits")
            if op.slot is not None:
                if not 0 <= op.slot < self.num_trainable_params:
                    raise ContractError(f"slot {op.slot} out of range")
                if op.slot in seen:
                    raise ContractError(f"slot {op.slot} used by more than one gate")
                seen.add(op.slot)

    def __len__(self) -> int:
        return len(self.ops)

    def support(self) -> tuple[int, ...]:
        """Sorted qubits touched by at least one gate."""
        return tuple(sorted({q for op in self.ops for q in op.qubits}))


def _check_qubits(num_qubits: int) -> None:
    if not 1 <= num_qubits <= MAX_QUBITS:
        raise ConfigurationError(
            f"qubit count {num_qubits} outside supported range 1..{MAX_QUBITS}"
        )


class QuantumState:
    """Immutable state over ``num_qubits`` qubits in dense or sparse layout."""

    __slots__ = ("num_qubits", "_dense", "_indices", "_amps")

    def __init__(
        self,
        num_qubits: int,
        *,
        dense: np.ndarray | None = None,
        indices: np.ndarray | None = None,
        amplitudes: np.ndarray | None = None,
    ) -> None:
        _check_qubits(num_qubits)
        self.num_qubits = num_qubits
        dim = 1 << num_qubits
        if dense is not None:
            if indices is not None or amplitudes is not None:
                raise ContractError("pass either dense or sparse data, not both")
            vec = np.array(dense, dtype=np.complex128).reshape(-1)
            if vec.shape[0] != dim:
                raise ContractError(f"dense state needs {dim} amplitudes")
            vec.setflags(write=False)
            self._dense, self._indices, self._amps = vec, None, None
        else:
            idx = np.asarray(indices, dtype=np.int64).reshape(-1)
            amp = np.asarray(amplitudes, dtype=np.complex128).reshape(-1)
            if idx.shape != amp.shape:
                raise ContractError("indices and amplitudes differ in length")
            if idx.size and (idx.min() < 0 or idx.max() >= dim):
                raise ContractError("basis index out of range")
            order = np.argsort(idx, kind="stable")
            idx, amp = idx[order], amp[order]
            if idx.size > 1 and np.any(idx[1:] == idx[:-1]):
                raise ContractError("sparse state lists a basis index twice")
            keep = amp != 0
            idx, amp = idx[keep].copy(), amp[keep].copy()
            idx.setflags(write=False)
            amp.setflags(write=False)
            self._dense, self._indices, self._amps = None, idx, amp

    @classmethod
    def basis(cls, num_qubits: int, index: int) -> "QuantumState":
        return cls(num_qubits, indices=[index], amplitudes=[1.0])

    @property
    def dim(self) -> int:
        return 1 << self.num_qubits

    @property
    def is_sparse(self) -> bool:
        return self._dense is None

    @property
    def amplitudes(self) -> np.ndarray:
        """Dense amplitude vector (read-only view or fresh array)."""
        if self._dense is not None:
            return self._dense
        vec = np.zeros(self.dim, dtype=np.complex128)
        vec[self._indices] = self._amps
        return vec

    def nonzero(self) -> tuple[np.ndarray, np.ndarray]:
        """``(indices, amplitudes)`` of the nonzero entries, indices ascending."""
        if self._dense is not None:
            idx = np.flatnonzero(self._dense)
            return idx.astype(np.int64), self._dense[idx]
        return self._indices, self._amps

    @property
    def nnz(self) -> int:
        return int(self.nonzero()[0].size)

    def to_dense(self) -> "QuantumState":
        if self._dense is not None:
            return self
        return QuantumState(self.num_qubits, dense=self.amplitudes)

    def to_sparse(self) -> "QuantumState":
        if self._dense is None:
            return self
        idx, amp = self.nonzero()
        return QuantumState(self.num_qubits, indices=idx, amplitudes=amp)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.nonzero()[1]) ** 2)))

    def __repr__(self) -> str:
        layout = "sparse" if self.is_sparse else "dense"
        return f"QuantumState(num_qubits={self.num_qubits}, {layout}, nnz={self.nnz})"


def zero_state(num_qubits: int) -> QuantumState:
    _check_qubits(num_qubits)
    return QuantumState.basis(num_qubits, 0)


def _auto_layout(num_qubits: int, idx: np.ndarray, amp: np.ndarray) -> QuantumState:
    dim = 1 << num_qubits
    if idx.size * SPARSE_FRACTION <= dim:
        return QuantumState(num_qubits, indices=idx, amplitudes=amp)
    vec = np.zeros(dim, dtype=np.complex128)
    vec[idx] = amp
    return QuantumState(num_qubits, dense=vec)


# ---------------------------------------------------------------------------
# gate kernels


def _resolve_angle(op: GateOp, params) -> float | np.ndarray:
    if op.slot is None:
        return op.angle
    return params[..., op.slot]


def _matrix(kind: GateKind, angle) -> tuple:
    """Entries (m00, m01, m10, m11); scalar or per-row arrays when ``angle`` is."""
    if kind is GateKind.H:
        return _INV_SQRT2, _INV_SQRT2, _INV_SQRT2, -_INV_SQRT2
    half = np.asarray(angle, dtype=np.float64) / 2.0
    c, s = np.cos(half), np.sin(half)
    if kind is GateKind.RX:
        return c, -1j * s, -1j * s, c
    if kind in (GateKind.RY, GateKind.CRY):
        return c, -s, s, c
    if kind is GateKind.RZ:
        return np.exp(-1j * half), 0.0, 0.0, np.exp(1j * half)
    raise ContractError(f"no 2x2 matrix for {kind}")


def _halves(psi: np.ndarray, target: int, controls, num_qubits: int):
    """Strided views of the target-0 and target-1 amplitudes with controls met.

    ``psi`` is viewed as ``(batch, 2, ..., 2)``; qubit ``q`` is axis
    ``num_qubits - q`` because the last axis is the least significant bit.
    """
    view = psi.reshape((psi.shape[0],) + (2,) * num_qubits)
    sel = [slice(None)] * (num_qubits + 1)
    for q, pol in controls:
        sel[num_qubits - q] = int(pol)
    sel[num_qubits - target] = 0
    lo = view[tuple(sel)]
    sel[num_qubits - target] = 1
    return lo, view[tuple(sel)]


def _apply_dense_op(psi: np.ndarray, op: GateOp, angle, num_qubits: int) -> None:
    """Apply ``op`` in place to a contiguous ``(batch, 2**num_qubits)`` array."""
    if not psi.flags.c_contiguous:
        raise ContractError("dense kernel needs a C-contiguous buffer")
    if op.kind in _FLIPS:
        for t in op.targets:
            lo, hi = _halves(psi, t, op.controls, num_qubits)
            tmp = lo.copy()
            lo[...] = hi
            hi[...] = tmp
        return
    lo, hi = _halves(psi, op.targets[0], op.controls, num_qubits)
    shape = (psi.shape[0],) + (1,) * (lo.ndim - 1)
    m00, m01, m10, m11 = (
        m.reshape(shape) if isinstance(m, np.ndarray) and m.ndim else m
        for m in _matrix(op.kind, angle)
    )
    if op.kind is GateKind.RZ:
        lo *= m00
        hi *= m11
        return
    a = lo.copy()
    lo *= m00
    lo += m01 * hi
    hi *= m11
    hi += m10 * a


def _control_match(idx: np.ndarray, controls) -> np.ndarray:
    match = np.ones(idx.shape, dtype=bool)
    for q, pol in controls:
        match &= ((idx >> q) & 1) == int(pol)
    return match


def _apply_sparse_op(
    idx: np.ndarray, amp: np.ndarray, op: GateOp, angle
) -> tuple[np.ndarray, np.ndarray]:
    match = _control_match(idx, op.controls)
    if op.kind in _FLIPS:
        flip = 0
        for t in op.targets:
            flip |= 1 << t
        new_idx = np.where(match, idx ^ flip, idx)
        order = np.argsort(new_idx, kind="stable")
        return new_idx[order], amp[order]
    m00, m01, m10, m11 = _matrix(op.kind, angle)
    t = op.targets[0]
    bit = (idx[match] >> t) & 1
    base = idx[match] & ~(1 << t)
    a = amp[match]
    col0 = np.where(bit == 0, m00, m01)
    col1 = np.where(bit == 0, m10, m11)
    all_idx = np.concatenate([idx[~match], base, base | (1 << t)])
    all_amp = np.concatenate([amp[~match], col0 * a, col1 * a])
    uniq, inv = np.unique(all_idx, return_inverse=True)
    summed = np.zeros(uniq.shape, dtype=np.complex128)
    np.add.at(summed, inv, all_amp)
    keep = np.abs(summed) > DROP_TOL
    return uniq[keep], summed[keep]


def _check_params(circuit: Circuit, params) -> np.ndarray:
    p = np.asarray(params if params is not None else (), dtype=np.float64)
    if p.shape[-1:] != (circuit.num_trainable_params,) and not (
        circuit.num_trainable_params == 0 and p.size == 0
    ):
        raise ContractError(
            f"circuit expects {circuit.num_trainable_params} parameters, got {p.shape}"
        )
    return p


def apply_circuit(
    state: QuantumState,
    circuit: Circuit,
    params: Sequence[float] | np.ndarray = (),
    *,
    path: str | None = None,
) -> QuantumState:
    """Return ``circuit|state>``; the input state is not modified.

    ``path`` forces ``"dense"`` or ``"sparse"`` execution.  By default sparse
    inputs run sparse until they fill more than 1/8 of the space.
    """
    if state.num_qubits != circuit.num_qubits:
        raise ContractError(
            f"state has {state.num_qubits} qubits, circuit {circuit.num_qubits}"
        )
    p = _check_params(circuit, params)
    if path not in (None, "dense", "sparse"):
        raise ConfigurationError(f"unknown path {path!r}")
    nq = state.num_qubits
    dim = 1 << nq
    sparse = path == "sparse" or (path is None and state.is_sparse)
    if sparse:
        idx, amp = state.nonzero()
        idx, amp = idx.copy(), amp.copy()
        psi = None
        for op in circuit.ops:
            if psi is None:
                idx, amp = _apply_sparse_op(idx, amp, op, _resolve_angle(op, p))
                if path is None and idx.size * SPARSE_FRACTION > dim:
                    psi = np.zeros((1, dim), dtype=np.complex128)
                    psi[0, idx] = amp
            else:
                _apply_dense_op(psi, op, _resolve_angle(op, p), nq)
        if psi is None:
            return _auto_layout(nq, idx, amp)
        vec = psi[0]
    else:
        psi = state.amplitudes.reshape(1, dim).copy()
        for op in circuit.ops:
            _apply_dense_op(psi, op, _resolve_angle(op, p), nq)
        vec = psi[0]
    nz = np.flatnonzero(np.abs(vec) > DROP_TOL)
    if nz.size * SPARSE_FRACTION <= dim:
        return QuantumState(nq, indices=nz, amplitudes=vec[nz])
    return QuantumState(nq, dense=vec)


def apply_circuit_batch(
    psi: np.ndarray,
    circuit: Circuit,
    params: Sequence[float] | np.ndarray = (),
) -> np.ndarray:
    """Apply ``circuit`` to each row of a ``(batch, 2**Q)`` array.

    ``params`` may be one vector shared by all rows or a ``(batch, P)`` array
    of per-row parameters.  Rows need not be normalized.
    """
    p = _check_params(circuit, params)
    out = np.array(psi, dtype=np.complex128, copy=True)
    if out.ndim != 2 or out.shape[1] != 1 << circuit.num_qubits:
        raise ContractError(f"batch shape {out.shape} does not fit the circuit")
    for op in circuit.ops:
        _apply_dense_op(out, op, _resolve_angle(op, p), circuit.num_qubits)
    return out


def z_signs(num_qubits: int) -> np.ndarray:
    """``(2**Q, Q)`` array of +1/-1 eigenvalues of Z_q on each basis state."""
    idx = np.arange(1 << num_qubits, dtype=np.int64)
    bits = (idx[:, None] >> np.arange(num_qubits)) & 1
    return 1.0 - 2.0 * bits


def pauli_z_expectations(state: QuantumState) -> np.ndarray:
    """Per-qubit <Z>; entry q is sum |a_i|^2 * (+1 if bit q of i is 0 else -1)."""
    idx, amp = state.nonzero()
    probs = np.abs(amp) ** 2
    bits = (idx[:, None] >> np.arange(state.num_qubits)) & 1
    return probs @ (1.0 - 2.0 * bits)


def inverse_circuit(circuit: Circuit, params: Sequence[float] = ()) -> Circuit:
    """Exact inverse with all angles bound (slots resolved from ``params``)."""
    p = _check_params(circuit, params)
    ops = []
    for op in reversed(circuit.ops):
        if op.kind in ROTATIONS:
            angle = float(_resolve_angle(op, p))
            ops.append(GateOp(op.kind, op.targets, op.controls, angle=-angle))
        else:
            ops.append(op)
    return Circuit(circuit.num_qubits, tuple(ops), 0)


def bind_parameters(circuit: Circuit, params: Sequence[float]) -> Circuit:
    """Replace every slot by its fixed value."""
    p = _check_params(circuit, params)
    ops = [
        GateOp(op.kind, op.targets, op.controls, angle=float(p[op.slot]))
        if op.slot is not None
        else op
        for op in circuit.ops
    ]
    return Circuit(circuit.num_qubits, tuple(ops), 0)


def remap_circuit(circuit: Circuit, qubits: Iterable[int]) -> Circuit:
    """Restrict ``circuit`` to the listed qubits, renumbered 0..k-1 in order."""
    mapping = {q: k for k, q in enumerate(qubits)}
    try:
        ops = tuple(
            GateOp(
                op.kind,
                tuple(mapping[t] for t in op.targets),
                tuple((mapping[q], pol) for q, pol in op.controls),
                angle=op.angle,
                slot=op.slot,
            )
            for op in circuit.ops
        )
    except KeyError as exc:
        raise ContractError(f"qubit {exc.args[0]} not in the kept set") from None
    return Circuit(max(len(mapping), 1), ops, circuit.num_trainable_params)
