"""Two-level minimization of NEQR bit planes into multi-controlled X gates.

Each color bit of an NEQR patch is a boolean function of the position
register.  Prime implicants come from Quine-McCluskey, the cover from
essential primes plus greedy set cover.  Because every implicant becomes one
conditional bit flip, and flips compose by XOR rather than OR, overlapping
cubes of the chosen cover are made disjoint with the sharp operation before
they are returned.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import ConfigurationError, ContractError
from .simulator import GateKind, GateOp

MAX_VARS = 16


@dataclass(frozen=True)
class BoolFunction:
    num_vars: int
    minterms: frozenset[int]

    def __init__(self, num_vars: int, minterms: Iterable[int]) -> None:
        terms = frozenset(int(m) for m in minterms)
        if not 0 <= num_vars <= MAX_VARS:
            raise ConfigurationError(f"num_vars {num_vars} outside 0..{MAX_VARS}")
        if any(m < 0 or m >= 1 << num_vars for m in terms):
            raise ContractError("minterm out of range")
        object.__setattr__(self, "num_vars", num_vars)
        object.__setattr__(self, "minterms", terms)

    def __call__(self, x: int) -> bool:
        return x in self.minterms


@dataclass(frozen=True, order=True)
class Implicant:
    """Cube ``x & care_mask == value_mask``; sorts by (value_mask, care_mask)."""

    value_mask: int
    care_mask: int

    def __post_init__(self) -> None:
        if self.value_mask & ~self.care_mask:
            raise ContractError("value_mask has bits outside care_mask")

    def covers(self, x: int) -> bool:
        return (x & self.care_mask) == self.value_mask

    def minterms(self, num_vars: int) -> list[int]:
        free = [b for b in range(num_vars) if not (self.care_mask >> b) & 1]
        out = []
        for k in range(1 << len(free)):
            x = self.value_mask
            for j, b in enumerate(free):
                if (k >> j) & 1:
                    x |= 1 << b
            out.append(x)
        return out

    def intersects(self, other: "Implicant") -> bool:
        common = self.care_mask & other.care_mask
        return (self.value_mask ^ other.value_mask) & common == 0


def prime_implicants(f: BoolFunction) -> list[Implicant]:
    full = (1 << f.num_vars) - 1
    current = {Implicant(m, full) for m in f.minterms}
    primes: set[Implicant] = set()
    while current:
        merged: set[Implicant] = set()
        used: set[Implicant] = set()
        by_care: dict[int, list[Implicant]] = {}
        for imp in current:
            by_care.setdefault(imp.care_mask, []).append(imp)
        for care, group in by_care.items():
            values = {imp.value_mask for imp in group}
            for imp in group:
                for b in range(f.num_vars):
                    bit = 1 << b
                    if not care & bit or imp.value_mask & bit:
                        continue
                    if imp.value_mask | bit in values:
                        merged.add(Implicant(imp.value_mask, care & ~bit))
                        used.add(imp)
                        used.add(Implicant(imp.value_mask | bit, care))
        primes |= current - used
        current = merged
    return sorted(primes)


def _select_cover(f: BoolFunction, primes: Sequence[Implicant]) -> list[Implicant]:
    covered_by = {p: frozenset(p.minterms(f.num_vars)) for p in primes}
    chosen: list[Implicant] = []
    remaining = set(f.minterms)
    for m in sorted(f.minterms):
        owners = [p for p in primes if m in covered_by[p]]
        if len(owners) == 1 and owners[0] not in chosen:
            chosen.append(owners[0])
    for p in chosen:
        remaining -= covered_by[p]
    while remaining:
        best = max(
            (p for p in primes if p not in chosen),
            key=lambda p: (len(covered_by[p] & remaining), -p.value_mask, -p.care_mask),
        )
        chosen.append(best)
        remaining -= covered_by[best]
    return chosen


def _sharp(a: Implicant, b: Implicant, num_vars: int) -> list[Implicant]:
    """Disjoint cubes covering ``a`` minus ``b``."""
    if not a.intersects(b):
        return [a]
    pieces = []
    care, value = a.care_mask, a.value_mask
    for v in range(num_vars):
        bit = 1 << v
        if b.care_mask & bit and not a.care_mask & bit:
            pieces.append(Implicant(value | (~b.value_mask & bit), care | bit))
            care |= bit
            value |= b.value_mask & bit
    return pieces


def make_disjoint(cover: Sequence[Implicant], num_vars: int) -> list[Implicant]:
    """Keep earlier cubes, trim later ones so no two cubes share a minterm."""
    out: list[Implicant] = []
    for cube in cover:
        pieces = [cube]
        for kept in out:
            pieces = [q for p in pieces for q in _sharp(p, kept, num_vars)]
        out.extend(pieces)
    return out


def minimize_cover(f: BoolFunction) -> list[Implicant]:
    """Exact, pairwise disjoint cover of ``f.minterms`` with few cubes."""
    if not f.minterms:
        return []
    primes = prime_implicants(f)
    cover = make_disjoint(_select_cover(f, primes), f.num_vars)
    return sorted(cover)


def cover_truth(cover: Sequence[Implicant], x: int) -> bool:
    return any(c.covers(x) for c in cover)


def implicants_to_gates(
    cover: Sequence[Implicant], target: int, position_qubits: Sequence[int]
) -> list[GateOp]:
    """One multi-controlled X per cube; variable ``v`` lives on ``position_qubits[v]``."""
    gates = []
    for cube in cover:
        controls = tuple(
            (q, bool((cube.value_mask >> v) & 1))
            for v, q in enumerate(position_qubits)
            if (cube.care_mask >> v) & 1
        )
        if controls:
            gates.append(GateOp(GateKind.MCX, (target,), controls))
        else:
            gates.append(GateOp(GateKind.X, (target,)))
    return gates
