"""Binary-integer encodings of nucleotides and their constraint penalties.

Each nucleotide is first mapped to an integer 0..3 through a
:class:`NucleotideAssignment`, then to a block of binary variables:

=======  =======  ===========  ======  =============
integer  one-hot  domain-wall  binary  unary (canon)
=======  =======  ===========  ======  =============
0        1000     000          00      000
1        0100     100          10      100
2        0010     110          01      110
3        0001     111          11      111
=======  =======  ===========  ======  =============

Unary decoding accepts any block with the right number of ones. One-hot and
domain-wall blocks outside the table are infeasible; they are decoded by a
repair rule (lowest set index for one-hot, number of ones for domain-wall)
so decoding is total.
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .surrogate import QuboProblem
from .thermo.structure import NUCLEOTIDES, as_sequence


class EncodingError(ValueError):
    pass


class Scheme(str, enum.Enum):
    ONEHOT = "onehot"
    DOMAINWALL = "domainwall"
    BINARY = "binary"
    UNARY = "unary"

    @property
    def bits(self) -> int:
        return _BITS[self]

    @property
    def constrained(self) -> bool:
        return self in (Scheme.ONEHOT, Scheme.DOMAINWALL)

    @classmethod
    def parse(cls, name: str | Scheme) -> Scheme:
        if isinstance(name, Scheme):
            return name
        key = name.lower().replace("-", "").replace("_", "")
        try:
            return cls(key)
        except ValueError:
            raise EncodingError(f"unknown encoding {name!r}; expected one of {[s.value for s in cls]}") from None


_BITS = {Scheme.ONEHOT: 4, Scheme.DOMAINWALL: 3, Scheme.BINARY: 2, Scheme.UNARY: 3}


@dataclass(frozen=True)
class NucleotideAssignment:
    """Bijection from integers 0..3 to nucleotides, written as a 4-letter string.

    ``NucleotideAssignment("GAUC")`` maps 0->G, 1->A, 2->U, 3->C.
    """

    order: str = "AUGC"

    def __post_init__(self) -> None:
        order = self.order.upper()
        if len(order) != 4 or sorted(order) != sorted(NUCLEOTIDES):
            raise EncodingError(f"assignment {self.order!r} is not a permutation of AUGC")
        object.__setattr__(self, "order", order)

    def to_base(self, value: int) -> str:
        return self.order[value]

    def to_int(self, base: str) -> int:
        return self.order.index(base)

    def __str__(self) -> str:
        return self.order

    @classmethod
    def all(cls) -> list[NucleotideAssignment]:
        return [cls("".join(p)) for p in itertools.permutations("AUGC")]


def encode_integer(scheme: Scheme | str, value: int) -> tuple[int, ...]:
    scheme = Scheme.parse(scheme)
    if not 0 <= value <= 3:
        raise EncodingError(f"integer {value} outside 0..3")
    if scheme is Scheme.ONEHOT:
        return tuple(int(i == value) for i in range(4))
    if scheme is Scheme.BINARY:
        return (value & 1, value >> 1)
    # domain-wall and canonical unary share the leading-ones form
    return tuple(int(i < value) for i in range(3))


def is_feasible(scheme: Scheme | str, block: Sequence[int]) -> bool:
    scheme = Scheme.parse(scheme)
    block = tuple(int(b) for b in block)
    if scheme is Scheme.ONEHOT:
        return sum(block) == 1
    if scheme is Scheme.DOMAINWALL:
        return all(block[i] >= block[i + 1] for i in range(len(block) - 1))
    return True


def decode_integer(scheme: Scheme | str, block: Sequence[int]) -> int:
    scheme = Scheme.parse(scheme)
    block = tuple(int(b) for b in block)
    if len(block) != scheme.bits:
        raise EncodingError(f"{scheme.value} block must have {scheme.bits} bits, got {len(block)}")
    if scheme is Scheme.ONEHOT:
        # feasible: sum(i * x_i); infeasible: lowest set index, all-zero -> 0
        return block.index(1) if 1 in block else 0
    if scheme is Scheme.BINARY:
        return block[0] + 2 * block[1]
    return sum(block)


def sequence_to_bits(seq: str, scheme: Scheme | str, assignment: NucleotideAssignment | str) -> np.ndarray:
    scheme = Scheme.parse(scheme)
    assignment = _as_assignment(assignment)
    seq = as_sequence(seq)
    out = np.empty(len(seq) * scheme.bits, dtype=np.int8)
    for pos, base in enumerate(seq):
        out[pos * scheme.bits : (pos + 1) * scheme.bits] = encode_integer(scheme, assignment.to_int(base))
    return out


def bits_to_sequence(
    bits: Sequence[int], scheme: Scheme | str, assignment: NucleotideAssignment | str
) -> tuple[str, int]:
    """Decode a bit vector; returns ``(sequence, repaired_blocks)``."""
    scheme = Scheme.parse(scheme)
    assignment = _as_assignment(assignment)
    bits = np.asarray(bits, dtype=np.int8)
    width = scheme.bits
    if bits.ndim != 1 or len(bits) == 0 or len(bits) % width:
        raise EncodingError(f"bit vector of length {len(bits)} is not divisible by {width} ({scheme.value})")
    blocks = bits.reshape(-1, width)
    repaired = sum(not is_feasible(scheme, b) for b in blocks)
    seq = "".join(assignment.to_base(decode_integer(scheme, b)) for b in blocks)
    return seq, repaired


def num_variables(scheme: Scheme | str, length: int) -> int:
    return Scheme.parse(scheme).bits * length


def penalty_qubo(scheme: Scheme | str, length: int, mu: float) -> QuboProblem:
    """Constraint penalty as a QUBO over ``bits * length`` variables.

    One-hot: ``mu * sum_l (sum_i x_i - 1)^2``; domain-wall:
    ``mu * sum_l sum_i x_{i+1} (1 - x_i)``. Binary and unary need no penalty
    and get an all-zero problem. Zero on feasible blocks, at least ``mu`` on
    every infeasible one.
    """
    scheme = Scheme.parse(scheme)
    if not mu > 0:
        raise EncodingError(f"penalty coefficient must be positive, got {mu}")
    width = scheme.bits
    n = width * length
    q = np.zeros((n, n))
    offset = 0.0
    for l in range(length):
        base = l * width
        if scheme is Scheme.ONEHOT:
            # (sum x - 1)^2 = -sum x + 2 sum_{i<j} x_i x_j + 1
            for i in range(width):
                q[base + i, base + i] -= mu
                for j in range(i + 1, width):
                    q[base + i, base + j] += 2 * mu
            offset += mu
        elif scheme is Scheme.DOMAINWALL:
            for i in range(width - 1):
                q[base + i + 1, base + i + 1] += mu
                q[base + i, base + i + 1] -= mu
    return QuboProblem(q, offset)


def _as_assignment(assignment: NucleotideAssignment | str) -> NucleotideAssignment:
    if isinstance(assignment, NucleotideAssignment):
        return assignment
    return NucleotideAssignment(assignment)
