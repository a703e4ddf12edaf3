"""Sequences, pseudoknot-free secondary structures and dot-bracket I/O."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

NUCLEOTIDES = "AUGC"
MIN_HAIRPIN = 3  # unpaired nucleotides enclosed by a hairpin closing pair
ALLOWED_PAIRS = frozenset({("A", "U"), ("U", "A"), ("G", "C"), ("C", "G"), ("G", "U"), ("U", "G")})


class StructureError(ValueError):
    """Base class for malformed sequences or structures."""


class UnbalancedBrackets(StructureError):
    pass


class HairpinTooShort(StructureError):
    pass


class IllegalCharacter(StructureError):
    pass


class LengthMismatch(StructureError):
    pass


def as_sequence(seq: str) -> str:
    """Validate an RNA sequence and return it upper-cased (T is read as U)."""
    s = seq.strip().upper().replace("T", "U")
    if not s:
        raise IllegalCharacter("empty sequence")
    bad = sorted(set(s) - set(NUCLEOTIDES))
    if bad:
        raise IllegalCharacter(f"illegal nucleotide(s) {bad!r} in {seq!r}")
    return s


def can_pair(a: str, b: str) -> bool:
    return (a, b) in ALLOWED_PAIRS


@dataclass(frozen=True)
class SecondaryStructure:
    """Pair table over 0-based positions; ``table[i] == -1`` marks unpaired."""

    table: tuple[int, ...]

    def __post_init__(self) -> None:
        n = len(self.table)
        for i, j in enumerate(self.table):
            if j == -1:
                continue
            if not 0 <= j < n or j == i:
                raise StructureError(f"position {i} paired to invalid partner {j}")
            if self.table[j] != i:
                raise StructureError(f"pair table not symmetric at ({i}, {j})")
            if i < j and j - i <= MIN_HAIRPIN:
                raise HairpinTooShort(f"pair ({i}, {j}) encloses fewer than {MIN_HAIRPIN} nucleotides")
        # crossing check with a stack walk
        stack: list[int] = []
        for i, j in enumerate(self.table):
            if j > i:
                stack.append(i)
            elif 0 <= j < i:
                if not stack or stack[-1] != j:
                    raise StructureError(f"pair ({j}, {i}) crosses another pair (pseudoknot)")
                stack.pop()

    @classmethod
    def open_chain(cls, length: int) -> SecondaryStructure:
        return cls(tuple([-1] * length))

    @classmethod
    def from_pairs(cls, length: int, pairs: Iterable[tuple[int, int]]) -> SecondaryStructure:
        table = [-1] * length
        for i, j in pairs:
            if table[i] != -1 or table[j] != -1:
                raise StructureError(f"position paired twice in ({i}, {j})")
            table[i], table[j] = j, i
        return cls(tuple(table))

    def __len__(self) -> int:
        return len(self.table)

    def pairs(self) -> list[tuple[int, int]]:
        """Base pairs ``(i, j)`` with ``i < j``, sorted by ``i``."""
        return [(i, j) for i, j in enumerate(self.table) if j > i]

    def paired_positions(self) -> list[int]:
        return [i for i, j in enumerate(self.table) if j != -1]

    def unpaired_positions(self) -> list[int]:
        return [i for i, j in enumerate(self.table) if j == -1]

    def to_dot_bracket(self) -> str:
        return "".join("." if j == -1 else ("(" if j > i else ")") for i, j in enumerate(self.table))

    def __str__(self) -> str:
        return self.to_dot_bracket()


def parse_dot_bracket(text: str) -> SecondaryStructure:
    """Parse a dot-bracket string.

    Characters and bracket balance are checked before loop sizes, so ``"((.)"``
    is reported as unbalanced rather than as a short hairpin.
    """
    text = text.strip()
    table = [-1] * len(text)
    opened: list[int] = []
    for pos, ch in enumerate(text):
        if ch == "(":
            opened.append(pos)
        elif ch == ")":
            if not opened:
                raise UnbalancedBrackets(f"unmatched ')' at position {pos + 1}")
            i = opened.pop()
            table[i], table[pos] = pos, i
        elif ch != ".":
            raise IllegalCharacter(f"illegal character {ch!r} at position {pos + 1}")
    if opened:
        raise UnbalancedBrackets(f"unmatched '(' at position {opened[-1] + 1}")
    for i, j in enumerate(table):
        if j > i and j - i <= MIN_HAIRPIN:
            raise HairpinTooShort(f"pair ({i + 1}, {j + 1}) spans fewer than {MIN_HAIRPIN + 1} positions")
    return SecondaryStructure(tuple(table))


def structure_distance(s: SecondaryStructure, t: SecondaryStructure) -> int:
    """Number of nucleotides whose pairing status differs between ``s`` and ``t``."""
    if len(s) != len(t):
        raise LengthMismatch(f"structures have lengths {len(s)} and {len(t)}")
    return sum(a != b for a, b in zip(s.table, t.table))


def read_structures(path) -> Iterator[tuple[str, SecondaryStructure]]:
    """Read targets from a text file.

    One structure per line; ``#`` starts a comment. A line may carry an
    optional name before the dot-bracket string (``name  ((....))``).
    Errors are re-raised with the offending line number.
    """
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) == 1:
                name, db = f"line{lineno}", parts[0]
            elif len(parts) == 2:
                name, db = parts
            else:
                raise StructureError(f"{path}:{lineno}: expected '[name] structure', got {line!r}")
            try:
                yield name, parse_dot_bracket(db)
            except StructureError as exc:
                raise type(exc)(f"{path}:{lineno}: {exc}") from None
