"""Nearest-neighbor energy model and loop-decomposition free energy.

The model is deliberately small: stacking of adjacent pairs, a logarithmic
hairpin penalty, linear bulge and internal-loop penalties, and a multiloop
penalty of a closing constant plus a constant per inner branch. The exterior
loop contributes nothing, so the open chain has energy exactly 0.

Parameter file schema (JSON)::

    {
      "temperature": 310.15,            # K
      "gas_constant": 0.0019872,        # kcal/(mol K)
      "stack": {"GC": {"CG": -3.4, ...}, ...},   # stack[outer][inner]
      "hairpin": {"size3": 5.4, "a": 5.6, "b": 1.07},
      "bulge": {"a": 3.8, "b": 0.3},
      "internal": {"a": 0.6, "b": 0.5, "asymmetry": 0.6},
      "multiloop": {"closing": 3.4, "branch": 0.4},
      "max_loop": 30
    }

``stack[outer][inner]`` is the energy of pair ``outer = (n_i, n_j)`` stacked
on ``inner = (n_{i+1}, n_{j-1})``. Hairpin of ``m >= 4`` unpaired bases
costs ``a + b ln(m / 3)``; bulge of ``m`` costs ``a + b (m - 1)``; internal
loop of sizes ``(m1, m2)`` costs ``a + b (m1 + m2) + asymmetry |m1 - m2|``.
Bulges and internal loops with more than ``max_loop`` unpaired bases are
excluded from the ensemble.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .structure import ALLOWED_PAIRS, MIN_HAIRPIN, LengthMismatch, SecondaryStructure, StructureError, as_sequence

PAIR_TYPES = ("AU", "CG", "GC", "GU", "UA", "UG")
BASE_INDEX = {"A": 0, "C": 1, "G": 2, "U": 3}


class DisallowedPair(StructureError):
    pass


class LoopTooLarge(StructureError):
    pass


@dataclass(frozen=True)
class EnergyModel:
    stack: dict[str, dict[str, float]]
    hairpin3: float
    hairpin_a: float
    hairpin_b: float
    bulge_a: float
    bulge_b: float
    internal_a: float
    internal_b: float
    internal_asymmetry: float
    ml_closing: float
    ml_branch: float
    max_loop: int = 30
    temperature: float = 310.15
    gas_constant: float = 0.0019872
    allowed_pairs: frozenset = field(default=ALLOWED_PAIRS)

    def __post_init__(self) -> None:
        if set(self.stack) != set(PAIR_TYPES) or any(set(row) != set(PAIR_TYPES) for row in self.stack.values()):
            raise ValueError(f"stack table must be indexed by exactly {PAIR_TYPES} on both axes")
        if not all(math.isfinite(v) for row in self.stack.values() for v in row.values()):
            raise ValueError("stack energies must be finite")
        if self.hairpin_b < 0 or self.bulge_b < 0 or self.internal_b < 0 or self.internal_asymmetry < 0:
            raise ValueError("loop penalties must be non-decreasing in loop size")
        if self.temperature <= 0 or self.gas_constant <= 0:
            raise ValueError("temperature and gas constant must be positive")
        if self.max_loop < 2:
            raise ValueError("max_loop must be at least 2")

    @property
    def kT(self) -> float:
        return self.gas_constant * self.temperature

    # -- loop terms -----------------------------------------------------

    def hairpin(self, size: int) -> float:
        if size < MIN_HAIRPIN:
            raise StructureError(f"hairpin of size {size} is below the minimum {MIN_HAIRPIN}")
        if size == MIN_HAIRPIN:
            return self.hairpin3
        return self.hairpin_a + self.hairpin_b * math.log(size / 3.0)

    def bulge(self, size: int) -> float:
        return self.bulge_a + self.bulge_b * (size - 1)

    def internal(self, left: int, right: int) -> float:
        return self.internal_a + self.internal_b * (left + right) + self.internal_asymmetry * abs(left - right)

    def stacking(self, outer: str, inner: str) -> float:
        return self.stack[outer][inner]

    def interior(self, outer: str, inner: str, left: int, right: int) -> float:
        """Loop closed by ``outer`` with one inner pair, ``left``/``right`` unpaired bases."""
        if left == 0 and right == 0:
            return self.stacking(outer, inner)
        if left + right > self.max_loop:
            raise LoopTooLarge(f"interior loop of {left + right} nt exceeds max_loop={self.max_loop}")
        if left == 0 or right == 0:
            return self.bulge(left + right)
        return self.internal(left, right)

    def multiloop(self, branches: int) -> float:
        return self.ml_closing + self.ml_branch * branches

    # -- I/O ------------------------------------------------------------

    @classmethod
    def from_dict(cls, doc: dict) -> EnergyModel:
        try:
            return cls(
                stack={o: {i: float(v) for i, v in row.items()} for o, row in doc["stack"].items()},
                hairpin3=float(doc["hairpin"]["size3"]),
                hairpin_a=float(doc["hairpin"]["a"]),
                hairpin_b=float(doc["hairpin"]["b"]),
                bulge_a=float(doc["bulge"]["a"]),
                bulge_b=float(doc["bulge"]["b"]),
                internal_a=float(doc["internal"]["a"]),
                internal_b=float(doc["internal"]["b"]),
                internal_asymmetry=float(doc["internal"].get("asymmetry", 0.0)),
                ml_closing=float(doc["multiloop"]["closing"]),
                ml_branch=float(doc["multiloop"]["branch"]),
                max_loop=int(doc.get("max_loop", 30)),
                temperature=float(doc.get("temperature", 310.15)),
                gas_constant=float(doc.get("gas_constant", 0.0019872)),
            )
        except KeyError as exc:
            raise ValueError(f"energy parameter document is missing key {exc}") from None

    def to_dict(self) -> dict:
        return {
            "temperature": self.temperature,
            "gas_constant": self.gas_constant,
            "stack": {o: dict(row) for o, row in self.stack.items()},
            "hairpin": {"size3": self.hairpin3, "a": self.hairpin_a, "b": self.hairpin_b},
            "bulge": {"a": self.bulge_a, "b": self.bulge_b},
            "internal": {"a": self.internal_a, "b": self.internal_b, "asymmetry": self.internal_asymmetry},
            "multiloop": {"closing": self.ml_closing, "branch": self.ml_branch},
            "max_loop": self.max_loop,
        }

    @classmethod
    def load(cls, path: str | Path) -> EnergyModel:
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    @classmethod
    def default(cls) -> EnergyModel:
        text = resources.files("fmqa_rna.thermo").joinpath("data/default_params.json").read_text()
        return cls.from_dict(json.loads(text))

    def with_temperature(self, kelvin: float) -> EnergyModel:
        doc = self.to_dict()
        doc["temperature"] = kelvin
        return EnergyModel.from_dict(doc)

    # -- array form consumed by the compiled DP kernels -------------------

    def tables(self, length: int) -> tuple:
        """Pack the model as arrays for the folding kernels.

        Returns ``(pair_type, stack, hairpin, bulge, internal_coef, ml_coef,
        max_loop)`` where ``pair_type[a, b]`` maps base indices to a row of
        ``stack`` (or -1), ``hairpin[m]``/``bulge[m]`` are tabulated up to
        ``length``.
        """
        pair_type = np.full((4, 4), -1, dtype=np.int64)
        for k, p in enumerate(PAIR_TYPES):
            pair_type[BASE_INDEX[p[0]], BASE_INDEX[p[1]]] = k
        stack = np.array([[self.stack[o][i] for i in PAIR_TYPES] for o in PAIR_TYPES], dtype=np.float64)
        size = max(length, MIN_HAIRPIN) + 1
        hairpin = np.full(size, np.inf)
        for m in range(MIN_HAIRPIN, size):
            hairpin[m] = self.hairpin(m)
        bulge = np.array([np.inf] + [self.bulge(m) for m in range(1, size)])
        internal_coef = np.array([self.internal_a, self.internal_b, self.internal_asymmetry])
        ml_coef = np.array([self.ml_closing, self.ml_branch])
        return pair_type, stack, hairpin, bulge, internal_coef, ml_coef, self.max_loop


def encode_bases(seq: str) -> np.ndarray:
    return np.array([BASE_INDEX[b] for b in seq], dtype=np.int64)


def free_energy(seq: str, structure: SecondaryStructure, model: EnergyModel | None = None) -> float:
    """Free energy (kcal/mol) of ``structure`` on ``seq`` by loop decomposition."""
    model = model or EnergyModel.default()
    seq = as_sequence(seq)
    if len(seq) != len(structure):
        raise LengthMismatch(f"sequence length {len(seq)} != structure length {len(structure)}")
    table = structure.table
    for i, j in structure.pairs():
        if (seq[i], seq[j]) not in model.allowed_pairs:
            raise DisallowedPair(f"{seq[i]}-{seq[j]} pair at ({i + 1}, {j + 1}) is not allowed")

    total = 0.0
    for i, j in structure.pairs():
        inner = []
        k = i + 1
        while k < j:
            if table[k] > k:
                inner.append((k, table[k]))
                k = table[k] + 1
            else:
                k += 1
        outer = seq[i] + seq[j]
        if not inner:
            total += model.hairpin(j - i - 1)
        elif len(inner) == 1:
            k, l = inner[0]
            total += model.interior(outer, seq[k] + seq[l], k - i - 1, j - l - 1)
        else:
            total += model.multiloop(len(inner))
    return total
