"""Exhaustive structure enumeration, used as the oracle for the DP routines."""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .energy import EnergyModel, LoopTooLarge, free_energy
from .structure import MIN_HAIRPIN, SecondaryStructure, StructureError, as_sequence, can_pair, structure_distance


class SequenceTooLong(StructureError):
    pass


def enumerate_structures(seq: str, max_length: int = 14, max_loop: int | None = None) -> list[SecondaryStructure]:
    """Every pseudoknot-free structure of ``seq`` over allowed pairs, open chain included.

    ``max_loop`` drops structures with a bulge/internal loop larger than the
    model's limit, so the list matches the DP ensemble exactly.
    """
    seq = as_sequence(seq)
    n = len(seq)
    if n > max_length:
        raise SequenceTooLong(f"length {n} exceeds enumeration limit {max_length}")

    @lru_cache(maxsize=None)
    def span(i: int, j: int) -> tuple[tuple[tuple[int, int], ...], ...]:
        # all pair sets inside [i, j]
        if i > j:
            return ((),)
        out = list(span(i + 1, j))
        for k in range(i + MIN_HAIRPIN + 1, j + 1):
            if can_pair(seq[i], seq[k]):
                for inner in span(i + 1, k - 1):
                    for rest in span(k + 1, j):
                        out.append(((i, k),) + inner + rest)
        return tuple(out)

    structures = [SecondaryStructure.from_pairs(n, p) for p in span(0, n - 1)]
    if max_loop is not None:
        structures = [s for s in structures if _loops_within(s, max_loop)]
    return structures


def _loops_within(s: SecondaryStructure, max_loop: int) -> bool:
    table = s.table
    for i, j in s.pairs():
        inner = [k for k in range(i + 1, j) if table[k] > k and all(not (a < k < table[a]) for a in range(i + 1, k))]
        if len(inner) == 1:
            k, l = inner[0], table[inner[0]]
            if 0 < (k - i - 1) + (j - l - 1) and (k - i - 1) + (j - l - 1) > max_loop:
                return False
    return True


def brute_force(seq: str, target: SecondaryStructure | None = None, model: EnergyModel | None = None) -> dict:
    """Boltzmann statistics by explicit summation over all structures.

    Returns a dict with ``log_z``, ``pair_prob``, ``mfe`` (lowest energy),
    ``probs`` (per-structure probabilities) and, if ``target`` is given,
    ``phi`` computed as the probability-weighted structure distance.
    """
    model = model or EnergyModel.default()
    seq = as_sequence(seq)
    n = len(seq)
    structures = enumerate_structures(seq, max_length=max(14, n), max_loop=model.max_loop)
    energies = []
    for s in structures:
        try:
            energies.append(free_energy(seq, s, model))
        except LoopTooLarge:  # pragma: no cover - filtered above
            energies.append(math.inf)
    energies = np.array(energies)
    expo = -energies / model.kT
    shift = expo.max()
    weights = np.exp(expo - shift)
    z = weights.sum()
    probs = weights / z
    pair_prob = np.zeros((n, n))
    for p, s in zip(probs, structures):
        for i, j in s.pairs():
            pair_prob[i, j] += p
            pair_prob[j, i] += p
    out = {
        "structures": structures,
        "energies": energies,
        "probs": probs,
        "log_z": float(shift + math.log(z)),
        "pair_prob": pair_prob,
        "mfe": float(energies.min()),
    }
    if target is not None:
        out["phi"] = float(sum(p * structure_distance(s, target) for p, s in zip(probs, structures)))
    return out
