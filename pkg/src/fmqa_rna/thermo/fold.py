"""Partition function, pair probabilities, ensemble defect and MFE folding.

Both dynamic programs run over the same loop grammar as
:func:`~fmqa_rna.thermo.energy.free_energy`:

* ``B[i, j]``  -- i and j pair with each other;
* ``M1[i, j]`` -- exactly one multiloop branch starting at i, then unpaired
  bases up to j;
* ``M[i, j]``  -- one or more multiloop branches within [i, j];
* exterior prefix/suffix tables for the unpaired-or-branch exterior loop.

The partition function is carried in log space; pair probabilities come from
the matching outside pass. The grammar is unambiguous, so each structure is
counted exactly once.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .energy import EnergyModel, encode_bases
from .structure import MIN_HAIRPIN, LengthMismatch, SecondaryStructure, as_sequence

NEG_INF = -np.inf
_TIE = 1e-9


@dataclass(frozen=True)
class PartitionResult:
    sequence: str
    log_z: float
    pair_prob: np.ndarray
    kT: float

    @property
    def unpaired_prob(self) -> np.ndarray:
        return 1.0 - self.pair_prob.sum(axis=1)

    @property
    def ensemble_energy(self) -> float:
        """Ensemble free energy ``-kT ln Z`` in kcal/mol."""
        return -self.kT * self.log_z


@njit(cache=True)
def _lae(a, b):
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    if a > b:
        return a + math.log1p(math.exp(b - a))
    return b + math.log1p(math.exp(a - b))


@njit(cache=True)
def _interior(pt_out, pt_in, l1, l2, stack, bulge, icoef):
    if l1 == 0 and l2 == 0:
        return stack[pt_out, pt_in]
    if l1 == 0 or l2 == 0:
        return bulge[l1 + l2]
    return icoef[0] + icoef[1] * (l1 + l2) + icoef[2] * abs(l1 - l2)


@njit(cache=True)
def _pair_types(seq, pair_type):
    n = seq.shape[0]
    pt = np.full((n, n), -1, dtype=np.int64)
    for i in range(n):
        for j in range(i + MIN_HAIRPIN + 1, n):
            pt[i, j] = pair_type[seq[i], seq[j]]
    return pt


@njit(cache=True)
def _inside(seq, pair_type, stack, hairpin, bulge, icoef, mlcoef, max_loop, kT):
    n = seq.shape[0]
    pt = _pair_types(seq, pair_type)
    qb = np.full((n, n), NEG_INF)
    qm = np.full((n, n), NEG_INF)
    qm1 = np.full((n, n), NEG_INF)
    ml_close = -mlcoef[0] / kT
    ml_branch = -mlcoef[1] / kT
    for d in range(MIN_HAIRPIN + 1, n):
        for i in range(0, n - d):
            j = i + d
            p = pt[i, j]
            if p >= 0:
                acc = -hairpin[d - 1] / kT
                for k in range(i + 1, min(i + max_loop + 1, j - MIN_HAIRPIN - 1) + 1):
                    l1 = k - i - 1
                    for l in range(j - 1, k + MIN_HAIRPIN, -1):
                        l2 = j - l - 1
                        if l1 + l2 > max_loop:
                            break
                        q = pt[k, l]
                        if q < 0 or qb[k, l] == NEG_INF:
                            continue
                        e = _interior(p, q, l1, l2, stack, bulge, icoef)
                        acc = _lae(acc, -e / kT + qb[k, l])
                for u in range(i + 2, j):
                    if qm[i + 1, u - 1] != NEG_INF and qm1[u, j - 1] != NEG_INF:
                        acc = _lae(acc, ml_close + qm[i + 1, u - 1] + qm1[u, j - 1])
                qb[i, j] = acc
            acc = NEG_INF
            for l in range(i + MIN_HAIRPIN + 1, j + 1):
                if qb[i, l] != NEG_INF:
                    acc = _lae(acc, qb[i, l] + ml_branch)
            qm1[i, j] = acc
            acc = NEG_INF
            for u in range(i, j - MIN_HAIRPIN):
                if qm1[u, j] == NEG_INF:
                    continue
                pre = 0.0
                if u > i:
                    pre = _lae(0.0, qm[i, u - 1])
                acc = _lae(acc, pre + qm1[u, j])
            qm[i, j] = acc
    # exterior: z5[j] is the prefix [0, j), z3[i] the suffix [i, n)
    z5 = np.zeros(n + 1)
    for j in range(n):
        acc = z5[j]
        for k in range(0, j - MIN_HAIRPIN):
            if qb[k, j] != NEG_INF:
                acc = _lae(acc, z5[k] + qb[k, j])
        z5[j + 1] = acc
    z3 = np.zeros(n + 1)
    for i in range(n - 1, -1, -1):
        acc = z3[i + 1]
        for k in range(i + MIN_HAIRPIN + 1, n):
            if qb[i, k] != NEG_INF:
                acc = _lae(acc, qb[i, k] + z3[k + 1])
        z3[i] = acc
    return pt, qb, qm, qm1, z5, z3


@njit(cache=True)
def _outside(pt, qb, qm, qm1, z5, z3, stack, bulge, icoef, mlcoef, max_loop, kT):
    n = qb.shape[0]
    ob = np.full((n, n), NEG_INF)
    om = np.full((n, n), NEG_INF)
    om1 = np.full((n, n), NEG_INF)
    ml_close = -mlcoef[0] / kT
    ml_branch = -mlcoef[1] / kT
    for i in range(n):
        for j in range(i + MIN_HAIRPIN + 1, n):
            if qb[i, j] != NEG_INF:
                ob[i, j] = z5[i] + z3[j + 1]
    for d in range(n - 1, MIN_HAIRPIN, -1):
        for i in range(0, n - d):
            j = i + d
            # M[i, j] -> (1 + M[i, u-1]) M1[u, j]
            o = om[i, j]
            if o != NEG_INF:
                for u in range(i, j - MIN_HAIRPIN):
                    if qm1[u, j] == NEG_INF:
                        continue
                    pre = 0.0
                    if u > i:
                        pre = _lae(0.0, qm[i, u - 1])
                        if qm[i, u - 1] != NEG_INF:
                            om[i, u - 1] = _lae(om[i, u - 1], o + qm1[u, j])
                    om1[u, j] = _lae(om1[u, j], o + pre)
            # M1[i, j] -> B[i, l] + branch
            o = om1[i, j]
            if o != NEG_INF:
                for l in range(i + MIN_HAIRPIN + 1, j + 1):
                    if qb[i, l] != NEG_INF:
                        ob[i, l] = _lae(ob[i, l], o + ml_branch)
            # B[i, j] -> interior B[k, l] | multiloop M[i+1, u-1] M1[u, j-1]
            o = ob[i, j]
            if o == NEG_INF or qb[i, j] == NEG_INF:
                continue
            p = pt[i, j]
            for k in range(i + 1, min(i + max_loop + 1, j - MIN_HAIRPIN - 1) + 1):
                l1 = k - i - 1
                for l in range(j - 1, k + MIN_HAIRPIN, -1):
                    l2 = j - l - 1
                    if l1 + l2 > max_loop:
                        break
                    q = pt[k, l]
                    if q < 0 or qb[k, l] == NEG_INF:
                        continue
                    e = _interior(p, q, l1, l2, stack, bulge, icoef)
                    ob[k, l] = _lae(ob[k, l], o - e / kT)
            for u in range(i + 2, j):
                a = qm[i + 1, u - 1]
                b = qm1[u, j - 1]
                if a != NEG_INF and b != NEG_INF:
                    om[i + 1, u - 1] = _lae(om[i + 1, u - 1], o + ml_close + b)
                    om1[u, j - 1] = _lae(om1[u, j - 1], o + ml_close + a)
    return ob


@njit(cache=True)
def _pair_prob(qb, ob, log_z):
    n = qb.shape[0]
    prob = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            if qb[i, j] != NEG_INF and ob[i, j] != NEG_INF:
                v = math.exp(qb[i, j] + ob[i, j] - log_z)
                prob[i, j] = v
                prob[j, i] = v
    return prob


def partition_function(seq: str, model: EnergyModel | None = None) -> PartitionResult:
    model = model or EnergyModel.default()
    seq = as_sequence(seq)
    kT = model.kT
    pair_type, stack, hairpin, bulge, icoef, mlcoef, max_loop = model.tables(len(seq))
    pt, qb, qm, qm1, z5, z3 = _inside(encode_bases(seq), pair_type, stack, hairpin, bulge, icoef, mlcoef, max_loop, kT)
    log_z = float(z5[-1])
    ob = _outside(pt, qb, qm, qm1, z5, z3, stack, bulge, icoef, mlcoef, max_loop, kT)
    return PartitionResult(seq, log_z, _pair_prob(qb, ob, log_z), kT)


def ensemble_defect(
    seq: str, target: SecondaryStructure, model: EnergyModel | None = None, pf: PartitionResult | None = None
) -> tuple[float, float]:
    """Return ``(phi, ned)``: expected and normalized ensemble defect against ``target``."""
    seq = as_sequence(seq)
    n = len(seq)
    if len(target) != n:
        raise LengthMismatch(f"sequence length {n} != target length {len(target)}")
    pf = pf or partition_function(seq, model)
    prob = pf.pair_prob
    table = np.asarray(target.table)
    idx = np.arange(n)
    paired = table >= 0
    correct = prob[idx[paired], table[paired]].sum() + pf.unpaired_prob[~paired].sum()
    phi = min(max(n - correct, 0.0), float(n))
    return phi, phi / n


# -- minimum free energy ---------------------------------------------------


@njit(cache=True)
def _mfe_fill(seq, pair_type, stack, hairpin, bulge, icoef, mlcoef, max_loop):
    n = seq.shape[0]
    pt = _pair_types(seq, pair_type)
    inf = np.inf
    fb = np.full((n, n), inf)
    fm = np.full((n, n), inf)
    fm1 = np.full((n, n), inf)
    for d in range(MIN_HAIRPIN + 1, n):
        for i in range(0, n - d):
            j = i + d
            p = pt[i, j]
            if p >= 0:
                best = hairpin[d - 1]
                for k in range(i + 1, min(i + max_loop + 1, j - MIN_HAIRPIN - 1) + 1):
                    l1 = k - i - 1
                    for l in range(j - 1, k + MIN_HAIRPIN, -1):
                        l2 = j - l - 1
                        if l1 + l2 > max_loop:
                            break
                        q = pt[k, l]
                        if q < 0 or fb[k, l] == inf:
                            continue
                        e = _interior(p, q, l1, l2, stack, bulge, icoef) + fb[k, l]
                        if e < best:
                            best = e
                for u in range(i + 2, j):
                    e = mlcoef[0] + fm[i + 1, u - 1] + fm1[u, j - 1]
                    if e < best:
                        best = e
                fb[i, j] = best
            best = inf
            for l in range(i + MIN_HAIRPIN + 1, j + 1):
                e = fb[i, l] + mlcoef[1]
                if e < best:
                    best = e
            fm1[i, j] = best
            best = inf
            for u in range(i, j - MIN_HAIRPIN):
                pre = 0.0
                if u > i:
                    pre = min(0.0, fm[i, u - 1])
                e = pre + fm1[u, j]
                if e < best:
                    best = e
            fm[i, j] = best
    f3 = np.zeros(n + 1)
    for i in range(n - 1, -1, -1):
        best = f3[i + 1]
        for k in range(i + MIN_HAIRPIN + 1, n):
            e = fb[i, k] + f3[k + 1]
            if e < best:
                best = e
        f3[i] = best
    return pt, fb, fm, fm1, f3


def _close(a: float, b: float) -> bool:
    return a != np.inf and abs(a - b) <= _TIE


def mfe_structure(seq: str, model: EnergyModel | None = None) -> tuple[SecondaryStructure, float]:
    """Minimum free energy structure and its energy (kcal/mol).

    Co-optimal choices are broken in favour of pairing over leaving a base
    unpaired, then the smaller partner index.
    """
    model = model or EnergyModel.default()
    seq = as_sequence(seq)
    n = len(seq)
    pair_type, stack, hairpin, bulge, icoef, mlcoef, max_loop = model.tables(n)
    pt, fb, fm, fm1, f3 = _mfe_fill(encode_bases(seq), pair_type, stack, hairpin, bulge, icoef, mlcoef, max_loop)
    pairs: list[tuple[int, int]] = []
    todo: list[tuple[str, int, int]] = [("F", 0, n)]

    while todo:
        kind, i, j = todo.pop()
        if kind == "F":  # suffix [i, n)
            if i >= n:
                continue
            for k in range(i + MIN_HAIRPIN + 1, n):
                if _close(fb[i, k] + f3[k + 1], f3[i]):
                    todo += [("B", i, k), ("F", k + 1, n)]
                    break
            else:
                todo.append(("F", i + 1, n))
        elif kind == "B":
            pairs.append((i, j))
            target = fb[i, j]
            p = pt[i, j]
            if _close(hairpin[j - i - 1], target):
                continue
            found = False
            for k in range(i + 1, min(i + max_loop + 1, j - MIN_HAIRPIN - 1) + 1):
                for l in range(k + MIN_HAIRPIN + 1, j):
                    l1, l2 = k - i - 1, j - l - 1
                    if l1 + l2 > max_loop or pt[k, l] < 0:
                        continue
                    if _close(_interior(p, pt[k, l], l1, l2, stack, bulge, icoef) + fb[k, l], target):
                        todo.append(("B", k, l))
                        found = True
                        break
                if found:
                    break
            if found:
                continue
            for u in range(i + 2, j):
                if _close(mlcoef[0] + fm[i + 1, u - 1] + fm1[u, j - 1], target):
                    todo += [("M", i + 1, u - 1), ("M1", u, j - 1)]
                    break
            else:
                raise RuntimeError(f"MFE backtrace failed at pair ({i}, {j})")
        elif kind == "M1":
            for l in range(i + MIN_HAIRPIN + 1, j + 1):
                if _close(fb[i, l] + mlcoef[1], fm1[i, j]):
                    todo.append(("B", i, l))
                    break
        elif kind == "M":
            for u in range(i, j - MIN_HAIRPIN):
                pre = 0.0 if u == i else min(0.0, fm[i, u - 1])
                if _close(pre + fm1[u, j], fm[i, j]):
                    todo.append(("M1", u, j))
                    if u > i and fm[i, u - 1] <= _TIE:
                        todo.append(("M", i, u - 1))
                    break

    structure = SecondaryStructure.from_pairs(n, pairs)
    return structure, float(f3[0])
