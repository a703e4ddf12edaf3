"""Simulated annealing for QUBO problems, plus an exhaustive reference solver."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .surrogate import QuboProblem


class ProblemTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class AnnealSchedule:
    """Geometric inverse-temperature ramp; ``sweeps`` single-flip passes per restart."""

    sweeps: int = 2000
    restarts: int = 8
    beta_start: float = 0.1
    beta_end: float = 50.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.sweeps < 1 or self.restarts < 1:
            raise ValueError("sweeps and restarts must be >= 1")
        if not 0 < self.beta_start <= self.beta_end:
            raise ValueError("need 0 < beta_start <= beta_end")

    def betas(self) -> np.ndarray:
        if self.sweeps == 1:
            return np.array([self.beta_end])
        return np.geomspace(self.beta_start, self.beta_end, self.sweeps)


@dataclass
class SolveResult:
    x: np.ndarray
    value: float
    restart_values: list[float] = field(default_factory=list)
    accepted_flips: list[int] = field(default_factory=list)


@njit(cache=True)
def _flip(i, x, field, coupling):
    """Flip ``x[i]`` and update local fields; return the energy change."""
    delta = field[i] if x[i] == 0 else -field[i]
    sign = 1.0 if x[i] == 0 else -1.0
    x[i] = 1 - x[i]
    for j in range(x.shape[0]):
        field[j] += sign * coupling[i, j]
    return delta


@njit(cache=True)
def _local_fields(linear, coupling, x):
    field = linear.copy()
    energy = 0.0
    for i in range(x.shape[0]):
        if x[i]:
            energy += linear[i]
            for j in range(x.shape[0]):
                field[j] += coupling[i, j]
            for j in range(i + 1, x.shape[0]):
                if x[j]:
                    energy += coupling[i, j]
    return field, energy


@njit(cache=True)
def replay_flips(linear, coupling, x, flips):
    """Energies (offset excluded) after each flip in ``flips``, tracked incrementally."""
    x = x.copy()
    field, energy = _local_fields(linear, coupling, x)
    out = np.empty(flips.shape[0])
    for t in range(flips.shape[0]):
        energy += _flip(flips[t], x, field, coupling)
        out[t] = energy
    return out


@njit(cache=True)
def _anneal_chain(linear, coupling, betas, seed):
    n = linear.shape[0]
    np.random.seed(seed)
    x = np.zeros(n, dtype=np.int8)
    for i in range(n):
        x[i] = 1 if np.random.random() < 0.5 else 0
    # field[i] = linear[i] + sum_j coupling[i, j] x[j]; flipping 0->1 changes H by field[i]
    field, energy = _local_fields(linear, coupling, x)
    best = energy
    best_x = x.copy()
    accepted = 0
    for beta in betas:
        for i in range(n):
            delta = field[i] if x[i] == 0 else -field[i]
            if delta <= 0.0 or np.random.random() < math.exp(-beta * delta):
                energy += _flip(i, x, field, coupling)
                accepted += 1
                if energy < best - 1e-12:
                    best = energy
                    best_x[:] = x
    return best_x, best, accepted


def sa_solve(q: QuboProblem, schedule: AnnealSchedule | None = None) -> SolveResult:
    """Best configuration over ``schedule.restarts`` independent Metropolis chains.

    Each chain starts from a random state and sweeps the variables in index
    order, flipping with probability ``min(1, exp(-beta * dH))``. ``dH`` comes
    from cached local fields updated after each accepted flip. Ties across
    restarts go to the earliest restart.
    """
    schedule = schedule or AnnealSchedule()
    if q.n < 1:
        raise ValueError("QUBO has no variables")
    linear, coupling = q.symmetric()
    betas = schedule.betas()
    seeds = np.random.SeedSequence(schedule.seed).generate_state(schedule.restarts)
    best_x, best_val = None, math.inf
    values, accepted = [], []
    for seed in seeds:
        x, e, acc = _anneal_chain(linear, coupling, betas, int(seed) & 0x7FFFFFFF)
        value = float(q.evaluate(x))
        values.append(value)
        accepted.append(int(acc))
        if value < best_val:
            best_x, best_val = x, value
    return SolveResult(best_x.astype(np.int8), best_val, values, accepted)


def exhaustive_solve(q: QuboProblem, max_n: int = 20) -> SolveResult:
    """True minimum over all ``2**N`` states; ties go to the lexicographically smallest."""
    n = q.n
    if n > max_n:
        raise ProblemTooLarge(f"{n} variables exceeds the exhaustive limit {max_n}")
    best_x, best_val = None, math.inf
    chunk = 1 << min(n, 14)
    for start in range(0, 1 << n, chunk):
        codes = np.arange(start, start + chunk, dtype=np.int64)
        # bit 0 of the state is the most significant bit of the code -> lexicographic order
        states = ((codes[:, None] >> np.arange(n - 1, -1, -1)) & 1).astype(np.float64)
        values = q.evaluate(states)
        k = int(np.argmin(values))
        if values[k] < best_val:
            best_x, best_val = states[k].astype(np.int8), float(values[k])
    return SolveResult(best_x, best_val, [best_val], [])


def all_states(n: int) -> np.ndarray:
    """Every binary vector of length ``n`` in lexicographic order."""
    codes = np.arange(1 << n, dtype=np.int64)
    return ((codes[:, None] >> np.arange(n - 1, -1, -1)) & 1).astype(np.int8)
