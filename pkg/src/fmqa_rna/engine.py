"""The FMQA loop and the random-search / genetic-algorithm baselines.

All three methods share one initial dataset per seed and spend exactly
``initial_points + iterations`` objective evaluations, so their best-so-far
curves are directly comparable.
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .annealer import AnnealSchedule, sa_solve
from .encodings import NucleotideAssignment, Scheme, bits_to_sequence, penalty_qubo, sequence_to_bits
from .surrogate import AllZeroCoefficients, Dataset, add_penalty, fm_to_qubo, fm_train, normalize_qubo
from .thermo import EnergyModel, SecondaryStructure, ensemble_defect, mfe_structure, parse_dot_bracket
from .thermo.structure import NUCLEOTIDES

log = logging.getLogger(__name__)

# independent random streams derived from the run seed
_INIT, _TRAIN, _ANNEAL, _DUPLICATE, _RANDOM, _GA = range(6)


def _stream(seed: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=key)


def _int_seed(seed: int, *key: int) -> int:
    return int(_stream(seed, *key).generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1000
    lr: float = 0.01
    weight_decay: float = 1e-2


@dataclass(frozen=True)
class GAParams:
    population: int | None = None  # defaults to initial_points
    crossover_prob: float = 0.9
    mutation_rate: float = 5.0  # per-gene probability is mutation_rate / L
    tournament: int = 2


@dataclass
class RunConfig:
    target: str
    scheme: Scheme = Scheme.ONEHOT
    assignment: str = "GAUC"
    k: int = 12
    mu: float = 2.0
    initial_points: int = 10
    iterations: int = 1000
    seed: int = 0
    target_name: str = ""
    anneal: AnnealSchedule = field(default_factory=AnnealSchedule)
    train: TrainConfig = field(default_factory=TrainConfig)
    energy_params: str | None = None

    def __post_init__(self) -> None:
        self.scheme = Scheme.parse(self.scheme)
        self.assignment = NucleotideAssignment(self.assignment).order
        parse_dot_bracket(self.target)
        if self.initial_points < 1 or self.iterations < 0:
            raise ValueError("need initial_points >= 1 and iterations >= 0")
        if self.k < 1:
            raise ValueError("K must be >= 1")

    @property
    def structure(self) -> SecondaryStructure:
        return parse_dot_bracket(self.target)

    @property
    def length(self) -> int:
        return len(self.target)

    def energy_model(self) -> EnergyModel:
        return EnergyModel.load(self.energy_params) if self.energy_params else EnergyModel.default()

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["scheme"] = self.scheme.value
        doc["anneal"].pop("seed")
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> RunConfig:
        doc = dict(doc)
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown run config keys: {sorted(unknown)}")
        if "anneal" in doc:
            doc["anneal"] = AnnealSchedule(**doc["anneal"])
        if "train" in doc:
            doc["train"] = TrainConfig(**doc["train"])
        return cls(**doc)


class NedObjective:
    """Normalized ensemble defect against a fixed target, memoized by sequence."""

    def __init__(self, target: SecondaryStructure, model: EnergyModel | None = None):
        self.target = target
        self.model = model or EnergyModel.default()
        self.cache: dict[str, float] = {}
        self.calls = 0

    def __call__(self, seq: str) -> float:
        self.calls += 1
        if seq not in self.cache:
            self.cache[seq] = float(ensemble_defect(seq, self.target, self.model)[1])
        return self.cache[seq]


@dataclass
class Trial:
    index: int
    iteration: int
    bits: str
    sequence: str
    ned: float
    repaired: bool = False
    duplicate: bool = False

    @property
    def x(self) -> np.ndarray:
        return np.frombuffer(self.bits.encode(), dtype=np.uint8) - ord("0")


def _bits_str(x) -> str:
    return "".join("1" if b else "0" for b in np.asarray(x).ravel())


@dataclass
class RunRecord:
    method: str
    config: RunConfig
    trials: list[Trial]
    best_index: int
    success: bool
    mfe: float
    mfe_structure: str
    repairs: int = 0
    duplicates: int = 0
    wall_seconds: float = field(default=0.0, compare=False)

    @property
    def best(self) -> Trial:
        return self.trials[self.best_index]

    @property
    def evaluations(self) -> int:
        return len(self.trials)

    def best_so_far(self) -> list[float]:
        return np.minimum.accumulate([t.ned for t in self.trials]).tolist()

    def to_dict(self) -> dict:
        """JSON document; wall-clock time is left out so records are reproducible byte for byte."""
        return {
            "method": self.method,
            "config": self.config.to_dict(),
            "trials": [asdict(t) for t in self.trials],
            "best": {"index": self.best_index, "sequence": self.best.sequence, "ned": self.best.ned},
            "success": self.success,
            "mfe": self.mfe,
            "mfe_structure": self.mfe_structure,
            "counters": {"evaluations": self.evaluations, "repairs": self.repairs, "duplicates": self.duplicates},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> RunRecord:
        trials = [Trial(**t) for t in doc["trials"]]
        counters = doc.get("counters", {})
        if counters.get("evaluations", len(trials)) != len(trials):
            raise ValueError("record evaluation counter disagrees with its trial list")
        return cls(
            method=doc["method"],
            config=RunConfig.from_dict(doc["config"]),
            trials=trials,
            best_index=doc["best"]["index"],
            success=doc["success"],
            mfe=doc["mfe"],
            mfe_structure=doc["mfe_structure"],
            repairs=counters.get("repairs", 0),
            duplicates=counters.get("duplicates", 0),
        )

    @classmethod
    def from_json(cls, text: str) -> RunRecord:
        return cls.from_dict(json.loads(text))


# -- shared pieces ----------------------------------------------------------------


class _Run:
    """Mutable state of one optimization run."""

    def __init__(self, config: RunConfig, objective: Callable[[str], float] | None, method: str):
        self.config = config
        self.method = method
        self.model = config.energy_model()
        self.objective = objective or NedObjective(config.structure, self.model)
        self.dataset = Dataset()
        self.trials: list[Trial] = []
        self.seen: set[str] = set()
        self.repairs = 0
        self.duplicates = 0
        self.started = time.perf_counter()

    def evaluate(self, iteration: int, x, seq: str, repaired: bool = False, duplicate: bool = False) -> Trial:
        value = float(self.objective(seq))
        trial = Trial(len(self.trials), iteration, _bits_str(x), seq, value, repaired, duplicate)
        self.trials.append(trial)
        self.dataset.append(x, value)
        self.seen.add(seq)
        return trial

    def encode(self, seq: str) -> np.ndarray:
        return sequence_to_bits(seq, self.config.scheme, self.config.assignment)

    def record(self) -> RunRecord:
        neds = [t.ned for t in self.trials]
        best = int(np.argmin(neds))
        seq = self.trials[best].sequence
        structure, energy = mfe_structure(seq, self.model)
        return RunRecord(
            method=self.method,
            config=self.config,
            trials=self.trials,
            best_index=best,
            success=structure == self.config.structure,
            mfe=energy,
            mfe_structure=structure.to_dot_bracket(),
            repairs=self.repairs,
            duplicates=self.duplicates,
            wall_seconds=time.perf_counter() - self.started,
        )


def random_sequence(rng: np.random.Generator, length: int) -> str:
    return "".join(NUCLEOTIDES[i] for i in rng.integers(0, 4, size=length))


def init_dataset(config: RunConfig, objective: Callable[[str], float] | None = None, method: str = "fmqa") -> _Run:
    """Evaluate ``initial_points`` uniformly random sequences (iteration 0)."""
    run = _Run(config, objective, method)
    rng = np.random.default_rng(_stream(config.seed, _INIT))
    for _ in range(config.initial_points):
        seq = random_sequence(rng, config.length)
        run.evaluate(0, run.encode(seq), seq)
    return run


def _perturb_until_new(seq: str, seen: set[str], rng: np.random.Generator) -> str:
    s = list(seq)
    while "".join(s) in seen:
        pos = int(rng.integers(len(s)))
        s[pos] = rng.choice([b for b in NUCLEOTIDES if b != s[pos]])
    return "".join(s)


# -- FMQA -----------------------------------------------------------------------


def fmqa_step(run: _Run, iteration: int) -> Trial:
    """Train, convert, penalize, normalize, anneal, decode, evaluate, append."""
    cfg = run.config
    fm = fm_train(
        run.dataset,
        k=cfg.k,
        epochs=cfg.train.epochs,
        lr=cfg.train.lr,
        seed=_stream(cfg.seed, _TRAIN, iteration),
        weight_decay=cfg.train.weight_decay,
    )
    qubo = fm_to_qubo(fm)
    if cfg.scheme.constrained:
        qubo = add_penalty(qubo, penalty_qubo(cfg.scheme, cfg.length, cfg.mu))
    try:
        qubo = normalize_qubo(qubo)
    except AllZeroCoefficients:
        log.debug("iteration %d: flat surrogate, skipping normalization", iteration)
    schedule = AnnealSchedule(
        sweeps=cfg.anneal.sweeps,
        restarts=cfg.anneal.restarts,
        beta_start=cfg.anneal.beta_start,
        beta_end=cfg.anneal.beta_end,
        seed=_int_seed(cfg.seed, _ANNEAL, iteration),
    )
    x = sa_solve(qubo, schedule).x
    seq, repaired_blocks = bits_to_sequence(x, cfg.scheme, cfg.assignment)
    if repaired_blocks:
        run.repairs += 1
        log.info("iteration %d: repaired %d infeasible block(s)", iteration, repaired_blocks)
    duplicate = seq in run.seen
    if duplicate:
        run.duplicates += 1
        rng = np.random.default_rng(_stream(cfg.seed, _DUPLICATE, iteration))
        seq = _perturb_until_new(seq, run.seen, rng)
        x = run.encode(seq)
        log.debug("iteration %d: duplicate candidate replaced by %s", iteration, seq)
    return run.evaluate(iteration, x, seq, repaired=bool(repaired_blocks), duplicate=duplicate)


def run_fmqa(
    config: RunConfig,
    objective: Callable[[str], float] | None = None,
    progress: Callable[[int, Trial], None] | None = None,
) -> RunRecord:
    run = init_dataset(config, objective, "fmqa")
    for t in range(1, config.iterations + 1):
        trial = fmqa_step(run, t)
        if progress:
            progress(t, trial)
    return run.record()


# -- baselines ---------------------------------------------------------------------


def run_random_search(config: RunConfig, objective: Callable[[str], float] | None = None) -> RunRecord:
    run = init_dataset(config, objective, "random")
    rng = np.random.default_rng(_stream(config.seed, _RANDOM))
    for t in range(1, config.iterations + 1):
        seq = random_sequence(rng, config.length)
        run.evaluate(t, run.encode(seq), seq, duplicate=seq in run.seen)
    return run.record()


def tournament_select(fitness: np.ndarray, rng: np.random.Generator, size: int = 2) -> int:
    """Index of the fittest (lowest) of ``size`` uniformly drawn individuals; ties go to the first draw."""
    picks = rng.integers(0, len(fitness), size=size)
    return int(picks[np.argmin(fitness[picks])])


def uniform_crossover(a: np.ndarray, b: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    return np.where(rng.random(a.shape[0]) < 0.5, a, b)


def reset_mutation(genome: np.ndarray, prob: float, rng: np.random.Generator) -> np.ndarray:
    """Each gene, with probability ``prob``, moves to a uniformly chosen *different* value in 0..3."""
    out = genome.copy()
    hit = rng.random(out.shape[0]) < prob
    shift = rng.integers(1, 4, size=out.shape[0])
    out[hit] = (out[hit] + shift[hit]) % 4
    return out


def run_ga(config: RunConfig, params: GAParams | None = None, objective: Callable[[str], float] | None = None) -> RunRecord:
    """Generational GA on integer genomes with binary tournaments, uniform
    crossover, random-reset mutation and single-individual elitism.

    Stops after exactly ``iterations`` offspring evaluations, cutting the last
    generation short if needed.
    """
    params = params or GAParams()
    run = init_dataset(config, objective, "ga")
    assignment = NucleotideAssignment(config.assignment)
    rng = np.random.default_rng(_stream(config.seed, _GA))
    size = params.population or config.initial_points
    mut_prob = params.mutation_rate / config.length

    # population = the shared initial dataset (best `size` of it if larger)
    order = sorted(range(len(run.trials)), key=lambda i: run.trials[i].ned)[:size]
    pop = np.array([[assignment.to_int(b) for b in run.trials[i].sequence] for i in order], dtype=np.int64)
    fit = np.array([run.trials[i].ned for i in order])
    spent = 0
    generation = 0
    while spent < config.iterations:
        generation += 1
        elite = int(np.argmin(fit))
        new_pop, new_fit = [pop[elite]], [fit[elite]]
        while len(new_pop) < max(size, 2) and spent < config.iterations:
            p1 = pop[tournament_select(fit, rng, params.tournament)]
            p2 = pop[tournament_select(fit, rng, params.tournament)]
            child = uniform_crossover(p1, p2, rng) if rng.random() < params.crossover_prob else p1.copy()
            child = reset_mutation(child, mut_prob, rng)
            seq = "".join(assignment.to_base(int(g)) for g in child)
            spent += 1
            trial = run.evaluate(spent, run.encode(seq), seq, duplicate=seq in run.seen)
            new_pop.append(child)
            new_fit.append(trial.ned)
        pop, fit = np.array(new_pop), np.array(new_fit)
    return run.record()


METHODS = {"fmqa": run_fmqa, "random": run_random_search, "ga": run_ga}
