"""Benchmark sweeps over targets x encodings x assignments, and their summaries."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .encodings import NucleotideAssignment, Scheme
from .engine import METHODS, RunConfig, RunRecord
from .thermo import parse_dot_bracket, read_structures
from .thermo.structure import NUCLEOTIDES

log = logging.getLogger(__name__)

REGIONS = ("stem", "nonstem", "overall")
# RunConfig fields a sweep fixes per grid cell; everything else may be overridden
_GRID_KEYS = {"target", "scheme", "assignment", "seed", "target_name"}


class NoSuccessSolutions(ValueError):
    pass


class BudgetMismatch(ValueError):
    pass


def shipped_targets() -> dict[str, str]:
    """Stand-in targets bundled with the package, by name."""
    path = resources.files("fmqa_rna").joinpath("data/targets.txt")
    with resources.as_file(path) as p:
        return {name: s.to_dot_bracket() for name, s in read_structures(p)}


def run_seed(base: int, target: str, scheme: str, assignment: str, rep: int) -> int:
    """63-bit seed from a hash of the grid coordinates.

    The method is not part of the key, so baselines in the same cell start
    from the same initial data as FMQA.
    """
    key = f"{base}|{target}|{scheme}|{assignment}|{rep}"
    digest = hashlib.sha256(key.encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


@dataclass
class SweepSpec:
    targets: list[tuple[str, str]]
    schemes: list[str] = field(default_factory=lambda: [s.value for s in Scheme])
    assignments: list[str] | str = field(default_factory=lambda: ["GAUC"])
    repetitions: int = 10
    base_seed: int = 0
    methods: list[str] = field(default_factory=lambda: ["fmqa"])
    run: dict = field(default_factory=dict)  # RunConfig overrides, e.g. {"iterations": 300}

    def __post_init__(self) -> None:
        self.targets = [(str(n), parse_dot_bracket(db).to_dot_bracket()) for n, db in self.targets]
        if not self.targets:
            raise ValueError("sweep needs at least one target")
        self.schemes = [Scheme.parse(s).value for s in self.schemes]
        if self.assignments == "all24":
            self.assignments = [a.order for a in NucleotideAssignment.all()]
        elif isinstance(self.assignments, str):
            raise ValueError(f"assignments must be a list or 'all24', got {self.assignments!r}")
        self.assignments = [NucleotideAssignment(a).order for a in self.assignments]
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}; expected some of {sorted(METHODS)}")
        clash = _GRID_KEYS & set(self.run)
        if clash:
            raise ValueError(f"run overrides may not set {sorted(clash)}")

    def grid(self) -> list[tuple[str, RunConfig]]:
        """``(method, config)`` for every run, in a fixed order."""
        out = []
        for name, db in self.targets:
            for scheme in self.schemes:
                for assignment in self.assignments:
                    for rep in range(self.repetitions):
                        seed = run_seed(self.base_seed, db, scheme, assignment, rep)
                        doc = dict(self.run, target=db, scheme=scheme, assignment=assignment, seed=seed, target_name=name)
                        cfg = RunConfig.from_dict(doc)
                        for method in self.methods:
                            out.append((method, cfg))
        return out

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> SweepSpec:
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown sweep keys: {sorted(unknown)}")
        doc = dict(doc)
        targets = doc.get("targets")
        if isinstance(targets, dict):
            doc["targets"] = list(targets.items())
        return cls(**doc)


@dataclass
class RunRow:
    method: str
    target: str
    scheme: str
    assignment: str
    rep: int
    seed: int
    best_ned: float
    success: bool
    mfe: float
    best_sequence: str


@dataclass
class GroupStats:
    method: str
    target: str
    scheme: str
    assignment: str
    runs: int
    ned_mean: float
    ned_min: float
    ned_max: float
    ned_outliers: list[float]
    success_rate: float
    mfe_mean: float | None  # None when there is no success solution
    mfe_min: float | None
    mfe_max: float | None


def iqr_outliers(values: Iterable[float]) -> list[float]:
    """Values beyond 1.5 interquartile ranges from the quartiles."""
    v = np.asarray(list(values), dtype=float)
    if v.size < 2:
        return []
    q1, q3 = np.percentile(v, [25, 75])
    lo, hi = q1 - 1.5 * (q3 - q1), q3 + 1.5 * (q3 - q1)
    return [float(x) for x in v if x < lo or x > hi]


def group_stats(rows: list[RunRow]) -> GroupStats:
    neds = [r.best_ned for r in rows]
    mfes = [r.mfe for r in rows if r.success]
    head = rows[0]
    return GroupStats(
        method=head.method,
        target=head.target,
        scheme=head.scheme,
        assignment=head.assignment,
        runs=len(rows),
        ned_mean=float(np.mean(neds)),
        ned_min=float(np.min(neds)),
        ned_max=float(np.max(neds)),
        ned_outliers=iqr_outliers(neds),
        success_rate=len(mfes) / len(rows),
        mfe_mean=float(np.mean(mfes)) if mfes else None,
        mfe_min=float(np.min(mfes)) if mfes else None,
        mfe_max=float(np.max(mfes)) if mfes else None,
    )


@dataclass
class FrequencyTables:
    """Pooled nucleotide frequencies per region over success solutions."""

    counts: dict[str, dict[str, int]]
    solutions: int

    def frequency(self, region: str) -> dict[str, float]:
        row = self.counts[region]
        total = sum(row.values())
        return {b: (row[b] / total if total else 0.0) for b in NUCLEOTIDES}

    def deviation(self, region: str) -> dict[str, float]:
        """Frequency minus the uniform baseline 0.25."""
        return {b: f - 0.25 for b, f in self.frequency(region).items()}

    def gc(self, region: str) -> float:
        f = self.frequency(region)
        return f["G"] + f["C"]

    def to_dict(self) -> dict:
        return {"solutions": self.solutions, "counts": self.counts}


def nucleotide_frequency(records: Iterable[RunRecord], target: str | None = None) -> FrequencyTables:
    """Pool the best sequences of the success runs and count nucleotides per region.

    Stem positions are the paired positions of the target. Raises
    :class:`NoSuccessSolutions` if none of ``records`` is a success.
    """
    records = list(records)
    targets = {r.config.target for r in records}
    if target is None and len(targets) > 1:
        raise ValueError("records have different targets; pass one explicitly")
    target = target or (targets.pop() if targets else None)
    if any(r.config.target != target for r in records):
        raise ValueError("all records must share the target")
    wins = [r for r in records if r.success]
    if not wins:
        raise NoSuccessSolutions("no success solutions to pool")
    paired = set(parse_dot_bracket(target).paired_positions())
    counts = {region: {b: 0 for b in NUCLEOTIDES} for region in REGIONS}
    for r in wins:
        for pos, base in enumerate(r.best.sequence):
            counts["stem" if pos in paired else "nonstem"][base] += 1
            counts["overall"][base] += 1
    return FrequencyTables(counts, len(wins))


@dataclass
class SweepSummary:
    rows: list[RunRow]
    groups: list[GroupStats]
    frequencies: dict[str, FrequencyTables]  # keyed "method/target/scheme", success runs pooled over assignments

    def to_dict(self) -> dict:
        return {
            "rows": [asdict(r) for r in self.rows],
            "groups": [asdict(g) for g in self.groups],
            "frequencies": {k: v.to_dict() for k, v in sorted(self.frequencies.items())},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


def summarize(records: list[RunRecord]) -> SweepSummary:
    """Aggregate records in the order given."""
    rows = []
    reps: dict[tuple, int] = {}
    for r in records:
        c = r.config
        key = (r.method, c.target_name or c.target, c.scheme.value, c.assignment)
        rows.append(
            RunRow(r.method, key[1], key[2], key[3], reps.get(key, 0), c.seed, r.best.ned, r.success, r.mfe, r.best.sequence)
        )
        reps[key] = reps.get(key, 0) + 1
    by_group: dict[tuple, list[RunRow]] = {}
    for row in rows:
        by_group.setdefault((row.method, row.target, row.scheme, row.assignment), []).append(row)
    groups = [group_stats(v) for v in by_group.values()]
    by_scheme: dict[str, list[RunRecord]] = {}
    for r in records:
        by_scheme.setdefault(f"{r.method}/{r.config.target_name or r.config.target}/{r.config.scheme.value}", []).append(r)
    freqs = {}
    for key, recs in by_scheme.items():
        try:
            freqs[key] = nucleotide_frequency(recs)
        except NoSuccessSolutions:
            pass
    return SweepSummary(rows, groups, freqs)


def _record_path(out_dir: Path, method: str, cfg: RunConfig, rep: int) -> Path:
    name = cfg.target_name or hashlib.sha256(cfg.target.encode()).hexdigest()[:10]
    return out_dir / "runs" / f"{method}__{name}__{cfg.scheme.value}__{cfg.assignment}__{rep:03d}.json"


def _execute(method: str, config: RunConfig) -> RunRecord:
    return METHODS[method](config)


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def run_sweep(
    spec: SweepSpec,
    out_dir: str | Path | None = None,
    jobs: int = 1,
    progress: Callable[[int, int, RunRecord], None] | None = None,
) -> SweepSummary:
    """Run every grid cell, persisting each record under ``out_dir/runs``.

    Records already on disk with a matching configuration are reused, so an
    interrupted sweep resumes where it stopped.
    """
    grid = spec.grid()
    records: list[RunRecord | None] = [None] * len(grid)
    paths: list[Path | None] = [None] * len(grid)
    rep_of = _rep_indices(grid)
    if out_dir is not None:
        out_dir = Path(out_dir)
        (out_dir / "runs").mkdir(parents=True, exist_ok=True)
        _write_atomic(out_dir / "sweep.json", json.dumps(spec.to_dict(), indent=1, sort_keys=True))
        for i, (method, cfg) in enumerate(grid):
            paths[i] = _record_path(out_dir, method, cfg, rep_of[i])
            if paths[i].exists():
                rec = RunRecord.from_json(paths[i].read_text())
                if rec.method == method and rec.config.to_dict() == cfg.to_dict():
                    records[i] = rec
                else:
                    log.warning("%s does not match the sweep configuration; rerunning", paths[i])
    todo = [i for i, r in enumerate(records) if r is None]
    done = len(grid) - len(todo)

    def finish(i: int, rec: RunRecord) -> None:
        nonlocal done
        records[i] = rec
        if paths[i] is not None:
            _write_atomic(paths[i], rec.to_json())
        done += 1
        if progress:
            progress(done, len(grid), rec)

    if jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {i: pool.submit(_execute, *grid[i]) for i in todo}
            for i in todo:
                finish(i, futures[i].result())
    else:
        for i in todo:
            finish(i, _execute(*grid[i]))
    summary = summarize(records)
    if out_dir is not None:
        write_summary(summary, out_dir)
    return summary


def _rep_indices(grid: list[tuple[str, RunConfig]]) -> list[int]:
    counters: dict[tuple, int] = {}
    out = []
    for method, cfg in grid:
        key = (method, cfg.target, cfg.scheme, cfg.assignment)
        out.append(counters.get(key, 0))
        counters[key] = out[-1] + 1
    return out


def load_records(paths: Iterable[str | Path]) -> list[RunRecord]:
    """Read RunRecord JSON files; directories are searched for ``*.json`` recursively."""
    out = []
    for p in paths:
        p = Path(p)
        files = sorted(f for f in p.rglob("*.json") if f.name != "sweep.json") if p.is_dir() else [p]
        for f in files:
            try:
                out.append(RunRecord.from_json(f.read_text()))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{f}: not a run record ({exc})") from None
    return out


# -- CSV I/O -----------------------------------------------------------------------

RUN_COLUMNS = ["method", "target", "scheme", "assignment", "rep", "seed", "best_ned", "success", "mfe", "best_sequence"]
GROUP_COLUMNS = [
    "method", "target", "scheme", "assignment", "runs", "ned_mean", "ned_min", "ned_max",
    "ned_outliers", "success_rate", "mfe_mean", "mfe_min", "mfe_max",
]  # fmt: skip
CURVE_COLUMNS = ["method", "seed", "evaluation_index", "best_ned_so_far"]
FREQ_COLUMNS = ["key", "solutions", "region", "nucleotide", "count", "frequency", "deviation"]


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, list):
        return ";".join(repr(x) for x in v)
    return str(v)


def _write_csv(path: str | Path, columns: list[str], rows: Iterable[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(row[c]) for c in columns])


def _read_csv(path: str | Path, columns: list[str]) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != columns:
            raise ValueError(f"{path}: expected columns {columns}, got {reader.fieldnames}")
        return list(reader)


def _opt_float(s: str) -> float | None:
    return float(s) if s else None


def write_runs_csv(summary: SweepSummary, path: str | Path) -> None:
    _write_csv(path, RUN_COLUMNS, (asdict(r) for r in summary.rows))


def read_runs_csv(path: str | Path) -> list[RunRow]:
    return [
        RunRow(
            r["method"], r["target"], r["scheme"], r["assignment"], int(r["rep"]), int(r["seed"]),
            float(r["best_ned"]), r["success"] == "1", float(r["mfe"]), r["best_sequence"],
        )  # fmt: skip
        for r in _read_csv(path, RUN_COLUMNS)
    ]


def write_groups_csv(summary: SweepSummary, path: str | Path) -> None:
    _write_csv(path, GROUP_COLUMNS, (asdict(g) for g in summary.groups))


def read_groups_csv(path: str | Path) -> list[GroupStats]:
    out = []
    for r in _read_csv(path, GROUP_COLUMNS):
        out.append(
            GroupStats(
                r["method"], r["target"], r["scheme"], r["assignment"], int(r["runs"]),
                float(r["ned_mean"]), float(r["ned_min"]), float(r["ned_max"]),
                [float(x) for x in r["ned_outliers"].split(";") if x], float(r["success_rate"]),
                _opt_float(r["mfe_mean"]), _opt_float(r["mfe_min"]), _opt_float(r["mfe_max"]),
            )  # fmt: skip
        )
    return out


def write_curves_csv(records: Iterable[RunRecord], path: str | Path) -> None:
    """Best-so-far curves; refuses records whose evaluation count breaks the budget contract."""
    rows = []
    for r in records:
        expected = r.config.initial_points + r.config.iterations
        if r.evaluations != expected:
            raise BudgetMismatch(f"{r.method} seed {r.config.seed}: {r.evaluations} evaluations, expected {expected}")
        for i, v in enumerate(r.best_so_far(), start=1):
            rows.append({"method": r.method, "seed": r.config.seed, "evaluation_index": i, "best_ned_so_far": v})
    _write_csv(path, CURVE_COLUMNS, rows)


def read_curves_csv(path: str | Path) -> list[dict]:
    return [
        {"method": r["method"], "seed": int(r["seed"]), "evaluation_index": int(r["evaluation_index"]),
         "best_ned_so_far": float(r["best_ned_so_far"])}  # fmt: skip
        for r in _read_csv(path, CURVE_COLUMNS)
    ]


def write_frequency_csv(tables: dict[str, FrequencyTables], path: str | Path) -> None:
    rows = []
    for key, t in sorted(tables.items()):
        for region in REGIONS:
            freq, dev = t.frequency(region), t.deviation(region)
            for b in NUCLEOTIDES:
                rows.append(
                    {"key": key, "solutions": t.solutions, "region": region, "nucleotide": b, "count": t.counts[region][b],
                     "frequency": freq[b], "deviation": dev[b]}  # fmt: skip
                )
    _write_csv(path, FREQ_COLUMNS, rows)


def read_frequency_csv(path: str | Path) -> dict[str, FrequencyTables]:
    out: dict[str, FrequencyTables] = {}
    for r in _read_csv(path, FREQ_COLUMNS):
        t = out.setdefault(r["key"], FrequencyTables({reg: {} for reg in REGIONS}, int(r["solutions"])))
        t.counts[r["region"]][r["nucleotide"]] = int(r["count"])
    return out


def write_summary(summary: SweepSummary, out_dir: str | Path) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_runs_csv(summary, out_dir / "summary.csv")
    write_groups_csv(summary, out_dir / "groups.csv")
    write_frequency_csv(summary.frequencies, out_dir / "frequency.csv")
    _write_atomic(out_dir / "summary.json", summary.to_json())
