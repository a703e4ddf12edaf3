"""Command-line interface: ``fmqa-rna {fold,evaluate,design,bench,analyze}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .bench import (
    NoSuccessSolutions,
    SweepSpec,
    load_records,
    nucleotide_frequency,
    run_sweep,
    shipped_targets,
    summarize,
    write_curves_csv,
    write_frequency_csv,
    write_summary,
)
from .engine import METHODS, RunConfig
from .thermo import EnergyModel, ensemble_defect, mfe_structure, parse_dot_bracket, read_structures

log = logging.getLogger("fmqa_rna")


class CliError(Exception):
    pass


def resolve_targets(value: str) -> list[tuple[str, str]]:
    """A targets file, the name of a shipped target, or a literal dot-bracket string."""
    path = Path(value)
    if path.is_file():
        found = [(name, s.to_dot_bracket()) for name, s in read_structures(path)]
        if not found:
            raise CliError(f"{path}: no structures found")
        return found
    shipped = shipped_targets()
    if value in shipped:
        return [(value, shipped[value])]
    return [("target", parse_dot_bracket(value).to_dot_bracket())]


def _load_json(path: str) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise CliError(f"{path}: expected a JSON object")
    return doc


def _model(args) -> EnergyModel:
    return EnergyModel.load(args.energy_params) if args.energy_params else EnergyModel.default()


def cmd_fold(args) -> int:
    structure, energy = mfe_structure(args.sequence, _model(args))
    print(f"{structure.to_dot_bracket()} ({energy:.2f})")
    return 0


def cmd_evaluate(args) -> int:
    (_, target), *_ = resolve_targets(args.target)
    phi, ned = ensemble_defect(args.sequence, parse_dot_bracket(target), _model(args))
    print(f"phi={phi:.6f} ned={ned:.6f}")
    return 0


def _design_config(args) -> RunConfig:
    doc = _load_json(args.config) if args.config else {}
    if args.target:
        (name, db), *_ = resolve_targets(args.target)
        doc["target"] = db
        doc.setdefault("target_name", name)
    if "target" not in doc:
        raise CliError("design needs a target (--target or 'target' in --config)")
    for key in ("scheme", "assignment", "seed", "iterations", "energy_params"):
        value = getattr(args, key)
        if value is not None:
            doc[key] = value
    try:
        return RunConfig.from_dict(doc)
    except TypeError as exc:
        raise CliError(f"bad run config: {exc}") from None


def cmd_design(args) -> int:
    config = _design_config(args)

    def progress(t, trial):
        log.info("iteration %d: %s ned=%.4f", t, trial.sequence, trial.ned)

    if args.method == "fmqa":
        record = METHODS["fmqa"](config, progress=progress)
    else:
        record = METHODS[args.method](config)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{args.method}_seed{config.seed}.json"
    path.write_text(record.to_json())
    print(f"best {record.best.sequence} ned={record.best.ned:.6f} mfe={record.mfe:.2f} success={record.success}")
    print(f"wrote {path}")
    return 0


def _sweep_spec(args) -> SweepSpec:
    doc = _load_json(args.config) if args.config else {}
    if args.target:
        doc["targets"] = [t for value in args.target for t in resolve_targets(value)]
    if "targets" not in doc:
        raise CliError("bench needs targets (--target or 'targets' in --config)")
    if args.scheme:
        doc["schemes"] = args.scheme
    if args.assignment:
        doc["assignments"] = "all24" if args.assignment == ["all24"] else args.assignment
    if args.seed is not None:
        doc["base_seed"] = args.seed
    if args.repetitions is not None:
        doc["repetitions"] = args.repetitions
    if args.methods:
        doc["methods"] = args.methods
    run = dict(doc.get("run", {}))
    if args.iterations is not None:
        run["iterations"] = args.iterations
    if args.energy_params:
        run["energy_params"] = args.energy_params
    doc["run"] = run
    try:
        return SweepSpec.from_dict(doc)
    except TypeError as exc:
        raise CliError(f"bad sweep config: {exc}") from None


def cmd_bench(args) -> int:
    spec = _sweep_spec(args)

    def progress(done, total, record):
        log.info("%d/%d %s %s ned=%.4f", done, total, record.method, record.config.scheme.value, record.best.ned)

    summary = run_sweep(spec, args.out_dir, jobs=args.jobs, progress=progress)
    for g in summary.groups:
        print(
            f"{g.method:7s} {g.target:14s} {g.scheme:10s} {g.assignment} "
            f"ned_mean={g.ned_mean:.4f} success_rate={g.success_rate:.2f}"
        )
    print(f"wrote {Path(args.out_dir) / 'summary.csv'}")
    return 0


def cmd_analyze(args) -> int:
    records = load_records(args.records)
    if not records:
        raise CliError("no run records found")
    out_dir = Path(args.out_dir)
    summary = summarize(records)
    write_summary(summary, out_dir)
    write_curves_csv(records, out_dir / "curves.csv")
    by_target: dict[str, list] = {}
    for r in records:
        by_target.setdefault(r.config.target, []).append(r)
    for target, recs in by_target.items():
        try:
            t = nucleotide_frequency(recs, target)
        except NoSuccessSolutions:
            print(f"{target}: no success solutions")
            continue
        print(f"{target}: {t.solutions} success solutions, stem G+C={t.gc('stem'):.3f}")
    write_frequency_csv(summary.frequencies, out_dir / "frequency.csv")
    print(f"wrote {out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fmqa-rna", description="RNA inverse folding by FM-surrogate annealing.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def energy(p):
        p.add_argument("--energy-params", help="energy-model JSON (default: shipped parameters)")

    p = sub.add_parser("fold", help="MFE structure and energy of a sequence")
    p.add_argument("sequence")
    energy(p)
    p.set_defaults(func=cmd_fold)

    p = sub.add_parser("evaluate", help="ensemble defect of a sequence against a target")
    p.add_argument("sequence")
    p.add_argument("--target", required=True, help="dot-bracket, shipped target name, or targets file")
    energy(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("design", help="one optimization run")
    p.add_argument("--config", help="run config JSON")
    p.add_argument("--target")
    p.add_argument("--scheme", choices=["onehot", "domainwall", "binary", "unary"])
    p.add_argument("--assignment", help="4-letter permutation of AUGC, integer 0 first")
    p.add_argument("--seed", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--method", choices=sorted(METHODS), default="fmqa")
    p.add_argument("--out-dir", default=".")
    energy(p)
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("bench", help="sweep targets x schemes x assignments")
    p.add_argument("--config", help="sweep config JSON")
    p.add_argument("--target", action="append", help="repeatable")
    p.add_argument("--scheme", action="append", choices=["onehot", "domainwall", "binary", "unary"])
    p.add_argument("--assignment", action="append", help="repeatable, or 'all24'")
    p.add_argument("--methods", nargs="+", choices=sorted(METHODS))
    p.add_argument("--repetitions", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--seed", type=int, help="base seed")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out-dir", required=True)
    energy(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("analyze", help="frequency tables and curves from run records")
    p.add_argument("records", nargs="+", help="record files or directories")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (CliError, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
