"""Command-line driver: ``generate``, ``run``, ``experiment`` and ``selfcheck``.

Exit codes: 0 success, 1 failed self-check, 2 invalid input, 3 numerical
non-convergence.  Files are only ever written inside ``--out``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import warnings
from pathlib import Path
from typing import Sequence

import numpy as np

from .checks import run_checks
from .config import ConfigError, RunConfig, load_config
from .experiments import EXPERIMENTS, run_experiment
from .model import ClusterModel, SimulationConfig, TheoryRangeWarning, read_dataset, read_model, write_dataset, write_model
from .pipeline import PipelineError, run_algorithm1, simulate
from .spectral import ConvergenceError

EXIT_OK, EXIT_CHECK, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2, 3


class NonConvergence(RuntimeError):
    pass


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="sectioned key=value config file")
    common.add_argument("--seed", type=_u64, help="base seed (overrides the config)")
    common.add_argument("--threads", type=_positive, help="worker threads (results do not depend on it)")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--format", choices=("csv", "json"), help="table format")

    parser = argparse.ArgumentParser(prog="btmix", description="Cluster users and rank items from pairwise comparisons.")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", parents=[common], help="simulate a model and its comparison data")
    gen.add_argument("--emit-config", action="store_true", help="also write the resolved config to OUT/config.ini")

    run = sub.add_parser("run", parents=[common], help="cluster and rank a comparison dataset")
    run.add_argument("dataset", type=Path)
    run.add_argument("--truth", type=Path, help="ground-truth model file for error metrics")

    exp = sub.add_parser("experiment", parents=[common], help="run a seeded Monte Carlo experiment")
    exp.add_argument("name", choices=sorted(EXPERIMENTS))

    sub.add_parser("selfcheck", parents=[common], help="run the exact small-instance oracles")
    return parser


def _resolve(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    return cfg


def _out_dir(args: argparse.Namespace, cfg: RunConfig) -> Path:
    out = args.out or (Path(cfg.out) if cfg.out else None)
    if out is None:
        raise ConfigError("output.out: no output directory (use --out)")
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc.strerror or exc}") from exc
    return out


def _write(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _table(csv_text: str, fmt: str) -> tuple[str, str]:
    """Return ``(suffix, body)`` for a CSV table in the requested format."""
    if fmt == "csv":
        return ".csv", csv_text
    rows = [{k: _scalar(v) for k, v in row.items()} for row in csv.DictReader(io.StringIO(csv_text))]
    return ".json", json.dumps(rows, indent=2) + "\n"


def _scalar(text: str):
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def cmd_generate(args: argparse.Namespace, cfg: RunConfig) -> int:
    if cfg.simulation is None:
        raise ConfigError("simulation: a [simulation] section is required for generate")
    sim = cfg.simulation
    if args.seed is not None:
        sim = SimulationConfig(sim.m, sim.r, sim.K, sim.b, sim.epsilon, args.seed)
    out = _out_dir(args, cfg)
    model, data = simulate(sim)
    write_model(out / "model.txt", model, sim)
    write_dataset(out / "dataset.txt", data, sim)
    if args.emit_config:
        resolved = RunConfig(sim, cfg.clustering, cfg.mle, cfg.experiment, cfg.out, cfg.threads, cfg.format)
        _write(out / "config.ini", resolved.to_text())
    density = data.num_records / (data.n * sim.n_pairs)
    print(f"n={data.n} m={data.m} records={data.num_records} density={density:.6f}")
    return EXIT_OK


def cmd_run(args: argparse.Namespace, cfg: RunConfig) -> int:
    try:
        data, sim = read_dataset(args.dataset)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read dataset {args.dataset}: {exc}") from exc
    model: ClusterModel | None = None
    if args.truth:
        try:
            model, truth_cfg = read_model(args.truth)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read truth {args.truth}: {exc}") from exc
        if (model.n, model.m) != (data.n, data.m):
            raise ConfigError(f"truth is {model.n}x{model.m} but dataset is {data.n}x{data.m}")
    params = cfg.clustering if cfg.clustering is not None else RunConfig(simulation=sim).clustering_params()
    seed = args.seed if args.seed is not None else sim.seed
    out = _out_dir(args, cfg)
    result = run_algorithm1(data, sim, params, np.random.default_rng(seed), model=model, mle_config=cfg.mle)

    fmt = args.format or cfg.format
    suffix, body = _table(result.clustering.to_csv(), fmt)
    _write(out / f"clustering{suffix}", body)
    for k, est in enumerate(result.estimates):
        suffix, body = _table(est.to_csv(), fmt)
        _write(out / f"scores_{k}{suffix}", body)
    metrics = {"seed": seed, **result.metrics()}
    _write(out / "metrics.json", json.dumps(metrics, indent=2, sort_keys=True, default=float) + "\n")
    print(f"clusters={result.clustering.sizes().tolist()} converged={result.converged} degenerate={result.degenerate}")
    if model is not None:
        print(f"misclustered_fraction={result.misclustered_fraction:.4f} median_relative_error={result.median_relative_error:.4f}")
    if not result.converged:
        raise NonConvergence("score estimation hit the iteration cap")
    return EXIT_OK


def cmd_experiment(args: argparse.Namespace, cfg: RunConfig) -> int:
    try:
        grid = cfg.grid(args.name, seed=args.seed, threads=args.threads)
    except ValueError as exc:
        raise ConfigError(f"experiment: {exc}") from exc
    out = _out_dir(args, cfg)
    result = run_experiment(args.name, grid)
    fmt = args.format or cfg.format
    for table, text in result.tables.items():
        suffix, body = _table(text, fmt)
        _write(out / f"{args.name}_{table}{suffix}", body)
    _write(out / f"{args.name}_manifest.json", result.manifest_json() + "\n")
    for text in result.tables.values():
        sys.stdout.write(text)
    return EXIT_OK


def cmd_selfcheck(args: argparse.Namespace, cfg: RunConfig) -> int:
    results = run_checks()
    width = max(len(name) for name, _, _ in results)
    for name, ok, detail in results:
        print(f"{name:<{width}}  {'PASS' if ok else 'FAIL'}  {detail}")
    failed = [name for name, ok, _ in results if not ok]
    if failed:
        print("failed: " + ", ".join(failed))
        return EXIT_CHECK
    if args.out or cfg.out:
        out = _out_dir(args, cfg)
        report = [{"check": n, "passed": ok, "detail": d} for n, ok, d in results]
        _write(out / "selfcheck.json", json.dumps(report, indent=2) + "\n")
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "run": cmd_run, "experiment": cmd_experiment, "selfcheck": cmd_selfcheck}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    warnings.simplefilter("ignore", TheoryRangeWarning)
    try:
        cfg = _resolve(args)
        if args.threads is not None:
            cfg = RunConfig(cfg.simulation, cfg.clustering, cfg.mle, cfg.experiment, cfg.out, args.threads, cfg.format)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ConvergenceError, NonConvergence) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC if isinstance(exc.cause, ConvergenceError) else EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
