from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import results_db
from .bipartite import GenerationParams, generate_instance
from .config import ExperimentConfig, load_config
from .limit_laws import (
    DEFAULT_N_MIX,
    DEFAULT_R_MAX,
    Balanced,
    Dense,
    LimitSampler,
    PmfVector,
    RegimeLimit,
    Sparse,
    format_pmf_csv,
    has_power_law_limit,
    limit_mean,
    limit_pmf,
    sparse_isolation_bound,
    write_pmf_csv,
)
from .projector import (
    coincidence_bound,
    degrees,
    degrees_of_subset,
    l_statistic,
    l_statistics,
)
from .stats import (
    MIN_HILL_K,
    ComparisonReport,
    HillEstimationError,
    empirical_pmf,
    hill_tail_index,
)
from .weights import moment, parse_weight_spec

# Default to INFO until the configured level is applied at startup
logging.basicConfig(
    level=logging.INFO, format="%(asctime)s [%(levelname)s] %(message)s"
)
LOGGER = logging.getLogger(__name__)

# Spawn key reserved for the limit-law stream; replicate streams use
# (grid_index, replicate) under the same master seed.
LIMIT_STREAM = 2**32 - 1
HILL_K_CAP = 1000
TAIL_WARNING = 1e-3
TABLE_COLUMNS = [
    "n",
    "m",
    "replicates",
    "tv",
    "coincidence_rate",
    "isolated_fraction",
    "tail_index",
    "runtime_ms",
]


class ExperimentError(RuntimeError):
    def __init__(self, message: str, n: int | None = None):
        super().__init__(message)
        self.n = n


def replicate_seed(master_seed: int, grid_index: int, replicate: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master_seed, spawn_key=(grid_index, replicate))


def limit_seed(master_seed: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master_seed, spawn_key=(LIMIT_STREAM,))


def regime_limit(config: ExperimentConfig) -> RegimeLimit:
    if config.regime == "sparse" and not moment(config.p1, 1).finite:
        LOGGER.warning("Sparse regime with E X = inf: isolation is not guaranteed")
    return config.limit()


@dataclass(frozen=True)
class ReplicateTask:
    params: GenerationParams
    grid_index: int
    replicate: int
    master_seed: int
    degree_estimator: str
    pair_cap: int


@dataclass(frozen=True, eq=False)
class ReplicateResult:
    replicate: int
    degrees: np.ndarray
    mismatches: int
    edges: int
    proposals: int
    coincidence_bound: float
    max_intensity: float


def run_replicate(task: ReplicateTask) -> ReplicateResult:
    rng = np.random.default_rng(
        replicate_seed(task.master_seed, task.grid_index, task.replicate)
    )
    instance = generate_instance(task.params, rng)
    if task.degree_estimator == "v1_only":
        sample = degrees_of_subset(instance, [0])
        multiplicity = np.array([l_statistic(instance, 0)])
    else:
        sample = degrees(instance, task.replicate, task.pair_cap).degrees
        multiplicity = l_statistics(instance)
    return ReplicateResult(
        replicate=task.replicate,
        degrees=sample,
        mismatches=int(np.count_nonzero(sample != multiplicity)),
        edges=instance.edge_count,
        proposals=instance.proposals,
        coincidence_bound=coincidence_bound(instance, 0),
        max_intensity=instance.max_intensity(),
    )


def _run_replicates(tasks: Sequence[ReplicateTask], workers: int) -> list[ReplicateResult]:
    if workers <= 1 or len(tasks) <= 1:
        return [run_replicate(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_replicate, tasks))


def informational_tail_index(samples: np.ndarray) -> float | None:
    positives = int(np.count_nonzero(samples > 0))
    k = min(HILL_K_CAP, positives // 10)
    if k < MIN_HILL_K:
        return None
    try:
        return hill_tail_index(samples, k)
    except HillEstimationError as exc:
        LOGGER.warning("Tail index unavailable: %s", exc)
        return None


@dataclass
class GridPointResult:
    n: int
    m: int
    replicates: int
    tv: float
    coincidence_rate: float
    isolated_fraction: float
    tail_index: float | None
    runtime_ms: float | None
    empirical: PmfVector
    report: ComparisonReport
    sample_size: int

    def table_row(self) -> dict[str, Any]:
        return {
            "n": self.n,
            "m": self.m,
            "replicates": self.replicates,
            "tv": self.tv,
            "coincidence_rate": self.coincidence_rate,
            "isolated_fraction": self.isolated_fraction,
            "tail_index": self.tail_index,
            "runtime_ms": self.runtime_ms,
        }


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    reference: PmfVector
    rows: list[GridPointResult] = field(default_factory=list)

    def tv_by_n(self) -> dict[int, float]:
        return {row.n: row.tv for row in self.rows}


def _format_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _run_grid_point(
    config: ExperimentConfig,
    grid_index: int,
    n: int,
    limit: RegimeLimit,
    reference: PmfVector,
) -> GridPointResult:
    m = config.attributes_for(n)
    params = GenerationParams(n=n, m=m, p1=config.p1, p2=config.p2)
    tasks = [
        ReplicateTask(
            params=params,
            grid_index=grid_index,
            replicate=replicate,
            master_seed=config.master_seed,
            degree_estimator=config.degree_estimator,
            pair_cap=config.pair_cap,
        )
        for replicate in range(config.replicates)
    ]
    started = time.perf_counter()
    results = _run_replicates(tasks, config.workers)
    runtime_ms = (time.perf_counter() - started) * 1000.0

    samples = np.concatenate([result.degrees for result in results])
    mismatches = sum(result.mismatches for result in results)
    edges = sum(result.edges for result in results)
    proposals = sum(result.proposals for result in results)
    empirical = empirical_pmf(samples, config.r_max)
    recorded_runtime = round(runtime_ms, 3) if config.record_runtimes else None

    metadata: dict[str, Any] = {
        "seed": config.master_seed,
        "regime": config.regime,
        "runtime_ms": recorded_runtime,
        "n": n,
        "m": m,
        "replicates": config.replicates,
        "degree_estimator": config.degree_estimator,
        "edges": edges,
        "proposals": proposals,
        "empirical_mean": float(np.mean(samples)),
        "limit_mean": limit_mean(limit),
        "power_law_limit": has_power_law_limit(limit),
        "mean_coincidence_bound": float(
            np.mean([result.coincidence_bound for result in results])
        ),
        "max_intensity": max(result.max_intensity for result in results),
    }
    if config.regime == "sparse":
        metadata["sparse_isolation_bound"] = sparse_isolation_bound(
            n, m, config.p1, config.p2
        )
    report = ComparisonReport.compare(empirical, reference, int(samples.size), **metadata)
    row = GridPointResult(
        n=n,
        m=m,
        replicates=config.replicates,
        tv=report.tv_distance,
        coincidence_rate=mismatches / samples.size,
        isolated_fraction=float(np.count_nonzero(samples == 0)) / samples.size,
        tail_index=informational_tail_index(samples),
        runtime_ms=recorded_runtime,
        empirical=empirical,
        report=report,
        sample_size=int(samples.size),
    )
    LOGGER.info(
        "Grid point n=%s m=%s: tv=%.4f coincidence=%.4f isolated=%.4f edges=%s "
        "proposals=%s runtime=%.0fms",
        n,
        m,
        row.tv,
        row.coincidence_rate,
        row.isolated_fraction,
        edges,
        proposals,
        runtime_ms,
    )
    return row


def _manifest(config: ExperimentConfig) -> dict[str, Any]:
    return {
        "config": config.to_dict(),
        "seed_scheme": "numpy SeedSequence(master_seed, spawn_key=(grid_index, replicate))",
        "limit_spawn_key": [LIMIT_STREAM],
        "grid": [
            {
                "grid_index": grid_index,
                "n": n,
                "m": config.attributes_for(n),
                "spawn_keys": [[grid_index, r] for r in range(config.replicates)],
            }
            for grid_index, n in enumerate(config.n_grid)
        ],
    }


def _record_failure(
    failure_path: Path, ledger_run: Any, where: str, exc: Exception
) -> None:
    failure_path.write_text(f"FAILED {where}: {exc}\n", encoding="utf-8")
    if ledger_run is not None:
        results_db.fail_run(ledger_run, f"{where}: {exc}")


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    output_dir = Path(config.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    failure_path = output_dir / "failure.txt"
    failure_path.unlink(missing_ok=True)
    LOGGER.info(
        "Experiment regime=%s grid=%s replicates=%s seed=%s -> %s",
        config.regime,
        list(config.n_grid),
        config.replicates,
        config.master_seed,
        output_dir,
    )

    (output_dir / "manifest.json").write_text(
        json.dumps(_manifest(config), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    ledger_run = None
    if config.results_database_path:
        results_db.init_results_db(config.results_database_path)
        ledger_run = results_db.start_run(config.to_dict())

    try:
        limit = regime_limit(config)
        try:
            reference = limit_pmf(
                limit,
                config.r_max,
                config.n_mix,
                np.random.default_rng(limit_seed(config.master_seed)),
            )
        except Exception as exc:
            LOGGER.exception("Limit law failed: %s", exc)
            _record_failure(failure_path, ledger_run, "limit law", exc)
            raise ExperimentError(f"limit law failed: {exc}") from exc
        if reference.tail_mass > TAIL_WARNING:
            LOGGER.warning(
                "Limit law tail mass %.3g above r_max=%s; TV includes it as one bucket",
                reference.tail_mass,
                config.r_max,
            )
        write_pmf_csv(reference, output_dir / "limit_pmf.csv")

        result = ExperimentResult(config=config, reference=reference)
        table_path = output_dir / "convergence_table.csv"
        with open(table_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(TABLE_COLUMNS)
            fh.flush()
            for grid_index, n in enumerate(config.n_grid):
                try:
                    row = _run_grid_point(config, grid_index, n, limit, reference)
                except Exception as exc:
                    LOGGER.exception("Grid point n=%s failed: %s", n, exc)
                    _record_failure(failure_path, ledger_run, f"n={n}", exc)
                    raise ExperimentError(f"grid point n={n} failed: {exc}", n) from exc
                writer.writerow([_format_cell(row.table_row()[c]) for c in TABLE_COLUMNS])
                fh.flush()
                write_pmf_csv(row.empirical, output_dir / f"pmf_n{n}.csv")
                row.report.write(output_dir / f"report_n{n}.json")
                if ledger_run is not None:
                    results_db.record_convergence(ledger_run, row.table_row())
                result.rows.append(row)

        if ledger_run is not None:
            results_db.finish_run(ledger_run)
    finally:
        if ledger_run is not None:
            results_db.close_results_db()
    LOGGER.info("Experiment finished: tv by n %s", result.tv_by_n())
    return result



def _limit_from_args(args: argparse.Namespace) -> RegimeLimit:
    if args.regime == "sparse":
        return Sparse()
    p1 = parse_weight_spec(args.p1)
    p2 = parse_weight_spec(args.p2)
    if args.regime == "balanced":
        if args.beta is None:
            raise ValueError("--beta is required for the balanced regime")
        return Balanced(args.beta, p1, p2, args.allow_infinite_a2)
    return Dense(p1, p2)


def _add_limit_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--regime", choices=["sparse", "balanced", "dense"], required=True)
    parser.add_argument("--beta", type=float)
    parser.add_argument("--p1", default="exp:1")
    parser.add_argument("--p2", default="exp:1")
    parser.add_argument("--r-max", type=int, default=DEFAULT_R_MAX)
    parser.add_argument("--n-mix", type=int, default=DEFAULT_N_MIX)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--allow-infinite-a2", action="store_true")
    parser.add_argument("--output", help="write to this file instead of stdout")


def cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args.config, args.override or ())
    logging.getLogger().setLevel(config.log_level)
    LOGGER.setLevel(config.log_level)
    result = run_experiment(config)
    for row in result.rows:
        print(f"n={row.n} m={row.m} tv={row.tv:.4f} isolated={row.isolated_fraction:.4f}")
    return 0


def cmd_pmf(args: argparse.Namespace) -> int:
    limit = _limit_from_args(args)
    pmf = limit_pmf(limit, args.r_max, args.n_mix, np.random.default_rng(args.seed))
    if args.output:
        write_pmf_csv(pmf, args.output)
    else:
        sys.stdout.write(format_pmf_csv(pmf))
    return 0


def cmd_sample(args: argparse.Namespace) -> int:
    limit = _limit_from_args(args)
    rng = np.random.default_rng(args.seed)
    draws = LimitSampler(limit, args.r_max, args.n_mix, rng).draw_many(args.count, rng)
    text = "".join(f"{int(d)}\n" for d in draws)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_check(args: argparse.Namespace) -> int:
    from .acceptance import run_checks

    results = run_checks(args.only or None)
    for check in results:
        status = "PASS" if check.passed else "FAIL"
        print(f"{status} {check.name} ({check.runtime_s:.1f}s): {check.detail}")
    return 0 if all(check.passed for check in results) else 1


def cmd_runs(args: argparse.Namespace) -> int:
    results_db.init_results_db(args.database)
    try:
        if args.id is None:
            for run in results_db.list_runs():
                print(
                    f"{run.id} {run.regime} seed={run.master_seed} "
                    f"status={run.status} output={run.output_dir}"
                )
            return 0
        run = results_db.get_run(args.id)
        if run is None:
            raise ValueError(f"no run with id {args.id} in {args.database}")
        print(f"{run.id} {run.regime} seed={run.master_seed} status={run.status}")
        if run.failure_reason:
            print(f"failure: {run.failure_reason}")
        for entry in results_db.convergence_rows(run):
            print(f"n={entry.n} m={entry.m} tv={entry.tv:.4f}")
        return 0
    finally:
        results_db.close_results_db()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="python -m src.runner",
        description="Degree laws of inhomogeneous random intersection graphs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a convergence experiment from a YAML config")
    run.add_argument("config", nargs="?", help="config path (default: $CONFIG_PATH or config.yml)")
    run.add_argument("--override", action="append", metavar="KEY=VALUE")
    run.set_defaults(handler=cmd_run)

    pmf = sub.add_parser("pmf", help="print a limit law as pmf CSV")
    _add_limit_arguments(pmf)
    pmf.set_defaults(handler=cmd_pmf)

    draw = sub.add_parser("sample", help="emit limit-law samples, one per line")
    _add_limit_arguments(draw)
    draw.add_argument("--count", type=int, required=True)
    draw.set_defaults(handler=cmd_sample)

    check = sub.add_parser("check", help="run the built-in acceptance fixtures")
    check.add_argument("--only", action="append", metavar="NAME")
    check.set_defaults(handler=cmd_check)

    runs = sub.add_parser("runs", help="list runs recorded in a results ledger")
    runs.add_argument("database", help="SQLite ledger path")
    runs.add_argument("--id", type=int, help="show one run with its convergence rows")
    runs.set_defaults(handler=cmd_runs)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except (ValueError, ExperimentError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
