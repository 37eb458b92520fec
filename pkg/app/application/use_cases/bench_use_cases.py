"""
Benchmark suite use cases.
Part of Application layer - runs (benchmark, kernel, seed) cells and aggregates their traces.
"""
import logging
import math
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from app.core.logging import configure_logging
from app.domain.entities.benchmark_spec import BenchmarkSpec, SuiteCell
from app.domain.entities.bo_trace import BoConfig, BoTrace, Strategy
from app.domain.services.bayes_opt import bo_run
from app.domain.services.benchmarks import (
    DomainKind,
    ProjectedObjective,
    SearchDomain,
    base_point,
    domain_kernel_spec,
    projected_objective,
    search_domain,
)
from app.infrastructure.repositories.trace_repository import TraceRepository, format_float
from app.infrastructure.services.seeding import cell_rng, cell_seed
from app.infrastructure.services.serialization import encode_point, format_coords, json_float, manifold_to_dict

logger = logging.getLogger(__name__)

REGRET_FLOOR = 1e-12


@dataclass(frozen=True)
class KernelPlan:
    """Strategy entry of a suite; ``manifolds`` restricts it to some manifold names."""

    name: str
    strategy: Strategy = Strategy.GP_EI
    family: Optional[str] = None
    nu: float = 2.5
    domain: DomainKind = DomainKind.NATIVE
    manifolds: Optional[Tuple[str, ...]] = None

    def applies_to(self, manifold_name: str) -> bool:
        return self.manifolds is None or manifold_name in self.manifolds

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "strategy": self.strategy.value,
            "family": self.family,
            "nu": json_float(self.nu),
            "domain": self.domain.value,
            "manifolds": list(self.manifolds) if self.manifolds is not None else None,
        }


@dataclass(frozen=True)
class SuitePlan:
    """Resolved suite configuration."""

    benchmarks: Tuple[BenchmarkSpec, ...]
    kernels: Tuple[KernelPlan, ...]
    master_seed: int
    n_init: int
    acq_starts: int
    regret_threshold: float = -2.0

    def cells(self) -> List[Tuple[SuiteCell, BenchmarkSpec, KernelPlan]]:
        """Every (benchmark, kernel, seed) combination, sorted by cell."""
        cells = []
        for benchmark in self.benchmarks:
            for kernel in self.kernels:
                if not kernel.applies_to(benchmark.manifold.name):
                    continue
                for seed in range(benchmark.seeds):
                    cell = SuiteCell(benchmark.function, benchmark.manifold.name, kernel.name, seed)
                    cells.append((cell, benchmark, kernel))
        return sorted(cells, key=lambda entry: entry[0])


@dataclass(frozen=True)
class CellTask:
    """Everything a worker needs to run one cell."""

    cell: SuiteCell
    benchmark: BenchmarkSpec
    kernel: KernelPlan
    f_star: float
    master_seed: int
    n_init: int
    acq_starts: int
    out_dir: str


@dataclass(frozen=True)
class CellOutcome:
    cell: SuiteCell
    ok: bool
    evaluations: int = 0
    cut_locus_hits: int = 0
    objective_failures: int = 0
    message: str = ""

    def as_dict(self) -> dict:
        return {
            "status": "ok" if self.ok else "failed",
            "evaluations": self.evaluations,
            "cut_locus_hits": self.cut_locus_hits,
            "objective_failures": self.objective_failures,
            "message": self.message,
        }


def build_domain(benchmark: BenchmarkSpec, kernel: KernelPlan):
    """
    Search domain and kernel spec of a cell.

    Raises:
        ValueError: If the strategy does not apply to the benchmark manifold
    """
    domain = search_domain(benchmark.manifold, kernel.domain, benchmark.radius)
    spec = None
    if kernel.strategy == Strategy.GP_EI:
        spec = domain_kernel_spec(domain, kernel.family, kernel.nu)
    return domain, spec


def log_regret(regret: Optional[float]) -> Optional[float]:
    """log10 of the regret, floored at REGRET_FLOOR."""
    if regret is None:
        return None
    return math.log10(max(regret, REGRET_FLOOR))


def trace_rows(trace: BoTrace, domain: SearchDomain, f_star: float, seed: int = 0) -> List[Dict[str, str]]:
    """
    CSV rows of a trace.

    Points are written on the benchmark manifold; regret is best_y - f_star
    clipped at zero.
    """
    rows = []
    for record in trace.records:
        regret = max(record.best_y - f_star, 0.0)
        rows.append(
            {
                "seed": str(seed),
                "iter": str(record.iter),
                "phase": record.phase.value,
                "point": format_coords(domain.embed(record.point)),
                "y": format_float(record.y),
                "best_y": format_float(record.best_y),
                "regret": format_float(regret),
                "log10_regret": format_float(log_regret(regret)),
            }
        )
    return rows


def run_cell(task: CellTask) -> CellOutcome:
    """Run one cell and write its trace; failures are logged and reported, never raised."""
    cell = task.cell
    try:
        domain, spec = build_domain(task.benchmark, task.kernel)
        objective = ProjectedObjective(task.benchmark)

        def on_benchmark_manifold(point):
            return objective(domain.embed(point))

        config = BoConfig.create(
            n_iters=task.benchmark.iters,
            spec=spec,
            n_init=task.n_init,
            acq_starts=task.acq_starts,
            seed=cell_seed(task.master_seed, cell.labels, cell.seed),
            strategy=task.kernel.strategy,
            constraint=domain.constraint,
        )
        rng = cell_rng(task.master_seed, cell.labels, cell.seed)
        logger.info(f"Running cell {cell.slug}")
        trace = bo_run(on_benchmark_manifold, domain.manifold, config, f_star=task.f_star, rng=rng)
        TraceRepository(task.out_dir).write_trace(cell, trace_rows(trace, domain, task.f_star, seed=cell.seed))
    except Exception as e:
        logger.error(f"Cell {cell.slug} failed: {type(e).__name__}: {e}")
        return CellOutcome(cell, ok=False, message=f"{type(e).__name__}: {e}")

    if trace.aborted:
        logger.error(f"Cell {cell.slug} aborted after {len(trace)} evaluations")
    return CellOutcome(
        cell,
        ok=not trace.aborted,
        evaluations=len(trace),
        cut_locus_hits=objective.cut_locus_hits,
        objective_failures=trace.failures,
        message="aborted after repeated objective failures" if trace.aborted else "",
    )


def _worker_init(level: str) -> None:
    configure_logging(level)


class RunSuiteUseCase:
    """
    Use case for running a benchmark suite.
    Cells run in a bounded process pool; each writes only its own trace file.
    """

    def __init__(self, repository: TraceRepository, jobs: int = 1, log_level: str = "INFO"):
        self.repository = repository
        self.jobs = max(1, int(jobs))
        self.log_level = log_level

    def _validate(self, plan: SuitePlan) -> List[Tuple[SuiteCell, BenchmarkSpec, KernelPlan]]:
        seen = set()
        for benchmark in plan.benchmarks:
            key = (benchmark.function, benchmark.manifold.name)
            if key in seen:
                raise ValueError(f"Duplicate benchmark {benchmark.function} on {benchmark.manifold.name}")
            seen.add(key)
            for kernel in plan.kernels:
                if kernel.applies_to(benchmark.manifold.name):
                    build_domain(benchmark, kernel)
        cells = plan.cells()
        if not cells:
            raise ValueError("Suite has no cells")
        return cells

    def _run(self, tasks: List[CellTask]) -> List[CellOutcome]:
        if self.jobs == 1 or len(tasks) == 1:
            return [run_cell(task) for task in tasks]
        outcomes = []
        with ProcessPoolExecutor(
            max_workers=self.jobs, initializer=_worker_init, initargs=(self.log_level,)
        ) as executor:
            futures = [(task, executor.submit(run_cell, task)) for task in tasks]
            for task, future in futures:
                try:
                    outcomes.append(future.result())
                except Exception as e:
                    logger.error(f"Worker for {task.cell.slug} crashed: {e}")
                    outcomes.append(CellOutcome(task.cell, ok=False, message=f"worker crashed: {e}"))
        return outcomes

    def execute(self, plan: SuitePlan) -> dict:
        """
        Run every cell of the plan, then summarize.

        Args:
            plan: Resolved suite

        Returns:
            Dict with cell counts, failed cell slugs and output paths

        Raises:
            ValueError: If the plan is empty, has duplicate benchmarks or a
                strategy that does not apply to its manifold
        """
        cells = self._validate(plan)

        f_stars = {}
        benchmarks = []
        for benchmark in plan.benchmarks:
            _, f_star = projected_objective(benchmark)
            f_stars[(benchmark.function, benchmark.manifold.name)] = f_star
            benchmarks.append(
                {
                    "function": benchmark.function,
                    "manifold": manifold_to_dict(benchmark.manifold),
                    "manifold_name": benchmark.manifold.name,
                    "base": encode_point(base_point(benchmark)),
                    "radius": benchmark.radius,
                    "seeds": benchmark.seeds,
                    "iters": benchmark.iters,
                    "f_star": f_star,
                }
            )
        manifest = {
            "master_seed": plan.master_seed,
            "n_init": plan.n_init,
            "acq_starts": plan.acq_starts,
            "regret_threshold": plan.regret_threshold,
            "kernels": [k.as_dict() for k in plan.kernels],
            "benchmarks": benchmarks,
        }
        self.repository.write_manifest(manifest)

        tasks = [
            CellTask(
                cell=cell,
                benchmark=benchmark,
                kernel=kernel,
                f_star=f_stars[(benchmark.function, benchmark.manifold.name)],
                master_seed=plan.master_seed,
                n_init=plan.n_init,
                acq_starts=plan.acq_starts,
                out_dir=str(self.repository.out_dir),
            )
            for cell, benchmark, kernel in cells
        ]
        logger.info(f"Running {len(tasks)} cells with {self.jobs} worker(s)")
        outcomes = sorted(self._run(tasks), key=lambda o: o.cell)

        failed = [o.cell.slug for o in outcomes if not o.ok]
        manifest["cells"] = {o.cell.slug: o.as_dict() for o in outcomes}
        manifest["failed_cells"] = failed
        self.repository.write_manifest(manifest)

        summary = SummarizeSuiteUseCase(self.repository).execute(plan.regret_threshold)
        if failed:
            logger.warning(f"{len(failed)} of {len(tasks)} cells failed")
        return {
            "cells": len(tasks),
            "failed": failed,
            "summary_path": summary["summary_path"],
            "plot_data_path": summary["plot_data_path"],
        }


@dataclass
class _SeriesGroup:
    logs: List[List[float]] = field(default_factory=list)
    hits: List[Optional[int]] = field(default_factory=list)


def _median_hit(hits: List[Optional[int]]) -> str:
    values = np.array([math.inf if h is None else h for h in hits], dtype=float)
    median = float(np.median(values))
    return "" if not math.isfinite(median) else format_float(median)


class SummarizeSuiteUseCase:
    """
    Use case for aggregating trace files into summary and plot data.
    Reads only the trace CSVs, so results can be re-derived from a suite directory.
    """

    def __init__(self, repository: TraceRepository):
        self.repository = repository

    def execute(self, threshold: Optional[float] = None) -> dict:
        """
        Write summary.csv and plot_data.csv.

        Args:
            threshold: log10 regret threshold; defaults to the manifest's value or -2

        Returns:
            Dict with row counts and output paths

        Raises:
            ValueError: If the directory holds no traces
        """
        if threshold is None:
            threshold, _ = self.repository.threshold()
        cells = self.repository.list_cells()
        if not cells:
            raise ValueError(f"No trace files in {self.repository.traces_dir}")

        summary_rows = []
        groups: Dict[Tuple[str, str, str], _SeriesGroup] = defaultdict(_SeriesGroup)
        for cell in cells:
            rows = self.repository.read_trace(cell)
            logs = [float(r["log10_regret"]) for r in rows if r["log10_regret"] != ""]
            hit = next(
                (int(r["iter"]) for r in rows if r["log10_regret"] != "" and float(r["log10_regret"]) <= threshold),
                None,
            )
            summary_rows.append(
                {
                    "manifold": cell.manifold,
                    "kernel": cell.kernel,
                    "seed": cell.seed,
                    "final_log_regret": format_float(logs[-1]) if logs else "",
                    "median_iter_to_threshold": "" if hit is None else hit,
                    "function": cell.function,
                }
            )
            group = groups[cell.labels]
            group.logs.append(logs)
            group.hits.append(hit)

        plot_rows = []
        for (function, manifold, kernel) in sorted(groups):
            group = groups[(function, manifold, kernel)]
            median_hit = _median_hit(group.hits)
            length = max((len(s) for s in group.logs), default=0)
            for i in range(length):
                values = [s[i] for s in group.logs if len(s) > i]
                q25, median, q75 = np.percentile(values, [25, 50, 75])
                plot_rows.append(
                    {
                        "function": function,
                        "manifold": manifold,
                        "kernel": kernel,
                        "iter": i,
                        "n_seeds": len(values),
                        "q25": format_float(q25),
                        "median": format_float(median),
                        "q75": format_float(q75),
                        "median_iter_to_threshold": median_hit,
                    }
                )

        summary_path = self.repository.write_summary(summary_rows)
        plot_path = self.repository.write_plot_data(plot_rows)
        logger.info(f"Summarized {len(cells)} traces into {summary_path} and {plot_path}")
        return {
            "cells": len(cells),
            "summary_rows": len(summary_rows),
            "plot_rows": len(plot_rows),
            "summary_path": str(summary_path),
            "plot_data_path": str(plot_path),
        }
