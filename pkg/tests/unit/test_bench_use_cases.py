"""
Unit tests for suite planning, trace rows and summaries.
"""
import math

import numpy as np
import pytest

from app.application.use_cases.bench_use_cases import (
    KernelPlan,
    RunSuiteUseCase,
    SuitePlan,
    SummarizeSuiteUseCase,
    log_regret,
    trace_rows,
)
from app.domain.entities.benchmark_spec import BenchmarkSpec, SuiteCell
from app.domain.entities.bo_trace import BoRecord, BoTrace, Phase, Strategy
from app.domain.entities.manifold_point import Manifold
from app.domain.services.benchmarks import DomainKind, search_domain
from app.domain.services.manifolds import origin
from app.infrastructure.repositories.trace_repository import TraceRepository, format_float

RANDOM = KernelPlan("random", strategy=Strategy.RANDOM_SEARCH)


def _plan(benchmarks, kernels=(RANDOM,)):
    return SuitePlan(benchmarks=tuple(benchmarks), kernels=tuple(kernels), master_seed=11, n_init=2, acq_starts=1)


# ==================== Planning ====================

def test_kernel_plan_manifold_filter():
    """Test that a kernel entry applies only to its listed manifolds."""
    plan = KernelPlan("chol", family="cholesky_euclidean", domain=DomainKind.CHOLESKY, manifolds=("SPD2",))

    assert plan.applies_to("SPD2")
    assert not plan.applies_to("S2")
    assert RANDOM.applies_to("S2")
    assert plan.as_dict()["domain"] == "cholesky"
    assert KernelPlan("se", nu=math.inf).as_dict()["nu"] is None


def test_suite_cells_are_sorted_and_filtered():
    """Test the cross product of benchmarks, applicable kernels and seeds."""
    benchmarks = [
        BenchmarkSpec.create("levy", Manifold.torus(2), seeds=2, iters=1),
        BenchmarkSpec.create("ackley", Manifold.sphere(2), seeds=1, iters=1),
    ]
    kernels = [RANDOM, KernelPlan("t2_only", manifolds=("T2",))]

    cells = [cell for cell, _, _ in _plan(benchmarks, kernels).cells()]

    assert cells == sorted(cells)
    assert len(cells) == 1 + 2 * 2
    assert SuiteCell("ackley", "S2", "t2_only", 0) not in cells


def test_log_regret_floor():
    """Test the log10 floor for zero regret."""
    assert log_regret(0.0) == pytest.approx(-12.0)
    assert log_regret(0.01) == pytest.approx(-2.0)
    assert log_regret(None) is None


def test_trace_rows_clip_regret():
    """Test that regret below the estimated minimum is clipped at zero."""
    sphere = Manifold.sphere(2)
    domain = search_domain(sphere)
    point = origin(sphere)
    trace = BoTrace.create(
        [BoRecord(0, Phase.INIT, point, 1.5, 1.5), BoRecord(1, Phase.BO, point, 0.9, 0.9)]
    )

    rows = trace_rows(trace, domain, f_star=1.0, seed=4)

    assert rows[0]["regret"] == format_float(0.5)
    assert rows[1]["regret"] == format_float(0.0)
    assert float(rows[1]["log10_regret"]) == pytest.approx(-12.0)
    assert rows[1]["phase"] == "bo"
    assert rows[0]["point"] == "0;0;1"
    assert rows[0]["seed"] == "4"


# ==================== Running ====================

def test_run_suite_rejects_invalid_plans(tmp_path):
    """Test empty, duplicate and inapplicable suites."""
    use_case = RunSuiteUseCase(TraceRepository(tmp_path))
    sphere_bench = BenchmarkSpec.create("ackley", Manifold.sphere(2), seeds=1, iters=1)

    with pytest.raises(ValueError):
        use_case.execute(_plan([sphere_bench], kernels=()))
    with pytest.raises(ValueError):
        use_case.execute(_plan([sphere_bench, sphere_bench]))
    with pytest.raises(ValueError):
        use_case.execute(_plan([sphere_bench], kernels=[KernelPlan("chol", domain=DomainKind.CHOLESKY)]))


def test_run_suite_writes_traces_and_summary(tmp_path):
    """Test a small random-search suite end to end."""
    repository = TraceRepository(tmp_path)
    benchmark = BenchmarkSpec.create("ackley", Manifold.sphere(2), seeds=2, iters=2)

    result = RunSuiteUseCase(repository).execute(_plan([benchmark]))

    assert result["cells"] == 2
    assert result["failed"] == []
    assert len(repository.list_cells()) == 2
    assert len(repository.read_trace(SuiteCell("ackley", "S2", "random", 1))) == 4
    manifest = repository.read_manifest()
    assert manifest["benchmarks"][0]["manifold_name"] == "S2"
    assert manifest["cells"]["ackley__S2__random__seed000"]["status"] == "ok"
    assert len(repository.read_summary()) == 2


def test_run_suite_is_reproducible(tmp_path):
    """Test that the same plan writes byte-identical summaries."""
    benchmark = BenchmarkSpec.create("levy", Manifold.torus(2), seeds=1, iters=2)

    for name in ("a", "b"):
        RunSuiteUseCase(TraceRepository(tmp_path / name)).execute(_plan([benchmark]))

    assert (tmp_path / "a" / "summary.csv").read_bytes() == (tmp_path / "b" / "summary.csv").read_bytes()


# ==================== Summaries ====================

def _write_trace(repository, cell, logs):
    rows = [
        {
            "iter": str(i),
            "phase": "init" if i == 0 else "bo",
            "y": "0.0",
            "best_y": "0.0",
            "regret": format_float(10.0 ** v),
            "log10_regret": format_float(v),
            "point": "0;0;1",
        }
        for i, v in enumerate(logs)
    ]
    repository.write_trace(cell, rows)


def test_summarize_threshold_and_quartiles(tmp_path):
    """Test final regret, threshold iterations and per-iteration quartiles."""
    repository = TraceRepository(tmp_path)
    _write_trace(repository, SuiteCell("ackley", "S2", "matern", 0), [0.0, -1.0, -3.0])
    _write_trace(repository, SuiteCell("ackley", "S2", "matern", 1), [0.0, -2.5, -2.5])
    _write_trace(repository, SuiteCell("ackley", "S2", "matern", 2), [0.0, 0.0, 0.0])

    result = SummarizeSuiteUseCase(repository).execute(threshold=-2.0)

    summary = repository.read_summary()
    assert result["summary_rows"] == 3
    assert [row["median_iter_to_threshold"] for row in summary] == ["2", "1", ""]
    assert float(summary[0]["final_log_regret"]) == -3.0

    plot = repository.read_plot_data()
    assert result["plot_rows"] == 3
    assert [int(row["iter"]) for row in plot] == [0, 1, 2]
    last = plot[-1]
    assert float(last["median"]) == pytest.approx(np.median([-3.0, -2.5, 0.0]))
    assert float(last["q25"]) == pytest.approx(np.percentile([-3.0, -2.5, 0.0], 25))
    assert float(last["median_iter_to_threshold"]) == 2.0


def test_summarize_uses_manifest_threshold(tmp_path):
    """Test that the manifest threshold is the default."""
    repository = TraceRepository(tmp_path)
    repository.write_manifest({"regret_threshold": -0.5})
    _write_trace(repository, SuiteCell("levy", "T2", "se", 0), [0.0, -1.0])

    SummarizeSuiteUseCase(repository).execute()

    assert repository.read_summary()[0]["median_iter_to_threshold"] == "1"


def test_summarize_without_traces(tmp_path):
    """Test that an empty directory is an error."""
    with pytest.raises(ValueError):
        SummarizeSuiteUseCase(TraceRepository(tmp_path)).execute()
