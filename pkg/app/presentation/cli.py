"""
Command-line interface.
Part of Presentation layer - argparse front end over the use cases.

    python -m app bench run --config suite.json [--seeds N --iters M --out DIR --jobs K --paper-scale]
    python -m app bench summarize --in DIR [--threshold T]
    python -m app kernel eval --spec spec.json --points points.json [--out gram.csv]
    python -m app gp fit --spec spec.json --data data.json [--out result.json]
    python -m app serve [--host H --port P]
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from app.application.use_cases.bench_use_cases import RunSuiteUseCase, SummarizeSuiteUseCase
from app.application.use_cases.gp_use_cases import FitGpUseCase
from app.application.use_cases.kernel_use_cases import EvaluateKernelUseCase
from app.core.config import settings
from app.core.logging import configure_logging
from app.infrastructure.repositories.trace_repository import TraceRepository, write_matrix_csv
from app.presentation.schemas.bench import SuiteConfig
from app.presentation.schemas.gp import GpFitRequest
from app.presentation.schemas.kernels import GramRequest

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INVALID = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="geobo", description="Geometry-aware Bayesian optimization")
    parser.add_argument("--log-level", default=settings.LOG_LEVEL, help="Log level (default: %(default)s)")
    commands = parser.add_subparsers(dest="command", required=True)

    bench = commands.add_parser("bench", help="Benchmark suites").add_subparsers(dest="action", required=True)
    run = bench.add_parser("run", help="Run a suite")
    run.add_argument("--config", required=True, type=Path, help="Suite JSON file")
    run.add_argument("--seeds", type=int, help="Repetitions per cell")
    run.add_argument("--iters", type=int, help="BO iterations per run")
    run.add_argument("--out", type=Path, default=Path(settings.BENCH_OUT_DIR), help="Output directory")
    run.add_argument("--jobs", type=int, default=settings.BENCH_JOBS, help="Worker processes")
    run.add_argument(
        "--paper-scale",
        action="store_true",
        help=f"Use {settings.BENCH_PAPER_SEEDS} seeds x {settings.BENCH_PAPER_ITERS} iterations",
    )
    summarize = bench.add_parser("summarize", help="Recompute summary and plot data from traces")
    summarize.add_argument("--in", dest="in_dir", required=True, type=Path, help="Suite output directory")
    summarize.add_argument("--threshold", type=float, help="log10 regret threshold")

    kernel = commands.add_parser("kernel", help="Kernel evaluation").add_subparsers(dest="action", required=True)
    evaluate = kernel.add_parser("eval", help="Gram matrix of a point set")
    evaluate.add_argument("--spec", required=True, type=Path, help='JSON with "kernel" and "manifold"')
    evaluate.add_argument("--points", required=True, type=Path, help='JSON list of points or {"points", "others"}')
    evaluate.add_argument("--out", type=Path, help="Write the matrix as CSV instead of printing JSON")

    gp = commands.add_parser("gp", help="Gaussian processes").add_subparsers(dest="action", required=True)
    fit = gp.add_parser("fit", help="Fit hyperparameters")
    fit.add_argument("--spec", required=True, type=Path, help='JSON with "kernel", "manifold" and fit options')
    fit.add_argument("--data", required=True, type=Path, help='JSON with "inputs", "targets", optional "test_points"')
    fit.add_argument("--out", type=Path, help="Write the result JSON here instead of printing it")

    serve = commands.add_parser("serve", help="Run the HTTP API")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    return parser


def _read_json(path: Path):
    return json.loads(path.read_text(encoding="utf-8"))


def _emit(payload: dict, out: Optional[Path]) -> None:
    text = json.dumps(payload, indent=2)
    if out is None:
        print(text)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text + "\n", encoding="utf-8")


def bench_run(args) -> int:
    config = SuiteConfig.model_validate_json(args.config.read_text(encoding="utf-8"))
    seeds, iters = args.seeds, args.iters
    if args.paper_scale:
        seeds = seeds or settings.BENCH_PAPER_SEEDS
        iters = iters or settings.BENCH_PAPER_ITERS
    plan = config.to_plan(seeds=seeds, iters=iters)
    use_case = RunSuiteUseCase(TraceRepository(args.out), jobs=args.jobs, log_level=args.log_level)
    result = use_case.execute(plan)
    _emit(result, None)
    if result["failed"]:
        logger.error(f"{len(result['failed'])} cell(s) failed: {', '.join(result['failed'])}")
        return EXIT_FAILED
    return EXIT_OK


def bench_summarize(args) -> int:
    result = SummarizeSuiteUseCase(TraceRepository(args.in_dir)).execute(args.threshold)
    _emit(result, None)
    return EXIT_OK


def kernel_eval(args) -> int:
    points = _read_json(args.points)
    if isinstance(points, list):
        points = {"points": points}
    request = GramRequest.model_validate({**_read_json(args.spec), **points})
    result = EvaluateKernelUseCase().execute(
        spec=request.kernel.to_domain(),
        manifold=request.manifold.to_domain(),
        points=request.points,
        others=request.others,
    )
    if args.out is not None:
        write_matrix_csv(args.out, result["matrix"])
        if "min_eigenvalue" in result:
            logger.info(f"Minimum Gram eigenvalue: {result['min_eigenvalue']:.6g}")
    else:
        _emit(result, None)
    return EXIT_OK


def gp_fit(args) -> int:
    request = GpFitRequest.model_validate({**_read_json(args.spec), **_read_json(args.data)})
    result = FitGpUseCase().execute(
        spec=request.kernel.to_domain(),
        manifold=request.manifold.to_domain(),
        inputs=request.inputs,
        targets=request.targets,
        test_points=request.test_points,
        noise=request.noise,
        optimize_nu=request.optimize_nu,
        restarts=request.restarts,
        bounds=request.bounds.to_domain() if request.bounds else None,
        seed=request.seed,
    )
    _emit(result, args.out)
    return EXIT_OK


def serve(args) -> int:
    import uvicorn

    uvicorn.run("app.main:app", host=args.host, port=args.port)
    return EXIT_OK


HANDLERS = {
    ("bench", "run"): bench_run,
    ("bench", "summarize"): bench_summarize,
    ("kernel", "eval"): kernel_eval,
    ("gp", "fit"): gp_fit,
    ("serve", None): serve,
}


def main(argv: Optional[List[str]] = None) -> int:
    """
    Parse arguments and dispatch.

    Returns:
        0 on success, 1 on failures (including failed suite cells),
        2 on invalid configuration
    """
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    handler = HANDLERS[(args.command, getattr(args, "action", None))]
    try:
        return handler(args)
    except ValidationError as e:
        print(f"Invalid configuration:\n{e}", file=sys.stderr)
        return EXIT_INVALID
    except (ValueError, FileNotFoundError, json.JSONDecodeError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_FAILED
