"""
Integration tests for the command-line interface.
"""
import csv
import json

import numpy as np
import pytest

from app.presentation.cli import EXIT_FAILED, EXIT_INVALID, EXIT_OK, main


def _write(path, payload):
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


def _suite(tmp_path, kernels, **extra):
    payload = {
        "master_seed": 5,
        "n_init": 2,
        "acq_starts": 1,
        "kernels": kernels,
        "benchmarks": [{"function": "ackley", "manifolds": [{"kind": "torus", "dim": 1}]}],
        **extra,
    }
    return _write(tmp_path / "suite.json", payload)


SMALL_KERNELS = [
    {"name": "matern", "family": "riemannian_matern", "nu": 2.5},
    {"name": "random", "strategy": "random_search"},
]


# ==================== bench ====================

def test_bench_run_rejects_empty_kernel_list(tmp_path):
    """Test that a suite without kernels is an invalid configuration."""
    config = _suite(tmp_path, [])

    assert main(["bench", "run", "--config", str(config), "--out", str(tmp_path / "out")]) == EXIT_INVALID


def test_bench_run_rejects_unknown_function(tmp_path):
    """Test validation of benchmark function names."""
    payload = {
        "kernels": [{"name": "random", "strategy": "random_search"}],
        "benchmarks": [{"function": "branin", "manifolds": [{"kind": "sphere", "dim": 2}]}],
    }
    config = _write(tmp_path / "suite.json", payload)

    assert main(["bench", "run", "--config", str(config), "--out", str(tmp_path / "out")]) == EXIT_INVALID


def test_bench_run_writes_every_cell(tmp_path):
    """Test two kernels x two seeds and a byte-identical rerun."""
    config = _suite(tmp_path, SMALL_KERNELS)
    outputs = []
    for name in ("first", "second"):
        out = tmp_path / name
        code = main(["bench", "run", "--config", str(config), "--seeds", "2", "--iters", "2", "--out", str(out)])
        assert code == EXIT_OK
        outputs.append(out)

    first = outputs[0]
    assert len(list((first / "traces").glob("*.csv"))) == 4
    with (first / "summary.csv").open(newline="") as handle:
        rows = list(csv.DictReader(handle))
    assert len(rows) == 4
    assert {row["kernel"] for row in rows} == {"matern", "random"}
    assert (first / "plot_data.csv").exists()
    manifest = json.loads((first / "manifest.json").read_text())
    assert manifest["failed_cells"] == []
    assert (first / "summary.csv").read_bytes() == (outputs[1] / "summary.csv").read_bytes()


def test_bench_summarize_recomputes_from_traces(tmp_path):
    """Test that summarize reproduces the summary written by run."""
    config = _suite(tmp_path, [{"name": "random", "strategy": "random_search"}])
    out = tmp_path / "out"
    assert main(["bench", "run", "--config", str(config), "--seeds", "2", "--iters", "3", "--out", str(out)]) == EXIT_OK
    original = (out / "summary.csv").read_bytes()
    (out / "summary.csv").unlink()

    assert main(["bench", "summarize", "--in", str(out)]) == EXIT_OK
    assert (out / "summary.csv").read_bytes() == original


def test_bench_summarize_missing_directory(tmp_path):
    """Test that summarizing an empty directory fails."""
    assert main(["bench", "summarize", "--in", str(tmp_path / "nothing")]) == EXIT_FAILED


# ==================== kernel / gp ====================

def test_kernel_eval_writes_csv(tmp_path):
    """Test a Gram matrix written as CSV."""
    spec = _write(
        tmp_path / "spec.json",
        {"kernel": {"family": "riemannian_se", "kappa": 0.5}, "manifold": {"kind": "sphere", "dim": 2}},
    )
    points = _write(tmp_path / "points.json", [[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
    out = tmp_path / "gram.csv"

    assert main(["kernel", "eval", "--spec", str(spec), "--points", str(points), "--out", str(out)]) == EXIT_OK

    header, *lines = out.read_text().splitlines()
    matrix = [[float(v) for v in line.split(",")] for line in lines]
    assert header == "0,1"
    assert len(matrix) == 2
    assert matrix[0][0] == pytest.approx(1.0)
    assert matrix[0][1] == pytest.approx(matrix[1][0])


def test_kernel_eval_invalid_point(tmp_path):
    """Test that an off-manifold point fails."""
    spec = _write(
        tmp_path / "spec.json",
        {"kernel": {"family": "riemannian_se"}, "manifold": {"kind": "sphere", "dim": 2}},
    )
    points = _write(tmp_path / "points.json", [[2.0, 0.0, 0.0]])

    assert main(["kernel", "eval", "--spec", str(spec), "--points", str(points)]) == EXIT_FAILED


def test_gp_fit_writes_result(tmp_path):
    """Test GP fitting from spec and data files."""
    spec = _write(
        tmp_path / "spec.json",
        {
            "kernel": {"family": "riemannian_matern", "nu": 2.5},
            "manifold": {"kind": "torus", "dim": 1},
            "restarts": 1,
        },
    )
    data = _write(
        tmp_path / "data.json",
        {"inputs": [[0.0], [0.3], [0.6]], "targets": [0.0, 1.0, -0.5], "test_points": [[0.9]]},
    )
    out = tmp_path / "fit.json"

    assert main(["gp", "fit", "--spec", str(spec), "--data", str(data), "--out", str(out)]) == EXIT_OK

    result = json.loads(out.read_text())
    assert result["n"] == 3
    assert len(result["variance"]) == 1


# ==================== acceptance ====================

@pytest.mark.slow
def test_sphere_suite_without_failures(tmp_path):
    """Test a moderate geometry-aware versus Euclidean suite on S2 and SPD2."""
    payload = {
        "master_seed": 20211108,
        "kernels": [
            {"name": "matern", "family": "riemannian_matern", "nu": 2.5},
            {"name": "euclid", "family": "euclidean_matern", "nu": 2.5, "domain": "euclidean"},
        ],
        "benchmarks": [
            {"function": "ackley", "manifolds": [{"kind": "sphere", "dim": 2}, {"kind": "spd", "dim": 2}]}
        ],
    }
    config = _write(tmp_path / "suite.json", payload)
    out = tmp_path / "out"

    code = main(["bench", "run", "--config", str(config), "--seeds", "3", "--iters", "20", "--out", str(out)])

    assert code == EXIT_OK
    with (out / "summary.csv").open(newline="") as handle:
        rows = list(csv.DictReader(handle))
    assert len(rows) == 2 * 2 * 3
    assert all(row["final_log_regret"] != "" for row in rows)


@pytest.mark.slow
def test_geometry_aware_bo_beats_baselines(tmp_path):
    """Test median simple regret of geometry-aware BO against random search and a Euclidean kernel on S2 and T2."""
    payload = {
        "master_seed": 20211108,
        "n_init": 5,
        "kernels": [
            {"name": "se", "family": "riemannian_se", "nu": None},
            {"name": "matern", "family": "riemannian_matern", "nu": 2.5},
            {"name": "euclid", "family": "euclidean_matern", "nu": 2.5, "domain": "euclidean"},
            {"name": "random", "strategy": "random_search"},
        ],
        "benchmarks": [
            {"function": "ackley", "manifolds": [{"kind": "sphere", "dim": 2}, {"kind": "torus", "dim": 2}]}
        ],
    }
    config = _write(tmp_path / "suite.json", payload)
    out = tmp_path / "out"

    code = main(
        ["bench", "run", "--config", str(config), "--seeds", "10", "--iters", "100", "--jobs", "4", "--out", str(out)]
    )

    assert code == EXIT_OK
    with (out / "summary.csv").open(newline="") as handle:
        rows = list(csv.DictReader(handle))
    medians = {}
    for manifold in ("S2", "T2"):
        for kernel in ("se", "matern", "euclid", "random"):
            regrets = [
                10.0 ** float(r["final_log_regret"])
                for r in rows
                if r["manifold"] == manifold and r["kernel"] == kernel
            ]
            assert len(regrets) == 10
            medians[manifold, kernel] = float(np.median(regrets))

    for kernel in ("se", "matern"):
        for manifold in ("S2", "T2"):
            assert medians[manifold, kernel] <= medians[manifold, "random"]
            assert medians[manifold, kernel] <= 1.05 * medians[manifold, "euclid"]
        assert any(medians[m, kernel] < medians[m, "euclid"] for m in ("S2", "T2"))
