"""
Integration tests for the HTTP API.
"""
import math

import pytest
from fastapi.testclient import TestClient

from app.main import app

client = TestClient(app)

SPHERE = {"kind": "sphere", "dim": 2}
POINTS = [[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 0.6, 0.8]]


def test_health():
    """Test the health endpoint."""
    response = client.get("/api/v1/health")

    assert response.status_code == 200
    assert response.json()["status"] == "healthy"


def test_root_lists_docs():
    """Test the root endpoint."""
    assert client.get("/").json()["docs"] == "/docs"


def test_gram_matrix():
    """Test a Riemannian Matern Gram matrix on the sphere."""
    payload = {
        "kernel": {"family": "riemannian_matern", "nu": 2.5, "kappa": 0.5, "sigma2": 2.0},
        "manifold": SPHERE,
        "points": POINTS,
    }

    response = client.post("/api/v1/kernels/gram", json=payload)

    assert response.status_code == 200
    body = response.json()
    assert body["manifold"] == "S2"
    assert len(body["matrix"]) == 3
    assert body["matrix"][0][0] == pytest.approx(2.0)
    assert body["matrix"][0][1] == pytest.approx(body["matrix"][1][0])
    assert body["min_eigenvalue"] is None


def test_gram_reports_naive_kernel_eigenvalue():
    """Test that the naive geodesic kernel reports its minimum eigenvalue."""
    payload = {"kernel": {"family": "naive_geodesic_se", "kappa": 1.0}, "manifold": SPHERE, "points": POINTS}

    body = client.post("/api/v1/kernels/gram", json=payload).json()

    assert body["nu"] is None
    assert math.isfinite(body["min_eigenvalue"])


def test_gram_rejects_off_manifold_points():
    """Test that invalid points are a client error."""
    payload = {
        "kernel": {"family": "riemannian_se", "kappa": 1.0},
        "manifold": SPHERE,
        "points": [[1.0, 1.0, 0.0]],
    }

    assert client.post("/api/v1/kernels/gram", json=payload).status_code == 400


def test_gram_rejects_unknown_family():
    """Test request validation of the kernel family."""
    payload = {"kernel": {"family": "laplacian"}, "manifold": SPHERE, "points": POINTS}

    assert client.post("/api/v1/kernels/gram", json=payload).status_code == 422


def test_gp_fit_with_predictions():
    """Test GP fitting on the circle with posterior predictions."""
    inputs = [[0.0], [0.2], [0.4], [0.6], [0.8]]
    payload = {
        "kernel": {"family": "riemannian_matern", "nu": 1.5, "kappa": 0.3},
        "manifold": {"kind": "torus", "dim": 1},
        "inputs": inputs,
        "targets": [math.sin(2 * math.pi * x[0]) for x in inputs],
        "test_points": [[0.1], [0.5]],
        "restarts": 2,
        "seed": 3,
    }

    response = client.post("/api/v1/gp/fit", json=payload)

    assert response.status_code == 200
    body = response.json()
    assert body["n"] == 5
    assert body["hyperparameters"]["family"] == "riemannian_matern"
    assert len(body["mean"]) == 2
    assert all(v >= 0 for v in body["variance"])
    assert math.isfinite(body["log_marginal_likelihood"])


def test_gp_fit_rejects_mismatched_lengths():
    """Test that input and target counts must agree."""
    payload = {
        "kernel": {"family": "riemannian_se"},
        "manifold": SPHERE,
        "inputs": POINTS,
        "targets": [1.0, 2.0],
    }

    assert client.post("/api/v1/gp/fit", json=payload).status_code == 422


def test_gp_fit_rejects_unsupported_pair():
    """Test that a Cholesky kernel on the sphere is a client error."""
    payload = {
        "kernel": {"family": "cholesky_euclidean"},
        "manifold": SPHERE,
        "inputs": POINTS,
        "targets": [1.0, 2.0, 3.0],
    }

    assert client.post("/api/v1/gp/fit", json=payload).status_code == 400
