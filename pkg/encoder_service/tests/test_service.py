"""Endpoint contract: determinism, normalization, validation, lifecycle."""

from __future__ import annotations

import numpy as np
import pytest
from fastapi.testclient import TestClient

from encoder_service.app import create_app
from encoder_service.encoder import FrozenRandomFeatureEncoder


@pytest.fixture
def client(tmp_path):
    app = create_app(checkpoint=str(tmp_path / "weights.npz"))
    return TestClient(app)


def _matrix(rows=12, cols=7, seed=0):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(rows, cols)).cumsum(axis=0).tolist()


def _embed(client, matrix, columns=None):
    body = {"matrix": matrix}
    if columns is not None:
        body["columns"] = columns
    response = client.post("/embed", json=body)
    assert response.status_code == 200, response.text
    return response.json()


class TestEmbed:
    def test_identical_requests_identical_vectors(self, client):
        matrix = _matrix()
        first = _embed(client, matrix)
        second = _embed(client, matrix)
        assert first["vector"] == second["vector"]
        assert first["encoder_id"] == second["encoder_id"]

    def test_unit_norm_within_tolerance(self, client):
        for seed in range(5):
            payload = _embed(client, _matrix(seed=seed))
            norm = float(np.linalg.norm(payload["vector"]))
            assert abs(norm - 1.0) < 1e-6
            assert payload["dim"] == len(payload["vector"])

    def test_copy_has_cosine_one(self, client):
        matrix = _matrix(12, 7)
        a = np.array(_embed(client, matrix)["vector"])
        b = np.array(_embed(client, [row[:] for row in matrix])["vector"])
        assert float(a @ b) == pytest.approx(1.0, abs=1e-12)

    def test_transpose_changes_vector(self, client):
        matrix = np.array(_matrix(12, 7, seed=3))
        a = np.array(_embed(client, matrix.tolist())["vector"])
        b = np.array(_embed(client, matrix.T.tolist())["vector"])
        assert float(a @ b) < 1.0 - 1e-6

    def test_columns_accepted(self, client):
        payload = _embed(client, _matrix(4, 2), columns=["a", "b"])
        assert payload["dim"] > 0


class TestValidation:
    def test_missing_matrix_field_named(self, client):
        response = client.post("/embed", json={"columns": ["a"]})
        assert response.status_code == 400
        assert "matrix" in response.json()["error"]

    def test_ragged_matrix_rejected(self, client):
        response = client.post("/embed", json={"matrix": [[1.0, 2.0], [3.0]]})
        assert response.status_code == 400
        assert "matrix" in response.json()["error"]

    def test_column_count_mismatch(self, client):
        response = client.post(
            "/embed", json={"matrix": [[1.0, 2.0]], "columns": ["only-one"]}
        )
        assert response.status_code == 400
        assert "columns" in response.json()["error"]

    def test_non_numeric_cell_rejected(self, client):
        response = client.post("/embed", json={"matrix": [["oops", 1.0]]})
        assert response.status_code == 400

    def test_non_finite_rejected(self, client):
        import json as _json

        body = _json.dumps({"matrix": [[1.0, float("inf")]]})  # emits bare Infinity
        response = client.post(
            "/embed", content=body, headers={"Content-Type": "application/json"}
        )
        assert response.status_code == 400


class TestHealthLifecycle:
    def test_before_load_is_503(self, tmp_path):
        app = create_app(checkpoint=str(tmp_path / "weights.npz"), lazy=True)
        client = TestClient(app)
        assert client.get("/health").status_code == 503

    def test_after_load_reports_identity(self, client):
        response = client.get("/health")
        assert response.status_code == 200
        payload = response.json()
        assert payload["status"] == "ok"
        assert payload["dim"] > 0
        assert payload["encoder_id"].startswith("frozen-rf-")

    def test_lazy_load_on_first_embed(self, tmp_path):
        app = create_app(checkpoint=str(tmp_path / "weights.npz"), lazy=True)
        client = TestClient(app)
        assert client.get("/health").status_code == 503
        _embed(client, _matrix(4, 2))
        assert client.get("/health").status_code == 200

    def test_encoder_id_stable_across_restarts(self, tmp_path):
        checkpoint = str(tmp_path / "weights.npz")
        first = TestClient(create_app(checkpoint=checkpoint))
        second = TestClient(create_app(checkpoint=checkpoint))
        a = first.get("/health").json()["encoder_id"]
        b = second.get("/health").json()["encoder_id"]
        assert a == b
        va = _embed(first, _matrix(6, 3))["vector"]
        vb = _embed(second, _matrix(6, 3))["vector"]
        assert va == vb


class TestFrozenEncoder:
    def test_checkpoint_round_trip(self, tmp_path):
        path = tmp_path / "weights.npz"
        created = FrozenRandomFeatureEncoder.load_or_create(path)
        loaded = FrozenRandomFeatureEncoder.load_or_create(path)
        assert created.encoder_id == loaded.encoder_id
        matrix = np.arange(24.0).reshape(8, 3)
        np.testing.assert_array_equal(created.encode(matrix), loaded.encode(matrix))

    def test_different_seeds_different_identities(self):
        a = FrozenRandomFeatureEncoder.create(seed=1)
        b = FrozenRandomFeatureEncoder.create(seed=2)
        assert a.encoder_id != b.encoder_id

    def test_rejects_bad_input(self):
        encoder = FrozenRandomFeatureEncoder.create()
        with pytest.raises(ValueError):
            encoder.encode(np.zeros((0, 2)))
        with pytest.raises(ValueError):
            encoder.encode(np.array([[np.nan, 1.0]]))
