"""Temporal and semantic embedding behavior."""

from __future__ import annotations

import numpy as np
import pytest

from tsrationale.encoders import (
    RemoteTemporalEncoder,
    TabularMatrix,
    TemporalStatsEncoder,
    builtin_dimension,
    encode_temporal,
    encode_text,
    tabularize,
)
from tsrationale.errors import PipelineError, RequestError, TransportError

from conftest import make_sample


class TestTabularize:
    def test_shape_and_names_preserved(self):
        window = np.arange(12.0).reshape(4, 3)
        sample = make_sample("s0", window, names=("a", "b", "c"))
        matrix = tabularize(sample)
        assert matrix.rows == 4 and matrix.cols == 3
        assert matrix.column_names == ("a", "b", "c")
        np.testing.assert_array_equal(matrix.values, window)

    def test_degenerate_one_by_one(self):
        matrix = tabularize(make_sample("s0", np.array([[7.0]]), names=("x",)))
        assert matrix.rows == 1 and matrix.cols == 1

    def test_column_order_follows_variable_names(self):
        window = np.array([[1.0, 2.0], [3.0, 4.0]])
        matrix = tabularize(make_sample("s0", window, names=("left", "right")))
        np.testing.assert_array_equal(matrix.values[:, 0], [1.0, 3.0])


class TestBuiltinTemporalEncoder:
    def test_dimension_formula(self):
        assert builtin_dimension(7) == 77
        rng = np.random.default_rng(0)
        matrix = TabularMatrix(rng.normal(size=(12, 7)), tuple(f"v{i}" for i in range(7)))
        vec = encode_temporal(matrix)
        assert vec.dim == 77

    def test_constant_matrix_is_finite(self):
        matrix = TabularMatrix(np.full((6, 3), 4.2), ("a", "b", "c"))
        vec = encode_temporal(matrix)
        assert np.isfinite(vec.values).all()
        assert np.all(vec.values == 0.0)

    def test_unit_norm(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            matrix = TabularMatrix(rng.normal(size=(10, 4)), ("a", "b", "c", "d"))
            vec = encode_temporal(matrix)
            assert abs(np.linalg.norm(vec.values) - 1.0) < 1e-6

    def test_identical_inputs_identical_vectors(self):
        rng = np.random.default_rng(2)
        values = rng.normal(size=(8, 3))
        a = encode_temporal(TabularMatrix(values.copy(), ("a", "b", "c")))
        b = encode_temporal(TabularMatrix(values.copy(), ("a", "b", "c")))
        np.testing.assert_array_equal(a.values, b.values)

    def test_time_permutation_changes_embedding(self):
        rng = np.random.default_rng(3)
        values = rng.normal(size=(10, 2)).cumsum(axis=0)
        base = encode_temporal(TabularMatrix(values, ("a", "b")))
        permuted = encode_temporal(TabularMatrix(values[::-1].copy(), ("a", "b")))
        assert not np.array_equal(base.values, permuted.values)

    def test_constant_input_permutation_invariant(self):
        values = np.full((10, 2), 3.0)
        base = encode_temporal(TabularMatrix(values, ("a", "b")))
        permuted = encode_temporal(TabularMatrix(values[::-1].copy(), ("a", "b")))
        np.testing.assert_array_equal(base.values, permuted.values)

    def test_positive_scaling_invariance_exact(self):
        # Power-of-two scaling keeps z-normalization bit-exact.
        rng = np.random.default_rng(4)
        values = rng.normal(size=(12, 3))
        scaled = values.copy()
        scaled[:, 1] *= 4.0
        a = encode_temporal(TabularMatrix(values, ("a", "b", "c")))
        b = encode_temporal(TabularMatrix(scaled, ("a", "b", "c")))
        np.testing.assert_array_equal(a.values, b.values)

    def test_non_finite_rejected(self):
        values = np.ones((4, 2))
        values[1, 0] = np.nan
        with pytest.raises(PipelineError):
            encode_temporal(TabularMatrix(values, ("a", "b")))

    def test_transformer_interface(self):
        rng = np.random.default_rng(5)
        samples = [
            make_sample(f"s{i}", rng.normal(size=(6, 2)), names=("a", "b"))
            for i in range(4)
        ]
        encoder = TemporalStatsEncoder().fit(samples)
        matrix = encoder.transform(samples)
        assert matrix.shape == (4, builtin_dimension(2))
        params = encoder.get_params()
        assert params == {}


class TestEncodeText:
    def test_deterministic(self, uncached_mock):
        a = encode_text("occupancy rises through the evening", uncached_mock)
        b = encode_text("occupancy rises through the evening", uncached_mock)
        np.testing.assert_array_equal(a.values, b.values)

    def test_unit_norm(self, uncached_mock):
        vec = encode_text("a short summary of the chart", uncached_mock)
        assert abs(np.linalg.norm(vec.values) - 1.0) < 1e-6

    def test_distinct_texts_not_parallel(self, uncached_mock):
        a = encode_text("solar radiation peaks at noon", uncached_mock)
        b = encode_text("humidity collapses before the storm", uncached_mock)
        assert float(np.dot(a.values, b.values)) < 1.0 - 1e-6

    def test_empty_text_rejected(self, uncached_mock):
        with pytest.raises(PipelineError):
            encode_text("", uncached_mock)


class _FakeResponse:
    def __init__(self, status_code=200, payload=None):
        self.status_code = status_code
        self._payload = payload or {}
        self.text = "err"

    def json(self):
        return self._payload


class TestRemoteTemporalEncoder:
    def test_wire_format_and_normalization(self, monkeypatch):
        seen = {}

        def fake_post(url, json=None, timeout=None):
            seen["url"] = url
            seen["body"] = json
            return _FakeResponse(200, {"vector": [3.0, 4.0], "dim": 2, "encoder_id": "svc-1"})

        monkeypatch.setattr("tsrationale.encoders.requests.post", fake_post)
        encoder = RemoteTemporalEncoder("http://localhost:9999")
        matrix = TabularMatrix(np.array([[1.0, 2.0], [3.0, 4.0]]), ("a", "b"))
        vec = encoder.encode(matrix)
        assert seen["url"] == "http://localhost:9999/embed"
        assert seen["body"] == {"matrix": [[1.0, 2.0], [3.0, 4.0]], "columns": ["a", "b"]}
        np.testing.assert_allclose(vec.values, [0.6, 0.8])
        assert vec.encoder_id == "svc-1"

    def test_http_error_surfaces(self, monkeypatch):
        monkeypatch.setattr(
            "tsrationale.encoders.requests.post",
            lambda *a, **k: _FakeResponse(500),
        )
        encoder = RemoteTemporalEncoder("http://localhost:9999")
        matrix = TabularMatrix(np.ones((2, 2)), ("a", "b"))
        with pytest.raises(RequestError):
            encoder.encode(matrix)

    def test_connection_error_is_transport(self, monkeypatch):
        import requests as _requests

        def raising(*a, **k):
            raise _requests.ConnectionError("refused")

        monkeypatch.setattr("tsrationale.encoders.requests.post", raising)
        encoder = RemoteTemporalEncoder("http://localhost:9999")
        with pytest.raises(TransportError):
            encoder.encode(TabularMatrix(np.ones((2, 2)), ("a", "b")))
