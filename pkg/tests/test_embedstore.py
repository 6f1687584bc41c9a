import json
import math
import struct

import httpx
import numpy as np
import pytest

from ontolearn.embedstore import (
    MAGIC,
    cosine,
    fetch_embeddings,
    knn,
    l2_normalize,
    read_store,
    write_store,
)
from ontolearn.errors import DataError, ServiceError

from conftest import make_store


class TestL2Normalize:
    def test_three_four_five(self):
        assert np.allclose(l2_normalize(np.array([3.0, 4.0])), [0.6, 0.8])

    def test_unit_vector_unchanged(self):
        v = np.array([1.0, 0.0, 0.0])
        assert np.allclose(l2_normalize(v), v)

    def test_zero_vector_errors(self):
        with pytest.raises(DataError, match="zero-norm"):
            l2_normalize(np.zeros(2))

    def test_idempotent(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            v = rng.normal(size=5)
            once = l2_normalize(v)
            assert np.allclose(l2_normalize(once), once, atol=1e-6)


class TestCosine:
    def test_orthogonal(self):
        assert cosine(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == pytest.approx(0.0)

    def test_identity(self):
        v = np.array([2.0, -1.0, 3.0])
        assert cosine(v, v) == pytest.approx(1.0)

    def test_analytic(self):
        got = cosine(np.array([1.0, 1.0]), np.array([1.0, 0.0]))
        assert got == pytest.approx(math.sqrt(2) / 2, abs=1e-12)

    def test_scale_invariance(self):
        rng = np.random.default_rng(1)
        u, v = rng.normal(size=4), rng.normal(size=4)
        for alpha in (0.5, 3.0, 100.0):
            assert cosine(alpha * u, v) == pytest.approx(cosine(u, v), abs=1e-6)

    def test_dim_mismatch(self):
        with pytest.raises(DataError, match="dim mismatch"):
            cosine(np.ones(2), np.ones(3))


def brute_force_knn(store, query, k):
    sims = [cosine(row, query) for row in store.matrix]
    order = sorted(range(len(store)), key=lambda i: (-sims[i], store.ids[i]))
    return [(store.ids[i], sims[i]) for i in order[:k]]


class TestKnn:
    def test_derived_example(self):
        s = math.sqrt(2) / 2
        store = make_store(["a", "b", "c"], [[1, 0], [0, 1], [s, s]])
        result = knn(store, np.array([1.0, 0.0]), 2)
        assert [n.id for n in result] == ["a", "c"]
        assert result[0].score == pytest.approx(1.0)
        assert result[1].score == pytest.approx(s, abs=1e-5)

    def test_truncation(self):
        store = make_store(["a", "b", "c"], [[1, 0], [0, 1], [1, 1]])
        assert len(knn(store, np.array([1.0, 0.0]), 5)) == 3

    def test_tie_break_by_id(self):
        store = make_store(["z", "a"], [[1, 0], [1, 0]])
        result = knn(store, np.array([1.0, 0.0]), 2)
        assert [n.id for n in result] == ["a", "z"]

    def test_dim_mismatch(self):
        store = make_store(["a"], [[1, 0]])
        with pytest.raises(DataError, match="dim"):
            knn(store, np.ones(3), 1)

    def test_brute_force_equivalence(self):
        rng = np.random.default_rng(2)
        store = make_store([f"id{i:03d}" for i in range(60)], rng.normal(size=(60, 8)))
        for _ in range(10):
            query = rng.normal(size=8)
            got = knn(store, query, 7)
            expected = brute_force_knn(store, query, 7)
            assert [n.id for n in got] == [e[0] for e in expected]
            for n, e in zip(got, expected):
                assert n.score == pytest.approx(e[1], abs=1e-9)


class TestStoreFile:
    def test_round_trip_bit_identical(self, tmp_path):
        store = make_store(["α-unit", "b"], [[1.5, -2.25, 3.0], [0.1, 0.2, 0.3]])
        path = tmp_path / "s.emb"
        write_store(store, path)
        loaded = read_store(path)
        assert loaded.ids == store.ids
        assert loaded.matrix.tobytes() == store.matrix.tobytes()
        assert (loaded.model_name, loaded.dim, loaded.pooling, loaded.l2_normalized) == (
            store.model_name, store.dim, store.pooling, store.l2_normalized,
        )
        path2 = tmp_path / "s2.emb"
        write_store(loaded, path2)
        assert path.read_bytes() == path2.read_bytes()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.emb"
        path.write_bytes(b"NOTMAGIC" + b"\x00" * 16)
        with pytest.raises(DataError, match="bad magic"):
            read_store(path)

    def test_truncated_record(self, tmp_path):
        header = json.dumps({
            "version": 1, "model": "m", "dim": 4, "count": 1,
            "pooling": "mean", "l2_normalized": False,
        }).encode()
        body = struct.pack("<H", 1) + b"a" + struct.pack("<3f", 1, 2, 3)  # 3 floats, dim 4
        path = tmp_path / "t.emb"
        path.write_bytes(MAGIC + struct.pack("<I", len(header)) + header + body)
        with pytest.raises(DataError, match="truncated"):
            read_store(path)

    def test_duplicate_id_rejected(self):
        with pytest.raises(DataError, match="duplicate id"):
            make_store(["a", "a"], [[1.0], [2.0]])


def embedding_service_transport(dim=3, shuffle=False):
    """Mock OpenAI-style embeddings endpoint; vectors derive from text length."""

    def handler(request: httpx.Request) -> httpx.Response:
        payload = json.loads(request.content)
        data = [
            {"index": i, "embedding": [float(len(text))] * dim}
            for i, text in enumerate(payload["input"])
        ]
        if shuffle:
            data = list(reversed(data))
        return httpx.Response(200, json={"data": data})

    return httpx.MockTransport(handler)


class TestFetchEmbeddings:
    def test_batching_and_order(self):
        calls = []

        def handler(request):
            payload = json.loads(request.content)
            calls.append(len(payload["input"]))
            data = [{"index": i, "embedding": [float(len(t))]} for i, t in enumerate(payload["input"])]
            return httpx.Response(200, json={"data": data})

        store = fetch_embeddings(
            "http://svc/v1/embeddings", "m", [("a", "x"), ("b", "xx"), ("c", "xxx")],
            batch_size=2, transport=httpx.MockTransport(handler),
        )
        assert calls == [2, 1]
        assert store.ids == ["a", "b", "c"]
        assert store.matrix[:, 0].tolist() == [1.0, 2.0, 3.0]

    def test_reorders_by_index(self):
        store = fetch_embeddings(
            "http://svc/v1/embeddings", "m", [("a", "x"), ("b", "xx")],
            transport=embedding_service_transport(shuffle=True),
        )
        assert store.matrix[0, 0] == 1.0 and store.matrix[1, 0] == 2.0

    def test_count_mismatch(self):
        def handler(request):
            return httpx.Response(200, json={"data": [{"index": 0, "embedding": [1.0]}]})

        with pytest.raises(ServiceError, match="count mismatch"):
            fetch_embeddings("http://svc", "m", [("a", "x"), ("b", "y")],
                             transport=httpx.MockTransport(handler))

    def test_transport_failure_carries_batch(self):
        def handler(request):
            raise httpx.ConnectError("boom")

        with pytest.raises(ServiceError) as exc_info:
            fetch_embeddings("http://svc", "m", [("a", "x")],
                             transport=httpx.MockTransport(handler))
        assert exc_info.value.batch_index == 0
        assert exc_info.value.attempts == 3

    def test_empty_input(self):
        store = fetch_embeddings("http://svc", "m", [], transport=embedding_service_transport())
        assert len(store) == 0
        assert store.model_name == "m"

    def test_normalize(self):
        store = fetch_embeddings(
            "http://svc", "m", [("a", "xx")], normalize=True,
            transport=embedding_service_transport(dim=2),
        )
        assert np.linalg.norm(store.matrix[0]) == pytest.approx(1.0, abs=1e-6)
