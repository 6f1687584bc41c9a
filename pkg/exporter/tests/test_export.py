import json

import numpy as np
import pytest

from ontolearn.embedstore import read_store

from embexport.cli import main as cli_main
from embexport.errors import ExportError
from embexport.export import DeterministicEncoder, ExportSpec, export
from embexport.pooling import last_token_pool, mean_pool
from embexport.registry import resolve_model


class CountingEncoder(DeterministicEncoder):
    def __init__(self, model_id, dim):
        super().__init__(model_id, dim)
        self.calls = 0

    def encode_tokens(self, texts):
        self.calls += 1
        return super().encode_tokens(texts)


class TestPooling:
    def test_mean_respects_mask(self):
        embs = np.array([[[2.0, 0.0], [4.0, 2.0], [99.0, 99.0]]])
        mask = np.array([[1, 1, 0]])
        assert mean_pool(embs, mask).tolist() == [[3.0, 1.0]]

    def test_last_token_skips_padding(self):
        embs = np.array([[[1.0], [2.0], [3.0]]])
        mask = np.array([[1, 1, 0]])
        assert last_token_pool(embs, mask).tolist() == [[2.0]]

    def test_full_mask_last_token(self):
        embs = np.array([[[1.0], [2.0], [3.0]]])
        mask = np.array([[1, 1, 1]])
        assert last_token_pool(embs, mask).tolist() == [[3.0]]

    def test_empty_mask_rejected(self):
        with pytest.raises(ExportError, match="empty attention mask"):
            mean_pool(np.zeros((1, 2, 3)), np.zeros((1, 2)))


class TestSpec:
    def test_duplicate_id_fails_before_model_call(self):
        with pytest.raises(ExportError, match="duplicate id"):
            ExportSpec("all-mpnet-base-v2", "mean",
                       input=[("a", "x"), ("a", "y")])

    def test_bad_batch(self):
        with pytest.raises(ExportError, match="batch_size"):
            ExportSpec("all-mpnet-base-v2", "mean", batch_size=0)

    def test_unknown_model(self):
        spec = ExportSpec("made-up-model", "mean", input=[("a", "x")])
        with pytest.raises(ExportError, match="unknown model"):
            spec.resolve()

    def test_pooling_convention_enforced(self):
        spec = ExportSpec("all-mpnet-base-v2", "last_token", input=[("a", "x")])
        with pytest.raises(ExportError, match="contradicts"):
            spec.resolve()

    def test_alias_resolution(self):
        assert resolve_model("mpnet").dim == 768
        assert resolve_model("Qwen3-Embedding-4B").pooling == "last_token"


def export_with_fake(model, pooling, texts, out_path, normalize=False, batch_size=32):
    spec = ExportSpec(model, pooling, normalize=normalize,
                      batch_size=batch_size, input=texts)
    info = spec.resolve()
    encoder = CountingEncoder(info.model_id, info.dim)
    summary = export(spec, out_path, encoder=encoder)
    return summary, encoder


class TestConformance:
    def test_mpnet_store(self, tmp_path):
        out = tmp_path / "mpnet.emb"
        texts = [("t1", "liquid crystal"), ("t2", "granite"), ("t3", "cell membrane")]
        summary, _ = export_with_fake("all-mpnet-base-v2", "mean", texts, out)
        store = read_store(out)
        assert store.dim == 768
        assert store.pooling == "mean"
        assert store.ids == ["t1", "t2", "t3"]
        assert summary["dim"] == 768

    def test_qwen_store(self, tmp_path):
        out = tmp_path / "qwen.emb"
        summary, _ = export_with_fake(
            "Qwen3-Embedding-4B", "last_token",
            [("a", "one two"), ("b", "three")], out,
        )
        store = read_store(out)
        assert store.dim == 2560
        assert store.pooling == "last_token"
        assert summary["model"] == "Qwen/Qwen3-Embedding-4B"

    def test_normalized_rows_unit_norm(self, tmp_path):
        out = tmp_path / "n.emb"
        export_with_fake("all-mpnet-base-v2", "mean",
                         [("a", "alpha beta"), ("b", "gamma")], out, normalize=True)
        store = read_store(out)
        assert store.l2_normalized
        norms = np.linalg.norm(store.matrix.astype(np.float64), axis=1)
        assert np.all(np.abs(norms - 1.0) <= 1e-5)

    def test_revision_pinned_in_header(self, tmp_path):
        out = tmp_path / "r.emb"
        export_with_fake("all-mpnet-base-v2", "mean", [("a", "x")], out)
        raw = out.read_bytes()
        header_len = int.from_bytes(raw[8:12], "little")
        header = json.loads(raw[12 : 12 + header_len])
        assert header["revision"] == resolve_model("mpnet").revision

    def test_reexport_identical(self, tmp_path):
        texts = [("a", "one two three"), ("b", "four")]
        p1, p2 = tmp_path / "x1.emb", tmp_path / "x2.emb"
        export_with_fake("all-mpnet-base-v2", "mean", texts, p1)
        export_with_fake("all-mpnet-base-v2", "mean", texts, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_batching_preserves_row_order(self, tmp_path):
        texts = [(f"id{i}", f"text number {i}") for i in range(7)]
        big, small = tmp_path / "big.emb", tmp_path / "small.emb"
        export_with_fake("all-mpnet-base-v2", "mean", texts, big, batch_size=32)
        _, encoder = export_with_fake("all-mpnet-base-v2", "mean", texts, small,
                                      batch_size=2)
        assert encoder.calls == 4
        a, b = read_store(big), read_store(small)
        assert a.ids == b.ids
        assert np.allclose(a.matrix, b.matrix, atol=1e-6)

    def test_empty_input_rejected(self, tmp_path):
        spec = ExportSpec("all-mpnet-base-v2", "mean", input=[])
        with pytest.raises(ExportError, match="no input"):
            export(spec, tmp_path / "x.emb")


class TestCli:
    def test_end_to_end(self, tmp_path, capsys):
        texts = tmp_path / "texts.jsonl"
        texts.write_text(
            json.dumps({"id": "a", "text": "hello world"}) + "\n"
            + json.dumps({"id": "b", "text": "granite rock"}) + "\n"
        )
        out = tmp_path / "store.emb"
        code = cli_main([
            "export", "--model", "all-mpnet-base-v2", "--pooling", "mean",
            "--normalize", "--batch", "32",
            "--in", str(texts), "--out", str(out),
            "--backend", "deterministic",
        ])
        assert code == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["count"] == 2
        store = read_store(out)
        assert store.dim == 768 and store.l2_normalized

    def test_missing_input_exits_1(self, tmp_path, capsys):
        code = cli_main([
            "export", "--model", "mpnet", "--pooling", "mean",
            "--in", str(tmp_path / "absent.jsonl"), "--out", str(tmp_path / "o.emb"),
            "--backend", "deterministic",
        ])
        assert code == 1
        assert "error:" in capsys.readouterr().err

    def test_bad_jsonl_exits_1(self, tmp_path, capsys):
        texts = tmp_path / "texts.jsonl"
        texts.write_text("{broken\n")
        code = cli_main([
            "export", "--model", "mpnet", "--pooling", "mean",
            "--in", str(texts), "--out", str(tmp_path / "o.emb"),
            "--backend", "deterministic",
        ])
        assert code == 1
