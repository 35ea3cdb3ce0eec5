import json

import pytest

from staykate_providers.embeddings import embed_texts, export_embeddings
from staykate_providers.errors import ProviderError
from staykate_providers.manifest import load_provider_manifest

from .embed_stub import StubEmbeddingServer


class TestEmbedTexts:
    def test_batching_and_dimension(self, provider_manifest_file):
        manifest = load_provider_manifest(provider_manifest_file())
        texts = [f"sentence number {i}" for i in range(10)]
        with StubEmbeddingServer(dimension=16) as server:
            vectors = embed_texts(
                texts, manifest, server.url, api_key="k", batch_size=3
            )
            assert server.requests_seen == 4
        assert len(vectors) == 10
        assert all(len(v) == 16 for v in vectors)

    def test_duplicate_inputs_identical_vectors(self, provider_manifest_file):
        manifest = load_provider_manifest(provider_manifest_file())
        with StubEmbeddingServer(dimension=16) as server:
            vectors = embed_texts(
                ["same text", "other text", "same text"], manifest, server.url, api_key="k"
            )
        assert vectors[0] == vectors[2]
        assert vectors[0] != vectors[1]

    def test_dimension_mismatch_rejected(self, provider_manifest_file):
        manifest = load_provider_manifest(provider_manifest_file(dimension=32))
        with StubEmbeddingServer(dimension=16) as server:
            with pytest.raises(ProviderError, match="dimension 16"):
                embed_texts(["text"], manifest, server.url, api_key="k")

    def test_retries_then_succeeds(self, provider_manifest_file):
        manifest = load_provider_manifest(provider_manifest_file())
        with StubEmbeddingServer(dimension=16, fail_statuses=[500, 429]) as server:
            vectors = embed_texts(
                ["text"], manifest, server.url, api_key="k", backoff_base=0.001
            )
            assert server.requests_seen == 3
        assert len(vectors) == 1

    def test_exhausted_retries(self, provider_manifest_file):
        manifest = load_provider_manifest(provider_manifest_file())
        with StubEmbeddingServer(dimension=16, fail_statuses=[503] * 10) as server:
            with pytest.raises(ProviderError, match="failed after 2 retries"):
                embed_texts(
                    ["text"], manifest, server.url, api_key="k",
                    max_retries=2, backoff_base=0.001,
                )

    def test_missing_credential(self, provider_manifest_file, monkeypatch):
        monkeypatch.delenv("API_KEY", raising=False)
        manifest = load_provider_manifest(provider_manifest_file())
        with pytest.raises(ProviderError, match="API_KEY"):
            embed_texts(["text"], manifest, "http://localhost:1/x")


class TestExportEmbeddings:
    def test_one_record_per_sentence(self, tmp_path, mini_paths, provider_manifest_file):
        manifest = load_provider_manifest(provider_manifest_file())
        out = tmp_path / "embeddings.jsonl"
        with StubEmbeddingServer(dimension=16) as server:
            count = export_embeddings(
                mini_paths["corpus"], mini_paths["manifest"], manifest, out,
                endpoint=server.url, api_key="k",
            )
        assert count == 40  # 30 train + 10 test by default
        records = [json.loads(line) for line in out.read_text().splitlines()]
        assert len(records) == 40
        assert all(len(r["vector"]) == 16 for r in records)
        ids = [r["id"] for r in records]
        assert ids[0].startswith("train-") and ids[-1].startswith("test-")

    def test_full_dimension_export(self, tmp_path, mini_paths, provider_manifest_file):
        manifest = load_provider_manifest(provider_manifest_file(dimension=1536))
        out = tmp_path / "embeddings.jsonl"
        with StubEmbeddingServer(dimension=1536) as server:
            export_embeddings(
                mini_paths["corpus"], mini_paths["manifest"], manifest, out,
                endpoint=server.url, api_key="k", splits=("test",),
            )
        records = [json.loads(line) for line in out.read_text().splitlines()]
        assert len(records) == 10
        assert all(len(r["vector"]) == 1536 for r in records)

    def test_unknown_split_rejected(self, tmp_path, mini_paths, provider_manifest_file):
        manifest = load_provider_manifest(provider_manifest_file())
        with pytest.raises(ProviderError, match="no sentences"):
            export_embeddings(
                mini_paths["corpus"], mini_paths["manifest"], manifest,
                tmp_path / "x.jsonl", endpoint="http://localhost:1/x",
                api_key="k", splits=("validation",),
            )
