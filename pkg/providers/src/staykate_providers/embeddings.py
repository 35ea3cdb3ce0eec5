"""Export sentence embeddings from an embedding endpoint.

Speaks the JSON embeddings wire protocol: POST {"model", "input": [texts]}
returns {"data": [{"embedding": [...], "index": i}, ...]}. The credential
comes from the API_KEY environment variable. Vectors are dimension-checked
against the manifest and written in the toolkit's JSON-lines format.
"""

from __future__ import annotations

import json
import logging
import os
import time
from pathlib import Path

import requests

from .corpus_io import read_corpus
from .errors import ProviderError
from .manifest import ProviderManifest

logger = logging.getLogger(__name__)

_RETRYABLE_STATUS = {429, 500, 502, 503, 504}


def embed_texts(
    texts: list[str],
    manifest: ProviderManifest,
    endpoint: str,
    api_key: str | None = None,
    batch_size: int = 64,
    max_retries: int = 5,
    backoff_base: float = 0.5,
    timeout: float = 60.0,
    session: requests.Session | None = None,
) -> list[list[float]]:
    if not endpoint:
        raise ProviderError("embedding export requires an endpoint URL")
    key = api_key if api_key is not None else os.environ.get("API_KEY")
    if not key:
        raise ProviderError("embedding export requires a credential in the API_KEY environment variable")
    session = session or requests.Session()
    headers = {"Authorization": f"Bearer {key}", "Content-Type": "application/json"}
    vectors: list[list[float]] = []
    for start in range(0, len(texts), batch_size):
        batch = texts[start : start + batch_size]
        payload = {"model": manifest.embedding_model, "input": batch}
        body = _post_with_retries(
            session, endpoint, payload, headers, max_retries, backoff_base, timeout
        )
        try:
            data = sorted(body["data"], key=lambda item: item["index"])
            batch_vectors = [[float(x) for x in item["embedding"]] for item in data]
        except (KeyError, TypeError) as exc:
            raise ProviderError(f"malformed embeddings response: {exc}") from exc
        if len(batch_vectors) != len(batch):
            raise ProviderError(
                f"endpoint returned {len(batch_vectors)} vectors for {len(batch)} inputs"
            )
        for vector in batch_vectors:
            if len(vector) != manifest.dimension:
                raise ProviderError(
                    f"endpoint returned dimension {len(vector)}, manifest says {manifest.dimension}"
                )
        vectors.extend(batch_vectors)
    return vectors


def _post_with_retries(session, endpoint, payload, headers, max_retries, backoff_base, timeout):
    last_error = None
    for attempt in range(max_retries + 1):
        if attempt:
            delay = backoff_base * (2 ** (attempt - 1))
            logger.warning("retrying embedding request in %.2fs (%s)", delay, last_error)
            time.sleep(delay)
        try:
            response = session.post(endpoint, json=payload, headers=headers, timeout=timeout)
        except requests.RequestException as exc:
            last_error = exc
            continue
        if response.status_code in _RETRYABLE_STATUS:
            last_error = ProviderError(f"HTTP {response.status_code}")
            continue
        if response.status_code != 200:
            raise ProviderError(f"HTTP {response.status_code}: {response.text[:200]}")
        return response.json()
    raise ProviderError(f"embedding endpoint failed after {max_retries} retries: {last_error}")


def export_embeddings(
    corpus_path: str | Path,
    manifest_path: str | Path,
    provider_manifest: ProviderManifest,
    out_path: str | Path,
    endpoint: str,
    splits: tuple[str, ...] = ("train", "test"),
    **request_options,
) -> int:
    """Embed every sentence of the chosen splits and write the embedding file.

    Duplicate input texts are checked for identical vectors (the endpoint is
    assumed deterministic); a mismatch is flagged with a warning, not an
    error. Returns the record count.
    """
    corpus = read_corpus(corpus_path, manifest_path)
    ids = [sid for split in splits for sid in corpus.splits.get(split, ())]
    if not ids:
        raise ProviderError(f"no sentences found in splits {splits}")
    texts = [" ".join(corpus.sentences[sid].tokens) for sid in ids]
    vectors = embed_texts(texts, provider_manifest, endpoint, **request_options)

    by_text: dict[str, list[list[float]]] = {}
    for text, vector in zip(texts, vectors):
        by_text.setdefault(text, []).append(vector)
    for text, group in by_text.items():
        if any(v != group[0] for v in group[1:]):
            logger.warning(
                "endpoint returned different vectors for duplicate input %r", text[:60]
            )

    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with out_path.open("w", encoding="utf-8") as fh:
        for sid, vector in zip(ids, vectors):
            fh.write(json.dumps({"id": sid, "vector": vector}) + "\n")
    return len(ids)
