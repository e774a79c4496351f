"""Embedding providers behind one interface.

A provider turns a batch of sentences into vectors and token counts. Local
models and hosted APIs are interchangeable configurations; credentials come
from the environment only.
"""

from __future__ import annotations

import hashlib
import os
import time

import numpy as np


class ProviderError(RuntimeError):
    """Transient or permanent failure talking to an embedding provider."""


class HashProvider:
    """Deterministic local pseudo-embeddings; no network, no credentials.

    Each sentence maps to a fixed vector seeded by its text digest, so runs
    are reproducible anywhere. Token counts are whitespace token counts.
    """

    name = "hash"

    def __init__(self, dim: int = 64, model: str = "hash-v1"):
        self.dim = dim
        self.model = model

    def embed(self, texts: list[str]) -> tuple[np.ndarray, list[int]]:
        vectors = np.empty((len(texts), self.dim), dtype=np.float64)
        for i, text in enumerate(texts):
            digest = hashlib.sha256(text.encode("utf-8")).digest()
            rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
            vectors[i] = rng.standard_normal(self.dim) / np.sqrt(self.dim)
        tokens = [max(1, len(t.split())) for t in texts]
        return vectors, tokens

    def metadata(self) -> dict:
        return {"provider": self.name, "model": self.model, "dim": self.dim,
                "layers": "n/a (local deterministic)"}


class HttpProvider:
    """Generic JSON-over-HTTP provider.

    POSTs ``{"model": ..., "input": [texts]}`` to ``EMBED_API_URL`` with a
    bearer token from ``EMBED_API_KEY`` and expects
    ``{"data": [{"embedding": [...]}, ...]}``. Hosted APIs expose final-layer
    vectors only; that detail is recorded in the run metadata rather than
    silently mixed with other representations.
    """

    name = "http"

    def __init__(self, model: str, url: str | None = None, timeout: float = 60.0):
        self.model = model
        self.url = url or os.environ.get("EMBED_API_URL")
        self.timeout = timeout
        if not self.url:
            raise ProviderError("EMBED_API_URL is not set")
        self.api_key = os.environ.get("EMBED_API_KEY")
        if not self.api_key:
            raise ProviderError("EMBED_API_KEY is not set")

    def embed(self, texts: list[str]) -> tuple[np.ndarray, list[int]]:
        import requests

        try:
            response = requests.post(
                self.url,
                json={"model": self.model, "input": texts},
                headers={"Authorization": f"Bearer {self.api_key}"},
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise ProviderError(str(exc)) from exc
        if response.status_code != 200:
            raise ProviderError(f"provider returned {response.status_code}: {response.text[:200]}")
        payload = response.json()
        vectors = np.array([row["embedding"] for row in payload["data"]], dtype=np.float64)
        usage = payload.get("usage", {}).get("prompt_tokens_per_input")
        tokens = list(usage) if usage else [max(1, len(t.split())) for t in texts]
        return vectors, tokens

    def metadata(self) -> dict:
        return {"provider": self.name, "model": self.model, "url": self.url,
                "layers": "final layer only (hosted API)"}


def make_provider(name: str, dim: int = 64, model: str | None = None):
    if name == "hash":
        return HashProvider(dim=dim, model=model or "hash-v1")
    if name == "http":
        if not model:
            raise ProviderError("http provider needs --model")
        return HttpProvider(model=model)
    raise ProviderError(f"unknown provider {name!r}")


def embed_with_retries(provider, texts: list[str], max_attempts: int = 5,
                       base_delay: float = 0.5, sleep=time.sleep):
    """Call the provider with exponential backoff on transient failures."""
    last: Exception | None = None
    for attempt in range(max_attempts):
        try:
            return provider.embed(texts)
        except ProviderError as exc:
            last = exc
            if attempt + 1 < max_attempts:
                sleep(base_delay * (2 ** attempt))
    raise ProviderError(f"provider failed after {max_attempts} attempts: {last}")
