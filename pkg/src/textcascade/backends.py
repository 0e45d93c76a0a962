"""Text generation and embedding backends.

LocalInferenceClient speaks the local-inference-server wire protocol:
POST {base}/api/generate with {model, prompt, stream, options} answered by
{"response": ...}, and POST {base}/api/embeddings with {model, prompt}
answered by {"embedding": [...]}. Deterministic mock implementations cover
tests and offline runs.
"""

import hashlib
import os
import time
from dataclasses import dataclass

import numpy as np
import requests

from .errors import DegenerateOutputError, TransportError

BASE_URL_ENV_VAR = "TEXTCASCADE_BASE_URL"
DEFAULT_BASE_URL = "http://localhost:11434"
MOCK_EMBED_DIM = 64


@dataclass
class GenerationOptions:
    model_name: str = "qwen2.5:latest"
    temperature: float = 0.35
    top_p: float = 0.9
    max_new_tokens: int = 75
    request_timeout: float = 60.0
    retries: int = 2

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not 0.0 < self.top_p <= 1.0:
            raise ValueError("top_p must lie in (0, 1]")
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")


@dataclass
class EmbeddingVector:
    values: np.ndarray
    dim: int
    backend_id: str

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.dim,):
            raise ValueError(f"expected {self.dim} values, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("embedding contains non-finite entries")

    @property
    def is_degenerate(self):
        return float(np.linalg.norm(self.values)) == 0.0


def resolve_base_url(configured=None):
    """Environment variable wins over the configured value, then the default."""
    return os.environ.get(BASE_URL_ENV_VAR) or configured or DEFAULT_BASE_URL


class LocalInferenceClient:
    """HTTP client for a local generate/embeddings inference server.

    Embeddings are cached by text content, so each distinct text hits the
    backend at most once per client.
    """

    def __init__(self, base_url=None, options=None, embed_model=None,
                 backoff_base=0.5, session=None):
        self.base_url = resolve_base_url(base_url).rstrip("/")
        self.options = options or GenerationOptions()
        self.embed_model = embed_model or self.options.model_name
        self.backoff_base = backoff_base
        self.session = session or requests.Session()
        self.embed_cache = {}
        self._embed_dim = None

    def _post(self, path, payload):
        url = f"{self.base_url}{path}"
        attempts = self.options.retries + 1
        last_error = None
        for attempt in range(attempts):
            try:
                response = self.session.post(url, json=payload,
                                             timeout=self.options.request_timeout)
            except requests.RequestException as exc:
                last_error = TransportError(f"request to {url} failed: {exc}")
            else:
                if response.status_code == 200:
                    try:
                        return response.json()
                    except ValueError:
                        last_error = TransportError(
                            f"non-JSON body from {url}",
                            status=response.status_code,
                            body_excerpt=response.text[:200],
                        )
                else:
                    last_error = TransportError(
                        f"HTTP {response.status_code} from {url}",
                        status=response.status_code,
                        body_excerpt=response.text[:200],
                    )
            if attempt + 1 < attempts and self.backoff_base > 0:
                time.sleep(self.backoff_base * (2 ** attempt))
        raise last_error

    def generate(self, prompt):
        """Single non-streamed completion, whitespace-trimmed."""
        payload = {
            "model": self.options.model_name,
            "prompt": prompt,
            "stream": False,
            "options": {
                "temperature": self.options.temperature,
                "top_p": self.options.top_p,
                "num_predict": self.options.max_new_tokens,
            },
        }
        body = self._post("/api/generate", payload)
        text = str(body.get("response", "")).strip()
        if not text:
            raise DegenerateOutputError("backend returned an empty completion")
        return text

    def embed(self, text):
        if not text:
            raise ValueError("cannot embed empty text")
        key = hashlib.sha256(text.encode("utf-8")).hexdigest()
        if key in self.embed_cache:
            return self.embed_cache[key]
        body = self._post("/api/embeddings", {"model": self.embed_model, "prompt": text})
        values = np.asarray(body.get("embedding", []), dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise TransportError("backend returned no embedding vector")
        if self._embed_dim is None:
            self._embed_dim = values.size
        elif values.size != self._embed_dim:
            raise TransportError(
                f"embedding dim changed from {self._embed_dim} to {values.size}"
            )
        vector = EmbeddingVector(values, values.size, backend_id=f"http:{self.embed_model}")
        self.embed_cache[key] = vector
        return vector


def mock_generate(prompt, seed):
    """Deterministic stand-in for a text generator.

    Echoes the target node label and the leading words of the heaviest
    predecessor so downstream similarity diagnostics see real signal.
    """
    digest = hashlib.blake2b(f"{seed}|{prompt}".encode("utf-8"), digest_size=8).hexdigest()
    label = ""
    echo = ""
    for line in prompt.splitlines():
        if line.startswith("Target node: "):
            label = line[len("Target node: "):].strip()
        elif line.startswith("1. (weight="):
            closing = line.find(") ")
            if closing >= 0:
                echo = " ".join(line[closing + 2:].split()[:6])
    if echo:
        return f"{label} update {digest}: {echo}"
    return f"{label} update {digest}"


class MockGenerator:
    """Deterministic generator: same (prompt, seed) always yields the same text."""

    def __init__(self, seed=0):
        self.seed = int(seed)

    def generate(self, prompt):
        return mock_generate(prompt, self.seed)


def mock_embed(text, dim=MOCK_EMBED_DIM):
    """Signed hashed bag-of-words embedding, L2-normalized.

    Token-free text maps to the all-zero (degenerate) vector.
    """
    vec = np.zeros(dim)
    for token in text.casefold().split():
        token = "".join(ch for ch in token if ch.isalnum())
        if not token:
            continue
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        idx = int.from_bytes(digest[:4], "little") % dim
        sign = 1.0 if digest[4] & 1 else -1.0
        vec[idx] += sign
    norm = float(np.linalg.norm(vec))
    if norm > 0.0:
        vec /= norm
    return EmbeddingVector(vec, dim, backend_id=f"mock-hash-{dim}")


class MockEmbedder:
    """Deterministic embedder with the same cache contract as the HTTP client."""

    def __init__(self, dim=MOCK_EMBED_DIM):
        self.dim = int(dim)
        self.embed_cache = {}

    def embed(self, text):
        if not text:
            raise ValueError("cannot embed empty text")
        key = hashlib.sha256(text.encode("utf-8")).hexdigest()
        if key not in self.embed_cache:
            self.embed_cache[key] = mock_embed(text, self.dim)
        return self.embed_cache[key]
