"""Text embedding providers, cosine similarity, and encoding-step accounting.

Every similarity in the system goes through a provider. The provider counts
text-encoding invocations, which is the complexity currency all optimizer
cost formulas are expressed in: one counted step per cache-miss ``embed``.

Two accounting paths exist on purpose:

* ``embed(text)`` is the budgeted path; each cache miss increments the step
  counter.
* ``reference(text)`` returns the same vector but is never counted and is
  memoized per provider. It exists for the sender-side embedding of the full
  original message, which per-packet surrogate scores compare against: the
  cost model charges one step per candidate text only, so a surrogate
  evaluation of N packets must cost exactly N steps.

Both paths share the same arithmetic, so values are bitwise identical.
"""

from __future__ import annotations

import hashlib
import threading
import time
from enum import Enum

import numpy as np

from .tokens import TokenMessage

DEFAULT_DIMENSION = 64
DEFAULT_BIGRAM_WEIGHT = 0.5
_BIGRAM_SEP = "\x1f"  # never appears in token surfaces


class EmbeddingError(RuntimeError):
    pass


class RemoteUnavailable(EmbeddingError):
    """The remote embedding service could not be reached or answered badly."""


class EmptyTextPolicy(Enum):
    """What to do when asked to embed the empty string.

    ZERO returns an all-zero vector without spending an encoding step, which
    makes any cosine against it 0 (the empty-reconstruction convention).
    ENCODE passes the empty string to the backend like any other text.
    """

    ZERO = "zero"
    ENCODE = "encode"


def _as_text(x: "TokenMessage | str") -> str:
    return x.text if isinstance(x, TokenMessage) else x


def cosine_vectors(u: np.ndarray, v: np.ndarray) -> float:
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    value = float(np.dot(u, v) / (nu * nv))
    if abs(value) > 1.0 + 1e-9:
        raise EmbeddingError(f"cosine out of range: {value}")
    return value


class EmbeddingProvider:
    """Base class: caching, step counting, and the uncounted reference path.

    Subclasses implement ``_encode(text) -> np.ndarray`` (deterministic,
    unit-norm for non-empty text). All public methods are thread-safe.
    """

    name = "base"

    def __init__(
        self,
        dimension: int,
        cache: bool = True,
        empty_policy: EmptyTextPolicy = EmptyTextPolicy.ZERO,
    ) -> None:
        if dimension < 2:
            raise ValueError("embedding dimension must be >= 2")
        self.dimension = dimension
        self.cache_enabled = cache
        self.empty_policy = empty_policy
        self._cache: dict[str, np.ndarray] = {}
        self._reference_memo: dict[str, np.ndarray] = {}
        self._steps = 0
        self._lock = threading.Lock()

    # subclass hook
    def _encode(self, text: str) -> np.ndarray:
        raise NotImplementedError

    def embed_text(self, text: str) -> np.ndarray:
        """Budgeted embedding: one step per cache miss."""
        if text == "" and self.empty_policy is EmptyTextPolicy.ZERO:
            return np.zeros(self.dimension)
        if self.cache_enabled:
            with self._lock:
                hit = self._cache.get(text)
            if hit is not None:
                return hit
        vec = self._encode(text)
        with self._lock:
            self._steps += 1
            if self.cache_enabled:
                self._cache[text] = vec
        return vec

    def reference(self, text: str) -> np.ndarray:
        """Uncounted embedding of a sender-side reference text (memoized)."""
        if text == "" and self.empty_policy is EmptyTextPolicy.ZERO:
            return np.zeros(self.dimension)
        with self._lock:
            hit = self._reference_memo.get(text)
            if hit is None:
                hit = self._cache.get(text)
        if hit is None:
            hit = self._encode(text)
        with self._lock:
            self._reference_memo[text] = hit
        return hit

    @property
    def steps(self) -> int:
        with self._lock:
            return self._steps

    def reset_steps(self) -> None:
        with self._lock:
            self._steps = 0

    def clear_cache(self) -> None:
        with self._lock:
            self._cache.clear()
            self._reference_memo.clear()


def embed(provider: EmbeddingProvider, text: "TokenMessage | str") -> np.ndarray:
    return provider.embed_text(_as_text(text))


def cosine(
    provider: EmbeddingProvider, x: "TokenMessage | str", y: "TokenMessage | str"
) -> float:
    """Normalized similarity of two texts; 0 when either side is empty."""
    tx, ty = _as_text(x), _as_text(y)
    if provider.empty_policy is EmptyTextPolicy.ZERO and (tx == "" or ty == ""):
        return 0.0
    return cosine_vectors(provider.embed_text(tx), provider.embed_text(ty))


def step_count(provider: EmbeddingProvider) -> int:
    return provider.steps


def reset_steps(provider: EmbeddingProvider) -> None:
    provider.reset_steps()


class SyntheticProvider(EmbeddingProvider):
    """Deterministic hashed n-gram embedding, a desk-scale encoder stand-in.

    A keyed hash maps each unigram and each adjacent bigram to a fixed
    pseudo-random unit vector; a text embeds as the L2-normalized sum of its
    unigram vectors plus ``bigram_weight`` times its bigram vectors. The
    bigram term makes token order (and packet adjacency) matter, so grouping
    quality is a non-trivial objective.
    """

    name = "synthetic"

    def __init__(
        self,
        dimension: int = DEFAULT_DIMENSION,
        salt: int = 0,
        bigram_weight: float = DEFAULT_BIGRAM_WEIGHT,
        cache: bool = True,
        empty_policy: EmptyTextPolicy = EmptyTextPolicy.ZERO,
    ) -> None:
        super().__init__(dimension, cache=cache, empty_policy=empty_policy)
        self.salt = int(salt)
        self.bigram_weight = float(bigram_weight)
        self._key = self.salt.to_bytes(8, "little", signed=False)
        self._gram_memo: dict[str, np.ndarray] = {}

    def gram_vector(self, gram: str) -> np.ndarray:
        """Pseudo-random unit vector for one unigram or bigram key."""
        with self._lock:
            hit = self._gram_memo.get(gram)
        if hit is not None:
            return hit
        digest = hashlib.blake2b(gram.encode("utf-8"), key=self._key, digest_size=8).digest()
        rng = np.random.default_rng(int.from_bytes(digest, "little"))
        vec = rng.standard_normal(self.dimension)
        vec /= np.linalg.norm(vec)
        with self._lock:
            self._gram_memo[gram] = vec
        return vec

    def _encode(self, text: str) -> np.ndarray:
        tokens = text.split(" ") if text else []
        if not tokens:
            # only reachable under EmptyTextPolicy.ENCODE
            return self.gram_vector(_BIGRAM_SEP)
        total = np.zeros(self.dimension)
        for t in tokens:
            total += self.gram_vector(t)
        for a, b in zip(tokens, tokens[1:]):
            total += self.bigram_weight * self.gram_vector(a + _BIGRAM_SEP + b)
        norm = np.linalg.norm(total)
        if norm == 0.0:
            return total
        return total / norm


class RemoteProvider(EmbeddingProvider):
    """Client for the embedding HTTP service.

    POST {base_url}/embed with {"texts": [...]} (batches of at most 64),
    expecting {"vectors": [...], "dim": d}. Requests time out after 5 s and
    are retried 3 times with exponential backoff before RemoteUnavailable.
    """

    name = "remote"

    MAX_BATCH = 64
    TIMEOUT_S = 5.0
    RETRIES = 3
    BACKOFF_S = 0.25

    def __init__(
        self,
        base_url: str,
        dimension: int | None = None,
        cache: bool = True,
        empty_policy: EmptyTextPolicy = EmptyTextPolicy.ZERO,
    ) -> None:
        import requests

        self.base_url = base_url.rstrip("/")
        self._session = requests.Session()
        if dimension is None:
            try:
                resp = self._session.get(f"{self.base_url}/health", timeout=self.TIMEOUT_S)
                resp.raise_for_status()
                dimension = int(resp.json()["dim"])
            except (requests.RequestException, KeyError, ValueError) as err:
                raise RemoteUnavailable(f"could not read service dimension: {err}") from err
        super().__init__(dimension, cache=cache, empty_policy=empty_policy)

    def _post_embed(self, texts: list[str]) -> dict:
        import requests

        last_err: Exception | None = None
        for attempt in range(self.RETRIES + 1):
            try:
                resp = self._session.post(
                    f"{self.base_url}/embed",
                    json={"texts": texts},
                    timeout=self.TIMEOUT_S,
                )
                if resp.status_code == 503:
                    raise RemoteUnavailable("service still loading")
                resp.raise_for_status()
                return resp.json()
            except (requests.RequestException, RemoteUnavailable, ValueError) as err:
                last_err = err
                if attempt < self.RETRIES:
                    time.sleep(self.BACKOFF_S * (2**attempt))
        raise RemoteUnavailable(f"embedding service unreachable: {last_err}")

    def _encode(self, text: str) -> np.ndarray:
        return self._encode_batch([text])[0]

    def _encode_batch(self, texts: list[str]) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for start in range(0, len(texts), self.MAX_BATCH):
            chunk = texts[start : start + self.MAX_BATCH]
            payload = self._post_embed(chunk)
            vectors = payload.get("vectors")
            if not isinstance(vectors, list) or len(vectors) != len(chunk):
                raise RemoteUnavailable("malformed service response")
            for raw in vectors:
                vec = np.asarray(raw, dtype=float)
                if vec.shape != (self.dimension,) or not np.all(np.isfinite(vec)):
                    raise RemoteUnavailable("service returned a bad vector")
                norm = np.linalg.norm(vec)
                out.append(vec / norm if norm > 0 else vec)
        return out

    def warm(self, texts: list[str]) -> None:
        """Batch-embed many texts into the cache (counts one step per miss)."""
        misses = []
        with self._lock:
            for t in texts:
                if t and t not in self._cache and self.cache_enabled:
                    misses.append(t)
        misses = list(dict.fromkeys(misses))
        if not misses:
            return
        vectors = self._encode_batch(misses)
        with self._lock:
            for t, v in zip(misses, vectors):
                self._steps += 1
                self._cache[t] = v

    def healthy(self) -> bool:
        import requests

        try:
            resp = self._session.get(f"{self.base_url}/health", timeout=self.TIMEOUT_S)
            return resp.status_code == 200
        except requests.RequestException:
            return False
