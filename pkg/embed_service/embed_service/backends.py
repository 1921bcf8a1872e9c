"""Embedding backends for the service.

Two families:

* A pretrained CLIP text encoder (via sentence-transformers, falling back to
  the transformers CLIP classes), which gives similarity numbers comparable
  to published results. Requires downloaded checkpoint weights.
* ``hashed-ngram-<dim>``: a self-contained deterministic encoder that maps
  each unigram and adjacent bigram to a keyed-hash pseudo-random unit vector
  and normalizes their weighted sum. No weights needed; it intentionally
  mirrors the client side's built-in synthetic encoder family (same hash,
  same bigram weight), so a sweep pointed at this service reproduces
  synthetic-encoder results over the wire.

Texts arrive as tokens joined by single spaces and are embedded verbatim, no
prompt templates, so both ends of the system hash identical strings.
"""

from __future__ import annotations

import hashlib
import re

import numpy as np

DEFAULT_BIGRAM_WEIGHT = 0.5
_BIGRAM_SEP = "\x1f"

_HASHED_NAME = re.compile(r"^hashed-ngram-(\d+)$")


class BackendLoadError(RuntimeError):
    pass


class HashedNgramBackend:
    """Deterministic keyed-hash n-gram embedder (no model weights)."""

    def __init__(self, dimension: int, salt: int = 0, bigram_weight: float = DEFAULT_BIGRAM_WEIGHT):
        if dimension < 2:
            raise BackendLoadError(f"dimension must be >= 2, got {dimension}")
        self.name = f"hashed-ngram-{dimension}"
        self.dimension = dimension
        self.salt = int(salt)
        self.bigram_weight = float(bigram_weight)
        self._key = self.salt.to_bytes(8, "little", signed=False)
        self._memo: dict[str, np.ndarray] = {}

    def _gram(self, gram: str) -> np.ndarray:
        vec = self._memo.get(gram)
        if vec is None:
            digest = hashlib.blake2b(gram.encode("utf-8"), key=self._key, digest_size=8).digest()
            rng = np.random.default_rng(int.from_bytes(digest, "little"))
            vec = rng.standard_normal(self.dimension)
            vec /= np.linalg.norm(vec)
            self._memo[gram] = vec
        return vec

    def encode(self, texts: list[str]) -> np.ndarray:
        out = np.empty((len(texts), self.dimension))
        for row, text in enumerate(texts):
            tokens = text.split(" ") if text else []
            if not tokens:
                out[row] = self._gram(_BIGRAM_SEP)
                continue
            total = np.zeros(self.dimension)
            for t in tokens:
                total += self._gram(t)
            for a, b in zip(tokens, tokens[1:]):
                total += self.bigram_weight * self._gram(a + _BIGRAM_SEP + b)
            norm = np.linalg.norm(total)
            out[row] = total / norm if norm > 0 else total
        return out


class ClipTextBackend:
    """Pretrained CLIP text tower in eval mode; deterministic, normalized."""

    def __init__(self, model_name: str):
        self.name = model_name
        try:
            self._encode = self._load_sentence_transformers(model_name)
        except Exception:
            try:
                self._encode = self._load_transformers(model_name)
            except Exception as err:
                raise BackendLoadError(f"cannot load CLIP model {model_name!r}: {err}") from err
        self.dimension = int(self._encode(["probe"]).shape[1])

    @staticmethod
    def _load_sentence_transformers(model_name: str):
        from sentence_transformers import SentenceTransformer

        model = SentenceTransformer(model_name)
        model.eval()

        def encode(texts: list[str]) -> np.ndarray:
            vectors = model.encode(texts, convert_to_numpy=True, normalize_embeddings=True)
            return np.asarray(vectors, dtype=np.float64)

        return encode

    @staticmethod
    def _load_transformers(model_name: str):
        import torch
        from transformers import CLIPTextModelWithProjection, CLIPTokenizer

        tokenizer = CLIPTokenizer.from_pretrained(model_name)
        model = CLIPTextModelWithProjection.from_pretrained(model_name)
        model.eval()

        def encode(texts: list[str]) -> np.ndarray:
            with torch.no_grad():
                inputs = tokenizer(texts, padding=True, truncation=True, return_tensors="pt")
                embeds = model(**inputs).text_embeds
                embeds = embeds / embeds.norm(dim=-1, keepdim=True)
            return embeds.numpy().astype(np.float64)

        return encode

    def encode(self, texts: list[str]) -> np.ndarray:
        return self._encode(texts)


def load_backend(model_name: str, salt: int = 0):
    match = _HASHED_NAME.match(model_name)
    if match:
        return HashedNgramBackend(int(match.group(1)), salt=salt)
    return ClipTextBackend(model_name)
