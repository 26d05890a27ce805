"""Text encoders producing unit-normalized embedding rows.

Two backends:

* ``hash:<dim>`` — a deterministic bag-of-tokens encoder: each lowercased
  token maps (via a BLAKE2-seeded Gaussian) to a fixed random direction and a
  text embeds as the normalized sum.  No downloads, bit-stable across runs,
  and texts sharing vocabulary land near each other, which is all the
  round-trip checks need.
* any other id — a sentence-transformers model of that name; unavailable
  models (missing package, no weights) raise EncoderError so callers can
  treat it as an environment problem.
"""

from __future__ import annotations

import hashlib
import re

import numpy as np

_TOKEN_RE = re.compile(r"[a-z0-9]+")


class EncoderError(RuntimeError):
    """Encoder backend unavailable or failed to load."""


class HashingEncoder:
    def __init__(self, dim: int = 64):
        if dim < 8:
            raise ValueError(f"dim must be >= 8, got {dim}")
        self.dim = dim

    def _token_vector(self, token: str) -> np.ndarray:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        seed = int.from_bytes(digest, "little")
        rng = np.random.default_rng(seed)
        return rng.standard_normal(self.dim)

    def encode(self, texts: list[str]) -> np.ndarray:
        rows = np.zeros((len(texts), self.dim))
        for i, text in enumerate(texts):
            tokens = _TOKEN_RE.findall(text.lower())
            if not tokens:
                raise ValueError(f"text {i} has no tokens: {text!r}")
            for token in tokens:
                rows[i] += self._token_vector(token)
        norms = np.linalg.norm(rows, axis=1, keepdims=True)
        if np.any(norms == 0.0):
            raise ValueError("a text encoded to the zero vector")
        return rows / norms


class SentenceTransformerEncoder:
    def __init__(self, model_id: str):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:
            raise EncoderError(f"sentence-transformers not installed (wanted {model_id!r})") from exc
        try:
            self.model = SentenceTransformer(model_id)
        except Exception as exc:
            raise EncoderError(f"could not load encoder {model_id!r}: {exc}") from exc

    def encode(self, texts: list[str]) -> np.ndarray:
        emb = np.asarray(self.model.encode(texts, convert_to_numpy=True), dtype=np.float64)
        norms = np.linalg.norm(emb, axis=1, keepdims=True)
        return emb / norms


def get_encoder(encoder_id: str):
    """hash:<dim> builds the offline hashing encoder; anything else loads a
    local sentence-transformers model."""
    if encoder_id.startswith("hash:"):
        return HashingEncoder(int(encoder_id.split(":", 1)[1]))
    if encoder_id == "hash":
        return HashingEncoder()
    return SentenceTransformerEncoder(encoder_id)
