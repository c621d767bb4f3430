"""Sentence encoders behind a common interface.

``HashEncoder`` is a deterministic offline encoder (token-hash features,
L2-normalized) useful for tests and plumbing checks. Any other encoder name
is treated as a sentence-transformers checkpoint and loaded lazily; a load
failure surfaces as EncoderError so the CLI can exit nonzero with a message.
"""

from __future__ import annotations

import hashlib

import numpy as np

# lines longer than this many whitespace tokens are truncated before encoding
MAX_TOKENS = 512


class EncoderError(RuntimeError):
    pass


def truncate_tokens(text: str, max_tokens: int = MAX_TOKENS) -> str:
    tokens = text.split()
    if len(tokens) <= max_tokens:
        return text
    return " ".join(tokens[:max_tokens])


class HashEncoder:
    """Deterministic token-hash embeddings; no model download required."""

    name = "hash"

    def __init__(self, dim: int = 64):
        if dim < 1:
            raise EncoderError(f"dim must be positive, got {dim}")
        self.dim = dim

    def encode(self, texts: list[str], batch_size: int = 32) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float32)
        for row, text in enumerate(texts):
            for tok in truncate_tokens(text).lower().split():
                digest = hashlib.md5(tok.encode("utf-8")).digest()
                idx = int.from_bytes(digest[:4], "little") % self.dim
                sign = 1.0 if digest[4] % 2 == 0 else -1.0
                out[row, idx] += sign
            norm = np.linalg.norm(out[row])
            if norm > 0:
                out[row] /= norm
        return out


class TransformerEncoder:
    """sentence-transformers checkpoint wrapper with explicit truncation."""

    def __init__(self, name: str, device: str | None = None):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:
            raise EncoderError(
                "sentence-transformers is not installed; "
                "pip install 'embed-export[transformer]'"
            ) from exc
        try:
            self._model = SentenceTransformer(name, device=device)
        except Exception as exc:
            raise EncoderError(f"failed to load encoder {name!r}: {exc}") from exc
        self.name = name
        self.dim = int(self._model.get_sentence_embedding_dimension())

    def encode(self, texts: list[str], batch_size: int = 32) -> np.ndarray:
        truncated = [truncate_tokens(t) for t in texts]
        return np.asarray(
            self._model.encode(
                truncated,
                batch_size=batch_size,
                convert_to_numpy=True,
                show_progress_bar=False,
            ),
            dtype=np.float32,
        )


def load_encoder(name: str, dim: int = 64, device: str | None = None):
    if name == "hash":
        return HashEncoder(dim)
    return TransformerEncoder(name, device=device)
