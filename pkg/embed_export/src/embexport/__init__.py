"""Per-line embedding export for converted filings.

Reads JSON Lines documents ({"doc_id": ..., "lines": [...]}), encodes every
line with a pluggable sentence encoder, and writes the LEMB embedding file
consumed by the segmentation toolkit.
"""

from .encoders import HashEncoder, MAX_TOKENS, load_encoder, truncate_tokens
from .lemb import read_lemb, write_lemb

__all__ = [
    "HashEncoder",
    "MAX_TOKENS",
    "load_encoder",
    "truncate_tokens",
    "read_lemb",
    "write_lemb",
]

__version__ = "0.1.0"
