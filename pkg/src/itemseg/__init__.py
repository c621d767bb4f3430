"""Segment SEC 10-K filings into numbered items.

Four interchangeable methods: rule-based heading detection, a linear-chain
CRF, a Bi-LSTM over per-line embeddings, and line-ID-based LLM prompting,
plus the ingestion and evaluation machinery around them.
"""

from .items import (
    ITEM_ORDER,
    AnnotatedDocument,
    ItemSpan,
    TextLine,
    labels_to_spans,
    spans_to_labels,
    validate_label_sequence,
)

__version__ = "0.1.0"

__all__ = [
    "ITEM_ORDER",
    "AnnotatedDocument",
    "ItemSpan",
    "TextLine",
    "labels_to_spans",
    "spans_to_labels",
    "validate_label_sequence",
    "__version__",
]
