"""Deterministic generator of 10-K-shaped documents with known gold labels.

Inclusion probabilities and body lengths default to the observed corpus
statistics (lengths scaled down 10x so test corpora stay desk-sized).
Also provides token-hash pseudo-embeddings so the Bi-LSTM can be exercised
without any sentence encoder.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .items import ITEM_ORDER, AnnotatedDocument, TextLine
from .rules import ITEM_TITLES

DEFAULT_PREVALENCE: dict[str, float] = {
    "1": 0.98, "1A": 0.74, "1B": 0.69, "1C": 0.0008, "2": 0.97, "3": 0.98,
    "4": 0.95, "5": 0.98, "6": 0.95, "7": 0.98, "7A": 0.91, "8": 0.98,
    "9": 0.97, "9A": 0.93, "9B": 0.77, "10": 0.95, "11": 0.95, "12": 0.95,
    "13": 0.95, "14": 0.86, "15": 0.99, "16": 0.01,
}

# mean body lines per item, scaled down 10x from the observed corpus
DEFAULT_BODY_LINES: dict[str, float] = {
    "1": 16.4, "1A": 8.1, "1B": 1.0, "1C": 1.0, "2": 2.6, "3": 1.0,
    "4": 1.0, "5": 2.4, "6": 2.4, "7": 22.5, "7A": 1.4, "8": 38.9,
    "9": 1.0, "9A": 1.3, "9B": 1.1, "10": 2.2, "11": 3.3, "12": 1.5,
    "13": 1.0, "14": 1.0, "15": 6.3, "16": 1.0,
}

_ITEM_KEYWORDS: dict[str, list[str]] = {
    "1": ["products", "customers", "operations", "segments"],
    "1A": ["risks", "uncertainty", "adverse", "materially"],
    "1B": ["unresolved", "staff", "comments"],
    "1C": ["cybersecurity", "threats", "incidents"],
    "2": ["facilities", "leases", "square", "offices"],
    "3": ["litigation", "proceedings", "claims"],
    "4": ["mine", "safety", "regulations"],
    "5": ["stockholders", "dividends", "shares", "market"],
    "6": ["selected", "financial", "summary"],
    "7": ["results", "liquidity", "revenues", "expenses", "discussion"],
    "7A": ["interest", "rates", "hedging", "exposure"],
    "8": ["balance", "statements", "audited", "notes", "consolidated"],
    "9": ["disagreements", "accountants", "none"],
    "9A": ["controls", "procedures", "effective"],
    "9B": ["other", "information", "reportable"],
    "10": ["directors", "officers", "governance"],
    "11": ["compensation", "salary", "awards"],
    "12": ["ownership", "beneficial", "holders"],
    "13": ["relationships", "transactions", "independence"],
    "14": ["fees", "audit", "services"],
    "15": ["exhibits", "schedules", "signatures"],
    "16": ["summary", "optional"],
}

_FILLER = [
    "the company continued its operations during the fiscal year",
    "management believes these factors remain significant to the business",
    "additional detail appears elsewhere in this annual report",
    "amounts are reported in thousands unless otherwise noted",
    "these activities are conducted through wholly owned subsidiaries",
]

_NOISE_LINES = [
    "Table of Contents",
    "PART I",
    "PART II",
    "PART III",
    "See accompanying notes to the consolidated financial statements",
    "Forward looking statements involve known and unknown risks",
]

_HEADING_STYLES = (
    "upper_dot_title",  # ITEM 1. BUSINESS
    "title_dot_title",  # Item 1. Business
    "upper_dash_title",  # ITEM 1 - BUSINESS
    "title_colon",  # Item 1: Business
    "upper_bare",  # ITEM 1. (no title words)
)


@dataclass
class GeneratorSpec:
    seed: int = 42
    n_docs: int = 100
    inclusion: dict[str, float] = field(
        default_factory=lambda: dict(DEFAULT_PREVALENCE)
    )
    body_lines: dict[str, float] = field(
        default_factory=lambda: dict(DEFAULT_BODY_LINES)
    )
    toc_probability: float = 0.7
    noise_rate: float = 0.15
    header_lines: int = 4

    def validate(self) -> None:
        for item, p in self.inclusion.items():
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"inclusion[{item}] = {p} outside [0, 1]")
        for item, mean in self.body_lines.items():
            if mean < 1:
                raise ValueError(f"body_lines[{item}] = {mean} < 1")


def _heading(item: str, style: str) -> str:
    title = ITEM_TITLES[item]
    if style == "upper_dot_title":
        return f"ITEM {item}. {title.upper()}"
    if style == "title_dot_title":
        return f"Item {item}. {title.title()}"
    if style == "upper_dash_title":
        return f"ITEM {item} - {title.upper()}"
    if style == "title_colon":
        return f"Item {item}: {title.title()}"
    return f"ITEM {item}."


def _body_line(item: str, rng: np.random.Generator) -> str:
    kw = _ITEM_KEYWORDS[item]
    parts = [
        str(rng.choice(kw)).capitalize(),
        "of the registrant include",
        str(rng.choice(kw)),
        "and",
        str(rng.choice(kw)),
        ";",
        str(rng.choice(_FILLER)),
    ]
    return " ".join(parts)


def generate_document(doc_id: str, spec: GeneratorSpec, rng: np.random.Generator) -> AnnotatedDocument:
    texts: list[str] = []
    labels: list[str] = []

    def emit(text: str, label: str) -> None:
        texts.append(text)
        labels.append(label)

    emit("UNITED STATES SECURITIES AND EXCHANGE COMMISSION", "O")
    emit("ANNUAL REPORT PURSUANT TO SECTION THIRTEEN", "O")
    for _ in range(spec.header_lines):
        emit(str(rng.choice(_FILLER)).capitalize(), "O")

    included = [
        item
        for item in ITEM_ORDER
        if item in spec.inclusion and rng.random() < spec.inclusion[item]
    ]

    if rng.random() < spec.toc_probability:
        emit("TABLE OF CONTENTS", "O")
        for item in included:
            emit(f"ITEM {item}. {ITEM_TITLES[item].upper()}", "O")

    for item in included:
        if rng.random() < spec.noise_rate:
            emit(str(rng.choice(_NOISE_LINES)), "O")
        style = _HEADING_STYLES[int(rng.integers(len(_HEADING_STYLES)))]
        emit(_heading(item, style), "B" + item)
        n_body = max(1, int(rng.poisson(spec.body_lines.get(item, 1.0))))
        for _ in range(n_body):
            emit(_body_line(item, rng), "I" + item)

    emit("SIGNATURES", "O")
    emit("Pursuant to the requirements of the Securities Exchange Act", "O")

    lines = [TextLine(i, t) for i, t in enumerate(texts)]
    return AnnotatedDocument(doc_id, lines, labels)


def generate(spec: GeneratorSpec) -> list[AnnotatedDocument]:
    """Deterministic corpus: per-document child seeds derived from the spec
    seed, so documents are reproducible independently of generation order."""
    spec.validate()
    root = np.random.SeedSequence(spec.seed)
    docs = []
    for i, child in enumerate(root.spawn(spec.n_docs)):
        rng = np.random.default_rng(child)
        docs.append(generate_document(f"synth-{spec.seed}-{i:05d}", spec, rng))
    return docs


def pseudo_embedding(text: str, dim: int) -> np.ndarray:
    """Deterministic token-hash embedding; stable across processes."""
    vec = np.zeros(dim, dtype=np.float64)
    for tok in text.lower().split():
        digest = hashlib.md5(tok.encode("utf-8")).digest()
        idx = int.from_bytes(digest[:4], "little") % dim
        sign = 1.0 if digest[4] % 2 == 0 else -1.0
        vec[idx] += sign
    norm = np.linalg.norm(vec)
    return vec / norm if norm > 0 else vec


def pseudo_embeddings(doc: AnnotatedDocument, dim: int) -> np.ndarray:
    return np.stack([pseudo_embedding(ln.text, dim) for ln in doc.lines])
