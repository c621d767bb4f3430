"""Item taxonomy, modified-BIO line labels, and span/label conversions.

Labels are plain strings: ``"O"`` or tag letter + item id, e.g. ``"B1"``,
``"I7A"``.  The item ids form a closed set with a canonical order (the order
items conventionally appear in a 10-K).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

ITEM_ORDER: tuple[str, ...] = (
    "1", "1A", "1B", "1C", "2", "3", "4", "5", "6", "7", "7A", "8",
    "9", "9A", "9B", "10", "11", "12", "13", "14", "15", "16",
)
ITEM_RANK: dict[str, int] = {item: i for i, item in enumerate(ITEM_ORDER)}
ITEM_SET = frozenset(ITEM_ORDER)


class LabelError(ValueError):
    """Raised on malformed labels or invalid label sequences."""


@dataclass(frozen=True)
class TextLine:
    """One visual line of a converted filing."""

    line_id: int
    text: str

    def __post_init__(self):
        if "\n" in self.text or "\r" in self.text:
            raise ValueError("line text must not contain newlines")


@dataclass(frozen=True)
class ItemSpan:
    """Inclusive line range occupied by one item."""

    item: str
    start_line: int
    end_line: int

    def __post_init__(self):
        if self.item not in ITEM_SET:
            raise LabelError(f"unknown item id {self.item!r}")
        if self.start_line > self.end_line:
            raise LabelError(
                f"span for item {self.item} has start {self.start_line} "
                f"> end {self.end_line}"
            )


@dataclass
class AnnotatedDocument:
    doc_id: str
    lines: list[TextLine]
    labels: list[str]

    def __post_init__(self):
        if len(self.labels) != len(self.lines):
            raise LabelError(
                f"{self.doc_id}: {len(self.labels)} labels for "
                f"{len(self.lines)} lines"
            )


@dataclass(frozen=True)
class LabelViolation:
    """First point where a label sequence breaks the modified-BIO rules."""

    position: int
    reason: str


def parse_label(label: str) -> tuple[str, str | None]:
    """Split a label string into (tag, item). O carries no item."""
    if label == "O":
        return "O", None
    tag, item = label[:1], label[1:]
    if tag not in ("B", "I") or item not in ITEM_SET:
        raise LabelError(f"malformed label {label!r}")
    return tag, item


def validate_label_sequence(labels: list[str]) -> LabelViolation | None:
    """Return None when valid, else the first violation.

    A sequence is valid when every I(item) directly follows B(item) or
    I(item) of the same item, and no item begins twice.
    """
    begun: set[str] = set()
    prev_item: str | None = None
    for pos, label in enumerate(labels):
        try:
            tag, item = parse_label(label)
        except LabelError as exc:
            return LabelViolation(pos, str(exc))
        if tag == "B":
            if item in begun:
                return LabelViolation(pos, f"item {item} begins twice")
            begun.add(item)
            prev_item = item
        elif tag == "I":
            if prev_item != item:
                return LabelViolation(
                    pos, f"I{item} not preceded by B{item} or I{item}"
                )
        else:
            prev_item = None
    return None


def labels_to_spans(labels: list[str]) -> list[ItemSpan]:
    """Convert a valid label sequence to sorted, non-overlapping spans."""
    violation = validate_label_sequence(labels)
    if violation is not None:
        raise LabelError(
            f"invalid label sequence at {violation.position}: {violation.reason}"
        )
    spans: list[ItemSpan] = []
    start = None
    current: str | None = None
    for pos, label in enumerate(labels):
        tag, item = parse_label(label)
        if tag == "I":
            continue
        if current is not None:
            spans.append(ItemSpan(current, start, pos - 1))
            current, start = None, None
        if tag == "B":
            current, start = item, pos
    if current is not None:
        spans.append(ItemSpan(current, start, len(labels) - 1))
    return spans


def spans_to_labels(spans: list[ItemSpan], n_lines: int) -> list[str]:
    """Inverse of labels_to_spans; uncovered positions become O."""
    labels = ["O"] * n_lines
    seen: set[str] = set()
    for span in sorted(spans, key=lambda s: s.start_line):
        if span.end_line >= n_lines:
            raise LabelError(
                f"span for item {span.item} ends at {span.end_line}, "
                f"document has {n_lines} lines"
            )
        if span.item in seen:
            raise LabelError(f"item {span.item} appears in two spans")
        seen.add(span.item)
        for pos in range(span.start_line, span.end_line + 1):
            if labels[pos] != "O":
                raise LabelError(
                    f"span for item {span.item} overlaps at line {pos}"
                )
        labels[span.start_line] = "B" + span.item
        for pos in range(span.start_line + 1, span.end_line + 1):
            labels[pos] = "I" + span.item
    return labels


def repair_labels(labels: list[str]) -> list[str]:
    """Force a raw decoder output into a valid sequence.

    Orphan I(item) (no immediately preceding B/I of the same item) becomes
    B(item); a second B for an already-begun item continues the run when
    adjacent, otherwise the later run keeps its own B under a fresh pass
    rule: the earlier begun item blocks re-beginning, so later stray runs
    of an already-closed item are relabeled O.
    """
    out: list[str] = []
    begun: set[str] = set()
    prev_item: str | None = None
    for label in labels:
        tag, item = parse_label(label)
        if tag == "O":
            out.append("O")
            prev_item = None
            continue
        if tag == "I" and prev_item == item:
            out.append(label)
            continue
        # start of a run (either B, or orphan I promoted to B)
        if item in begun:
            if prev_item == item:  # duplicate B continuing the same run
                out.append("I" + item)
            else:
                out.append("O")
                prev_item = None
                continue
        else:
            begun.add(item)
            out.append("B" + item)
        prev_item = item
    return out


# --- JSON Lines interchange -------------------------------------------------

def document_to_json(doc: AnnotatedDocument, include_lines: bool = True) -> str:
    record: dict = {"doc_id": doc.doc_id, "labels": doc.labels}
    if include_lines:
        record["lines"] = [ln.text for ln in doc.lines]
    return json.dumps(record, ensure_ascii=False)


def document_from_json(raw: str) -> AnnotatedDocument:
    record = json.loads(raw)
    labels = record["labels"]
    texts = record.get("lines", [""] * len(labels))
    lines = [TextLine(i, t) for i, t in enumerate(texts)]
    return AnnotatedDocument(record["doc_id"], lines, labels)


def read_label_file(path) -> list[AnnotatedDocument]:
    docs = []
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            raw = raw.strip()
            if raw:
                docs.append(document_from_json(raw))
    return docs


def write_label_file(path, docs, include_lines: bool = True) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(document_to_json(doc, include_lines) + "\n")
