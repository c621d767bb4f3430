"""Rule-based item segmentation: heading regexes, table-of-contents
suppression, and canonical-order filtering."""

from __future__ import annotations

import re
from dataclasses import dataclass

from .items import ITEM_ORDER, ITEM_RANK, ItemSpan, TextLine

# Canonical SEC item titles; used to boost confidence, not required to match.
ITEM_TITLES: dict[str, str] = {
    "1": "business",
    "1A": "risk factors",
    "1B": "unresolved staff comments",
    "1C": "cybersecurity",
    "2": "properties",
    "3": "legal proceedings",
    "4": "mine safety disclosures",
    "5": "market for registrant",
    "6": "selected financial data",
    "7": "management's discussion and analysis",
    "7A": "quantitative and qualitative disclosures",
    "8": "financial statements and supplementary data",
    "9": "changes in and disagreements",
    "9A": "controls and procedures",
    "9B": "other information",
    "10": "directors",
    "11": "executive compensation",
    "12": "security ownership",
    "13": "certain relationships and related transactions",
    "14": "principal accountant fees and services",
    "15": "exhibits",
    "16": "form 10-k summary",
}

_HEAD_RES: dict[str, re.Pattern] = {
    item: re.compile(
        r"^\s*(?:part\s+[ivx]+\s*[\.\-:,]?\s*)?"
        r"item\s*" + re.escape(item.lower()) + r"(?![a-z0-9])"
        r"\s*[\.\-:,]?\s*",
        re.IGNORECASE,
    )
    for item in ITEM_ORDER
}

# Window and density for TOC detection: a heading inside a cluster where
# most neighbours are also headings is a contents entry, not a section start.
TOC_WINDOW = 5
TOC_MIN_NEIGHBORS = 5


@dataclass(frozen=True)
class HeadingMatch:
    line_id: int
    item: str
    pattern_id: str
    score: float


def _match_line(text: str) -> HeadingMatch | None:
    """First item whose heading pattern fires on this line.

    Longer item ids are tried first so "ITEM 1A" resolves to 1A, not 1.
    """
    for item in sorted(ITEM_ORDER, key=len, reverse=True):
        m = _HEAD_RES[item].match(text)
        if m is None:
            continue
        rest = text[m.end():].lower()
        score = 1.0
        title = ITEM_TITLES[item]
        if rest.startswith(title[: min(len(title), 12)]):
            score += 1.0
        return HeadingMatch(-1, item, f"item-{item}", score)
    return None


def find_heading_matches(lines: list[TextLine]) -> list[HeadingMatch]:
    matches = []
    for line in lines:
        m = _match_line(line.text)
        if m is not None:
            matches.append(
                HeadingMatch(line.line_id, m.item, m.pattern_id, m.score)
            )
    return matches


def segment_rule_based(lines: list[TextLine]) -> list[ItemSpan]:
    """Detect item starts and build contiguous spans.

    Pipeline: match headings, suppress dense TOC clusters, keep the last
    surviving match per item, drop out-of-order items, then run each span
    to the line before the next start (last item to the document end).
    """
    if not lines:
        return []
    matches = find_heading_matches(lines)
    if not matches:
        return []

    matched_ids = {m.line_id for m in matches}
    suppressed = []
    surviving = []
    for m in matches:
        neighbors = sum(
            1
            for d in range(-TOC_WINDOW, TOC_WINDOW + 1)
            if d != 0 and (m.line_id + d) in matched_ids
        )
        (suppressed if neighbors >= TOC_MIN_NEIGHBORS else surviving).append(m)

    # End of the leading TOC region: last line of the first run of
    # suppressed matches. Matches after it may be rescued (recall fallback).
    toc_end = -1
    prev = None
    for m in sorted(suppressed, key=lambda m: m.line_id):
        if prev is not None and m.line_id - prev > 2 * TOC_WINDOW:
            break
        toc_end = m.line_id
        prev = m.line_id

    surviving_items = {m.item for m in surviving}
    for m in suppressed:
        if m.item not in surviving_items and m.line_id > toc_end:
            surviving.append(m)

    # one candidate per item: the last surviving match (body follows TOC)
    candidate: dict[str, HeadingMatch] = {}
    for m in sorted(surviving, key=lambda m: m.line_id):
        candidate[m.item] = m

    # enforce non-decreasing item order along the document
    starts: list[tuple[str, int]] = []
    last_rank = -1
    for m in sorted(candidate.values(), key=lambda m: m.line_id):
        if ITEM_RANK[m.item] > last_rank:
            starts.append((m.item, m.line_id))
            last_rank = ITEM_RANK[m.item]

    spans = []
    for idx, (item, start) in enumerate(starts):
        end = (
            starts[idx + 1][1] - 1
            if idx + 1 < len(starts)
            else lines[-1].line_id
        )
        spans.append(ItemSpan(item, start, end))
    return spans
