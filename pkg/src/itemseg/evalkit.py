"""Scoring: B/I-merged per-item precision/recall/F1, macro averages over
item groups, Cohen's kappa, and corpus summary statistics."""

from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import dataclass, field

from .items import ITEM_ORDER, AnnotatedDocument, parse_label

CORE_ITEMS = ("1", "1A", "3", "7")
# Table-2 style "other" group: prevalent items minus core, minus Item 15
# (its ending is ambiguous) and minus 9B.
OTHER_ITEMS = ("2", "4", "5", "6", "7A", "8", "9", "9A", "10", "11", "12", "13", "14")


class EvalError(ValueError):
    pass


@dataclass
class ItemScore:
    item: str
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0


def _item_of(label: str) -> str | None:
    tag, item = parse_label(label)
    return item  # None for O; B and I merge


def line_prf(gold: list[str], pred: list[str], item: str) -> ItemScore:
    """Line-level score for one item, with B and I tags merged."""
    if len(gold) != len(pred):
        raise EvalError(f"length mismatch: {len(gold)} gold vs {len(pred)} pred")
    score = ItemScore(item)
    for g, p in zip(gold, pred):
        g_in = _item_of(g) == item
        p_in = _item_of(p) == item
        if g_in and p_in:
            score.tp += 1
        elif p_in:
            score.fp += 1
        elif g_in:
            score.fn += 1
    return score


def macro_f1(scores: list[ItemScore | float]) -> float:
    """Unweighted mean F1 over a group."""
    if not scores:
        raise EvalError("empty score list")
    values = [s.f1 if isinstance(s, ItemScore) else float(s) for s in scores]
    return sum(values) / len(values)


def corpus_scores(
    gold_docs: dict[str, list[str]],
    pred_docs: dict[str, list[str]],
    items: list[str] | None = None,
    per_document_mean: bool = False,
) -> dict[str, ItemScore | float]:
    """Pool tp/fp/fn per item over the corpus (default), or average
    per-document F1 when ``per_document_mean`` is set."""
    if items is None:
        items = sorted(
            {
                it
                for labels in gold_docs.values()
                for lab in labels
                if (it := _item_of(lab)) is not None
            },
            key=lambda it: ITEM_ORDER.index(it),
        )
    missing = set(gold_docs) - set(pred_docs)
    if missing:
        raise EvalError(f"predictions missing for {sorted(missing)[:5]}")
    if per_document_mean:
        result: dict[str, float] = {}
        for item in items:
            f1s = [
                line_prf(gold_docs[d], pred_docs[d], item).f1
                for d in sorted(gold_docs)
                if any(_item_of(lab) == item for lab in gold_docs[d])
            ]
            result[item] = sum(f1s) / len(f1s) if f1s else 0.0
        return result
    pooled = {item: ItemScore(item) for item in items}
    for doc_id in sorted(gold_docs):
        for item in items:
            s = line_prf(gold_docs[doc_id], pred_docs[doc_id], item)
            pooled[item].tp += s.tp
            pooled[item].fp += s.fp
            pooled[item].fn += s.fn
    return pooled


@dataclass
class GroupReport:
    name: str
    members: list[str]
    scores: dict[str, ItemScore]
    macro_f1: float


def group_report(
    pooled: dict[str, ItemScore], name: str, members: list[str]
) -> GroupReport:
    present = [item for item in members if item in pooled]
    if not present:
        raise EvalError(f"group {name!r} has no scored members")
    scores = {item: pooled[item] for item in present}
    return GroupReport(name, present, scores, macro_f1(list(scores.values())))


def cohen_kappa(labels_a: list[str], labels_b: list[str]) -> float:
    """Chance-corrected agreement between two label sequences."""
    if len(labels_a) != len(labels_b):
        raise EvalError(
            f"length mismatch: {len(labels_a)} vs {len(labels_b)}"
        )
    if not labels_a:
        raise EvalError("empty sequences")
    n = len(labels_a)
    p_o = sum(1 for a, b in zip(labels_a, labels_b) if a == b) / n
    count_a = Counter(labels_a)
    count_b = Counter(labels_b)
    p_e = sum(
        (count_a[lab] / n) * (count_b[lab] / n) for lab in count_a
    )
    if p_e == 1.0:
        return 1.0 if p_o == 1.0 else 0.0
    return (p_o - p_e) / (1.0 - p_e)


DEFAULT_KAPPA_THRESHOLD = 0.8


def agreement_gate(
    labels_a: list[str],
    labels_b: list[str],
    threshold: float = DEFAULT_KAPPA_THRESHOLD,
) -> tuple[bool, float]:
    """Annotation QA gate: (kappa >= threshold, kappa)."""
    kappa = cohen_kappa(labels_a, labels_b)
    return kappa >= threshold, kappa


@dataclass
class ItemStats:
    item: str
    avg_order: float
    avg_word_length: float
    avg_line_length: float
    prevalence: float


def corpus_stats(docs: list[AnnotatedDocument]) -> dict[str, ItemStats]:
    """Per-item first-appearance order, average size, and prevalence.

    Word/line lengths average over all documents (zero when the item is
    absent); order averages only over documents that contain the item.
    """
    if not docs:
        raise EvalError("empty corpus")
    orders: dict[str, list[int]] = {}
    words: dict[str, list[int]] = {item: [] for item in ITEM_ORDER}
    lines_count: dict[str, list[int]] = {item: [] for item in ITEM_ORDER}
    containing: Counter = Counter()
    for doc in docs:
        doc_words = {item: 0 for item in ITEM_ORDER}
        doc_lines = {item: 0 for item in ITEM_ORDER}
        start_order: list[str] = []
        for line, label in zip(doc.lines, doc.labels):
            tag, item = parse_label(label)
            if item is None:
                continue
            if tag == "B":
                start_order.append(item)
            doc_words[item] += len(line.text.split())
            doc_lines[item] += 1
        for rank, item in enumerate(start_order, start=1):
            orders.setdefault(item, []).append(rank)
            containing[item] += 1
        for item in ITEM_ORDER:
            words[item].append(doc_words[item])
            lines_count[item].append(doc_lines[item])
    n = len(docs)
    stats = {}
    for item in ITEM_ORDER:
        if item not in containing:
            continue
        stats[item] = ItemStats(
            item=item,
            avg_order=sum(orders[item]) / len(orders[item]),
            avg_word_length=sum(words[item]) / n,
            avg_line_length=sum(lines_count[item]) / n,
            prevalence=containing[item] / n,
        )
    return stats


def report_csv(pooled: dict[str, ItemScore], groups: list[GroupReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["item", "tp", "fp", "fn", "precision", "recall", "f1"])
    for item, s in pooled.items():
        writer.writerow(
            [item, s.tp, s.fp, s.fn, f"{s.precision:.4f}", f"{s.recall:.4f}", f"{s.f1:.4f}"]
        )
    for g in groups:
        writer.writerow([f"group:{g.name}", "", "", "", "", "", f"{g.macro_f1:.4f}"])
    return buf.getvalue()


def report_json(pooled: dict[str, ItemScore], groups: list[GroupReport]) -> str:
    payload = {
        "items": {
            item: {
                "tp": s.tp, "fp": s.fp, "fn": s.fn,
                "precision": s.precision, "recall": s.recall, "f1": s.f1,
            }
            for item, s in pooled.items()
        },
        "groups": {g.name: {"members": g.members, "macro_f1": g.macro_f1} for g in groups},
    }
    return json.dumps(payload, indent=2)
