"""Linear-chain CRF line tagger.

Per-line features fall into three families: semantic (unigram/bigram),
syntactic (first-character case, uppercase ratio), and structural (word
count, normalized forward/backward position). Inference is exact via the
chain kernels; training is L2-regularized maximum likelihood under L-BFGS.
"""

from __future__ import annotations

import json
import string
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import kernels
from .items import ItemSpan, TextLine, labels_to_spans, repair_labels

WORD_LEN_CAP = 200
_STRIP = string.punctuation


class CrfError(ValueError):
    pass


def _tokens(text: str) -> list[str]:
    toks = []
    for raw in text.lower().split():
        tok = raw.strip(_STRIP)
        if tok:
            toks.append(tok)
    return toks


def extract_features(lines: list[TextLine], position: int) -> dict[str, float]:
    """Sparse feature map for one line in context of its document."""
    n = len(lines)
    text = lines[position].text
    feats: dict[str, float] = {}
    toks = _tokens(text)
    for tok in toks:
        feats[f"uni:{tok}"] = 1.0
    for a, b in zip(toks, toks[1:]):
        feats[f"bi:{a}|{b}"] = 1.0

    letters = [ch for ch in text if ch.isalpha()]
    stripped = text.lstrip()
    feats["syn:first_upper"] = 1.0 if stripped and stripped[0].isupper() else 0.0
    feats["syn:upper_pct"] = (
        sum(1 for ch in letters if ch.isupper()) / len(letters) if letters else 0.0
    )

    feats["str:word_len"] = float(min(len(text.split()), WORD_LEN_CAP))
    fwd = position / max(1, n - 1)
    feats["str:fwd_pos"] = fwd
    feats["str:bwd_pos"] = 1.0 - fwd
    return feats


@dataclass
class CrfModel:
    labels: list[str]
    feature_vocab: dict[str, int]
    state_weights: np.ndarray  # (F, L)
    transitions: np.ndarray  # (L, L), [prev, next]
    l2_lambda: float = 1.0
    loss_trajectory: list[float] = field(default_factory=list)

    @property
    def label_index(self) -> dict[str, int]:
        return {lab: i for i, lab in enumerate(self.labels)}

    def save(self, path) -> None:
        sparse = {}
        for feat, row in self.feature_vocab.items():
            for j, lab in enumerate(self.labels):
                w = self.state_weights[row, j]
                if w != 0.0:
                    sparse[f"{feat}\x1f{lab}"] = float(f"{w:.17g}")
        payload = {
            "version": 1,
            "labels": self.labels,
            "l2": self.l2_lambda,
            "state_weights": sparse,
            "transitions": [
                [float(f"{w:.17g}") for w in row] for row in self.transitions
            ],
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh)

    @classmethod
    def load(cls, path) -> "CrfModel":
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        if payload.get("version") != 1:
            raise CrfError(f"unsupported model version {payload.get('version')!r}")
        labels = payload["labels"]
        lab_idx = {lab: i for i, lab in enumerate(labels)}
        vocab: dict[str, int] = {}
        entries = []
        for key, w in payload["state_weights"].items():
            feat, _, lab = key.partition("\x1f")
            if feat not in vocab:
                vocab[feat] = len(vocab)
            entries.append((vocab[feat], lab_idx[lab], w))
        weights = np.zeros((len(vocab), len(labels)))
        for row, col, w in entries:
            weights[row, col] = w
        return cls(
            labels=labels,
            feature_vocab=vocab,
            state_weights=weights,
            transitions=np.array(payload["transitions"], dtype=float),
            l2_lambda=payload["l2"],
        )


@dataclass
class _EncodedDoc:
    """Document features resolved against a model vocabulary."""

    n: int
    pos_idx: np.ndarray  # (nnz,)
    feat_idx: np.ndarray  # (nnz,)
    values: np.ndarray  # (nnz,)
    gold: np.ndarray | None = None  # (n,) label indices


def encode_document(
    lines: list[TextLine],
    vocab: dict[str, int],
    gold: list[int] | None = None,
) -> _EncodedDoc:
    pos_l, feat_l, val_l = [], [], []
    for t in range(len(lines)):
        for feat, value in extract_features(lines, t).items():
            row = vocab.get(feat)
            if row is not None and value != 0.0:
                pos_l.append(t)
                feat_l.append(row)
                val_l.append(value)
    return _EncodedDoc(
        n=len(lines),
        pos_idx=np.asarray(pos_l, dtype=np.intp),
        feat_idx=np.asarray(feat_l, dtype=np.intp),
        values=np.asarray(val_l, dtype=float),
        gold=None if gold is None else np.asarray(gold, dtype=np.intp),
    )


def _state_scores(model: CrfModel, doc: _EncodedDoc) -> np.ndarray:
    scores = np.zeros((doc.n, len(model.labels)))
    np.add.at(
        scores,
        doc.pos_idx,
        model.state_weights[doc.feat_idx] * doc.values[:, None],
    )
    return np.ascontiguousarray(scores)


def crf_score(model: CrfModel, doc: _EncodedDoc, label_ids: np.ndarray) -> float:
    """Unnormalized chain score of one labeling."""
    state = float(
        np.sum(
            model.state_weights[doc.feat_idx, label_ids[doc.pos_idx]] * doc.values
        )
    )
    trans = float(np.sum(model.transitions[label_ids[:-1], label_ids[1:]]))
    return state + trans


def forward_backward(model: CrfModel, doc: _EncodedDoc):
    scores = _state_scores(model, doc)
    trans = np.ascontiguousarray(model.transitions)
    return kernels.forward_backward(scores, trans)


def viterbi_decode(model: CrfModel, doc: _EncodedDoc) -> np.ndarray:
    scores = _state_scores(model, doc)
    trans = np.ascontiguousarray(model.transitions)
    return np.asarray(kernels.viterbi(scores, trans))


def nll_and_gradient(model: CrfModel, batch: list[_EncodedDoc]):
    """Regularized negative log-likelihood and its gradient.

    Gradient = (expected - empirical feature counts) + l2 * weights.
    """
    L = len(model.labels)
    grad_state = np.zeros_like(model.state_weights)
    grad_trans = np.zeros_like(model.transitions)
    loss = 0.0
    for doc in batch:
        if doc.gold is None:
            raise CrfError("training document lacks gold labels")
        log_z, marginals, pairwise = forward_backward(model, doc)
        loss += log_z - crf_score(model, doc, doc.gold)
        # expected - empirical state counts
        contrib = marginals[doc.pos_idx] * doc.values[:, None]
        np.add.at(grad_state, doc.feat_idx, contrib)
        np.add.at(
            grad_state, (doc.feat_idx, doc.gold[doc.pos_idx]), -doc.values
        )
        grad_trans += pairwise.sum(axis=0)
        np.add.at(grad_trans, (doc.gold[:-1], doc.gold[1:]), -1.0)
    lam = model.l2_lambda
    loss += 0.5 * lam * (
        float(np.sum(model.state_weights**2)) + float(np.sum(model.transitions**2))
    )
    grad_state += lam * model.state_weights
    grad_trans += lam * model.transitions
    return loss, grad_state, grad_trans


@dataclass
class CrfConfig:
    l2_lambda: float = 1.0
    tol: float = 1e-5
    max_iter: int = 300
    min_feature_count: int = 1


def train_crf(corpus, config: CrfConfig | None = None) -> CrfModel:
    """Fit a CrfModel on AnnotatedDocuments by L-BFGS. Deterministic."""
    config = config or CrfConfig()
    if not corpus:
        raise CrfError("empty training corpus")

    labels = sorted({lab for doc in corpus for lab in doc.labels})
    if "O" not in labels:
        labels.append("O")
        labels.sort()
    lab_idx = {lab: i for i, lab in enumerate(labels)}

    counts: dict[str, int] = {}
    for doc in corpus:
        for t in range(len(doc.lines)):
            for feat in extract_features(doc.lines, t):
                counts[feat] = counts.get(feat, 0) + 1
    vocab = {
        feat: i
        for i, feat in enumerate(
            f for f in counts if counts[f] >= config.min_feature_count
        )
    }

    encoded = [
        encode_document(doc.lines, vocab, [lab_idx[lab] for lab in doc.labels])
        for doc in corpus
    ]

    F, L = len(vocab), len(labels)
    model = CrfModel(
        labels=labels,
        feature_vocab=vocab,
        state_weights=np.zeros((F, L)),
        transitions=np.zeros((L, L)),
        l2_lambda=config.l2_lambda,
    )
    trajectory: list[float] = []

    def objective(x):
        model.state_weights = x[: F * L].reshape(F, L)
        model.transitions = x[F * L:].reshape(L, L)
        loss, gs, gt = nll_and_gradient(model, encoded)
        if not np.isfinite(loss):
            raise CrfError(f"non-finite training loss {loss!r}")
        trajectory.append(loss)
        return loss, np.concatenate([gs.ravel(), gt.ravel()])

    x0 = np.zeros(F * L + L * L)
    result = minimize(
        objective,
        x0,
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": config.max_iter, "gtol": config.tol, "ftol": 0.0},
    )
    model.state_weights = result.x[: F * L].reshape(F, L).copy()
    model.transitions = result.x[F * L:].reshape(L, L).copy()
    model.loss_trajectory = trajectory
    return model


def segment_crf(model: CrfModel, lines: list[TextLine]) -> list[ItemSpan]:
    """Decode, repair orphan I tags, and convert to item spans."""
    if not lines:
        return []
    doc = encode_document(lines, model.feature_vocab)
    path = viterbi_decode(model, doc)
    decoded = [model.labels[i] for i in path]
    return labels_to_spans(repair_labels(decoded))
