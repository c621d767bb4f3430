"""Bidirectional LSTM line tagger over precomputed per-line embeddings.

Forward and backward recurrences are written directly in numpy with manual
backpropagation through time, so gradients can be checked against finite
differences and training stays deterministic under a fixed seed.

Gate layout inside each stacked (4H, .) parameter: input, forget, cell
candidate, output.
"""

from __future__ import annotations

import copy
import hashlib
import struct
from dataclasses import dataclass, field

import numpy as np

from .items import ItemSpan, TextLine, labels_to_spans, repair_labels

MAGIC = b"BLSM"
VERSION = 1

PARAM_NAMES = ("Wx_f", "Wh_f", "b_f", "Wx_b", "Wh_b", "b_b", "W_out", "b_out")


class LstmError(ValueError):
    pass


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class BiLstmModel:
    input_dim: int
    hidden_dim: int
    labels: list[str]
    params: dict[str, np.ndarray]
    rng_seed: int = 0

    @classmethod
    def init(
        cls,
        input_dim: int,
        hidden_dim: int,
        labels: list[str],
        seed: int = 0,
        dtype=np.float64,
    ) -> "BiLstmModel":
        rng = np.random.default_rng(seed)
        bound = 1.0 / np.sqrt(hidden_dim)
        H, D, L = hidden_dim, input_dim, len(labels)

        def u(*shape):
            return rng.uniform(-bound, bound, size=shape).astype(dtype)

        params = {
            "Wx_f": u(4 * H, D),
            "Wh_f": u(4 * H, H),
            "b_f": u(4 * H),
            "Wx_b": u(4 * H, D),
            "Wh_b": u(4 * H, H),
            "b_b": u(4 * H),
            "W_out": u(L, 2 * H),
            "b_out": u(L),
        }
        # a positive forget-gate bias keeps early gradients alive
        params["b_f"][H : 2 * H] += 1.0
        params["b_b"][H : 2 * H] += 1.0
        return cls(input_dim, hidden_dim, labels, params, rng_seed=seed)

    # --- serialization: magic, version, dims, labels, float64 tensors ---

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<III", VERSION, self.input_dim, self.hidden_dim))
            fh.write(struct.pack("<I", len(self.labels)))
            for lab in self.labels:
                raw = lab.encode("utf-8")
                fh.write(struct.pack("<I", len(raw)))
                fh.write(raw)
            fh.write(struct.pack("<i", self.rng_seed))
            for name in PARAM_NAMES:
                tensor = np.asarray(self.params[name], dtype="<f8")
                fh.write(tensor.tobytes(order="C"))

    @classmethod
    def load(cls, path) -> "BiLstmModel":
        with open(path, "rb") as fh:
            if fh.read(4) != MAGIC:
                raise LstmError("not a Bi-LSTM model file")
            version, D, H = struct.unpack("<III", fh.read(12))
            if version != VERSION:
                raise LstmError(f"unsupported model version {version}")
            (n_labels,) = struct.unpack("<I", fh.read(4))
            labels = []
            for _ in range(n_labels):
                (ln,) = struct.unpack("<I", fh.read(4))
                labels.append(fh.read(ln).decode("utf-8"))
            (seed,) = struct.unpack("<i", fh.read(4))
            L = n_labels
            shapes = {
                "Wx_f": (4 * H, D), "Wh_f": (4 * H, H), "b_f": (4 * H,),
                "Wx_b": (4 * H, D), "Wh_b": (4 * H, H), "b_b": (4 * H,),
                "W_out": (L, 2 * H), "b_out": (L,),
            }
            params = {}
            for name in PARAM_NAMES:
                shape = shapes[name]
                count = int(np.prod(shape))
                buf = fh.read(count * 8)
                if len(buf) != count * 8:
                    raise LstmError(f"truncated tensor {name}")
                params[name] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
        return cls(D, H, labels, params, rng_seed=seed)


def _lstm_direction(x: np.ndarray, Wx, Wh, b):
    """Run one direction; returns hidden states and caches for backprop."""
    n, _ = x.shape
    H = Wh.shape[1]
    h = np.zeros((n + 1, H))
    c = np.zeros((n + 1, H))
    gates = np.empty((n, 4 * H))
    for t in range(n):
        z = Wx @ x[t] + Wh @ h[t] + b
        i = _sigmoid(z[:H])
        f = _sigmoid(z[H : 2 * H])
        g = np.tanh(z[2 * H : 3 * H])
        o = _sigmoid(z[3 * H :])
        gates[t] = np.concatenate([i, f, g, o])
        c[t + 1] = f * c[t] + i * g
        h[t + 1] = o * np.tanh(c[t + 1])
    return h, c, gates


def _lstm_direction_backward(x, Wx, Wh, b, h, c, gates, dh_out):
    """BPTT for one direction; dh_out[t] is the loss gradient w.r.t. h[t+1]."""
    n, _ = x.shape
    H = Wh.shape[1]
    dWx = np.zeros_like(Wx)
    dWh = np.zeros_like(Wh)
    db = np.zeros_like(b)
    dx = np.zeros_like(x)
    dh_next = np.zeros(H)
    dc_next = np.zeros(H)
    for t in range(n - 1, -1, -1):
        i = gates[t, :H]
        f = gates[t, H : 2 * H]
        g = gates[t, 2 * H : 3 * H]
        o = gates[t, 3 * H :]
        tanh_c = np.tanh(c[t + 1])
        dh = dh_out[t] + dh_next
        do = dh * tanh_c
        dc = dh * o * (1.0 - tanh_c**2) + dc_next
        di = dc * g
        df = dc * c[t]
        dg = dc * i
        dz = np.concatenate(
            [
                di * i * (1.0 - i),
                df * f * (1.0 - f),
                dg * (1.0 - g**2),
                do * o * (1.0 - o),
            ]
        )
        dWx += np.outer(dz, x[t])
        dWh += np.outer(dz, h[t])
        db += dz
        dx[t] = Wx.T @ dz
        dh_next = Wh.T @ dz
        dc_next = dc * f
    return dWx, dWh, db, dx


def bilstm_forward(
    model: BiLstmModel, emb: np.ndarray, with_cache: bool = False
):
    """Per-line label scores, shape (n_lines, n_labels)."""
    emb = np.asarray(emb, dtype=float)
    if emb.ndim != 2 or emb.shape[1] != model.input_dim:
        raise LstmError(
            f"embedding dim {emb.shape[-1] if emb.ndim == 2 else '?'} "
            f"!= model input dim {model.input_dim}"
        )
    if emb.shape[0] < 1:
        raise LstmError("empty embedding matrix")
    p = model.params
    hf, cf, gf = _lstm_direction(emb, p["Wx_f"], p["Wh_f"], p["b_f"])
    xr = emb[::-1].copy()
    hb_r, cb_r, gb_r = _lstm_direction(xr, p["Wx_b"], p["Wh_b"], p["b_b"])
    concat = np.concatenate([hf[1:], hb_r[1:][::-1]], axis=1)
    scores = concat @ p["W_out"].T + p["b_out"]
    if with_cache:
        cache = dict(emb=emb, hf=hf, cf=cf, gf=gf, xr=xr, hb_r=hb_r,
                     cb_r=cb_r, gb_r=gb_r, concat=concat)
        return scores, cache
    return scores


def _softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=1, keepdims=True)


def doc_loss_and_gradients(model: BiLstmModel, emb: np.ndarray, gold: np.ndarray):
    """Mean per-line cross-entropy for one document and full gradients."""
    scores, cache = bilstm_forward(model, emb, with_cache=True)
    n = scores.shape[0]
    probs = _softmax(scores)
    loss = float(-np.mean(np.log(probs[np.arange(n), gold] + 1e-300)))

    dscores = probs.copy()
    dscores[np.arange(n), gold] -= 1.0
    dscores /= n

    p = model.params
    H = model.hidden_dim
    grads = {
        "W_out": dscores.T @ cache["concat"],
        "b_out": dscores.sum(axis=0),
    }
    dconcat = dscores @ p["W_out"]
    dWxf, dWhf, dbf, _ = _lstm_direction_backward(
        cache["emb"], p["Wx_f"], p["Wh_f"], p["b_f"],
        cache["hf"], cache["cf"], cache["gf"], dconcat[:, :H],
    )
    dWxb, dWhb, dbb, _ = _lstm_direction_backward(
        cache["xr"], p["Wx_b"], p["Wh_b"], p["b_b"],
        cache["hb_r"], cache["cb_r"], cache["gb_r"], dconcat[:, H:][::-1],
    )
    grads.update(Wx_f=dWxf, Wh_f=dWhf, b_f=dbf, Wx_b=dWxb, Wh_b=dWhb, b_b=dbb)
    return loss, grads


def loss_and_gradients(model: BiLstmModel, batch):
    """Batch = list of (embedding matrix, gold label-index array).

    Documents contribute additively before averaging over the batch.
    """
    if not batch:
        raise LstmError("empty batch")
    total_loss = 0.0
    total = {name: np.zeros_like(t) for name, t in model.params.items()}
    for emb, gold in batch:
        loss, grads = doc_loss_and_gradients(model, emb, np.asarray(gold))
        total_loss += loss
        for name in total:
            total[name] += grads[name]
    scale = 1.0 / len(batch)
    for name in total:
        total[name] *= scale
    return total_loss * scale, total


@dataclass
class LstmConfig:
    hidden_dim: int = 256
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    patience: int = 10
    max_epochs: int = 200
    seed: int = 0
    val_fraction: float = 0.1


def _val_split(doc_ids: list[str], fraction: float) -> set[str]:
    """Stable 'fraction' of doc ids chosen by hash, independent of order."""
    chosen = set()
    for doc_id in doc_ids:
        digest = hashlib.sha256(doc_id.encode("utf-8")).digest()
        if int.from_bytes(digest[:8], "big") / 2**64 < fraction:
            chosen.add(doc_id)
    return chosen


@dataclass
class TrainState:
    m: dict
    v: dict
    step: int = 0
    epoch: int = 0
    best_val_loss: float = float("inf")
    epochs_since_improvement: int = 0


def train_bilstm(
    train_docs, labels: list[str], config: LstmConfig | None = None, val_docs=None
):
    """Adam training with early stopping on validation loss.

    ``train_docs`` maps doc_id -> (embedding matrix, gold label-index array).
    When ``val_docs`` is None, a stable hash split carves out validation
    documents from the training set. Returns (best model, TrainState).
    """
    config = config or LstmConfig()
    if not train_docs:
        raise LstmError("no training documents")
    for doc_id, (emb, gold) in train_docs.items():
        if emb is None:
            raise LstmError(f"missing embedding matrix for {doc_id}")
        if len(gold) != emb.shape[0]:
            raise LstmError(f"{doc_id}: {len(gold)} labels for {emb.shape[0]} rows")
    input_dim = next(iter(train_docs.values()))[0].shape[1]

    if val_docs is None:
        val_ids = _val_split(sorted(train_docs), config.val_fraction)
        if not val_ids or len(val_ids) == len(train_docs):
            ordered = sorted(train_docs)
            val_ids = set(ordered[: max(1, len(ordered) // 10)])
        val_docs = {k: v for k, v in train_docs.items() if k in val_ids}
        train_docs = {k: v for k, v in train_docs.items() if k not in val_ids}

    model = BiLstmModel.init(input_dim, config.hidden_dim, labels, config.seed)
    state = TrainState(
        m={k: np.zeros_like(v) for k, v in model.params.items()},
        v={k: np.zeros_like(v) for k, v in model.params.items()},
    )
    rng = np.random.default_rng(config.seed)
    train_ids = sorted(train_docs)
    best_params = copy.deepcopy(model.params)

    for epoch in range(config.max_epochs):
        state.epoch = epoch
        order = rng.permutation(len(train_ids))
        for idx in order:
            emb, gold = train_docs[train_ids[idx]]
            _, grads = loss_and_gradients(model, [(emb, gold)])
            state.step += 1
            lr_t = config.learning_rate * (
                np.sqrt(1.0 - config.beta2**state.step)
                / (1.0 - config.beta1**state.step)
            )
            for name, g in grads.items():
                state.m[name] = config.beta1 * state.m[name] + (1 - config.beta1) * g
                state.v[name] = config.beta2 * state.v[name] + (1 - config.beta2) * g * g
                model.params[name] -= lr_t * state.m[name] / (
                    np.sqrt(state.v[name]) + config.eps
                )
        val_loss = 0.0
        for emb, gold in val_docs.values():
            scores = bilstm_forward(model, emb)
            probs = _softmax(scores)
            gold = np.asarray(gold)
            val_loss += float(
                -np.mean(np.log(probs[np.arange(len(gold)), gold] + 1e-300))
            )
        val_loss /= max(1, len(val_docs))
        if val_loss < state.best_val_loss:
            state.best_val_loss = val_loss
            state.epochs_since_improvement = 0
            best_params = copy.deepcopy(model.params)
        else:
            state.epochs_since_improvement += 1
            if state.epochs_since_improvement >= config.patience:
                break
    model.params = best_params
    return model, state


def segment_lstm(
    model: BiLstmModel, emb: np.ndarray, lines: list[TextLine]
) -> list[ItemSpan]:
    """Argmax decode, orphan-I repair, spans."""
    emb = np.asarray(emb, dtype=float)
    if emb.shape[0] != len(lines):
        raise LstmError(
            f"{emb.shape[0]} embedding rows for {len(lines)} lines"
        )
    if not lines:
        return []
    scores = bilstm_forward(model, emb)
    decoded = [model.labels[i] for i in scores.argmax(axis=1)]
    return labels_to_spans(repair_labels(decoded))
