"""Utterance emotion classification: a linear head with softmax output.

The head maps the concatenated embedding slots [s1; s2; s3] (length 3*d)
to 7 raw logits, one per emotion class in canonical order. Training
minimizes mean cross-entropy with AdamW over fixed embeddings.

Also home to the confusion-matrix utilities used for error analysis.
"""

from __future__ import annotations

import base64
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import Corpus, EmotionLabel, canonical_json_bytes
from .embedder import EmbeddingSlots, EmbeddingStore
from .optim import AdamW

logger = logging.getLogger(__name__)

N_CLASSES = len(EmotionLabel)

CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    """Raised when a checkpoint file cannot be loaded."""


@dataclass
class EmotionHead:
    """Linear classifier: logits = weight @ [s1; s2; s3] + bias."""

    weight: np.ndarray  # (7, 3*d) float64
    bias: np.ndarray    # (7,) float64

    def __post_init__(self) -> None:
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.weight.shape[0] != N_CLASSES:
            raise ValueError(f"weight must be ({N_CLASSES}, 3*d), got {self.weight.shape}")
        if self.bias.shape != (N_CLASSES,):
            raise ValueError(f"bias must have shape ({N_CLASSES},), got {self.bias.shape}")
        if not (np.all(np.isfinite(self.weight)) and np.all(np.isfinite(self.bias))):
            raise ValueError("head parameters must be finite")

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @classmethod
    def zeros(cls, d: int) -> EmotionHead:
        return cls(np.zeros((N_CLASSES, 3 * d)), np.zeros(N_CLASSES))


def head_forward(slots: EmbeddingSlots, head: EmotionHead) -> np.ndarray:
    """Raw (pre-softmax) logits for one utterance, length 7."""
    features = slots.concatenated()
    if features.shape[0] != head.in_dim:
        raise ValueError(f"head expects input dimension {head.in_dim}, "
                         f"got {features.shape[0]}")
    return head.weight @ features + head.bias


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stabilized softmax over the last axis."""
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exps = np.exp(shifted)
    return exps / exps.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class HeadTrainConfig:
    lr: float = 1e-3
    epochs: int = 100
    batch_size: int = 8
    seed: int = 0
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.01


def _features_and_labels(corpus: Corpus, store: EmbeddingStore) -> tuple[np.ndarray, np.ndarray]:
    feats, labels = [], []
    for conv in corpus.conversations:
        for utt in conv.utterances:
            feats.append(store.get(conv.conversation_id, utt.utterance_id).concatenated())
            labels.append(int(utt.emotion))
    return np.stack(feats), np.asarray(labels, dtype=np.int64)


def cross_entropy(head: EmotionHead, features: np.ndarray, labels: np.ndarray) -> float:
    """Mean cross-entropy of the head on a feature/label batch."""
    logits = features @ head.weight.T + head.bias
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return float(-log_probs[np.arange(len(labels)), labels].mean())


def head_loss_and_grads(head: EmotionHead, features: np.ndarray, labels: np.ndarray
                        ) -> tuple[float, dict[str, np.ndarray]]:
    """Mean cross-entropy plus its exact gradients for weight and bias."""
    logits = features @ head.weight.T + head.bias
    probs = softmax(logits)
    onehot = np.eye(N_CLASSES)[labels]
    dlogits = (probs - onehot) / len(labels)
    grads = {"weight": dlogits.T @ features, "bias": dlogits.sum(axis=0)}
    return cross_entropy(head, features, labels), grads


def train_head(corpus: Corpus, store: EmbeddingStore,
               config: HeadTrainConfig = HeadTrainConfig()) -> EmotionHead:
    """Train the head on gold emotions with AdamW; deterministic given seed."""
    if not corpus.conversations:
        raise ValueError("cannot train on an empty corpus")
    features, labels = _features_and_labels(corpus, store)
    n = len(labels)
    head = EmotionHead.zeros(store.dim)
    params = {"weight": head.weight, "bias": head.bias}
    opt = AdamW(lr=config.lr, betas=config.betas, eps=config.eps,
                weight_decay=config.weight_decay)
    rng = np.random.default_rng(config.seed)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            _, grads = head_loss_and_grads(head, features[idx], labels[idx])
            opt.step(params, grads)
        if (epoch + 1) % 50 == 0:
            logger.debug("head epoch %d: loss %.6f", epoch + 1,
                         cross_entropy(head, features, labels))
    return head


def predict_emotions(corpus_slots: Sequence[EmbeddingSlots], head: EmotionHead) -> list[EmotionLabel]:
    """Argmax emotion per utterance, tie-broken toward the lower class index."""
    return [EmotionLabel(int(np.argmax(head_forward(s, head)))) for s in corpus_slots]


# ---------------------------------------------------------------------------
# Confusion matrix
# ---------------------------------------------------------------------------

def confusion(golds: Sequence[EmotionLabel], preds: Sequence[EmotionLabel]) -> np.ndarray:
    """7x7 count matrix, rows = gold class, columns = predicted class."""
    if len(golds) != len(preds):
        raise ValueError(f"length mismatch: {len(golds)} golds vs {len(preds)} predictions")
    matrix = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    for g, p in zip(golds, preds):
        matrix[int(g), int(p)] += 1
    return matrix


def accuracy(matrix: np.ndarray) -> float:
    """trace / total over a confusion matrix."""
    total = int(matrix.sum())
    if total == 0:
        raise ValueError("empty confusion matrix")
    return float(np.trace(matrix)) / total


# ---------------------------------------------------------------------------
# Checkpointing
# ---------------------------------------------------------------------------

def _encode_array(arr: np.ndarray) -> dict[str, object]:
    return {"shape": list(arr.shape),
            "data": base64.b64encode(np.asarray(arr, dtype="<f4").tobytes()).decode("ascii")}


def _decode_array(entry: object, name: str) -> np.ndarray:
    if not isinstance(entry, dict) or "shape" not in entry or "data" not in entry:
        raise CheckpointError(f"parameter {name!r} must carry shape and data")
    shape = tuple(entry["shape"])
    raw = base64.b64decode(str(entry["data"]).encode("ascii"))
    expected = 4 * int(np.prod(shape)) if shape else 4
    if len(raw) != expected:
        raise CheckpointError(f"parameter {name!r}: expected {expected} bytes, got {len(raw)}")
    arr = np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float64)
    if not np.all(np.isfinite(arr)):
        raise CheckpointError(f"parameter {name!r} contains non-finite values")
    return arr


def save_head(head: EmotionHead, path: str | Path, *,
              seed: int | None = None, config: dict | None = None) -> None:
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "kind": "emotion_head",
        "in_dim": head.in_dim,
        "seed": seed,
        "config": config or {},
        "params": {"weight": _encode_array(head.weight), "bias": _encode_array(head.bias)},
    }
    Path(path).write_bytes(canonical_json_bytes(doc) + b"\n")


def load_head(path: str | Path) -> EmotionHead:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"malformed head checkpoint: {exc.msg}") from None
    if doc.get("kind") != "emotion_head":
        raise CheckpointError(f"not an emotion head checkpoint: kind={doc.get('kind')!r}")
    if doc.get("format_version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format_version "
                              f"{doc.get('format_version')!r}")
    params = doc.get("params", {})
    return EmotionHead(_decode_array(params.get("weight"), "weight"),
                       _decode_array(params.get("bias"), "bias"))
