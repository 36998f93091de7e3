"""Attention targets from gold pairs, and pair extraction from a causality
matrix.

Matrix orientation is fixed project-wide: row = emotion utterance, column =
cause utterance (0-based internally; utterance ids are 1-based).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import Conversation, EmotionLabel

#: Detection threshold; below 0.5 so two equally weighted causes still fire.
DEFAULT_THRESHOLD = 0.45


@dataclass(frozen=True)
class PairPrediction:
    """A predicted (emotion utterance, cause utterance) pair, optionally with
    a cause span local to the cause utterance's text."""

    emotion_utt_id: int
    cause_utt_id: int
    emotion: EmotionLabel
    span: tuple[int, int] | None = None
    score: float | None = None

    def __post_init__(self) -> None:
        if self.emotion is EmotionLabel.NEUTRAL:
            raise ValueError("pair predictions may not carry the neutral emotion")
        if self.span is not None:
            object.__setattr__(self, "span", (int(self.span[0]), int(self.span[1])))

    def key(self) -> tuple[int, int, EmotionLabel]:
        return (self.emotion_utt_id, self.cause_utt_id, self.emotion)


def build_target(conv: Conversation) -> np.ndarray:
    """Row-stochastic attention target for one conversation.

    A row with k >= 1 gold causes puts 1/k on each cause column; a causeless
    row targets its own diagonal (attention rows are softmax-normalized and
    cannot approach zero, so the diagonal acts as the sink; the neutral gate
    at extraction filters it back out).
    """
    n = len(conv.utterances)
    causes: dict[int, list[int]] = {}
    for pair in conv.pairs:
        causes.setdefault(pair.emotion_utt_id - 1, []).append(pair.cause_utt_id - 1)
    target = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        cols = causes.get(i)
        if cols:
            mass = 1.0 / len(set(cols))
            for j in set(cols):
                target[i, j] = mass
        else:
            target[i, i] = 1.0
    return target


def extract_pairs(c_m: np.ndarray, predicted_emotions: Sequence[EmotionLabel],
                  tau: float = DEFAULT_THRESHOLD) -> list[PairPrediction]:
    """Emit a pair for every matrix entry >= tau whose row utterance carries a
    non-neutral predicted emotion. Diagonal entries are kept: self-cause is a
    legal pair. Output is duplicate-free and sorted by (row, column)."""
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"threshold must be in (0, 1], got {tau}")
    c_m = np.asarray(c_m, dtype=np.float64)
    n = c_m.shape[0]
    if c_m.shape != (n, n) or n != len(predicted_emotions):
        raise ValueError(f"causality matrix {c_m.shape} does not match "
                         f"{len(predicted_emotions)} utterance emotions")
    out: list[PairPrediction] = []
    for i in range(n):
        emotion = predicted_emotions[i]
        if emotion is EmotionLabel.NEUTRAL:
            continue
        for j in range(n):
            if c_m[i, j] >= tau:
                out.append(PairPrediction(i + 1, j + 1, emotion,
                                          score=float(c_m[i, j])))
    return out
