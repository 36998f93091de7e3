"""Question generation, context construction, and answer-span handling for
the post-extraction cause-analysis stage.

A detected pair becomes a templated question over the whole-conversation
context (utterances joined by single spaces). An answer provider maps
(question, context) to a context char span or abstains; resolved spans are
re-expressed in the cause utterance's local coordinates, falling back to
the full cause utterance whenever the provider abstains or answers outside
that utterance.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .corpus import Conversation, Corpus, EmotionLabel, canonical_json_bytes
from .pairing import PairPrediction

QUESTION_TEMPLATE = ("Which part of the text {target_utterance} is the reason for "
                     "{speaker}'s feeling of {emotion} when {main_utterance} is said?")

CONTEXT_SEPARATOR = " "

#: Maps (question, context) to a context char span, or None to abstain.
AnswerProvider = Callable[[str, str], "tuple[int, int] | None"]


class AlignmentError(ValueError):
    """A char span could not be aligned to any token."""


@dataclass(frozen=True)
class TokenSpan:
    """Inclusive token-index span plus the tokenization it refers to."""

    start_token: int
    end_token: int
    token_offsets: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        if not 0 <= self.start_token <= self.end_token < len(self.token_offsets):
            raise ValueError(f"invalid token span [{self.start_token}, {self.end_token}] "
                             f"over {len(self.token_offsets)} tokens")


@dataclass(frozen=True)
class QASample:
    conversation_id: str
    emotion_utt_id: int
    cause_utt_id: int
    emotion: EmotionLabel
    question: str
    context: str
    context_index: tuple[tuple[int, int], ...]
    answer_char_span: tuple[int, int] | None


def make_question(cause_utt_text: str, speaker: str, emotion: EmotionLabel,
                  emotion_utt_text: str) -> str:
    """Fill the fixed question template; the emotion renders lowercase."""
    return QUESTION_TEMPLATE.format(target_utterance=cause_utt_text, speaker=speaker,
                                    emotion=str(emotion), main_utterance=emotion_utt_text)


def build_context(conv: Conversation) -> tuple[str, tuple[tuple[int, int], ...]]:
    """Join utterances with single spaces; return the context string and the
    per-utterance [start, end) char ranges inside it."""
    parts: list[str] = []
    index: list[tuple[int, int]] = []
    offset = 0
    for utt in conv.utterances:
        if parts:
            offset += len(CONTEXT_SEPARATOR)
        index.append((offset, offset + len(utt.text)))
        parts.append(utt.text)
        offset += len(utt.text)
    return CONTEXT_SEPARATOR.join(parts), tuple(index)


def tokenize_with_offsets(text: str) -> tuple[tuple[int, int], ...]:
    """Whitespace tokens as [start, end) char ranges."""
    offsets: list[tuple[int, int]] = []
    start = None
    for i, ch in enumerate(text):
        if ch.isspace():
            if start is not None:
                offsets.append((start, i))
                start = None
        elif start is None:
            start = i
    if start is not None:
        offsets.append((start, len(text)))
    return tuple(offsets)


def align_span(context: str, char_span: tuple[int, int],
               token_offsets: Sequence[tuple[int, int]] | None = None) -> TokenSpan:
    """Map a context char span to the first/last overlapping tokens.

    Token offsets default to whitespace tokenization of the context; callers
    may pass any non-overlapping ordered offsets (e.g. subword offsets).
    """
    start, end = char_span
    if not 0 <= start < end <= len(context):
        raise AlignmentError(f"char span [{start}, {end}) is invalid for a context "
                             f"of length {len(context)}")
    if token_offsets is None:
        token_offsets = tokenize_with_offsets(context)
    first = last = None
    for idx, (ts, te) in enumerate(token_offsets):
        if ts < end and start < te:  # non-empty overlap
            if first is None:
                first = idx
            last = idx
    if first is None or last is None:
        raise AlignmentError(f"char span [{start}, {end}) overlaps no token")
    return TokenSpan(first, last, tuple(token_offsets))


def build_qa_dataset(corpus: Corpus) -> list[QASample]:
    """One sample per gold pair, ordered by (conversation, pair), with the
    gold span remapped from cause-utterance coordinates into the context."""
    samples: list[QASample] = []
    for conv in corpus.conversations:
        context, index = build_context(conv)
        for pair in conv.pairs:
            if pair.span is None:
                raise ValueError(f"pair ({pair.emotion_utt_id}, {pair.cause_utt_id}) in "
                                 f"conversation {conv.conversation_id!r} has no span; "
                                 f"QA samples require gold spans")
            cause_start = index[pair.cause_utt_id - 1][0]
            answer = (pair.span[0] + cause_start, pair.span[1] + cause_start)
            emotion_utt = conv.utterance(pair.emotion_utt_id)
            cause_utt = conv.utterance(pair.cause_utt_id)
            samples.append(QASample(
                conversation_id=conv.conversation_id,
                emotion_utt_id=pair.emotion_utt_id,
                cause_utt_id=pair.cause_utt_id,
                emotion=pair.emotion,
                question=make_question(cause_utt.text, emotion_utt.speaker,
                                       pair.emotion, emotion_utt.text),
                context=context,
                context_index=index,
                answer_char_span=answer,
            ))
    return samples


def fallback_provider(question: str, context: str) -> tuple[int, int] | None:
    """The built-in provider: always abstains, so every pair falls back to
    spanning its entire cause utterance."""
    return None


def _localize(answer: tuple[int, int] | None, cause_range: tuple[int, int],
              cause_len: int) -> tuple[int, int]:
    """Convert a context-coordinate answer into cause-utterance coordinates,
    falling back to the full utterance when it abstains or escapes."""
    if answer is not None:
        start, end = answer
        if cause_range[0] <= start < end <= cause_range[1]:
            return (start - cause_range[0], end - cause_range[0])
    return (0, cause_len)


def resolve_spans(preds: Sequence[PairPrediction], conv: Conversation,
                  provider: AnswerProvider = fallback_provider) -> list[PairPrediction]:
    """Attach a cause span to every prediction via the answer provider."""
    context, index = build_context(conv)
    resolved: list[PairPrediction] = []
    for pred in preds:
        cause_utt = conv.utterance(pred.cause_utt_id)
        emotion_utt = conv.utterance(pred.emotion_utt_id)
        question = make_question(cause_utt.text, emotion_utt.speaker,
                                 pred.emotion, emotion_utt.text)
        answer = provider(question, context)
        span = _localize(answer, index[pred.cause_utt_id - 1], len(cause_utt.text))
        resolved.append(PairPrediction(pred.emotion_utt_id, pred.cause_utt_id,
                                       pred.emotion, span=span, score=pred.score))
    return resolved


def resolve_spans_from_answers(preds: Sequence[PairPrediction], conv: Conversation,
                               answers: Mapping[tuple[int, int], "tuple[int, int] | None"]
                               ) -> list[PairPrediction]:
    """Like resolve_spans, but with answers keyed by (emotion_utt_id,
    cause_utt_id) in context coordinates, as loaded from an answers file.
    Missing keys and abstentions both fall back to the full cause utterance."""
    _, index = build_context(conv)
    resolved: list[PairPrediction] = []
    for pred in preds:
        cause_len = len(conv.utterance(pred.cause_utt_id).text)
        answer = answers.get((pred.emotion_utt_id, pred.cause_utt_id))
        span = _localize(answer, index[pred.cause_utt_id - 1], cause_len)
        resolved.append(PairPrediction(pred.emotion_utt_id, pred.cause_utt_id,
                                       pred.emotion, span=span, score=pred.score))
    return resolved


# ---------------------------------------------------------------------------
# NDJSON interchange: QA samples out, answers in
# ---------------------------------------------------------------------------

def write_qa_samples(samples: Iterable[QASample], path: str | Path) -> None:
    """QA samples as NDJSON, one object per line, for external QA models."""
    lines = []
    for s in samples:
        lines.append(canonical_json_bytes({
            "conversation_id": s.conversation_id,
            "emotion_utt_id": s.emotion_utt_id,
            "cause_utt_id": s.cause_utt_id,
            "emotion": str(s.emotion),
            "question": s.question,
            "context": s.context,
            "context_index": [[a, b] for a, b in s.context_index],
            "answer_start": None if s.answer_char_span is None else s.answer_char_span[0],
            "answer_end": None if s.answer_char_span is None else s.answer_char_span[1],
        }))
    Path(path).write_bytes(b"\n".join(lines) + (b"\n" if lines else b""))


def load_answers(path: str | Path) -> dict[str, dict[tuple[int, int], "tuple[int, int] | None"]]:
    """Load an answers NDJSON file: conversation_id -> (emotion_utt_id,
    cause_utt_id) -> context span or None for abstention."""
    answers: dict[str, dict[tuple[int, int], tuple[int, int] | None]] = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.split("\n"), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"answers line {lineno}: malformed JSON: {exc.msg}") from None
        if not isinstance(record, dict):
            raise ValueError(f"answers line {lineno}: record must be an object")
        try:
            conv_id = record["conversation_id"]
            key = (int(record["emotion_utt_id"]), int(record["cause_utt_id"]))
        except (KeyError, TypeError, ValueError):
            raise ValueError(f"answers line {lineno}: missing or invalid pair keys") from None
        if record.get("abstain"):
            span = None
        else:
            try:
                span = (int(record["answer_start"]), int(record["answer_end"]))
            except (KeyError, TypeError, ValueError):
                raise ValueError(f"answers line {lineno}: need answer_start/answer_end "
                                 f"or \"abstain\": true") from None
        answers.setdefault(conv_id, {})[key] = span
    return answers
