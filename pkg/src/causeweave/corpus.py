"""Conversation corpus: domain types, validation, and JSON (de)serialization.

Corpus JSON schema (UTF-8, one document per file)::

    {"conversations": [
        {"conversation_id": str,
         "utterances": [{"utterance_id": int, "speaker": str,
                         "text": str, "emotion": str}],
         "pairs": [{"emotion_utt_id": int, "cause_utt_id": int,
                    "emotion": str, "span": [int, int] | null}]}]}

Prediction JSON uses the same pair shape plus a "conversation_id" field,
wrapped as {"predictions": [...]}.

All span offsets are half-open [start, end) character offsets (Unicode
scalar values, not bytes) into the cause utterance's own text.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any, Iterable

if TYPE_CHECKING:
    from .pairing import PairPrediction


class CorpusError(ValueError):
    """Base class for corpus ingestion failures."""


class ParseError(CorpusError):
    """Input is not well-formed JSON. Carries the byte offset of the defect."""

    def __init__(self, message: str, byte_offset: int):
        super().__init__(f"{message} (byte offset {byte_offset})")
        self.byte_offset = byte_offset


class ValidationError(CorpusError):
    """Structurally valid JSON that violates a corpus invariant."""

    def __init__(self, message: str, conversation_id: str | None = None,
                 fieldname: str | None = None):
        where = []
        if conversation_id is not None:
            where.append(f"conversation {conversation_id!r}")
        if fieldname is not None:
            where.append(f"field {fieldname!r}")
        suffix = f" [{', '.join(where)}]" if where else ""
        super().__init__(message + suffix)
        self.conversation_id = conversation_id
        self.fieldname = fieldname


class EmotionLabel(enum.IntEnum):
    """The seven emotion classes, with frozen canonical indices."""

    NEUTRAL = 0
    JOY = 1
    SURPRISE = 2
    ANGER = 3
    SADNESS = 4
    DISGUST = 5
    FEAR = 6

    @classmethod
    def parse(cls, label: str) -> EmotionLabel:
        """Parse a label case-insensitively; unknown labels are rejected."""
        try:
            return cls[label.strip().upper()]
        except KeyError:
            valid = ", ".join(m.name.lower() for m in cls)
            raise ValueError(f"unknown emotion label {label!r}; expected one of: {valid}") from None

    def __str__(self) -> str:
        return self.name.lower()


#: The six non-neutral classes, in canonical index order.
CAUSE_EMOTIONS: tuple[EmotionLabel, ...] = tuple(
    e for e in EmotionLabel if e is not EmotionLabel.NEUTRAL
)


@dataclass(frozen=True, slots=True)
class Utterance:
    utterance_id: int
    speaker: str
    text: str
    emotion: EmotionLabel

    def __post_init__(self) -> None:
        if self.utterance_id < 1:
            raise ValidationError(
                f"utterance_id must be >= 1, got {self.utterance_id}", fieldname="utterance_id")
        if not self.text.strip():
            raise ValidationError(
                f"utterance {self.utterance_id} has empty text", fieldname="text")


@dataclass(frozen=True, slots=True)
class CausePair:
    """A gold (emotion utterance, cause utterance) pair, optionally with the
    causal span into the cause utterance's local text."""

    emotion_utt_id: int
    cause_utt_id: int
    emotion: EmotionLabel
    span: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        if self.emotion is EmotionLabel.NEUTRAL:
            raise ValidationError("cause pairs may not carry the neutral emotion",
                                  fieldname="emotion")
        if self.span is not None:
            object.__setattr__(self, "span", (int(self.span[0]), int(self.span[1])))
            start, end = self.span
            if not (0 <= start < end):
                raise ValidationError(
                    f"span must satisfy 0 <= start < end, got [{start}, {end})",
                    fieldname="span")


@dataclass(frozen=True)
class Conversation:
    conversation_id: str
    utterances: tuple[Utterance, ...]
    pairs: tuple[CausePair, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "utterances", tuple(self.utterances))
        object.__setattr__(self, "pairs", tuple(self.pairs))
        cid = self.conversation_id
        if not self.utterances:
            raise ValidationError("conversation has no utterances", cid, "utterances")
        for pos, utt in enumerate(self.utterances, start=1):
            if utt.utterance_id != pos:
                raise ValidationError(
                    f"utterance_ids must be consecutive from 1; found {utt.utterance_id} "
                    f"at position {pos}", cid, "utterance_id")
        seen: set[tuple[int, int, tuple[int, int] | None]] = set()
        for pair in self.pairs:
            for name, utt_id in (("emotion_utt_id", pair.emotion_utt_id),
                                 ("cause_utt_id", pair.cause_utt_id)):
                if not 1 <= utt_id <= len(self.utterances):
                    raise ValidationError(
                        f"pair references {name}={utt_id} but conversation has "
                        f"{len(self.utterances)} utterances", cid, name)
            annotated = self.utterances[pair.emotion_utt_id - 1].emotion
            if pair.emotion is not annotated:
                raise ValidationError(
                    f"pair emotion {pair.emotion} does not match the annotated emotion "
                    f"{annotated} of utterance {pair.emotion_utt_id}", cid, "emotion")
            if pair.span is not None:
                cause_text = self.utterances[pair.cause_utt_id - 1].text
                if pair.span[1] > len(cause_text):
                    raise ValidationError(
                        f"span end {pair.span[1]} exceeds cause utterance length "
                        f"{len(cause_text)}", cid, "span")
            key = (pair.emotion_utt_id, pair.cause_utt_id, pair.span)
            if key in seen:
                raise ValidationError(f"duplicate pair {key}", cid, "pairs")
            seen.add(key)

    def utterance(self, utterance_id: int) -> Utterance:
        return self.utterances[utterance_id - 1]


@dataclass(frozen=True)
class Corpus:
    conversations: tuple[Conversation, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "conversations", tuple(self.conversations))
        seen: set[str] = set()
        for conv in self.conversations:
            if conv.conversation_id in seen:
                raise ValidationError("duplicate conversation_id", conv.conversation_id)
            seen.add(conv.conversation_id)

    def conversation(self, conversation_id: str) -> Conversation:
        for conv in self.conversations:
            if conv.conversation_id == conversation_id:
                return conv
        raise KeyError(conversation_id)


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

def _require(obj: dict[str, Any], key: str, kind: type | tuple[type, ...],
             cid: str | None) -> Any:
    if key not in obj:
        raise ValidationError(f"missing required field {key!r}", cid, key)
    value = obj[key]
    if not isinstance(value, kind) or isinstance(value, bool):
        raise ValidationError(
            f"field {key!r} has wrong type {type(value).__name__}", cid, key)
    return value


def _reject_unknown(obj: dict[str, Any], allowed: frozenset[str], cid: str | None,
                    context: str) -> None:
    extra = set(obj) - allowed
    if extra:
        raise ValidationError(f"unknown {context} fields: {sorted(extra)}", cid)


_CONV_FIELDS = frozenset({"conversation_id", "utterances", "pairs"})
_UTT_FIELDS = frozenset({"utterance_id", "speaker", "text", "emotion"})
_PAIR_FIELDS = frozenset({"emotion_utt_id", "cause_utt_id", "emotion", "span"})


def _parse_emotion(raw: Any, cid: str | None) -> EmotionLabel:
    if not isinstance(raw, str):
        raise ValidationError(f"emotion must be a string, got {type(raw).__name__}",
                              cid, "emotion")
    try:
        return EmotionLabel.parse(raw)
    except ValueError as exc:
        raise ValidationError(str(exc), cid, "emotion") from None


def _parse_span(raw: Any, cid: str | None) -> tuple[int, int] | None:
    if raw is None:
        return None
    if (not isinstance(raw, list) or len(raw) != 2
            or not all(isinstance(v, int) and not isinstance(v, bool) for v in raw)):
        raise ValidationError("span must be null or a [start, end] pair of integers",
                              cid, "span")
    return (raw[0], raw[1])


def _parse_pair(raw: Any, cid: str) -> CausePair:
    if not isinstance(raw, dict):
        raise ValidationError("each pair must be an object", cid, "pairs")
    _reject_unknown(raw, _PAIR_FIELDS, cid, "pair")
    try:
        return CausePair(
            emotion_utt_id=_require(raw, "emotion_utt_id", int, cid),
            cause_utt_id=_require(raw, "cause_utt_id", int, cid),
            emotion=_parse_emotion(_require(raw, "emotion", str, cid), cid),
            span=_parse_span(raw.get("span"), cid),
        )
    except ValidationError as exc:
        if exc.conversation_id is None:
            raise ValidationError(str(exc), cid) from None
        raise


def _parse_conversation(raw: Any) -> Conversation:
    if not isinstance(raw, dict):
        raise ValidationError("each conversation must be an object")
    cid = raw.get("conversation_id")
    if not isinstance(cid, str) or not cid:
        raise ValidationError("conversation_id must be a non-empty string",
                              fieldname="conversation_id")
    _reject_unknown(raw, _CONV_FIELDS, cid, "conversation")
    utterances = []
    for utt_raw in _require(raw, "utterances", list, cid):
        if not isinstance(utt_raw, dict):
            raise ValidationError("each utterance must be an object", cid, "utterances")
        _reject_unknown(utt_raw, _UTT_FIELDS, cid, "utterance")
        try:
            utterances.append(Utterance(
                utterance_id=_require(utt_raw, "utterance_id", int, cid),
                speaker=_require(utt_raw, "speaker", str, cid),
                text=_require(utt_raw, "text", str, cid),
                emotion=_parse_emotion(_require(utt_raw, "emotion", str, cid), cid),
            ))
        except ValidationError as exc:
            if exc.conversation_id is None:
                raise ValidationError(str(exc), cid) from None
            raise
    pairs = [_parse_pair(p, cid) for p in _require(raw, "pairs", list, cid)]
    try:
        return Conversation(cid, tuple(utterances), tuple(pairs))
    except ValidationError:
        raise
    except ValueError as exc:
        raise ValidationError(str(exc), cid) from exc


def parse_corpus(data: bytes) -> Corpus:
    """Parse and fully validate a corpus JSON document.

    Raises ParseError (with byte offset) on malformed JSON and
    ValidationError (naming the conversation and field) on any
    invariant violation.
    """
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"invalid UTF-8: {exc.reason}", exc.start) from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        byte_offset = len(text[:exc.pos].encode("utf-8"))
        raise ParseError(exc.msg, byte_offset) from exc
    if not isinstance(doc, dict):
        raise ValidationError("top-level document must be an object")
    _reject_unknown(doc, frozenset({"conversations"}), None, "document")
    conversations = _require(doc, "conversations", list, None)
    return Corpus(tuple(_parse_conversation(c) for c in conversations))


# ---------------------------------------------------------------------------
# Serialization (canonical: sorted keys, no insignificant whitespace)
# ---------------------------------------------------------------------------

def canonical_json_bytes(doc: Any) -> bytes:
    """Serialize to the canonical byte form used by every file this package writes."""
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def _utterance_doc(utt: Utterance) -> dict[str, Any]:
    return {"utterance_id": utt.utterance_id, "speaker": utt.speaker,
            "text": utt.text, "emotion": str(utt.emotion)}


def _pair_doc(pair: CausePair) -> dict[str, Any]:
    return {"emotion_utt_id": pair.emotion_utt_id, "cause_utt_id": pair.cause_utt_id,
            "emotion": str(pair.emotion),
            "span": None if pair.span is None else [pair.span[0], pair.span[1]]}


def serialize_corpus(corpus: Corpus) -> bytes:
    doc = {"conversations": [
        {"conversation_id": conv.conversation_id,
         "utterances": [_utterance_doc(u) for u in conv.utterances],
         "pairs": [_pair_doc(p) for p in conv.pairs]}
        for conv in corpus.conversations]}
    return canonical_json_bytes(doc)


def serialize_predictions(corpus: Corpus,
                          preds: Iterable[tuple[str, "PairPrediction"]]) -> bytes:
    """Serialize predicted pairs, validating every reference against the corpus.

    Spans are optional (span-free, subtask-2-style output simply omits them);
    in-memory scores are not part of the file format and are dropped.
    """
    items = []
    for conv_id, pred in preds:
        try:
            conv = corpus.conversation(conv_id)
        except KeyError:
            raise ValidationError("prediction references unknown conversation", conv_id)
        for name, utt_id in (("emotion_utt_id", pred.emotion_utt_id),
                             ("cause_utt_id", pred.cause_utt_id)):
            if not 1 <= utt_id <= len(conv.utterances):
                raise ValidationError(
                    f"prediction references {name}={utt_id} outside the conversation",
                    conv_id, name)
        if pred.span is not None:
            cause_len = len(conv.utterance(pred.cause_utt_id).text)
            start, end = pred.span
            if not (0 <= start < end <= cause_len):
                raise ValidationError(
                    f"prediction span [{start}, {end}) is invalid for cause utterance "
                    f"of length {cause_len}", conv_id, "span")
        items.append({
            "conversation_id": conv_id,
            "emotion_utt_id": pred.emotion_utt_id,
            "cause_utt_id": pred.cause_utt_id,
            "emotion": str(pred.emotion),
            "span": None if pred.span is None else [pred.span[0], pred.span[1]],
        })
    return canonical_json_bytes({"predictions": items})


def parse_predictions(data: bytes, corpus: Corpus) -> list[tuple[str, "PairPrediction"]]:
    """Parse a prediction file and validate every reference against the corpus."""
    from .pairing import PairPrediction

    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"malformed prediction file: {exc}", 0) from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("predictions"), list):
        raise ValidationError("prediction document must be {\"predictions\": [...]}")
    out: list[tuple[str, PairPrediction]] = []
    for raw in doc["predictions"]:
        if not isinstance(raw, dict):
            raise ValidationError("each prediction must be an object")
        _reject_unknown(raw, _PAIR_FIELDS | {"conversation_id"}, None, "prediction")
        conv_id = _require(raw, "conversation_id", str, None)
        pred = PairPrediction(
            emotion_utt_id=_require(raw, "emotion_utt_id", int, conv_id),
            cause_utt_id=_require(raw, "cause_utt_id", int, conv_id),
            emotion=_parse_emotion(_require(raw, "emotion", str, conv_id), conv_id),
            span=_parse_span(raw.get("span"), conv_id),
        )
        try:
            conv = corpus.conversation(conv_id)
        except KeyError:
            raise ValidationError("prediction references unknown conversation", conv_id)
        for name, utt_id in (("emotion_utt_id", pred.emotion_utt_id),
                             ("cause_utt_id", pred.cause_utt_id)):
            if not 1 <= utt_id <= len(conv.utterances):
                raise ValidationError(
                    f"prediction references {name}={utt_id} outside the conversation",
                    conv_id, name)
        if pred.span is not None:
            cause_len = len(conv.utterance(pred.cause_utt_id).text)
            if pred.span[1] > cause_len:
                raise ValidationError(
                    f"prediction span end {pred.span[1]} exceeds cause utterance "
                    f"length {cause_len}", conv_id, "span")
        out.append((conv_id, pred))
    return out
