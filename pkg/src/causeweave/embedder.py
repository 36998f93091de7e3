"""Per-utterance embedding slots and the NDJSON embedding store format.

Each utterance carries three equally sized embedding slots (s1, s2, s3),
one per input modality. Text-only operation fills s1 and zero-fills the
rest, so downstream input width stays fixed at 3*d + 7.

The self-contained embedder is a signed feature hash over lowercased
whitespace tokens and token bigrams, keyed with a fixed 64-bit seed
(HASH_SEED below) so vectors are identical across runs and platforms.

Store file format (NDJSON, UTF-8): a header line
``{"dim": int, "format_version": 1}`` followed by one record per utterance
``{"conversation_id": str, "utterance_id": int, "s1": b64, "s2": b64|null,
"s3": b64|null}`` where b64 encodes exactly ``dim`` little-endian IEEE-754
32-bit floats.
"""

from __future__ import annotations

import base64
import binascii
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .corpus import Corpus, canonical_json_bytes

#: Published feature-hash seed; changing it changes every hash embedding.
HASH_SEED = 0x9E3779B97F4A7C15

FORMAT_VERSION = 1

_HASH_KEY = HASH_SEED.to_bytes(8, "little")

SLOT_NAMES = ("s1", "s2", "s3")


class StoreError(ValueError):
    """Raised when an embedding store file is malformed or inconsistent."""


@dataclass(frozen=True)
class EmbeddingSlots:
    """The (s1, s2, s3) bundle for one utterance.

    Unsupplied slots are all-zero vectors with their name absent from
    slot_mask. Arrays are float32 and marked read-only.
    """

    s1: np.ndarray
    s2: np.ndarray
    s3: np.ndarray
    slot_mask: frozenset[str]

    def __post_init__(self) -> None:
        d = self.s1.shape[0] if self.s1.ndim == 1 else -1
        for name in SLOT_NAMES:
            vec = getattr(self, name)
            if vec.ndim != 1 or vec.shape[0] != d:
                raise ValueError(f"slot {name} must be a length-{d} vector")
            if not np.all(np.isfinite(vec)):
                raise ValueError(f"slot {name} contains non-finite values")
            vec.setflags(write=False)
        if not self.slot_mask <= set(SLOT_NAMES):
            raise ValueError(f"invalid slot_mask {set(self.slot_mask)}")

    @property
    def dim(self) -> int:
        return self.s1.shape[0]

    def concatenated(self) -> np.ndarray:
        """[s1; s2; s3] as float64, length 3*dim."""
        return np.concatenate([self.s1, self.s2, self.s3]).astype(np.float64)


def _hash64(feature: str) -> int:
    digest = hashlib.blake2b(feature.encode("utf-8"), digest_size=8, key=_HASH_KEY).digest()
    return int.from_bytes(digest, "little")


def _zero_slots(d: int, filled: frozenset[str] = frozenset()) -> EmbeddingSlots:
    zeros = lambda: np.zeros(d, dtype=np.float32)  # noqa: E731
    return EmbeddingSlots(zeros(), zeros(), zeros(), filled)


def hash_embed(text: str, d: int) -> EmbeddingSlots:
    """Deterministic text embedding: signed feature hash, L2-normalized.

    Features are lowercased whitespace tokens plus adjacent-token bigrams.
    Each feature lands in bucket (h >> 1) % d with sign from bit 0 of the
    64-bit keyed hash. Empty text yields a zero s1.
    """
    if d < 8:
        raise ValueError(f"embedding dimension must be >= 8, got {d}")
    tokens = text.lower().split()
    features = tokens + [f"{a} {b}" for a, b in zip(tokens, tokens[1:])]
    vec = np.zeros(d, dtype=np.float64)
    for feat in features:
        h = _hash64(feat)
        vec[(h >> 1) % d] += 1.0 if h & 1 == 0 else -1.0
    norm = np.linalg.norm(vec)
    if norm > 0:
        vec /= norm
    zeros = np.zeros(d, dtype=np.float32)
    return EmbeddingSlots(vec.astype(np.float32), zeros, zeros.copy(), frozenset({"s1"}))


class EmbeddingStore:
    """Immutable map from (conversation_id, utterance_id) to EmbeddingSlots."""

    def __init__(self, dim: int, slots: dict[tuple[str, int], EmbeddingSlots]):
        for key, value in slots.items():
            if value.dim != dim:
                raise StoreError(f"record {key} has dimension {value.dim}, store has {dim}")
        self.dim = dim
        self._slots = dict(slots)

    def get(self, conversation_id: str, utterance_id: int) -> EmbeddingSlots:
        try:
            return self._slots[(conversation_id, utterance_id)]
        except KeyError:
            raise StoreError(
                f"no embedding for conversation {conversation_id!r} "
                f"utterance {utterance_id}") from None

    def __contains__(self, key: tuple[str, int]) -> bool:
        return key in self._slots

    def __len__(self) -> int:
        return len(self._slots)

    def keys(self) -> Iterator[tuple[str, int]]:
        return iter(self._slots)


def build_store(corpus: Corpus, d: int) -> EmbeddingStore:
    """Hash-embed every utterance of the corpus into a fresh store."""
    slots: dict[tuple[str, int], EmbeddingSlots] = {}
    for conv in corpus.conversations:
        for utt in conv.utterances:
            slots[(conv.conversation_id, utt.utterance_id)] = hash_embed(utt.text, d)
    return EmbeddingStore(d, slots)


def _encode_vec(vec: np.ndarray) -> str:
    return base64.b64encode(np.asarray(vec, dtype="<f4").tobytes()).decode("ascii")


def _decode_vec(b64: str, dim: int, where: str) -> np.ndarray:
    try:
        raw = base64.b64decode(b64.encode("ascii"), validate=True)
    except (binascii.Error, UnicodeEncodeError) as exc:
        raise StoreError(f"{where}: invalid base64: {exc}") from None
    if len(raw) != 4 * dim:
        raise StoreError(f"{where}: expected {4 * dim} bytes ({dim} floats), got {len(raw)}")
    vec = np.frombuffer(raw, dtype="<f4").astype(np.float32)
    if not np.all(np.isfinite(vec)):
        raise StoreError(f"{where}: non-finite value in vector")
    return vec


def save_store(store: EmbeddingStore, path: str | Path) -> None:
    """Write the store in the documented NDJSON format, sorted by key."""
    lines = [canonical_json_bytes({"dim": store.dim, "format_version": FORMAT_VERSION})]
    for conv_id, utt_id in sorted(store.keys()):
        slots = store.get(conv_id, utt_id)
        record: dict[str, object] = {"conversation_id": conv_id, "utterance_id": utt_id}
        for name in SLOT_NAMES:
            record[name] = _encode_vec(getattr(slots, name)) if name in slots.slot_mask else None
        lines.append(canonical_json_bytes(record))
    Path(path).write_bytes(b"\n".join(lines) + b"\n")


def load_store(path: str | Path) -> EmbeddingStore:
    """Load and fully validate an embedding NDJSON file."""
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.split("\n") if ln.strip()]
    if not lines:
        raise StoreError("empty embedding file: missing header line")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise StoreError(f"header line: malformed JSON: {exc.msg}") from None
    if not isinstance(header, dict) or "dim" not in header:
        raise StoreError("header line must be an object with a 'dim' field")
    if header.get("format_version") != FORMAT_VERSION:
        raise StoreError(f"unsupported format_version {header.get('format_version')!r}; "
                         f"expected {FORMAT_VERSION}")
    dim = header["dim"]
    if not isinstance(dim, int) or isinstance(dim, bool) or dim < 1:
        raise StoreError(f"header dim must be a positive integer, got {dim!r}")

    slots: dict[tuple[str, int], EmbeddingSlots] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        where = f"line {lineno}"
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise StoreError(f"{where}: malformed JSON: {exc.msg}") from None
        if not isinstance(record, dict):
            raise StoreError(f"{where}: record must be an object")
        conv_id = record.get("conversation_id")
        utt_id = record.get("utterance_id")
        if not isinstance(conv_id, str) or not isinstance(utt_id, int) or isinstance(utt_id, bool):
            raise StoreError(f"{where}: record must carry conversation_id (str) "
                             f"and utterance_id (int)")
        where = f"line {lineno} ({conv_id!r}, {utt_id})"
        key = (conv_id, utt_id)
        if key in slots:
            raise StoreError(f"{where}: duplicate key")
        vectors: dict[str, np.ndarray] = {}
        mask: set[str] = set()
        for name in SLOT_NAMES:
            value = record.get(name)
            if value is None:
                vectors[name] = np.zeros(dim, dtype=np.float32)
            elif isinstance(value, str):
                vectors[name] = _decode_vec(value, dim, f"{where}, slot {name}")
                mask.add(name)
            else:
                raise StoreError(f"{where}: slot {name} must be base64 or null")
        slots[key] = EmbeddingSlots(vectors["s1"], vectors["s2"], vectors["s3"],
                                    frozenset(mask))
    return EmbeddingStore(dim, slots)
