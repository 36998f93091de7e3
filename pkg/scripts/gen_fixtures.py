"""Regenerate the committed synthetic corpus fixtures.

Usage: python scripts/gen_fixtures.py

Deterministic for a fixed seed; rerunning must reproduce the committed
fixture bytes exactly.
"""

from __future__ import annotations

import random
from pathlib import Path

from causeweave.corpus import (CausePair, Conversation, Corpus, EmotionLabel,
                               Utterance, serialize_corpus)

SPEAKERS = ["Alex", "Blair", "Casey", "Dana", "Émile"]

PHRASES = [
    "the train was late again", "we finally got the keys", "my phone screen cracked",
    "she aced the interview", "the soup tastes off", "there was a loud bang outside",
    "the dog chewed my shoes", "we are moving next month", "he forgot my birthday",
    "the garden is blooming", "someone ate my lunch", "the lights went out",
    "they cancelled the show", "I found twenty euros", "the báby slept through",
    "traffic was unbearable", "our team won the cup", "the printer jammed again",
    "she sent a kind note", "the elevator smells weird",
]

TAILS = ["today", "again", "honestly", "can you believe it", "no kidding",
         "for the third time", "right before lunch", "out of nowhere"]

EMOTION_WEIGHTS = [
    (EmotionLabel.NEUTRAL, 8),
    (EmotionLabel.JOY, 4),
    (EmotionLabel.SURPRISE, 2),
    (EmotionLabel.ANGER, 3),
    (EmotionLabel.SADNESS, 2),
    (EmotionLabel.DISGUST, 1),
    (EmotionLabel.FEAR, 1),
]


def _emotion(rng: random.Random) -> EmotionLabel:
    labels, weights = zip(*EMOTION_WEIGHTS)
    return rng.choices(labels, weights=weights, k=1)[0]


def _text(rng: random.Random) -> str:
    text = rng.choice(PHRASES)
    if rng.random() < 0.4:
        text = f"{text} {rng.choice(TAILS)}"
    return text


def _span(rng: random.Random, text: str) -> tuple[int, int]:
    # snap to whole-word boundaries so spans look like annotated sub-texts
    words = text.split(" ")
    i = rng.randrange(len(words))
    j = rng.randrange(i, len(words))
    start = len(" ".join(words[:i])) + (1 if i else 0)
    end = len(" ".join(words[:j + 1]))
    return (start, end)


def make_corpus(n_conversations: int, seed: int) -> Corpus:
    rng = random.Random(seed)
    conversations = []
    for k in range(n_conversations):
        n = rng.randint(3, 8)
        speakers = rng.sample(SPEAKERS, 2)
        utterances = tuple(
            Utterance(i + 1, speakers[i % 2], _text(rng), _emotion(rng))
            for i in range(n)
        )
        pairs = []
        seen: set[tuple[int, int, tuple[int, int]]] = set()
        for i, utt in enumerate(utterances, start=1):
            if utt.emotion is EmotionLabel.NEUTRAL:
                continue
            for _ in range(rng.choice([1, 1, 1, 2])):
                cause_id = rng.randint(max(1, i - 2), i)  # causes precede or coincide
                span = _span(rng, utterances[cause_id - 1].text)
                if (i, cause_id, span) in seen:
                    continue
                seen.add((i, cause_id, span))
                pairs.append(CausePair(i, cause_id, utt.emotion, span))
        conversations.append(Conversation(f"synth-{k:03d}", utterances, tuple(pairs)))
    return Corpus(tuple(conversations))


def make_qa_sample_corpus(n_conversations: int, seed: int) -> Corpus:
    """Annotated sample whose cause spans cover the content phrase and never
    the trailing filler, the shape real cause annotations take."""
    rng = random.Random(seed)
    conversations = []
    for k in range(n_conversations):
        n = rng.randint(2, 5)
        speakers = rng.sample(SPEAKERS, 2)
        texts, spans = [], []
        for _ in range(n):
            phrase = rng.choice(PHRASES)
            text = f"{phrase} {rng.choice(TAILS)}" if rng.random() < 0.7 else phrase
            texts.append(text)
            spans.append((0, len(phrase)))
        utterances = tuple(
            Utterance(i + 1, speakers[i % 2], texts[i], _emotion(rng))
            for i in range(n)
        )
        pairs = []
        seen: set[tuple[int, int]] = set()
        for i, utt in enumerate(utterances, start=1):
            if utt.emotion is EmotionLabel.NEUTRAL:
                continue
            cause_id = rng.randint(max(1, i - 2), i)
            if (i, cause_id) in seen:
                continue
            seen.add((i, cause_id))
            pairs.append(CausePair(i, cause_id, utt.emotion, spans[cause_id - 1]))
        conversations.append(Conversation(f"qa-{k:02d}", utterances, tuple(pairs)))
    return Corpus(tuple(conversations))


def main() -> None:
    out = Path(__file__).resolve().parent.parent / "tests" / "fixtures"
    out.mkdir(parents=True, exist_ok=True)
    corpus = make_corpus(20, seed=20240303)
    (out / "synthetic20.json").write_bytes(serialize_corpus(corpus) + b"\n")
    total_pairs = sum(len(c.pairs) for c in corpus.conversations)
    print(f"wrote synthetic20.json: {len(corpus.conversations)} conversations, "
          f"{total_pairs} pairs")

    qa_corpus = make_qa_sample_corpus(10, seed=777)
    (out / "qa_sample10.json").write_bytes(serialize_corpus(qa_corpus) + b"\n")
    qa_pairs = sum(len(c.pairs) for c in qa_corpus.conversations)
    print(f"wrote qa_sample10.json: {len(qa_corpus.conversations)} conversations, "
          f"{qa_pairs} pairs")


if __name__ == "__main__":
    main()
