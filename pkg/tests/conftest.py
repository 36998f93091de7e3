from __future__ import annotations

import sys
from pathlib import Path

import pytest

from causeweave.corpus import CausePair, Conversation, Corpus, EmotionLabel, Utterance

sys.path.insert(0, str(Path(__file__).parent))

FIXTURES = Path(__file__).parent / "fixtures"


def pytest_runtest_logreport(report):
    """One visible pass/fail line per acceptance criterion, capture or not."""
    if report.when != "call":
        return
    for module, tag in (("test_acceptance", "acceptance"), ("test_secondary", "secondary")):
        if module in report.nodeid:
            name = report.nodeid.split("::")[-1]
            status = "PASS" if report.passed else "FAIL"
            print(f"[{tag}] {name}: {status}", file=sys.__stdout__, flush=True)


def utt(i: int, text: str, emotion: EmotionLabel = EmotionLabel.NEUTRAL,
        speaker: str = "A") -> Utterance:
    return Utterance(i, speaker, text, emotion)


@pytest.fixture
def tiny_conversation() -> Conversation:
    return Conversation("conv1", (
        utt(1, "You made up!", EmotionLabel.NEUTRAL, "Phoebe"),
        utt(2, "We are good.", EmotionLabel.JOY, "Chandler"),
    ), (CausePair(2, 1, EmotionLabel.JOY, (0, 12)),))


@pytest.fixture
def tiny_corpus(tiny_conversation: Conversation) -> Corpus:
    other = Conversation("conv2", (
        utt(1, "The car broke down again.", EmotionLabel.ANGER, "Ross"),
        utt(2, "That is the third time this month.", EmotionLabel.ANGER, "Rachel"),
        utt(3, "Let us call the garage.", EmotionLabel.NEUTRAL, "Ross"),
    ), (
        CausePair(1, 1, EmotionLabel.ANGER, (4, 19)),
        CausePair(2, 1, EmotionLabel.ANGER, (4, 24)),
    ))
    return Corpus((tiny_conversation, other))


@pytest.fixture
def overfit_corpus() -> Corpus:
    """A single 4-utterance conversation with one gold pair."""
    conv = Conversation("overfit", (
        utt(1, "the pizza arrived hot and fresh", EmotionLabel.NEUTRAL, "A"),
        utt(2, "this is wonderful news for everyone", EmotionLabel.JOY, "B"),
        utt(3, "we should celebrate together tonight", EmotionLabel.NEUTRAL, "A"),
        utt(4, "sure thing see you there", EmotionLabel.NEUTRAL, "B"),
    ), (CausePair(2, 1, EmotionLabel.JOY, (0, 9)),))
    return Corpus((conv,))
