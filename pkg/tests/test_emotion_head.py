from __future__ import annotations

import math

import numpy as np
import pytest

from causeweave.corpus import Conversation, Corpus, EmotionLabel, Utterance
from causeweave.embedder import build_store, hash_embed
from causeweave.emotion_head import (EmotionHead, HeadTrainConfig, accuracy,
                                     confusion, cross_entropy, head_forward,
                                     head_loss_and_grads, load_head,
                                     predict_emotions, save_head, softmax,
                                     train_head)
from oracles import max_relative_error

# Reference confusion counts used to validate the accuracy computation
# (rows = gold, columns = predicted, canonical label order).
REFERENCE_CONFUSION = np.array([
    [4400, 610, 242, 218, 307, 31, 121],
    [392, 1576, 136, 82, 70, 19, 26],
    [154, 134, 1380, 77, 34, 17, 44],
    [168, 180, 192, 823, 88, 71, 93],
    [203, 79, 82, 94, 581, 29, 79],
    [83, 34, 41, 77, 25, 143, 11],
    [70, 36, 42, 24, 35, 8, 158],
])


def test_zero_head_gives_uniform_softmax():
    head = EmotionHead.zeros(8)
    logits = head_forward(hash_embed("whatever text", 8), head)
    assert not logits.any()
    np.testing.assert_allclose(softmax(logits), np.full(7, 1 / 7), atol=1e-12)


def test_bias_only_head_argmax():
    head = EmotionHead.zeros(8)
    head.bias[0] = 1.0
    logits = head_forward(hash_embed("some words here", 8), head)
    assert int(np.argmax(logits)) == int(EmotionLabel.NEUTRAL)


def test_head_forward_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension"):
        head_forward(hash_embed("hi there", 16), EmotionHead.zeros(8))


def test_head_forward_is_affine():
    rng = np.random.default_rng(0)
    head = EmotionHead(rng.normal(size=(7, 24)), rng.normal(size=7))
    slots = hash_embed("the quick brown fox", 8)
    base = head_forward(slots, head)
    alpha = 2.5
    scaled_features = alpha * slots.concatenated()
    scaled = head.weight @ scaled_features + head.bias
    np.testing.assert_allclose(scaled, alpha * base - (alpha - 1) * head.bias,
                               rtol=0, atol=1e-12)


def test_softmax_all_equal_is_uniform():
    np.testing.assert_allclose(softmax(np.full(7, 3.2)), np.full(7, 1 / 7), atol=1e-12)


def test_softmax_shift_invariance():
    logits = np.array([0.5, -1.0, 2.0, 0.0, 3.3, -2.2, 1.1])
    np.testing.assert_allclose(softmax(logits), softmax(logits + 123.456), atol=1e-9)


def test_softmax_known_ratios():
    probs = softmax(np.log(np.array([1.0, 2.0, 3.0])))
    np.testing.assert_allclose(probs, np.array([1, 2, 3]) / 6, atol=1e-12)


def test_softmax_is_stable_under_large_logits():
    # spread within exp's float64 range: components stay strictly positive
    probs = softmax(np.array([300.0, -300.0, 0.0, 5.0, -5.0, 2.0, 1.0]))
    assert abs(probs.sum() - 1.0) < 1e-9
    assert (probs > 0).all()
    # beyond that range: no overflow or NaN, still a valid distribution
    extreme = softmax(np.array([1e4, -1e4, 0.0, 5.0, -5.0, 2.0, 1.0]))
    assert np.isfinite(extreme).all()
    assert abs(extreme.sum() - 1.0) < 1e-9


def test_head_gradients_match_finite_differences():
    rng = np.random.default_rng(42)
    features = rng.normal(size=(3, 24))
    labels = np.array([1, 4, 0])
    head = EmotionHead(rng.normal(scale=0.3, size=(7, 24)), rng.normal(scale=0.3, size=7))
    _, grads = head_loss_and_grads(head, features, labels)
    h = 1e-5
    worst = 0.0
    for name, arr in (("weight", head.weight), ("bias", head.bias)):
        flat = arr.ravel()
        g = grads[name].ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = cross_entropy(head, features, labels)
            flat[i] = orig - h
            down = cross_entropy(head, features, labels)
            flat[i] = orig
            numeric = (up - down) / (2 * h)
            worst = max(worst, max_relative_error(g[i], numeric, floor=1e-8))
    assert worst < 1e-5


def _separable_corpus() -> Corpus:
    texts = {
        EmotionLabel.JOY: "alpha alpha alpha",
        EmotionLabel.ANGER: "bravo bravo bravo",
        EmotionLabel.SADNESS: "charlie charlie charlie",
        EmotionLabel.NEUTRAL: "delta delta delta",
    }
    utterances = tuple(
        Utterance(i + 1, "A", text, emotion)
        for i, (emotion, text) in enumerate(texts.items())
    )
    return Corpus((Conversation("sep", utterances, ()),))


def test_training_reaches_full_accuracy_on_separable_set():
    corpus = _separable_corpus()
    store = build_store(corpus, 32)
    head = train_head(corpus, store, HeadTrainConfig(epochs=200, batch_size=4, seed=0))
    conv = corpus.conversations[0]
    slots = [store.get("sep", u.utterance_id) for u in conv.utterances]
    preds = predict_emotions(slots, head)
    assert preds == [u.emotion for u in conv.utterances]


def test_zero_learning_rate_leaves_parameters_unchanged():
    corpus = _separable_corpus()
    store = build_store(corpus, 32)
    head = train_head(corpus, store, HeadTrainConfig(lr=0.0, epochs=5, seed=0))
    assert not head.weight.any()
    assert not head.bias.any()


def test_training_loss_non_increasing_on_tiny_set():
    corpus = _separable_corpus()
    store = build_store(corpus, 32)
    losses = []
    for epochs in range(1, 40):
        head = train_head(corpus, store, HeadTrainConfig(epochs=epochs, batch_size=4, seed=0))
        feats = np.stack([store.get("sep", i).concatenated() for i in range(1, 5)])
        labels = np.array([int(u.emotion) for u in corpus.conversations[0].utterances])
        losses.append(cross_entropy(head, feats, labels))
    for earlier, later in zip(losses, losses[1:]):
        assert later <= earlier + 1e-6


def test_training_is_seed_deterministic(tiny_corpus):
    store = build_store(tiny_corpus, 16)
    cfg = HeadTrainConfig(epochs=30, seed=7)
    a = train_head(tiny_corpus, store, cfg)
    b = train_head(tiny_corpus, store, cfg)
    np.testing.assert_array_equal(a.weight, b.weight)
    np.testing.assert_array_equal(a.bias, b.bias)


def test_train_rejects_empty_corpus():
    corpus = Corpus(())
    store = build_store(corpus, 16)
    with pytest.raises(ValueError, match="empty corpus"):
        train_head(corpus, store)


# ---------------------------------------------------------------------------
# Confusion matrix
# ---------------------------------------------------------------------------

def _labels_from_matrix(matrix: np.ndarray):
    golds, preds = [], []
    for g in range(7):
        for p in range(7):
            golds.extend([EmotionLabel(g)] * int(matrix[g, p]))
            preds.extend([EmotionLabel(p)] * int(matrix[g, p]))
    return golds, preds


def test_reference_confusion_counts_and_accuracy():
    golds, preds = _labels_from_matrix(REFERENCE_CONFUSION)
    matrix = confusion(golds, preds)
    np.testing.assert_array_equal(matrix, REFERENCE_CONFUSION)
    assert int(np.trace(matrix)) == 9061
    assert int(matrix.sum()) == 13619
    assert abs(accuracy(matrix) - 9061 / 13619) < 1e-12
    assert abs(accuracy(matrix) - 0.6653) < 1e-4


def test_reference_neutral_row_recall():
    row = REFERENCE_CONFUSION[int(EmotionLabel.NEUTRAL)]
    assert int(row.sum()) == 5929
    assert abs(row[0] / row.sum() - 0.7421) < 1e-4


def test_identical_labels_give_diagonal():
    labels = [EmotionLabel.JOY, EmotionLabel.FEAR, EmotionLabel.JOY]
    matrix = confusion(labels, labels)
    assert int(np.trace(matrix)) == 3
    assert accuracy(matrix) == 1.0


def test_confusion_length_mismatch():
    with pytest.raises(ValueError, match="length mismatch"):
        confusion([EmotionLabel.JOY], [])


def test_accuracy_equals_mean_agreement():
    rng = np.random.default_rng(3)
    for _ in range(20):
        n = int(rng.integers(1, 40))
        golds = [EmotionLabel(int(rng.integers(0, 7))) for _ in range(n)]
        preds = [EmotionLabel(int(rng.integers(0, 7))) for _ in range(n)]
        expected = sum(g is p for g, p in zip(golds, preds)) / n
        assert math.isclose(accuracy(confusion(golds, preds)), expected, abs_tol=1e-12)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def test_head_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    head = EmotionHead(rng.normal(size=(7, 48)).astype(np.float32).astype(np.float64),
                       rng.normal(size=7).astype(np.float32).astype(np.float64))
    path = tmp_path / "head.json"
    save_head(head, path, seed=1, config={"lr": 1e-3})
    loaded = load_head(path)
    np.testing.assert_array_equal(loaded.weight, head.weight)
    np.testing.assert_array_equal(loaded.bias, head.bias)


def test_head_checkpoint_bytes_deterministic(tmp_path):
    head = EmotionHead.zeros(16)
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    save_head(head, a)
    save_head(head, b)
    assert a.read_bytes() == b.read_bytes()
