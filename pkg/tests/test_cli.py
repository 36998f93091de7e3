from __future__ import annotations

import json

import pytest

from causeweave.cli import main
from causeweave.corpus import parse_corpus, parse_predictions, serialize_corpus
from causeweave.embedder import load_store
from conftest import FIXTURES

SYNTH = FIXTURES / "synthetic20.json"


def run(*argv: str) -> int:
    return main(list(argv))


@pytest.fixture
def small_setup(tmp_path, tiny_corpus):
    """Corpus file, embeddings, and a fast training config in a tmp dir."""
    corpus_path = tmp_path / "corpus.json"
    corpus_path.write_bytes(serialize_corpus(tiny_corpus) + b"\n")
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps({
        "dim": 19,
        "seed": 3,
        "encoder_train": {"steps": 40},
        "head_train": {"epochs": 20},
    }))
    emb_path = tmp_path / "emb.ndjson"
    assert run("embed", "--corpus", str(corpus_path), "--out", str(emb_path),
               "--dim", "19") == 0
    return corpus_path, emb_path, config_path


def test_validate_ok(capsys):
    assert run("validate", "--corpus", str(SYNTH)) == 0
    out = capsys.readouterr().out
    assert "OK: 20 conversations" in out
    assert "synth-000:" in out


def test_validate_names_bad_conversation(tmp_path, capsys):
    doc = {"conversations": [{
        "conversation_id": "broken-one",
        "utterances": [{"utterance_id": 1, "speaker": "A", "text": "Hi",
                        "emotion": "neutral"}],
        "pairs": [{"emotion_utt_id": 1, "cause_utt_id": 4, "emotion": "joy",
                   "span": None}],
    }]}
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    assert run("validate", "--corpus", str(path)) == 1
    assert "broken-one" in capsys.readouterr().err


def test_validate_empty_file_is_parse_error(tmp_path, capsys):
    path = tmp_path / "empty.json"
    path.write_bytes(b"")
    assert run("validate", "--corpus", str(path)) == 1
    assert "byte offset" in capsys.readouterr().err


def test_embed_output_is_deterministic_and_loadable(tmp_path):
    a, b = tmp_path / "a.ndjson", tmp_path / "b.ndjson"
    assert run("embed", "--corpus", str(SYNTH), "--out", str(a), "--dim", "19") == 0
    assert run("embed", "--corpus", str(SYNTH), "--out", str(b), "--dim", "19") == 0
    assert a.read_bytes() == b.read_bytes()
    store = load_store(a)
    assert store.dim == 19
    assert len(store) == 109
    assert json.loads(a.read_text().split("\n")[0])["dim"] == 19


def test_train_checkpoints_are_reproducible(small_setup, tmp_path):
    corpus_path, emb_path, config_path = small_setup
    out1, out2 = tmp_path / "run1", tmp_path / "run2"
    for out in (out1, out2):
        assert run("train", "--corpus", str(corpus_path), "--embeddings", str(emb_path),
                   "--config", str(config_path), "--out", str(out)) == 0
    assert (out1 / "head.json").read_bytes() == (out2 / "head.json").read_bytes()
    assert (out1 / "encoder.json").read_bytes() == (out2 / "encoder.json").read_bytes()


def test_train_missing_embedding_names_key(small_setup, tmp_path, capsys):
    corpus_path, emb_path, config_path = small_setup
    # drop the last record
    lines = emb_path.read_text().strip().split("\n")
    emb_path.write_text("\n".join(lines[:-1]) + "\n")
    assert run("train", "--corpus", str(corpus_path), "--embeddings", str(emb_path),
               "--config", str(config_path), "--out", str(tmp_path / "ck")) == 1
    err = capsys.readouterr().err
    assert "missing" in err and "conv" in err


def test_predict_and_score_flow(small_setup, tmp_path, capsys):
    corpus_path, emb_path, config_path = small_setup
    ck = tmp_path / "ck"
    assert run("train", "--corpus", str(corpus_path), "--embeddings", str(emb_path),
               "--config", str(config_path), "--out", str(ck)) == 0
    preds_path = tmp_path / "preds.json"
    assert run("predict", "--corpus", str(corpus_path), "--embeddings", str(emb_path),
               "--checkpoints", str(ck), "--config", str(config_path),
               "--out", str(preds_path)) == 0
    corpus = parse_corpus(corpus_path.read_bytes())
    preds = parse_predictions(preds_path.read_bytes(), corpus)  # schema-validates
    for _, pred in preds:
        assert pred.span is not None

    report_path = tmp_path / "report.json"
    assert run("score", "--corpus", str(corpus_path), "--predictions", str(preds_path),
               "--out", str(report_path)) == 0
    out = capsys.readouterr().out
    assert "Strict" in out and "Proportional" in out and "Weighted" in out
    report = json.loads(report_path.read_text())
    assert 0.0 <= report["strict"]["f1"] <= report["proportional"]["f1"] <= 1.0


def test_score_gold_against_itself_is_all_ones(tmp_path, capsys):
    corpus = parse_corpus(SYNTH.read_bytes())
    preds = {"predictions": [
        {"conversation_id": conv.conversation_id,
         "emotion_utt_id": p.emotion_utt_id, "cause_utt_id": p.cause_utt_id,
         "emotion": str(p.emotion), "span": list(p.span)}
        for conv in corpus.conversations for p in conv.pairs]}
    preds_path = tmp_path / "gold_as_preds.json"
    preds_path.write_text(json.dumps(preds))
    report_path = tmp_path / "report.json"
    assert run("score", "--corpus", str(SYNTH), "--predictions", str(preds_path),
               "--out", str(report_path)) == 0
    report = json.loads(report_path.read_text())
    for mode in ("strict", "proportional", "pair_only"):
        assert report[mode] == {"precision": 1.0, "recall": 1.0, "f1": 1.0}
    table = capsys.readouterr().out
    metric_rows = [ln for ln in table.splitlines() if ln.split() and
                   ln.split()[0] in ("Precision", "Recall", "F1-Score")]
    assert len(metric_rows) == 3
    assert all(len(row.split()) == 4 for row in metric_rows)


def test_answers_file_changes_only_spans(small_setup, tmp_path):
    corpus_path, emb_path, config_path = small_setup
    ck = tmp_path / "ck"
    run("train", "--corpus", str(corpus_path), "--embeddings", str(emb_path),
        "--config", str(config_path), "--out", str(ck))
    plain, with_answers = tmp_path / "plain.json", tmp_path / "ans.json"
    run("predict", "--corpus", str(corpus_path), "--embeddings", str(emb_path),
        "--checkpoints", str(ck), "--config", str(config_path), "--out", str(plain))
    corpus = parse_corpus(corpus_path.read_bytes())
    base = parse_predictions(plain.read_bytes(), corpus)

    answers_path = tmp_path / "answers.ndjson"
    lines = [json.dumps({"conversation_id": c, "emotion_utt_id": p.emotion_utt_id,
                         "cause_utt_id": p.cause_utt_id, "answer_start": 0,
                         "answer_end": 3})
             for c, p in base]
    answers_path.write_text("\n".join(lines) + "\n" if lines else "")
    run("predict", "--corpus", str(corpus_path), "--embeddings", str(emb_path),
        "--checkpoints", str(ck), "--config", str(config_path),
        "--answers", str(answers_path), "--out", str(with_answers))
    alt = parse_predictions(with_answers.read_bytes(), corpus)

    assert [(c, p.emotion_utt_id, p.cause_utt_id, p.emotion) for c, p in base] == \
           [(c, p.emotion_utt_id, p.cause_utt_id, p.emotion) for c, p in alt]


def test_all_neutral_corpus_predicts_nothing(tmp_path):
    doc = {"conversations": [{
        "conversation_id": "quiet",
        "utterances": [
            {"utterance_id": 1, "speaker": "A", "text": "ok", "emotion": "neutral"},
            {"utterance_id": 2, "speaker": "B", "text": "fine", "emotion": "neutral"},
        ],
        "pairs": [],
    }]}
    corpus_path = tmp_path / "quiet.json"
    corpus_path.write_text(json.dumps(doc))
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps({"dim": 19, "seed": 0,
                                       "encoder_train": {"steps": 10},
                                       "head_train": {"epochs": 30}}))
    emb = tmp_path / "emb.ndjson"
    ck = tmp_path / "ck"
    preds_path = tmp_path / "preds.json"
    assert run("embed", "--corpus", str(corpus_path), "--out", str(emb), "--dim", "19") == 0
    assert run("train", "--corpus", str(corpus_path), "--embeddings", str(emb),
               "--config", str(config_path), "--out", str(ck)) == 0
    assert run("predict", "--corpus", str(corpus_path), "--embeddings", str(emb),
               "--checkpoints", str(ck), "--config", str(config_path),
               "--out", str(preds_path)) == 0
    assert json.loads(preds_path.read_text()) == {"predictions": []}


def test_qa_dataset_command(tmp_path):
    out = tmp_path / "qa.ndjson"
    assert run("qa-dataset", "--corpus", str(SYNTH), "--out", str(out)) == 0
    lines = out.read_text().strip().split("\n")
    assert len(lines) == 81
    sample = json.loads(lines[0])
    assert sample["question"].startswith("Which part of the text ")
    assert sample["context"][sample["answer_start"]:sample["answer_end"]]


def test_unknown_config_key_rejected(tmp_path, capsys):
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps({"dim": 19, "nonsense": 1}))
    assert run("train", "--corpus", str(SYNTH), "--embeddings", "nope.ndjson",
               "--config", str(config_path), "--out", str(tmp_path / "x")) == 1
    assert "unknown config keys" in capsys.readouterr().err
