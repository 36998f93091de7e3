"""Command-line pipeline: validate, embed, train, predict, score, qa-dataset.

Configuration comes from an optional JSON file (--config) with flag
overrides winning. One run seed drives every stage deterministically:
encoder init uses seed, head training seed+1, input dropout seed+2.
Set CAUSEWEAVE_LOG=DEBUG (or any logging level name) for verbose output.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import causality, embedder, emotion_head, pairing, qa_builder, scoring
from .corpus import (Corpus, ParseError, ValidationError, parse_corpus,
                     parse_predictions, serialize_predictions, canonical_json_bytes)

logger = logging.getLogger(__name__)

DEFAULT_DIM = 19  # 3*19 + 7 = 64, divisible by the default head count


class CliError(Exception):
    """Fatal, user-facing command failure."""


@dataclass(frozen=True)
class RunConfig:
    dim: int = DEFAULT_DIM
    threshold: float = pairing.DEFAULT_THRESHOLD
    seed: int = 0
    encoder: causality.EncoderConfig = causality.EncoderConfig()
    encoder_train: causality.EncoderTrainConfig = causality.EncoderTrainConfig()
    head_train: emotion_head.HeadTrainConfig = emotion_head.HeadTrainConfig()

    @classmethod
    def load(cls, path: str | None, *, seed: int | None = None,
             threshold: float | None = None) -> RunConfig:
        """Build the effective config: file values, then flag overrides."""
        doc: dict = {}
        if path is not None:
            try:
                doc = json.loads(Path(path).read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as exc:
                raise CliError(f"cannot read config {path}: {exc}") from exc
            if not isinstance(doc, dict):
                raise CliError(f"config {path} must contain a JSON object")
        known = {"dim", "threshold", "seed", "encoder", "encoder_train", "head_train"}
        unknown = set(doc) - known
        if unknown:
            raise CliError(f"unknown config keys: {sorted(unknown)}")

        dim = doc.get("dim", DEFAULT_DIM)
        run_seed = seed if seed is not None else doc.get("seed", 0)
        tau = threshold if threshold is not None else doc.get("threshold",
                                                              pairing.DEFAULT_THRESHOLD)
        enc_doc = dict(doc.get("encoder", {}))
        enc_doc.setdefault("d_model", causality.d_model_for(dim))
        enc_doc.setdefault("seed", run_seed)
        head_doc = dict(doc.get("head_train", {}))
        head_doc.setdefault("seed", run_seed + 1)
        opt_doc = dict(doc.get("encoder_train", {}))
        opt_doc.setdefault("seed", run_seed + 2)
        try:
            encoder = causality.EncoderConfig(**enc_doc)
            head_train = emotion_head.HeadTrainConfig(**head_doc)
            encoder_train = causality.EncoderTrainConfig(**opt_doc)
        except (TypeError, ValueError) as exc:
            raise CliError(f"invalid configuration: {exc}") from exc
        if encoder.d_model != causality.d_model_for(dim):
            raise CliError(f"encoder d_model {encoder.d_model} does not match "
                           f"3*dim+7 = {causality.d_model_for(dim)} for dim {dim}")
        return cls(dim=dim, threshold=tau, seed=run_seed, encoder=encoder,
                   encoder_train=encoder_train, head_train=head_train)


def _read_corpus(path: str) -> Corpus:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CliError(f"cannot read corpus {path}: {exc}") from exc
    return parse_corpus(data)


def _load_store(path: str) -> embedder.EmbeddingStore:
    try:
        return embedder.load_store(path)
    except OSError as exc:
        raise CliError(f"cannot read embeddings {path}: {exc}") from exc


def _require_coverage(corpus: Corpus, store: embedder.EmbeddingStore) -> None:
    for conv in corpus.conversations:
        for utt in conv.utterances:
            if (conv.conversation_id, utt.utterance_id) not in store:
                raise CliError(f"embedding store is missing conversation "
                               f"{conv.conversation_id!r} utterance {utt.utterance_id}")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_validate(args: argparse.Namespace) -> int:
    corpus = _read_corpus(args.corpus)
    total_pairs = 0
    for conv in corpus.conversations:
        spanful = sum(1 for p in conv.pairs if p.span is not None)
        total_pairs += len(conv.pairs)
        print(f"{conv.conversation_id}: {len(conv.utterances)} utterances, "
              f"{len(conv.pairs)} pairs ({spanful} with spans)")
    print(f"OK: {len(corpus.conversations)} conversations, {total_pairs} pairs")
    return 0


def cmd_embed(args: argparse.Namespace) -> int:
    corpus = _read_corpus(args.corpus)
    store = embedder.build_store(corpus, args.dim)
    embedder.save_store(store, args.out)
    print(f"wrote {len(store)} embeddings (dim {args.dim}) to {args.out}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    config = RunConfig.load(args.config, seed=args.seed)
    corpus = _read_corpus(args.corpus)
    store = _load_store(args.embeddings)
    if store.dim != config.dim:
        raise CliError(f"embedding store has dim {store.dim}, config expects {config.dim}")
    _require_coverage(corpus, store)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    logger.info("training emotion head (%d epochs)", config.head_train.epochs)
    head = emotion_head.train_head(corpus, store, config.head_train)
    emotion_head.save_head(head, out_dir / "head.json", seed=config.head_train.seed,
                           config={"lr": config.head_train.lr,
                                   "epochs": config.head_train.epochs,
                                   "batch_size": config.head_train.batch_size})

    logger.info("training encoder (%d steps)", config.encoder_train.steps)
    losses: list[float] = []
    model = causality.train_encoder(corpus, store, head, config.encoder,
                                    config.encoder_train,
                                    callback=lambda _, loss: losses.append(loss))
    causality.save_model(model, out_dir / "encoder.json",
                         seed=config.encoder_train.seed,
                         steps=config.encoder_train.steps)
    final = losses[-1] if losses else float("nan")
    print(f"wrote checkpoints to {out_dir} (final training loss {final:.6g})")
    return 0


def _predict_pairs(corpus: Corpus, store: embedder.EmbeddingStore,
                   head: emotion_head.EmotionHead, model: causality.CausalityModel,
                   tau: float, answers_path: str | None
                   ) -> list[tuple[str, pairing.PairPrediction]]:
    answers = qa_builder.load_answers(answers_path) if answers_path else None
    predictions: list[tuple[str, pairing.PairPrediction]] = []
    for conv in corpus.conversations:
        slots = [store.get(conv.conversation_id, u.utterance_id)
                 for u in conv.utterances]
        emotions = emotion_head.predict_emotions(slots, head)
        combined = [causality.assemble_input(s, emotion_head.head_forward(s, head))
                    for s in slots]
        try:
            sequence = causality.prepare_sequence(
                np.stack(combined), model.params["pos.table"],
                model.config.dropout_p, training=False)
        except ValueError as exc:
            raise CliError(f"conversation {conv.conversation_id!r}: {exc}") from exc
        _, c_m = causality.encode(model, sequence)
        pairs = pairing.extract_pairs(c_m, emotions, tau)
        if answers is not None:
            resolved = qa_builder.resolve_spans_from_answers(
                pairs, conv, answers.get(conv.conversation_id, {}))
        else:
            resolved = qa_builder.resolve_spans(pairs, conv)
        predictions.extend((conv.conversation_id, p) for p in resolved)
    return predictions


def cmd_predict(args: argparse.Namespace) -> int:
    config = RunConfig.load(args.config, seed=args.seed, threshold=args.threshold)
    corpus = _read_corpus(args.corpus)
    store = _load_store(args.embeddings)
    _require_coverage(corpus, store)
    ckpt_dir = Path(args.checkpoints)
    head = emotion_head.load_head(ckpt_dir / "head.json")
    model = causality.load_model(ckpt_dir / "encoder.json")
    predictions = _predict_pairs(corpus, store, head, model, config.threshold,
                                 args.answers)
    Path(args.out).write_bytes(serialize_predictions(corpus, predictions) + b"\n")
    print(f"wrote {len(predictions)} predictions to {args.out}")
    return 0


def cmd_score(args: argparse.Namespace) -> int:
    corpus = _read_corpus(args.corpus)
    try:
        pred_bytes = Path(args.predictions).read_bytes()
    except OSError as exc:
        raise CliError(f"cannot read predictions {args.predictions}: {exc}") from exc
    preds = parse_predictions(pred_bytes, corpus)
    golds = [(conv.conversation_id, pair)
             for conv in corpus.conversations for pair in conv.pairs]
    report = scoring.full_report(preds, golds)
    print(scoring.render_table(report))
    if args.out:
        Path(args.out).write_bytes(canonical_json_bytes(report.to_dict()) + b"\n")
        print(f"wrote report to {args.out}")
    return 0


def cmd_qa_dataset(args: argparse.Namespace) -> int:
    corpus = _read_corpus(args.corpus)
    samples = qa_builder.build_qa_dataset(corpus)
    qa_builder.write_qa_samples(samples, args.out)
    print(f"wrote {len(samples)} QA samples to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="causeweave",
        description="Emotion-cause pair extraction pipeline for conversations.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="parse and validate a corpus file")
    p.add_argument("--corpus", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("embed", help="build a hash-embedding store")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dim", type=int, default=DEFAULT_DIM)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("train", help="train the emotion head, then the encoder")
    p.add_argument("--corpus", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="classify emotions, extract pairs, resolve spans")
    p.add_argument("--corpus", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--checkpoints", required=True, help="checkpoint directory")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--threshold", type=float)
    p.add_argument("--answers", help="QA answers NDJSON for span resolution")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("score", help="score a prediction file against gold pairs")
    p.add_argument("--corpus", required=True, help="gold corpus")
    p.add_argument("--predictions", required=True)
    p.add_argument("--out", help="also write the JSON report here")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("qa-dataset", help="emit QA samples NDJSON for external QA models")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_qa_dataset)

    return parser


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("CAUSEWEAVE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ParseError, ValidationError, embedder.StoreError,
            emotion_head.CheckpointError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
