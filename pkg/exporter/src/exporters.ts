/** The two export jobs: embedding NDJSON and QA-answer NDJSON, both in the
 * exact interchange formats the downstream pipeline loads. */

import { writeFileSync } from "node:fs";

import { readCorpus } from "./corpus.js";
import { DEFAULT_ENCODER_OPTIONS, UtteranceEncoder, type EncoderOptions } from "./encoder.js";
import { encodeFloat32, readNdjson, writeNdjson } from "./ndjson.js";
import { DEFAULT_TRAIN_OPTIONS, SpanScorer, type QASampleRecord, type QATrainOptions } from "./qa.js";

export interface EmbeddingExportResult {
  utterances: number;
  dim: number;
}

export function exportEmbeddings(
  corpusPath: string,
  outPath: string,
  options: EncoderOptions = DEFAULT_ENCODER_OPTIONS,
): EmbeddingExportResult {
  const corpus = readCorpus(corpusPath);
  const encoder = new UtteranceEncoder(options);
  const records: object[] = [
    {
      dim: options.dim,
      format_version: 1,
      model_id: options.modelId,
      pooling: options.pooling,
    },
  ];
  let utterances = 0;
  for (const conv of corpus.conversations) {
    const vectors = encoder.encodeConversation(conv);
    conv.utterances.forEach((utt, i) => {
      records.push({
        conversation_id: conv.conversation_id,
        utterance_id: utt.utterance_id,
        s1: encodeFloat32(vectors[i]!),
        s2: null,
        s3: null,
      });
      utterances += 1;
    });
  }
  writeNdjson(outPath, records);
  return { utterances, dim: options.dim };
}

export interface AnswerExportOptions extends QATrainOptions {
  nullBias: number;
  modelId: string;
}

export const DEFAULT_ANSWER_OPTIONS: AnswerExportOptions = {
  ...DEFAULT_TRAIN_OPTIONS,
  nullBias: 0,
  modelId: "lexical-span-scorer-v1",
};

export interface AnswerExportResult {
  answered: number;
  abstained: number;
}

export function exportQaAnswers(
  samplesPath: string,
  outPath: string,
  options: AnswerExportOptions = DEFAULT_ANSWER_OPTIONS,
): AnswerExportResult {
  const samples = readNdjson<QASampleRecord>(samplesPath);
  if (samples.length === 0) throw new Error(`no QA samples in ${samplesPath}`);
  for (const s of samples) {
    if (typeof s.question !== "string" || typeof s.context !== "string") {
      throw new Error("QA samples must carry question and context");
    }
  }
  const scorer = new SpanScorer();
  scorer.train(samples, options);

  let answered = 0;
  let abstained = 0;
  const records = samples.map((sample) => {
    const head = {
      conversation_id: sample.conversation_id,
      emotion_utt_id: sample.emotion_utt_id,
      cause_utt_id: sample.cause_utt_id,
    };
    const span = scorer.answer(sample.question, sample.context, options.nullBias);
    if (span === null) {
      abstained += 1;
      return { ...head, abstain: true };
    }
    answered += 1;
    return { ...head, answer_start: span.answerStart, answer_end: span.answerEnd };
  });
  writeNdjson(outPath, records);
  writeFileSync(
    `${outPath}.meta.json`,
    JSON.stringify(
      {
        model_id: options.modelId,
        epochs: options.epochs,
        batch_size: options.batchSize,
        learning_rate: options.learningRate,
        seed: options.seed,
        null_bias: options.nullBias,
        samples: samples.length,
      },
      null,
      1,
    ) + "\n",
  );
  return { answered, abstained };
}
