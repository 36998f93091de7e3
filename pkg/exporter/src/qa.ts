/** Trainable extractive QA over (question, context) pairs.
 *
 * A linear span head: every context token gets a feature vector (lexical
 * overlap with the question, positional cues, and hashed piece identity);
 * two weight vectors score start and end positions with a softmax over all
 * positions plus one virtual no-answer slot (so unanswerable questions can
 * abstain, and calibration of that slot is learned). Trained with plain
 * minibatch SGD; deterministic for a fixed seed.
 */

import { mulberry32, signedBucket } from "./hashing.js";
import { spanToTokens, tokenizeWithOffsets, type TokenOffset } from "./tokenizer.js";

export interface QASampleRecord {
  conversation_id: string;
  emotion_utt_id: number;
  cause_utt_id: number;
  emotion: string;
  question: string;
  context: string;
  context_index: [number, number][];
  answer_start: number | null;
  answer_end: number | null;
}

export interface QATrainOptions {
  epochs: number;
  batchSize: number;
  learningRate: number;
  seed: number;
}

export const DEFAULT_TRAIN_OPTIONS: QATrainOptions = {
  epochs: 25,
  batchSize: 8,
  learningRate: 0.4,
  seed: 0,
};

const VOCAB_BUCKETS = 64;
const BASE_FEATURES = 8;
const N_FEATURES = BASE_FEATURES + VOCAB_BUCKETS;
const MAX_SPAN_TOKENS = 40;

interface EncodedSample {
  tokens: TokenOffset[];
  features: number[][]; // per token, length N_FEATURES
  startToken: number | null;
  endToken: number | null;
}

function isPunct(piece: string): boolean {
  return !/[\p{L}\p{N}]/u.test(piece);
}

function featurize(question: string, context: string): { tokens: TokenOffset[]; features: number[][] } {
  const tokens = tokenizeWithOffsets(context);
  const questionPieces = new Set(tokenizeWithOffsets(question).map((t) => t.piece));
  const n = tokens.length;
  const features = tokens.map((tok, i) => {
    const prev = tokens[i - 1];
    const next = tokens[i + 1];
    const feat = new Array<number>(N_FEATURES).fill(0);
    feat[0] = 1; // bias
    feat[1] = questionPieces.has(tok.piece) ? 1 : 0;
    feat[2] = prev && questionPieces.has(prev.piece) ? 1 : 0;
    feat[3] = next && questionPieces.has(next.piece) ? 1 : 0;
    feat[4] = n > 1 ? i / (n - 1) : 0;
    feat[5] = isPunct(tok.piece) ? 1 : 0;
    feat[6] = Math.min(tok.piece.length, 10) / 10;
    feat[7] = prev ? 0 : 1; // context-initial token
    const { index, sign } = signedBucket(`piece:${tok.piece}`, VOCAB_BUCKETS);
    feat[BASE_FEATURES + index] = sign;
    return feat;
  });
  return { tokens, features };
}

function encodeSample(sample: QASampleRecord): EncodedSample {
  const { tokens, features } = featurize(sample.question, sample.context);
  let startToken: number | null = null;
  let endToken: number | null = null;
  if (sample.answer_start !== null && sample.answer_end !== null) {
    const mapped = spanToTokens(tokens, sample.answer_start, sample.answer_end);
    if (mapped) {
      startToken = mapped.startToken;
      endToken = mapped.endToken;
    }
  }
  return { tokens, features, startToken, endToken };
}

function dot(weights: readonly number[], feat: readonly number[]): number {
  let acc = 0;
  for (let i = 0; i < weights.length; i++) acc += (weights[i] ?? 0) * (feat[i] ?? 0);
  return acc;
}

function softmaxWithNull(scores: number[], nullScore: number): { probs: number[]; nullProb: number } {
  const top = Math.max(nullScore, ...scores);
  const exps = scores.map((s) => Math.exp(s - top));
  const nullExp = Math.exp(nullScore - top);
  const total = nullExp + exps.reduce((a, b) => a + b, 0);
  return { probs: exps.map((e) => e / total), nullProb: nullExp / total };
}

export interface SpanAnswer {
  answerStart: number;
  answerEnd: number;
  score: number;
}

export class SpanScorer {
  startWeights = new Array<number>(N_FEATURES).fill(0);
  endWeights = new Array<number>(N_FEATURES).fill(0);
  startNull = 0;
  endNull = 0;

  /** Fine-tune on answerable samples (those with a gold answer span). */
  train(samples: readonly QASampleRecord[], options: QATrainOptions = DEFAULT_TRAIN_OPTIONS): void {
    const encoded = samples.map(encodeSample).filter((s) => s.startToken !== null);
    if (encoded.length === 0) {
      throw new Error("no trainable samples: every sample lacks an aligned answer span");
    }
    const rng = mulberry32(options.seed);
    const order = encoded.map((_, i) => i);
    for (let epoch = 0; epoch < options.epochs; epoch++) {
      // Fisher-Yates with the seeded generator
      for (let i = order.length - 1; i > 0; i--) {
        const j = Math.floor(rng() * (i + 1));
        const a = order[i]!;
        order[i] = order[j]!;
        order[j] = a;
      }
      for (let from = 0; from < order.length; from += options.batchSize) {
        const batch = order.slice(from, from + options.batchSize);
        this.sgdStep(batch.map((i) => encoded[i]!), options.learningRate);
      }
    }
  }

  private sgdStep(batch: readonly EncodedSample[], lr: number): void {
    const gradStart = new Array<number>(N_FEATURES).fill(0);
    const gradEnd = new Array<number>(N_FEATURES).fill(0);
    let gradStartNull = 0;
    let gradEndNull = 0;
    for (const sample of batch) {
      const startScores = sample.features.map((f) => dot(this.startWeights, f));
      const endScores = sample.features.map((f) => dot(this.endWeights, f));
      const start = softmaxWithNull(startScores, this.startNull);
      const end = softmaxWithNull(endScores, this.endNull);
      // cross-entropy gradient: probability minus one-hot gold
      sample.features.forEach((feat, i) => {
        const dStart = (start.probs[i] ?? 0) - (i === sample.startToken ? 1 : 0);
        const dEnd = (end.probs[i] ?? 0) - (i === sample.endToken ? 1 : 0);
        feat.forEach((v, k) => {
          gradStart[k] = (gradStart[k] ?? 0) + dStart * v;
          gradEnd[k] = (gradEnd[k] ?? 0) + dEnd * v;
        });
      });
      gradStartNull += start.nullProb;
      gradEndNull += end.nullProb;
    }
    const scale = lr / batch.length;
    for (let k = 0; k < N_FEATURES; k++) {
      this.startWeights[k] = (this.startWeights[k] ?? 0) - scale * (gradStart[k] ?? 0);
      this.endWeights[k] = (this.endWeights[k] ?? 0) - scale * (gradEnd[k] ?? 0);
    }
    this.startNull -= scale * gradStartNull;
    this.endNull -= scale * gradEndNull;
  }

  /** Best span in context char coordinates, or null to abstain: the learned
   * no-answer slot plus nullBias outscores every span. Larger nullBias makes
   * abstention more likely. */
  answer(question: string, context: string, nullBias = 0): SpanAnswer | null {
    const { tokens, features } = featurize(question, context);
    if (tokens.length === 0) return null;
    const startScores = features.map((f) => dot(this.startWeights, f));
    const endScores = features.map((f) => dot(this.endWeights, f));
    let best: { s: number; e: number; score: number } | null = null;
    for (let s = 0; s < tokens.length; s++) {
      const eLimit = Math.min(tokens.length, s + MAX_SPAN_TOKENS);
      for (let e = s; e < eLimit; e++) {
        const score = (startScores[s] ?? 0) + (endScores[e] ?? 0);
        if (best === null || score > best.score) best = { s, e, score };
      }
    }
    if (best === null) return null;
    if (this.startNull + this.endNull + nullBias > best.score) return null;
    return {
      answerStart: tokens[best.s]!.start,
      answerEnd: tokens[best.e]!.end,
      score: best.score,
    };
  }
}
