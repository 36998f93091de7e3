/** Deterministic conversation-aware utterance encoder.
 *
 * Stands in for a pretrained sentence encoder in environments without model
 * downloads: token pieces hash into signed buckets, utterance vectors pool
 * over tokens (mean or cls-style), and neighboring utterances mix in so the
 * representation sees dialogue context. Output is L2-normalized float32 and
 * identical across runs and platforms.
 */

import type { Conversation } from "./corpus.js";
import { signedBucket } from "./hashing.js";
import { tokenizeWithOffsets } from "./tokenizer.js";

export type Pooling = "mean" | "cls";

export interface EncoderOptions {
  dim: number;
  pooling: Pooling;
  /** Weight of each adjacent utterance mixed into an utterance's vector. */
  contextMix: number;
  /** Recorded in output metadata only; selects nothing in this build. */
  modelId: string;
}

export const DEFAULT_ENCODER_OPTIONS: EncoderOptions = {
  dim: 19,
  pooling: "mean",
  contextMix: 0.25,
  modelId: "hash-context-encoder-v1",
};

function zeros(dim: number): number[] {
  return new Array<number>(dim).fill(0);
}

function addFeature(vec: number[], feature: string, weight = 1): void {
  const { index, sign } = signedBucket(feature, vec.length);
  vec[index] = (vec[index] ?? 0) + sign * weight;
}

function normalize(vec: number[]): number[] {
  const norm = Math.sqrt(vec.reduce((acc, v) => acc + v * v, 0));
  return norm > 0 ? vec.map((v) => v / norm) : vec;
}

function tokenVector(utteranceText: string, dim: number): number[] {
  const vec = zeros(dim);
  const pieces = tokenizeWithOffsets(utteranceText).map((t) => t.piece);
  for (const piece of pieces) addFeature(vec, `tok:${piece}`);
  pieces.forEach((piece, i) => {
    if (i + 1 < pieces.length) addFeature(vec, `big:${piece} ${pieces[i + 1]}`);
  });
  return vec;
}

function clsVector(utteranceText: string, speaker: string, dim: number): number[] {
  const vec = zeros(dim);
  const pieces = tokenizeWithOffsets(utteranceText).map((t) => t.piece);
  addFeature(vec, `cls-speaker:${speaker}`);
  addFeature(vec, `cls-len:${Math.min(pieces.length, 12)}`);
  pieces.slice(0, 4).forEach((piece, i) => addFeature(vec, `cls-${i}:${piece}`));
  return vec;
}

export class UtteranceEncoder {
  constructor(readonly options: EncoderOptions = DEFAULT_ENCODER_OPTIONS) {
    if (options.dim < 8) throw new Error(`encoder dim must be >= 8, got ${options.dim}`);
    if (options.contextMix < 0 || options.contextMix >= 1) {
      throw new Error(`contextMix must be in [0, 1), got ${options.contextMix}`);
    }
  }

  /** One vector per utterance, in conversation order. */
  encodeConversation(conv: Conversation): number[][] {
    const { dim, pooling, contextMix } = this.options;
    const local = conv.utterances.map((utt) =>
      pooling === "cls" ? clsVector(utt.text, utt.speaker, dim) : tokenVector(utt.text, dim),
    );
    return local.map((vec, i) => {
      const mixed = vec.slice();
      for (const j of [i - 1, i + 1]) {
        const neighbor = local[j];
        if (neighbor) neighbor.forEach((v, k) => (mixed[k] = (mixed[k] ?? 0) + contextMix * v));
      }
      return normalize(mixed);
    });
  }
}
