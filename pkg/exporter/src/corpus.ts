import { readFileSync } from "node:fs";

export interface Utterance {
  utterance_id: number;
  speaker: string;
  text: string;
  emotion: string;
}

export interface GoldPair {
  emotion_utt_id: number;
  cause_utt_id: number;
  emotion: string;
  span: [number, number] | null;
}

export interface Conversation {
  conversation_id: string;
  utterances: Utterance[];
  pairs: GoldPair[];
}

export interface Corpus {
  conversations: Conversation[];
}

function fail(where: string, message: string): never {
  throw new Error(`invalid corpus (${where}): ${message}`);
}

export function parseCorpus(raw: string): Corpus {
  let doc: unknown;
  try {
    doc = JSON.parse(raw);
  } catch (err) {
    throw new Error(`corpus is not valid JSON: ${(err as Error).message}`);
  }
  if (typeof doc !== "object" || doc === null || !Array.isArray((doc as Corpus).conversations)) {
    fail("document", "expected {\"conversations\": [...]}");
  }
  const corpus = doc as Corpus;
  for (const conv of corpus.conversations) {
    const id = conv.conversation_id;
    if (typeof id !== "string" || !id) fail("conversation", "missing conversation_id");
    if (!Array.isArray(conv.utterances) || conv.utterances.length === 0) {
      fail(id, "missing utterances");
    }
    conv.utterances.forEach((utt, i) => {
      if (utt.utterance_id !== i + 1) fail(id, `utterance_ids must be consecutive from 1`);
      if (typeof utt.text !== "string" || !utt.text.trim()) fail(id, `utterance ${i + 1} has empty text`);
      if (typeof utt.speaker !== "string") fail(id, `utterance ${i + 1} has no speaker`);
    });
    if (!Array.isArray(conv.pairs)) fail(id, "missing pairs");
    for (const pair of conv.pairs) {
      if (pair.emotion_utt_id < 1 || pair.emotion_utt_id > conv.utterances.length ||
          pair.cause_utt_id < 1 || pair.cause_utt_id > conv.utterances.length) {
        fail(id, "pair references an utterance outside the conversation");
      }
    }
  }
  return corpus;
}

export function readCorpus(path: string): Corpus {
  return parseCorpus(readFileSync(path, "utf-8"));
}
