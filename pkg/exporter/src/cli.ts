import { parseArgs } from "node:util";

import { DEFAULT_ENCODER_OPTIONS, type Pooling } from "./encoder.js";
import { DEFAULT_ANSWER_OPTIONS, exportEmbeddings, exportQaAnswers } from "./exporters.js";

const USAGE = `usage:
  export-embeddings --corpus <corpus.json> --out <emb.ndjson>
                    [--dim 19] [--pooling mean|cls] [--context-mix 0.25]
                    [--model-id <name>]
  export-qa-answers --samples <qa.ndjson> --out <answers.ndjson>
                    [--epochs 25] [--batch-size 8] [--lr 0.4] [--seed 0]
                    [--null-bias 0] [--model-id <name>]`;

function requireOption(value: string | undefined, name: string): string {
  if (!value) throw new Error(`missing required option --${name}\n${USAGE}`);
  return value;
}

function numberOption(value: string | undefined, fallback: number, name: string): number {
  if (value === undefined) return fallback;
  const parsed = Number(value);
  if (!Number.isFinite(parsed)) throw new Error(`--${name} must be a number, got ${value}`);
  return parsed;
}

function runExportEmbeddings(argv: string[]): void {
  const { values } = parseArgs({
    args: argv,
    options: {
      corpus: { type: "string" },
      out: { type: "string" },
      dim: { type: "string" },
      pooling: { type: "string" },
      "context-mix": { type: "string" },
      "model-id": { type: "string" },
    },
  });
  const pooling = (values.pooling ?? DEFAULT_ENCODER_OPTIONS.pooling) as Pooling;
  if (pooling !== "mean" && pooling !== "cls") {
    throw new Error(`--pooling must be mean or cls, got ${pooling}`);
  }
  const result = exportEmbeddings(
    requireOption(values.corpus, "corpus"),
    requireOption(values.out, "out"),
    {
      dim: numberOption(values.dim, DEFAULT_ENCODER_OPTIONS.dim, "dim"),
      pooling,
      contextMix: numberOption(values["context-mix"], DEFAULT_ENCODER_OPTIONS.contextMix,
        "context-mix"),
      modelId: values["model-id"] ?? DEFAULT_ENCODER_OPTIONS.modelId,
    },
  );
  console.log(`wrote ${result.utterances} embeddings (dim ${result.dim}) to ${values.out}`);
}

function runExportQaAnswers(argv: string[]): void {
  const { values } = parseArgs({
    args: argv,
    options: {
      samples: { type: "string" },
      out: { type: "string" },
      epochs: { type: "string" },
      "batch-size": { type: "string" },
      lr: { type: "string" },
      seed: { type: "string" },
      "null-bias": { type: "string" },
      "model-id": { type: "string" },
    },
  });
  const result = exportQaAnswers(
    requireOption(values.samples, "samples"),
    requireOption(values.out, "out"),
    {
      epochs: numberOption(values.epochs, DEFAULT_ANSWER_OPTIONS.epochs, "epochs"),
      batchSize: numberOption(values["batch-size"], DEFAULT_ANSWER_OPTIONS.batchSize,
        "batch-size"),
      learningRate: numberOption(values.lr, DEFAULT_ANSWER_OPTIONS.learningRate, "lr"),
      seed: numberOption(values.seed, DEFAULT_ANSWER_OPTIONS.seed, "seed"),
      nullBias: numberOption(values["null-bias"], DEFAULT_ANSWER_OPTIONS.nullBias, "null-bias"),
      modelId: values["model-id"] ?? DEFAULT_ANSWER_OPTIONS.modelId,
    },
  );
  console.log(`wrote ${result.answered} answers, ${result.abstained} abstentions to ${values.out}`);
}

export function main(argv: string[]): number {
  const [command, ...rest] = argv;
  try {
    switch (command) {
      case "export-embeddings":
        runExportEmbeddings(rest);
        return 0;
      case "export-qa-answers":
        runExportQaAnswers(rest);
        return 0;
      default:
        throw new Error(`unknown command ${command ?? "(none)"}\n${USAGE}`);
    }
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
}

process.exitCode = main(process.argv.slice(2));
