import { describe, expect, it } from "vitest";

import { spanToTokens, tokenizeWithOffsets } from "../src/tokenizer.js";

describe("tokenizeWithOffsets", () => {
  it("splits words and punctuation with exact offsets", () => {
    const tokens = tokenizeWithOffsets("You made up!");
    expect(tokens.map((t) => t.piece)).toEqual(["you", "made", "up", "!"]);
    expect(tokens.map((t) => [t.start, t.end])).toEqual([[0, 3], [4, 8], [9, 11], [11, 12]]);
  });

  it("offsets slice the original text back out", () => {
    const text = "Émile's café, again?  12 points!";
    for (const tok of tokenizeWithOffsets(text)) {
      expect(text.slice(tok.start, tok.end).toLowerCase()).toBe(tok.piece);
    }
  });

  it("handles empty and whitespace-only input", () => {
    expect(tokenizeWithOffsets("")).toEqual([]);
    expect(tokenizeWithOffsets("   ")).toEqual([]);
  });
});

describe("spanToTokens", () => {
  const tokens = tokenizeWithOffsets("the train was late again");

  it("maps a mid-text char span to covering tokens", () => {
    expect(spanToTokens(tokens, 4, 9)).toEqual({ startToken: 1, endToken: 1 });
    expect(spanToTokens(tokens, 4, 18)).toEqual({ startToken: 1, endToken: 3 });
  });

  it("returns null when the span covers only separators", () => {
    expect(spanToTokens(tokens, 3, 4)).toBeNull();
  });
});
