/** Offset-preserving tokenization: lowercased word pieces plus one token per
 * punctuation character, each with its [start, end) char range in the
 * original text. Answer spans computed on tokens map back to exact char
 * coordinates through these offsets. */

export interface TokenOffset {
  piece: string;
  start: number;
  end: number;
}

const TOKEN_PATTERN = /[\p{L}\p{N}]+|[^\s\p{L}\p{N}]/gu;

export function tokenizeWithOffsets(text: string): TokenOffset[] {
  const tokens: TokenOffset[] = [];
  for (const match of text.matchAll(TOKEN_PATTERN)) {
    const start = match.index ?? 0;
    tokens.push({
      piece: match[0].toLowerCase(),
      start,
      end: start + match[0].length,
    });
  }
  return tokens;
}

/** Inclusive token range covering a [start, end) char span, or null when the
 * span overlaps no token. */
export function spanToTokens(
  tokens: readonly TokenOffset[],
  charStart: number,
  charEnd: number,
): { startToken: number; endToken: number } | null {
  let first = -1;
  let last = -1;
  tokens.forEach((tok, i) => {
    if (tok.start < charEnd && charStart < tok.end) {
      if (first < 0) first = i;
      last = i;
    }
  });
  return first < 0 ? null : { startToken: first, endToken: last };
}
