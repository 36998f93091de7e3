/** FNV-1a 64-bit over UTF-8 code points, in BigInt so results are identical
 * on every platform. */

const FNV_OFFSET = 0xcbf29ce484222325n;
const FNV_PRIME = 0x100000001b3n;
const MASK64 = (1n << 64n) - 1n;

export function fnv1a64(text: string): bigint {
  let hash = FNV_OFFSET;
  const bytes = Buffer.from(text, "utf-8");
  for (const byte of bytes) {
    hash ^= BigInt(byte);
    hash = (hash * FNV_PRIME) & MASK64;
  }
  return hash;
}

/** Signed hash bucket: index from the high bits, sign from bit 0. */
export function signedBucket(feature: string, dim: number): { index: number; sign: number } {
  const hash = fnv1a64(feature);
  return {
    index: Number((hash >> 1n) % BigInt(dim)),
    sign: (hash & 1n) === 0n ? 1 : -1,
  };
}

/** Deterministic uint32 PRNG (mulberry32) for reproducible shuffles. */
export function mulberry32(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}
