import { writeFileSync, readFileSync } from "node:fs";

/** Base64 of little-endian IEEE-754 float32 values, the vector wire format. */
export function encodeFloat32(values: readonly number[]): string {
  const buf = Buffer.alloc(4 * values.length);
  values.forEach((v, i) => buf.writeFloatLE(v, 4 * i));
  return buf.toString("base64");
}

export function decodeFloat32(b64: string, dim: number): number[] {
  const buf = Buffer.from(b64, "base64");
  if (buf.length !== 4 * dim) {
    throw new Error(`expected ${4 * dim} bytes (${dim} floats), got ${buf.length}`);
  }
  const out: number[] = [];
  for (let i = 0; i < dim; i++) out.push(buf.readFloatLE(4 * i));
  return out;
}

export function writeNdjson(path: string, records: readonly object[]): void {
  const body = records.map((r) => JSON.stringify(r)).join("\n");
  writeFileSync(path, body.length ? body + "\n" : "");
}

export function readNdjson<T>(path: string): T[] {
  return readFileSync(path, "utf-8")
    .split("\n")
    .filter((line) => line.trim().length > 0)
    .map((line, i) => {
      try {
        return JSON.parse(line) as T;
      } catch (err) {
        throw new Error(`line ${i + 1}: malformed JSON: ${(err as Error).message}`);
      }
    });
}
