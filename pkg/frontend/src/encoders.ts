import { createHash } from "node:crypto";

export interface Encoder {
  readonly name: string;
  readonly dim: number;
  encode(texts: string[]): Promise<number[][]>;
}

/**
 * Deterministic offline encoder: signed bag-of-tokens feature hashing,
 * L2-normalized. blake2b's first 8 digest bytes pick the bucket, the ninth
 * byte's low bit the sign, so repeat runs are byte-identical everywhere.
 */
export function hashEncoder(dim: number): Encoder {
  if (!Number.isInteger(dim) || dim < 1) {
    throw new Error(`hash encoder needs a positive integer dimension, got ${dim}`);
  }
  return {
    name: `hash:${dim}`,
    dim,
    async encode(texts: string[]): Promise<number[][]> {
      return texts.map((text) => {
        const vec = new Array<number>(dim).fill(0);
        for (const token of text.split(/\s+/u).filter(Boolean)) {
          const digest = createHash("blake2b512").update(token, "utf-8").digest();
          const bucket = Number(digest.readBigUInt64BE(0) % BigInt(dim));
          const sign = digest[8] & 1 ? 1 : -1;
          vec[bucket] += sign;
        }
        const norm = Math.sqrt(vec.reduce((acc, x) => acc + x * x, 0));
        return norm > 0 ? vec.map((x) => x / norm) : vec;
      });
    },
  };
}

/** Pretrained sentence encoder via transformers.js (mean pooling, normalized).
 * Requires @xenova/transformers to be installed and the model to be
 * available locally (or downloadable). */
async function xenovaEncoder(model: string): Promise<Encoder> {
  let transformers: any;
  try {
    transformers = await import("@xenova/transformers");
  } catch {
    throw new Error(
      "model encoders need the optional dependency @xenova/transformers " +
      "(npm install @xenova/transformers) and a locally available model");
  }
  let extractor: any;
  try {
    extractor = await transformers.pipeline("feature-extraction", model);
  } catch (err) {
    throw new Error(`model ${model} is not available locally: ${(err as Error).message}`);
  }
  const probe = await extractor("dimension probe", { pooling: "mean", normalize: true });
  const dim = probe.data.length;
  return {
    name: model,
    dim,
    async encode(texts: string[]): Promise<number[][]> {
      const out: number[][] = [];
      for (const text of texts) {
        const res = await extractor(text, { pooling: "mean", normalize: true });
        out.push(Array.from(res.data as Iterable<number>));
      }
      return out;
    },
  };
}

/** "hash:<dim>" for the offline test encoder, "xenova:<model-id>" for a
 * pretrained sentence encoder. */
export async function makeEncoder(spec: string): Promise<Encoder> {
  if (spec.startsWith("hash:")) {
    return hashEncoder(Number(spec.slice("hash:".length)));
  }
  if (spec.startsWith("xenova:")) {
    return xenovaEncoder(spec.slice("xenova:".length));
  }
  throw new Error(`unknown model ${spec}; use hash:<dim> or xenova:<model-id>`);
}
