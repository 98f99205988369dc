import { writeFileSync } from "node:fs";

import { Encoder, makeEncoder } from "./encoders.js";
import { collectTexts, readHintTexts, readScenario } from "./scenario.js";

export interface ExportOptions {
  scenarioPath: string;
  hintsPath?: string;
  model: string;
  outPath: string;
}

export interface ExportResult {
  count: number;
  dim: number;
  model: string;
}

/** Embedding JSONL: header {"dim", "model"} then one {"text", "vec"} row per
 * unique normalized text, sorted by text. JSON.stringify serializes floats
 * with round-trip precision, so repeat runs are byte-identical. */
export function renderJsonl(texts: string[], vectors: number[][], encoder: Encoder): string {
  const lines = [JSON.stringify({ dim: encoder.dim, model: encoder.name })];
  texts.forEach((text, i) => {
    const vec = vectors[i];
    if (vec.length !== encoder.dim) {
      throw new Error(`encoder returned ${vec.length} dims for ${text}, expected ${encoder.dim}`);
    }
    if (!vec.every(Number.isFinite)) {
      throw new Error(`encoder returned a non-finite component for ${text}`);
    }
    lines.push(JSON.stringify({ text, vec }));
  });
  return lines.join("\n") + "\n";
}

export async function exportEmbeddings(opts: ExportOptions): Promise<ExportResult> {
  const scenario = readScenario(opts.scenarioPath);
  const hintTexts = opts.hintsPath ? readHintTexts(opts.hintsPath) : [];
  const texts = collectTexts(scenario, hintTexts);
  if (texts.length === 0) {
    throw new Error(`${opts.scenarioPath} contains no action texts`);
  }
  const encoder = await makeEncoder(opts.model);
  const vectors = await encoder.encode(texts);
  writeFileSync(opts.outPath, renderJsonl(texts, vectors, encoder), "utf-8");
  return { count: texts.length, dim: encoder.dim, model: encoder.name };
}
