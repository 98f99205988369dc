import { readFileSync } from "node:fs";

import { normalizeText } from "./normalize.js";

export interface ScenarioFile {
  title: string;
  neg_distance: number;
  esds: { id: string; events: string[] }[];
  clusters: {
    id: string;
    label: string;
    members: { esd: string; pos: number }[];
    sequences: string[][][]; // [alternative][sub-step][surface variant]
  }[];
}

export function readScenario(path: string): ScenarioFile {
  let raw: string;
  try {
    raw = readFileSync(path, "utf-8");
  } catch (err) {
    throw new Error(`cannot read scenario file ${path}: ${(err as Error).message}`);
  }
  let data: unknown;
  try {
    data = JSON.parse(raw);
  } catch (err) {
    throw new Error(`${path} is not valid JSON: ${(err as Error).message}`);
  }
  const scenario = data as ScenarioFile;
  if (typeof scenario?.title !== "string" || !Array.isArray(scenario?.clusters)) {
    throw new Error(`${path} does not look like a scenario file (title/clusters missing)`);
  }
  return scenario;
}

export function readHintTexts(path: string): string[] {
  let raw: string;
  try {
    raw = readFileSync(path, "utf-8");
  } catch (err) {
    throw new Error(`cannot read hints file ${path}: ${(err as Error).message}`);
  }
  const texts: string[] = [];
  raw.split("\n").forEach((line, i) => {
    if (!line.trim()) return;
    let entry: { node?: unknown; hints?: unknown };
    try {
      entry = JSON.parse(line);
    } catch (err) {
      throw new Error(`${path}:${i + 1} is not valid JSON: ${(err as Error).message}`);
    }
    if (!Array.isArray(entry.hints)) {
      throw new Error(`${path}:${i + 1} has no hints array`);
    }
    for (const hint of entry.hints) {
      texts.push(String(hint));
    }
  });
  return texts;
}

/** Every surface text an agent can ever see from this scenario (all sub-step
 * variants of all alternative sequences), plus optional hint texts; unique
 * under normalization and sorted for deterministic output. */
export function collectTexts(scenario: ScenarioFile, hintTexts: string[] = []): string[] {
  const unique = new Set<string>();
  for (const cluster of scenario.clusters) {
    for (const sequence of cluster.sequences) {
      for (const substep of sequence) {
        for (const variant of substep) {
          const key = normalizeText(variant);
          if (key) unique.add(key);
        }
      }
    }
  }
  for (const hint of hintTexts) {
    const key = normalizeText(hint);
    if (key) unique.add(key);
  }
  return [...unique].sort();
}
