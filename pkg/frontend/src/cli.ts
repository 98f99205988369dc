#!/usr/bin/env node
import { parseArgs } from "node:util";

import { exportEmbeddings } from "./exporter.js";

const USAGE = `usage: embed-export --scenario PATH [--hints PATH] --model NAME --out PATH

Encodes every unique action text of a scenario (and optional hint file) and
writes embedding JSONL: a {"dim","model"} header line, then {"text","vec"}
rows sorted by normalized text.

models:
  hash:<dim>          deterministic offline encoder (no downloads)
  xenova:<model-id>   pretrained sentence encoder via @xenova/transformers
`;

async function main(): Promise<number> {
  let args;
  try {
    args = parseArgs({
      options: {
        scenario: { type: "string" },
        hints: { type: "string" },
        model: { type: "string" },
        out: { type: "string" },
        help: { type: "boolean", short: "h" },
      },
      strict: true,
    });
  } catch (err) {
    process.stderr.write(`error: ${(err as Error).message}\n${USAGE}`);
    return 2;
  }
  if (args.values.help) {
    process.stdout.write(USAGE);
    return 0;
  }
  const { scenario, hints, model, out } = args.values;
  if (!scenario || !model || !out) {
    process.stderr.write(`error: --scenario, --model and --out are required\n${USAGE}`);
    return 2;
  }
  try {
    const result = await exportEmbeddings({
      scenarioPath: scenario,
      hintsPath: hints,
      model,
      outPath: out,
    });
    process.stdout.write(
      `wrote ${result.count} embeddings (dim ${result.dim}, model ${result.model}) to ${out}\n`);
    return 0;
  } catch (err) {
    process.stderr.write(`error: ${(err as Error).message}\n`);
    return 1;
  }
}

main().then((code) => {
  process.exitCode = code;
});
