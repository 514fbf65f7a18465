#!/usr/bin/env node
/** Export token-level text embeddings for a corpus as an EMB1 file. */

import { parseFlags, requireFlag, runExport } from "./cli";
import { exportTextEmbeddings } from "./export";

const USAGE =
  "usage: export-text --corpus corpus.jsonl --out text.emb1 " +
  "[--text-model hash-proj-256] [--layer -1]";

const flags = parseFlags(
  process.argv.slice(2),
  ["corpus", "out", "text-model", "layer"],
  USAGE,
);

runExport(
  () =>
    exportTextEmbeddings({
      corpusPath: requireFlag(flags, "corpus", USAGE),
      outPath: requireFlag(flags, "out", USAGE),
      textModel: flags["text-model"] ?? "hash-proj-256",
      audioModel: "hash-proj-256",
      layer: flags["layer"] !== undefined ? parseInt(flags["layer"], 10) : -1,
    }),
  "export-text",
);
