#!/usr/bin/env node
/** Export frame-level audio embeddings for a corpus as an EMB1 file. */

import { parseFlags, requireFlag, runExport } from "./cli";
import { exportAudioEmbeddings } from "./export";

const USAGE =
  "usage: export-audio --corpus corpus.jsonl --audio-dir wav --out audio.emb1 " +
  "[--audio-model hash-proj-192] [--layer -1]";

const flags = parseFlags(
  process.argv.slice(2),
  ["corpus", "audio-dir", "out", "audio-model", "layer"],
  USAGE,
);

runExport(
  () =>
    exportAudioEmbeddings({
      corpusPath: requireFlag(flags, "corpus", USAGE),
      audioDir: requireFlag(flags, "audio-dir", USAGE),
      outPath: requireFlag(flags, "out", USAGE),
      textModel: "hash-proj-256",
      audioModel: flags["audio-model"] ?? "hash-proj-192",
      layer: flags["layer"] !== undefined ? parseInt(flags["layer"], 10) : -1,
    }),
  "export-audio",
);
