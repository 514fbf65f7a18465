/**
 * Cross-component conformance: the emitted EMB1 files must load through the
 * main pipeline's reader with full alignment coverage on the fixture corpus.
 * The pipeline is consumed strictly through its published interfaces (the
 * EMB1 file format and the python package entry points).
 */

import assert from "node:assert/strict";
import { spawnSync } from "node:child_process";
import * as path from "path";
import { test } from "node:test";

import { exportAudioEmbeddings, exportTextEmbeddings } from "../src/export";
import { makeFixtureWorkspace } from "./fixtures";

const ws = makeFixtureWorkspace();

const READER_SNIPPET = `
import json, sys
from cpsfuse.corpus import load_corpus
from cpsfuse.embedio import align, read_embeddings

corpus = load_corpus(sys.argv[1])
store = read_embeddings(sys.argv[2])
report = align(corpus, store)
print(json.dumps({
    "dim": store.dim,
    "modality": store.modality,
    "source": store.source,
    "records": len(store),
    "missing": report["missing"],
    "unknown": report["unknown"],
    "steps": {i: store[i].shape[0] for i in store.ids()},
}))
`;

function readThroughPipeline(embPath: string) {
  const run = spawnSync("python3", ["-c", READER_SNIPPET, ws.corpus, embPath], {
    encoding: "utf-8",
  });
  assert.equal(run.status, 0, `pipeline reader failed: ${run.stderr}`);
  return JSON.parse(run.stdout);
}

test("text EMB1 loads through the pipeline reader with full coverage", () => {
  const outPath = path.join(ws.root, "cross_text.emb1");
  const result = exportTextEmbeddings({
    corpusPath: ws.corpus,
    textModel: "hash-proj-64",
    audioModel: "hash-proj-24",
    layer: -1,
    outPath,
  });
  const report = readThroughPipeline(outPath);
  assert.equal(report.modality, "text");
  assert.equal(report.dim, result.dim);
  assert.equal(report.dim, 64); // header d equals the encoder's reported size
  assert.equal(report.records, 10);
  assert.deepEqual(report.missing, []);
  assert.deepEqual(report.unknown, []);
  assert.match(report.source, /model=hash-proj-64/);
});

test("audio EMB1 loads through the pipeline reader with full coverage", () => {
  const outPath = path.join(ws.root, "cross_audio.emb1");
  const result = exportAudioEmbeddings({
    corpusPath: ws.corpus,
    audioDir: ws.wavDir,
    textModel: "hash-proj-64",
    audioModel: "hash-proj-24",
    layer: -1,
    outPath,
  });
  const report = readThroughPipeline(outPath);
  assert.equal(report.modality, "audio");
  assert.equal(report.dim, result.dim);
  assert.deepEqual(report.missing, []);
  assert.deepEqual(report.unknown, []);
  for (const id of Object.keys(report.steps)) {
    assert.ok(report.steps[id] > 1);
  }
});
