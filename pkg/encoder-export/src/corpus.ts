/**
 * Minimal reader for the corpus JSONL format consumed by the main pipeline:
 * one utterance object per line with at least {id, text} and an optional
 * audio_ref key into the wav directory.
 */

import * as fs from "fs";

export interface CorpusUtterance {
  id: string;
  text: string;
  audioRef?: string;
}

export function readCorpus(path: string): CorpusUtterance[] {
  const raw = fs.readFileSync(path, "utf-8");
  const utterances: CorpusUtterance[] = [];
  const seen = new Set<string>();
  const lines = raw.split("\n");
  for (let lineNo = 0; lineNo < lines.length; lineNo++) {
    const line = lines[lineNo].trim();
    if (!line) continue;
    let parsed: unknown;
    try {
      parsed = JSON.parse(line);
    } catch (err) {
      throw new Error(`${path}: line ${lineNo + 1}: malformed record: ${err}`);
    }
    const record = parsed as Record<string, unknown>;
    if (typeof record.id !== "string" || typeof record.text !== "string") {
      throw new Error(`${path}: line ${lineNo + 1}: record needs string id and text`);
    }
    if (seen.has(record.id)) {
      throw new Error(`${path}: line ${lineNo + 1}: duplicate utterance id ${record.id}`);
    }
    seen.add(record.id);
    utterances.push({
      id: record.id,
      text: record.text,
      audioRef: typeof record.audio_ref === "string" ? record.audio_ref : undefined,
    });
  }
  return utterances;
}
