/**
 * Export jobs: run an encoder over every corpus utterance and emit one EMB1
 * file per modality. Exports are deterministic given (encoder, inputs,
 * layer policy); the encoder identifier and policy are recorded verbatim in
 * the EMB1 source field.
 */

import * as fs from "fs";
import * as path from "path";

import { readCorpus } from "./corpus";
import { EmbeddingRecord, serializeEmbeddings } from "./emb1";
import { resolveAudioEncoder, resolveTextEncoder } from "./encoders";
import { readWav } from "./wav";

export interface ExportJob {
  corpusPath: string;
  audioDir?: string;
  textModel: string;
  audioModel: string;
  layer: number;
  outPath: string;
  /** Advisory only; the bundled encoders are CPU-deterministic. */
  deviceHint?: string;
}

export function exportTextEmbeddings(job: ExportJob): { records: number; dim: number } {
  const encoder = resolveTextEncoder(job.textModel, job.layer);
  const corpus = readCorpus(job.corpusPath);
  const records: EmbeddingRecord[] = corpus.map((utterance) => {
    const { steps, matrix } = encoder.encode(utterance.text);
    return { id: utterance.id, steps, matrix };
  });
  const buffer = serializeEmbeddings({
    modality: "text",
    dim: encoder.hiddenSize,
    source: encoder.describe(),
    records,
  });
  fs.writeFileSync(job.outPath, buffer);
  return { records: records.length, dim: encoder.hiddenSize };
}

export function exportAudioEmbeddings(job: ExportJob): { records: number; dim: number } {
  if (!job.audioDir) {
    throw new Error("audio export requires an audio directory");
  }
  const encoder = resolveAudioEncoder(job.audioModel, job.layer);
  const corpus = readCorpus(job.corpusPath);
  const records: EmbeddingRecord[] = [];
  for (const utterance of corpus) {
    if (!utterance.audioRef) {
      throw new Error(`utterance ${utterance.id} has no audio_ref`);
    }
    const wavPath = path.join(job.audioDir, `${utterance.audioRef}.wav`);
    if (!fs.existsSync(wavPath)) {
      throw new Error(`missing audio file ${wavPath}`);
    }
    const { steps, matrix } = encoder.encode(readWav(wavPath));
    records.push({ id: utterance.id, steps, matrix });
  }
  const buffer = serializeEmbeddings({
    modality: "audio",
    dim: encoder.hiddenSize,
    source: encoder.describe(),
    records,
  });
  fs.writeFileSync(job.outPath, buffer);
  return { records: records.length, dim: encoder.hiddenSize };
}
