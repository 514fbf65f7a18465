/**
 * Encoder backends for the export scripts.
 *
 * The bundled backends are deterministic hash-projection encoders
 * ("hash-proj-<hidden>"): token vectors and audio frame projections are
 * seeded by a 64-bit FNV-1a hash mixed with the layer-selection policy, so
 * exports are reproducible bit for bit on any platform. Unknown model
 * identifiers fail with a checkpoint-unavailable error; a backend wrapping a
 * real pre-trained checkpoint plugs in behind the same interface.
 */

import { AudioClip, resampleLinear } from "./wav";

export class CheckpointUnavailableError extends Error {}

export interface TextEncoder16 {
  /** Verbatim identifier recorded into the EMB1 source field. */
  readonly modelId: string;
  /** Hidden size reported by the encoder; becomes the EMB1 header d. */
  readonly hiddenSize: number;
  readonly maxTokens: number;
  readonly layer: number;
  encode(text: string): { steps: number; matrix: Float32Array };
  describe(): string;
}

export interface AudioEncoder16 {
  readonly modelId: string;
  readonly hiddenSize: number;
  readonly layer: number;
  readonly sampleRate: number;
  encode(clip: AudioClip): { steps: number; matrix: Float32Array };
  describe(): string;
}

const HASH_MODEL = /^hash-proj-(\d+)$/;

export function resolveTextEncoder(modelId: string, layer: number): TextEncoder16 {
  const match = HASH_MODEL.exec(modelId);
  if (!match) {
    throw new CheckpointUnavailableError(
      `checkpoint ${modelId} unavailable: bundled backends are hash-proj-<hidden>; ` +
        "wire a transformers-based backend for pre-trained checkpoints",
    );
  }
  return new HashTextEncoder(modelId, parseInt(match[1], 10), layer);
}

export function resolveAudioEncoder(modelId: string, layer: number): AudioEncoder16 {
  const match = HASH_MODEL.exec(modelId);
  if (!match) {
    throw new CheckpointUnavailableError(
      `checkpoint ${modelId} unavailable: bundled backends are hash-proj-<hidden>; ` +
        "wire a transformers-based backend for pre-trained checkpoints",
    );
  }
  return new HashAudioEncoder(modelId, parseInt(match[1], 10), layer);
}

/** 64-bit FNV-1a over UTF-8 bytes. */
export function fnv1a64(text: string): bigint {
  let hash = 0xcbf29ce484222325n;
  const bytes = new TextEncoder().encode(text);
  for (const byte of bytes) {
    hash ^= BigInt(byte);
    hash = (hash * 0x100000001b3n) & 0xffffffffffffffffn;
  }
  return hash;
}

/** splitmix64 stream over a 64-bit state; uniform doubles in [-1, 1). */
class SeededStream {
  private state: bigint;

  constructor(seed: bigint) {
    this.state = seed & 0xffffffffffffffffn;
  }

  next(): number {
    this.state = (this.state + 0x9e3779b97f4a7c15n) & 0xffffffffffffffffn;
    let z = this.state;
    z = ((z ^ (z >> 30n)) * 0xbf58476d1ce4e5b9n) & 0xffffffffffffffffn;
    z = ((z ^ (z >> 27n)) * 0x94d049bb133111ebn) & 0xffffffffffffffffn;
    z = z ^ (z >> 31n);
    const top53 = Number(z >> 11n);
    return (top53 / 2 ** 53) * 2 - 1;
  }
}

function layerSeed(modelId: string, layer: number, key: string): bigint {
  const layerTag = BigInt.asUintN(64, BigInt(layer) * 0x9e3779b97f4a7c15n);
  return fnv1a64(`${modelId}#${key}`) ^ layerTag;
}

class HashTextEncoder implements TextEncoder16 {
  readonly maxTokens = 512;
  private cache = new Map<string, Float32Array>();

  constructor(
    readonly modelId: string,
    readonly hiddenSize: number,
    readonly layer: number,
  ) {
    if (hiddenSize < 2) {
      throw new Error(`hidden size must be >= 2, got ${hiddenSize}`);
    }
  }

  private tokenVector(token: string): Float32Array {
    const cached = this.cache.get(token);
    if (cached) return cached;
    const stream = new SeededStream(layerSeed(this.modelId, this.layer, token));
    const vector = new Float32Array(this.hiddenSize);
    let norm = 0;
    for (let i = 0; i < this.hiddenSize; i++) {
      vector[i] = stream.next();
      norm += vector[i] * vector[i];
    }
    norm = Math.sqrt(norm) || 1;
    for (let i = 0; i < this.hiddenSize; i++) {
      vector[i] = vector[i] / norm;
    }
    this.cache.set(token, vector);
    return vector;
  }

  encode(text: string): { steps: number; matrix: Float32Array } {
    const tokens = text.toLowerCase().split(/\s+/).filter(Boolean).slice(0, this.maxTokens);
    if (tokens.length === 0) {
      throw new Error("cannot encode empty text");
    }
    const matrix = new Float32Array(tokens.length * this.hiddenSize);
    tokens.forEach((token, t) => {
      matrix.set(this.tokenVector(token), t * this.hiddenSize);
    });
    return { steps: tokens.length, matrix };
  }

  describe(): string {
    return `model=${this.modelId};layer=${this.layer};hidden=${this.hiddenSize};max_tokens=${this.maxTokens}`;
  }
}

const FRAME_MS = 25;
const HOP_MS = 20;

class HashAudioEncoder implements AudioEncoder16 {
  readonly sampleRate = 16000;
  private projection: Float32Array | null = null;

  constructor(
    readonly modelId: string,
    readonly hiddenSize: number,
    readonly layer: number,
  ) {
    if (hiddenSize < 2) {
      throw new Error(`hidden size must be >= 2, got ${hiddenSize}`);
    }
  }

  /** Fixed pseudo-random projection from the 6 frame statistics. */
  private getProjection(): Float32Array {
    if (!this.projection) {
      const stream = new SeededStream(layerSeed(this.modelId, this.layer, "projection"));
      this.projection = new Float32Array(6 * this.hiddenSize);
      for (let i = 0; i < this.projection.length; i++) {
        this.projection[i] = stream.next() / Math.sqrt(6);
      }
    }
    return this.projection;
  }

  encode(clip: AudioClip): { steps: number; matrix: Float32Array } {
    const at16k = resampleLinear(clip, this.sampleRate);
    const frameLength = Math.round((FRAME_MS / 1000) * this.sampleRate);
    const hop = Math.round((HOP_MS / 1000) * this.sampleRate);
    const n = at16k.samples.length;
    if (n < frameLength) {
      throw new Error(`clip of ${n} samples is shorter than one ${FRAME_MS} ms frame`);
    }
    const steps = Math.floor((n - frameLength) / hop) + 1;
    const projection = this.getProjection();
    const matrix = new Float32Array(steps * this.hiddenSize);
    const stats = new Float64Array(6);
    for (let t = 0; t < steps; t++) {
      const start = t * hop;
      let energy = 0;
      let absSum = 0;
      let peak = 0;
      let crossings = 0;
      let r1 = 0;
      let r2 = 0;
      for (let k = 0; k < frameLength; k++) {
        const v = at16k.samples[start + k];
        energy += v * v;
        absSum += Math.abs(v);
        peak = Math.max(peak, Math.abs(v));
        if (k > 0 && v * at16k.samples[start + k - 1] < 0) crossings += 1;
        if (k >= 1) r1 += v * at16k.samples[start + k - 1];
        if (k >= 2) r2 += v * at16k.samples[start + k - 2];
      }
      const safeEnergy = energy || 1e-12;
      stats[0] = Math.log10(energy / frameLength + 1e-12);
      stats[1] = crossings / frameLength;
      stats[2] = absSum / frameLength;
      stats[3] = peak;
      stats[4] = r1 / safeEnergy;
      stats[5] = r2 / safeEnergy;
      for (let j = 0; j < this.hiddenSize; j++) {
        let acc = 0;
        for (let s = 0; s < 6; s++) {
          acc += stats[s] * projection[s * this.hiddenSize + j];
        }
        matrix[t * this.hiddenSize + j] = acc;
      }
    }
    return { steps, matrix };
  }

  describe(): string {
    return (
      `model=${this.modelId};layer=${this.layer};hidden=${this.hiddenSize};` +
      `frame_ms=${FRAME_MS};hop_ms=${HOP_MS};rate=${this.sampleRate}`
    );
  }
}
