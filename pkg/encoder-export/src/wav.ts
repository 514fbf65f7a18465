/**
 * Linear PCM WAV decoding (16-bit int or 32-bit float, stereo downmixed)
 * plus a simple linear-interpolation resampler used to bring clips to the
 * encoder's expected 16 kHz rate.
 */

import * as fs from "fs";

export interface AudioClip {
  samples: Float64Array;
  sampleRate: number;
}

export function readWav(path: string): AudioClip {
  const data = fs.readFileSync(path);
  if (data.length < 12 || data.toString("ascii", 0, 4) !== "RIFF" ||
      data.toString("ascii", 8, 12) !== "WAVE") {
    throw new Error(`${path}: not a RIFF/WAVE file`);
  }
  let pos = 12;
  let format: { audioFormat: number; channels: number; rate: number; bits: number } | null = null;
  let payload: Buffer | null = null;
  while (pos + 8 <= data.length) {
    const chunkId = data.toString("ascii", pos, pos + 4);
    const size = data.readUInt32LE(pos + 4);
    const body = data.subarray(pos + 8, pos + 8 + size);
    if (chunkId === "fmt ") {
      format = {
        audioFormat: body.readUInt16LE(0),
        channels: body.readUInt16LE(2),
        rate: body.readUInt32LE(4),
        bits: body.readUInt16LE(14),
      };
    } else if (chunkId === "data") {
      payload = Buffer.from(body);
    }
    pos += 8 + size + (size & 1);
  }
  if (!format || !payload) {
    throw new Error(`${path}: missing fmt or data chunk`);
  }
  let samples: Float64Array;
  if (format.audioFormat === 1 && format.bits === 16) {
    const n = Math.floor(payload.length / 2);
    samples = new Float64Array(n);
    for (let i = 0; i < n; i++) {
      samples[i] = payload.readInt16LE(i * 2) / 32767;
    }
  } else if (format.audioFormat === 3 && format.bits === 32) {
    const n = Math.floor(payload.length / 4);
    samples = new Float64Array(n);
    for (let i = 0; i < n; i++) {
      samples[i] = payload.readFloatLE(i * 4);
    }
  } else {
    throw new Error(
      `${path}: unsupported WAV format (${format.audioFormat}, ${format.bits} bit)`,
    );
  }
  if (format.channels > 1) {
    const frames = Math.floor(samples.length / format.channels);
    const mono = new Float64Array(frames);
    for (let i = 0; i < frames; i++) {
      let sum = 0;
      for (let c = 0; c < format.channels; c++) {
        sum += samples[i * format.channels + c];
      }
      mono[i] = sum / format.channels;
    }
    samples = mono;
  }
  return { samples, sampleRate: format.rate };
}

/** Write a mono 16-bit PCM wav (test fixtures). */
export function writeWav(clip: AudioClip, path: string): void {
  const n = clip.samples.length;
  const buffer = Buffer.alloc(44 + n * 2);
  buffer.write("RIFF", 0, "ascii");
  buffer.writeUInt32LE(36 + n * 2, 4);
  buffer.write("WAVE", 8, "ascii");
  buffer.write("fmt ", 12, "ascii");
  buffer.writeUInt32LE(16, 16);
  buffer.writeUInt16LE(1, 20);
  buffer.writeUInt16LE(1, 22);
  buffer.writeUInt32LE(clip.sampleRate, 24);
  buffer.writeUInt32LE(clip.sampleRate * 2, 28);
  buffer.writeUInt16LE(2, 32);
  buffer.writeUInt16LE(16, 34);
  buffer.write("data", 36, "ascii");
  buffer.writeUInt32LE(n * 2, 40);
  for (let i = 0; i < n; i++) {
    const v = Math.max(-1, Math.min(1, clip.samples[i]));
    buffer.writeInt16LE(Math.round(v * 32767), 44 + i * 2);
  }
  fs.writeFileSync(path, buffer);
}

export function resampleLinear(clip: AudioClip, targetRate: number): AudioClip {
  if (targetRate === clip.sampleRate) return clip;
  const ratio = targetRate / clip.sampleRate;
  const outLength = Math.round(clip.samples.length * ratio);
  const out = new Float64Array(outLength);
  for (let i = 0; i < outLength; i++) {
    const t = i / ratio;
    const lo = Math.floor(t);
    const hi = Math.min(lo + 1, clip.samples.length - 1);
    const frac = t - lo;
    out[i] = clip.samples[lo] * (1 - frac) + clip.samples[hi] * frac;
  }
  return { samples: out, sampleRate: targetRate };
}
