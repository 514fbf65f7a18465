/**
 * EMB1 embedding container writer/reader.
 *
 * Layout (little-endian):
 * - 4 bytes: magic "EMB1"
 * - uint32: version (1)
 * - uint8: modality (1 = text, 2 = audio)
 * - uint32: embedding dimension d
 * - uint32 + UTF-8 bytes: source description
 * - uint32: record count
 * - per record: uint32 + UTF-8 utterance id, uint32 step count T,
 *   then T*d float32 values, row-major.
 */

export type Modality = "text" | "audio";

export interface EmbeddingRecord {
  id: string;
  /** T x d matrix, row-major. */
  matrix: Float32Array;
  steps: number;
}

export interface EmbeddingFile {
  modality: Modality;
  dim: number;
  source: string;
  records: EmbeddingRecord[];
}

const MAGIC = "EMB1";
const VERSION = 1;
const MODALITY_CODE: Record<Modality, number> = { text: 1, audio: 2 };

export function serializeEmbeddings(file: EmbeddingFile): Buffer {
  const encoder = new TextEncoder();
  const sourceBytes = encoder.encode(file.source);
  let total = 4 + 4 + 1 + 4 + 4 + sourceBytes.length + 4;
  const idBytes: Uint8Array[] = [];
  for (const record of file.records) {
    if (record.steps < 1) {
      throw new Error(`record ${record.id}: step count must be >= 1`);
    }
    if (record.matrix.length !== record.steps * file.dim) {
      throw new Error(
        `record ${record.id}: matrix has ${record.matrix.length} values, ` +
          `expected ${record.steps} x ${file.dim}`,
      );
    }
    for (const value of record.matrix) {
      if (!Number.isFinite(value)) {
        throw new Error(`record ${record.id}: non-finite value`);
      }
    }
    const encoded = encoder.encode(record.id);
    idBytes.push(encoded);
    total += 4 + encoded.length + 4 + record.matrix.length * 4;
  }

  const buffer = Buffer.alloc(total);
  let offset = 0;
  buffer.write(MAGIC, offset, "ascii");
  offset += 4;
  buffer.writeUInt32LE(VERSION, offset);
  offset += 4;
  buffer.writeUInt8(MODALITY_CODE[file.modality], offset);
  offset += 1;
  buffer.writeUInt32LE(file.dim, offset);
  offset += 4;
  buffer.writeUInt32LE(sourceBytes.length, offset);
  offset += 4;
  buffer.set(sourceBytes, offset);
  offset += sourceBytes.length;
  buffer.writeUInt32LE(file.records.length, offset);
  offset += 4;
  for (let r = 0; r < file.records.length; r++) {
    const record = file.records[r];
    buffer.writeUInt32LE(idBytes[r].length, offset);
    offset += 4;
    buffer.set(idBytes[r], offset);
    offset += idBytes[r].length;
    buffer.writeUInt32LE(record.steps, offset);
    offset += 4;
    for (const value of record.matrix) {
      buffer.writeFloatLE(value, offset);
      offset += 4;
    }
  }
  return buffer;
}

/** Parse an EMB1 buffer; throws on any malformed structure. */
export function parseEmbeddings(buffer: Buffer): EmbeddingFile {
  let offset = 0;
  const need = (n: number, what: string) => {
    if (offset + n > buffer.length) {
      throw new Error(`truncated EMB1 file while reading ${what}`);
    }
  };
  need(4, "magic");
  if (buffer.toString("ascii", 0, 4) !== MAGIC) {
    throw new Error("bad magic; not an EMB1 file");
  }
  offset = 4;
  need(4, "version");
  const version = buffer.readUInt32LE(offset);
  offset += 4;
  if (version !== VERSION) {
    throw new Error(`unsupported EMB1 version ${version}`);
  }
  need(1, "modality");
  const modalityCode = buffer.readUInt8(offset);
  offset += 1;
  const modality = (Object.keys(MODALITY_CODE) as Modality[]).find(
    (m) => MODALITY_CODE[m] === modalityCode,
  );
  if (!modality) {
    throw new Error(`unknown modality code ${modalityCode}`);
  }
  need(4, "dimension");
  const dim = buffer.readUInt32LE(offset);
  offset += 4;
  need(4, "source length");
  const sourceLen = buffer.readUInt32LE(offset);
  offset += 4;
  need(sourceLen, "source");
  const source = buffer.toString("utf-8", offset, offset + sourceLen);
  offset += sourceLen;
  need(4, "record count");
  const count = buffer.readUInt32LE(offset);
  offset += 4;
  const records: EmbeddingRecord[] = [];
  for (let r = 0; r < count; r++) {
    need(4, "id length");
    const idLen = buffer.readUInt32LE(offset);
    offset += 4;
    need(idLen, "id");
    const id = buffer.toString("utf-8", offset, offset + idLen);
    offset += idLen;
    need(4, "step count");
    const steps = buffer.readUInt32LE(offset);
    offset += 4;
    need(steps * dim * 4, `record ${id}`);
    const matrix = new Float32Array(steps * dim);
    for (let k = 0; k < matrix.length; k++) {
      matrix[k] = buffer.readFloatLE(offset);
      offset += 4;
    }
    records.push({ id, steps, matrix });
  }
  if (offset !== buffer.length) {
    throw new Error(`${buffer.length - offset} trailing bytes after last record`);
  }
  return { modality, dim, source, records };
}
