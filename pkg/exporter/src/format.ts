/**
 * Binary writers/readers for the engine's file formats.
 *
 * Byte-compatible with the consuming engine: little-endian, magic-tagged,
 * versioned, written atomically (temp file + rename).
 *
 * LVPE (embedding dataset): header (version u32, dim u32, count u64,
 * flags u32, namespace) then per record (class id u32, domain id u32 with
 * 0xFFFFFFFF for "none", dim float32).
 *
 * LVPP (pool): header (version u32, dim u32, class count u32, provenance)
 * then per class (namespace, local id u32, display name, entry count u32)
 * and per entry (modality u8, domain id u32, sample count u64, dim float32).
 */

import { mkdtempSync, readFileSync, renameSync, rmSync, writeFileSync } from "node:fs";
import { dirname, join } from "node:path";

export const FORMAT_VERSION = 1;
export const DOMAIN_NONE = 0xffffffff;
export const FLAG_NORMALIZED = 1;

export enum Modality {
  ImageMean = 0,
  Text = 1,
  Mixed = 2,
}

export interface EmbeddingRecord {
  localId: number;
  domainId: number | null;
  vector: Float32Array;
}

export interface EmbeddingFile {
  namespace: string;
  dim: number;
  normalized: boolean;
  records: EmbeddingRecord[];
}

export interface PoolEntry {
  modality: Modality;
  domainId: number | null;
  sampleCount: number;
  vector: Float32Array;
}

export interface PoolClass {
  namespace: string;
  localId: number;
  displayName: string;
  entries: PoolEntry[];
}

export interface PoolFile {
  dim: number;
  provenance: string[];
  classes: PoolClass[];
}

class ByteWriter {
  private chunks: Buffer[] = [];

  u8(value: number): void {
    const buf = Buffer.alloc(1);
    buf.writeUInt8(value);
    this.chunks.push(buf);
  }

  u32(value: number): void {
    const buf = Buffer.alloc(4);
    buf.writeUInt32LE(value >>> 0);
    this.chunks.push(buf);
  }

  u64(value: number): void {
    if (!Number.isSafeInteger(value) || value < 0) {
      throw new Error(`u64 out of range: ${value}`);
    }
    const buf = Buffer.alloc(8);
    buf.writeBigUInt64LE(BigInt(value));
    this.chunks.push(buf);
  }

  raw(data: Buffer | Uint8Array): void {
    this.chunks.push(Buffer.from(data));
  }

  text(value: string): void {
    const raw = Buffer.from(value, "utf-8");
    this.u32(raw.length);
    this.raw(raw);
  }

  f32Array(values: Float32Array): void {
    const buf = Buffer.alloc(values.length * 4);
    for (let i = 0; i < values.length; i++) {
      buf.writeFloatLE(values[i], i * 4);
    }
    this.raw(buf);
  }

  bytes(): Buffer {
    return Buffer.concat(this.chunks);
  }
}

class ByteReader {
  private pos = 0;

  constructor(private readonly data: Buffer, private readonly path: string) {}

  private take(n: number): Buffer {
    if (this.pos + n > this.data.length) {
      throw new Error(
        `${this.path}: truncated, needed ${n} bytes at offset ${this.pos} of ${this.data.length}`,
      );
    }
    const out = this.data.subarray(this.pos, this.pos + n);
    this.pos += n;
    return out;
  }

  u8(): number {
    return this.take(1).readUInt8();
  }

  u32(): number {
    return this.take(4).readUInt32LE();
  }

  u64(): number {
    const value = this.take(8).readBigUInt64LE();
    if (value > BigInt(Number.MAX_SAFE_INTEGER)) {
      throw new Error(`${this.path}: u64 value too large`);
    }
    return Number(value);
  }

  text(): string {
    const n = this.u32();
    return this.take(n).toString("utf-8");
  }

  f32Array(count: number): Float32Array {
    const raw = this.take(count * 4);
    const out = new Float32Array(count);
    for (let i = 0; i < count; i++) {
      out[i] = raw.readFloatLE(i * 4);
    }
    return out;
  }

  expectMagic(magic: string): void {
    const found = this.take(4).toString("latin1");
    if (found !== magic) {
      throw new Error(`${this.path}: bad magic, expected ${magic}, found ${found}`);
    }
  }

  expectVersion(): void {
    const version = this.u32();
    if (version !== FORMAT_VERSION) {
      throw new Error(
        `${this.path}: unsupported format version ${version}, expected ${FORMAT_VERSION}`,
      );
    }
  }

  done(): void {
    if (this.pos !== this.data.length) {
      throw new Error(`${this.path}: ${this.data.length - this.pos} trailing bytes`);
    }
  }
}

function atomicWrite(path: string, payload: Buffer): void {
  const dir = dirname(path) || ".";
  const tmpDir = mkdtempSync(join(dir, ".lvp-tmp-"));
  const tmpFile = join(tmpDir, "out.part");
  try {
    writeFileSync(tmpFile, payload);
    renameSync(tmpFile, path);
  } finally {
    rmSync(tmpDir, { recursive: true, force: true });
  }
}

function checkVector(vector: Float32Array, dim: number, what: string): void {
  if (vector.length !== dim) {
    throw new Error(`${what}: vector length ${vector.length} != dim ${dim}`);
  }
  for (const value of vector) {
    if (!Number.isFinite(value)) {
      throw new Error(`${what}: vector contains NaN or Inf`);
    }
  }
}

export function encodeEmbeddingFile(file: EmbeddingFile): Buffer {
  const writer = new ByteWriter();
  writer.raw(Buffer.from("LVPE", "latin1"));
  writer.u32(FORMAT_VERSION);
  writer.u32(file.dim);
  writer.u64(file.records.length);
  writer.u32(file.normalized ? FLAG_NORMALIZED : 0);
  writer.text(file.namespace);
  for (const record of file.records) {
    checkVector(record.vector, file.dim, `record of class ${record.localId}`);
    writer.u32(record.localId);
    writer.u32(record.domainId === null ? DOMAIN_NONE : record.domainId);
    writer.f32Array(record.vector);
  }
  return writer.bytes();
}

export function writeEmbeddingFile(file: EmbeddingFile, path: string): void {
  atomicWrite(path, encodeEmbeddingFile(file));
}

export function readEmbeddingFile(path: string): EmbeddingFile {
  const reader = new ByteReader(readFileSync(path), path);
  reader.expectMagic("LVPE");
  reader.expectVersion();
  const dim = reader.u32();
  const count = reader.u64();
  const flags = reader.u32();
  const namespace = reader.text();
  const records: EmbeddingRecord[] = [];
  for (let i = 0; i < count; i++) {
    const localId = reader.u32();
    const domain = reader.u32();
    const vector = reader.f32Array(dim);
    checkVector(vector, dim, `record ${i}`);
    records.push({ localId, domainId: domain === DOMAIN_NONE ? null : domain, vector });
  }
  reader.done();
  return { namespace, dim, normalized: (flags & FLAG_NORMALIZED) !== 0, records };
}

export function encodePoolFile(pool: PoolFile): Buffer {
  const writer = new ByteWriter();
  writer.raw(Buffer.from("LVPP", "latin1"));
  writer.u32(FORMAT_VERSION);
  writer.u32(pool.dim);
  writer.u32(pool.classes.length);
  writer.text(pool.provenance.join("\n"));
  const sorted = [...pool.classes].sort((a, b) =>
    a.namespace === b.namespace ? a.localId - b.localId : a.namespace < b.namespace ? -1 : 1,
  );
  for (const cls of sorted) {
    if (cls.entries.length < 1) {
      throw new Error(`class ${cls.namespace}/${cls.localId} has no entries`);
    }
    writer.text(cls.namespace);
    writer.u32(cls.localId);
    writer.text(cls.displayName);
    writer.u32(cls.entries.length);
    for (const entry of cls.entries) {
      checkVector(entry.vector, pool.dim, `class ${cls.namespace}/${cls.localId}`);
      if (entry.modality !== Modality.Text && entry.sampleCount < 1) {
        throw new Error(
          `class ${cls.namespace}/${cls.localId}: non-text entries need sampleCount >= 1`,
        );
      }
      writer.u8(entry.modality);
      writer.u32(entry.domainId === null ? DOMAIN_NONE : entry.domainId);
      writer.u64(entry.sampleCount);
      writer.f32Array(entry.vector);
    }
  }
  return writer.bytes();
}

export function writePoolFile(pool: PoolFile, path: string): void {
  atomicWrite(path, encodePoolFile(pool));
}

export function readPoolFile(path: string): PoolFile {
  const reader = new ByteReader(readFileSync(path), path);
  reader.expectMagic("LVPP");
  reader.expectVersion();
  const dim = reader.u32();
  const classCount = reader.u32();
  const provenanceBlob = reader.text();
  const provenance = provenanceBlob.length ? provenanceBlob.split("\n") : [];
  const classes: PoolClass[] = [];
  for (let i = 0; i < classCount; i++) {
    const namespace = reader.text();
    const localId = reader.u32();
    const displayName = reader.text();
    const entryCount = reader.u32();
    if (entryCount < 1) {
      throw new Error(`${path}: class ${namespace}/${localId} declares zero entries`);
    }
    const entries: PoolEntry[] = [];
    for (let j = 0; j < entryCount; j++) {
      const modality = reader.u8() as Modality;
      const domain = reader.u32();
      const sampleCount = reader.u64();
      const vector = reader.f32Array(dim);
      checkVector(vector, dim, `${namespace}/${localId}`);
      entries.push({
        modality,
        domainId: domain === DOMAIN_NONE ? null : domain,
        sampleCount,
        vector,
      });
    }
    classes.push({ namespace, localId, displayName, entries });
  }
  reader.done();
  return { dim, provenance, classes };
}

/** L2-normalize in place (norm computed in float64, result rounded to f32). */
export function l2Normalize(vector: Float32Array): void {
  let sum = 0;
  for (const value of vector) {
    sum += value * value;
  }
  const norm = Math.sqrt(sum);
  if (norm === 0) {
    throw new Error("cannot L2-normalize a zero vector");
  }
  for (let i = 0; i < vector.length; i++) {
    vector[i] = Math.fround(vector[i] / norm);
  }
}
