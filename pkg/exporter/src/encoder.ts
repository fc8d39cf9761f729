/**
 * Encoder backends.
 *
 * An Encoder turns image files or text phrases into fixed-dimension float32
 * vectors. Two backends exist:
 *
 * - "mock": a deterministic hash-based generator for tests and pipeline
 *   smoke runs. Uses only integer math and float32 rounding, so identical
 *   inputs produce identical bytes on every platform and run.
 * - "clip": a real vision-language model via `@xenova/transformers`
 *   (an optional dependency; model weights must be available locally).
 */

import { readFileSync } from "node:fs";

export interface Encoder {
  readonly id: string;
  readonly dim: number;
  encodeImages(paths: string[]): Promise<Float32Array[]>;
  encodeTexts(texts: string[]): Promise<Float32Array[]>;
}

export interface EncoderSpec {
  kind: "mock" | "clip";
  dim: number;
  model?: string;
  device?: string;
  seed?: number;
}

function fnv1a(bytes: Uint8Array, seed: number): number {
  let hash = (0x811c9dc5 ^ seed) >>> 0;
  for (const byte of bytes) {
    hash ^= byte;
    hash = Math.imul(hash, 0x01000193) >>> 0;
  }
  return hash >>> 0;
}

function mulberry32(state: number): () => number {
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

/** Approximately-normal deterministic vector from a byte payload. */
export function hashVector(payload: Uint8Array, dim: number, seed: number): Float32Array {
  const next = mulberry32(fnv1a(payload, seed));
  const out = new Float32Array(dim);
  for (let i = 0; i < dim; i++) {
    // Irwin-Hall(4) centered: mean 0, close enough to Gaussian, and free of
    // transcendentals whose rounding could differ across JS engines
    out[i] = Math.fround(next() + next() + next() + next() - 2.0);
  }
  return out;
}

class MockEncoder implements Encoder {
  readonly id: string;
  constructor(readonly dim: number, private readonly seed: number) {
    this.id = `mock(dim=${dim},seed=${seed})`;
  }

  async encodeImages(paths: string[]): Promise<Float32Array[]> {
    return paths.map((path) => {
      let content: Uint8Array;
      try {
        content = readFileSync(path);
      } catch (err) {
        throw new Error(`cannot read image file ${path}: ${(err as Error).message}`);
      }
      return hashVector(content, this.dim, this.seed);
    });
  }

  async encodeTexts(texts: string[]): Promise<Float32Array[]> {
    const textEncoder = new TextEncoder();
    // offset the seed so a text never collides with an image of equal bytes
    return texts.map((t) => hashVector(textEncoder.encode(t), this.dim, this.seed ^ 0x5a5a5a5a));
  }
}

class ClipEncoder implements Encoder {
  readonly id: string;
  readonly dim: number;

  private constructor(
    dim: number,
    model: string,
    private readonly imagePipe: (paths: string[]) => Promise<Float32Array[]>,
    private readonly textPipe: (texts: string[]) => Promise<Float32Array[]>,
  ) {
    this.dim = dim;
    this.id = `clip(${model})`;
  }

  static async load(model: string, device: string): Promise<ClipEncoder> {
    let transformers: any;
    try {
      transformers = await import("@xenova/transformers");
    } catch {
      throw new Error(
        "the clip backend needs the optional dependency '@xenova/transformers' " +
          "(npm install @xenova/transformers) plus locally cached model weights; " +
          "use '--encoder mock' for weight-free pipeline runs",
      );
    }
    const { AutoProcessor, AutoTokenizer, CLIPTextModelWithProjection, CLIPVisionModelWithProjection, RawImage } =
      transformers;
    const options = device === "gpu" ? { device: "gpu" } : {};
    let tokenizer: any, textModel: any, processor: any, visionModel: any;
    try {
      tokenizer = await AutoTokenizer.from_pretrained(model);
      textModel = await CLIPTextModelWithProjection.from_pretrained(model, options);
      processor = await AutoProcessor.from_pretrained(model);
      visionModel = await CLIPVisionModelWithProjection.from_pretrained(model, options);
    } catch (err) {
      throw new Error(
        `cannot load model '${model}': ${(err as Error).message}; ` +
          "weights must be available locally (set TRANSFORMERS_CACHE to a pre-populated cache)",
      );
    }
    const encodeTexts = async (texts: string[]) => {
      const inputs = tokenizer(texts, { padding: true, truncation: true });
      const { text_embeds } = await textModel(inputs);
      return splitRows(text_embeds);
    };
    const encodeImages = async (paths: string[]) => {
      const images = await Promise.all(paths.map((p: string) => RawImage.read(p)));
      const inputs = await processor(images);
      const { image_embeds } = await visionModel(inputs);
      return splitRows(image_embeds);
    };
    const probe = await encodeTexts(["probe"]);
    return new ClipEncoder(probe[0].length, model, encodeImages, encodeTexts);
  }

  encodeImages(paths: string[]): Promise<Float32Array[]> {
    return this.imagePipe(paths);
  }

  encodeTexts(texts: string[]): Promise<Float32Array[]> {
    return this.textPipe(texts);
  }
}

function splitRows(tensor: { dims: number[]; data: Float32Array }): Float32Array[] {
  const [rows, dim] = tensor.dims;
  const out: Float32Array[] = [];
  for (let i = 0; i < rows; i++) {
    out.push(Float32Array.from(tensor.data.subarray(i * dim, (i + 1) * dim)));
  }
  return out;
}

export async function loadEncoder(spec: EncoderSpec): Promise<Encoder> {
  if (spec.kind === "mock") {
    return new MockEncoder(spec.dim, spec.seed ?? 0);
  }
  return ClipEncoder.load(spec.model ?? "Xenova/clip-vit-large-patch14", spec.device ?? "cpu");
}
