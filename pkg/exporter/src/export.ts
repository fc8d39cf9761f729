/**
 * Export jobs: encode a manifest's images into an LVPE embedding file, or a
 * class-name list through a prompt template into an LVPP pool of text
 * vectors. Outputs are deterministic given the encoder and manifest order.
 */

import { resolve } from "node:path";

import { Encoder } from "./encoder.js";
import {
  EmbeddingRecord,
  Modality,
  PoolClass,
  l2Normalize,
  writeEmbeddingFile,
  writePoolFile,
} from "./format.js";
import { Manifest } from "./manifest.js";

export const CLASS_PLACEHOLDER = "[cls]";

export function validateTemplate(template: string): void {
  const first = template.indexOf(CLASS_PLACEHOLDER);
  if (first < 0) {
    throw new Error(`template must contain the class placeholder ${CLASS_PLACEHOLDER}`);
  }
  if (template.indexOf(CLASS_PLACEHOLDER, first + 1) >= 0) {
    throw new Error(`template must contain exactly one ${CLASS_PLACEHOLDER} placeholder`);
  }
}

export function applyTemplate(template: string, className: string): string {
  return template.replace(CLASS_PLACEHOLDER, className);
}

export interface ImageExportJob {
  manifest: Manifest;
  encoder: Encoder;
  outPath: string;
  split?: string;
  batchSize?: number;
  normalize?: boolean;
}

export interface ImageExportResult {
  records: number;
  dim: number;
}

export async function exportImages(job: ImageExportJob): Promise<ImageExportResult> {
  const selected = job.manifest.images.filter(
    (img) => job.split === undefined || img.split === job.split,
  );
  if (selected.length === 0) {
    throw new Error(
      job.split === undefined
        ? "manifest lists no images"
        : `manifest lists no images for split "${job.split}"`,
    );
  }
  const batchSize = Math.max(1, job.batchSize ?? 64);
  const records: EmbeddingRecord[] = [];
  for (let start = 0; start < selected.length; start += batchSize) {
    const batch = selected.slice(start, start + batchSize);
    const vectors = await job.encoder.encodeImages(
      batch.map((img) => resolve(job.manifest.baseDir, img.path)),
    );
    batch.forEach((img, i) => {
      const vector = vectors[i];
      if (job.normalize) {
        l2Normalize(vector);
      }
      records.push({
        localId: img.class,
        domainId: img.domain ?? null,
        vector,
      });
    });
  }
  writeEmbeddingFile(
    {
      namespace: job.manifest.namespace,
      dim: job.encoder.dim,
      normalized: job.normalize ?? false,
      records,
    },
    job.outPath,
  );
  return { records: records.length, dim: job.encoder.dim };
}

export interface TextExportJob {
  manifest: Manifest;
  encoder: Encoder;
  template: string;
  outPath: string;
  normalize?: boolean;
}

export async function exportTexts(job: TextExportJob): Promise<ImageExportResult> {
  validateTemplate(job.template);
  const classes = [...job.manifest.classes].sort((a, b) => a.local_id - b.local_id);
  if (classes.length === 0) {
    throw new Error("manifest declares no classes; nothing to export");
  }
  const seen = new Map<string, number>();
  for (const cls of classes) {
    const clash = seen.get(cls.name);
    if (clash !== undefined) {
      throw new Error(
        `duplicate class name "${cls.name}" (ids ${clash} and ${cls.local_id}); ` +
          "text vectors cannot disambiguate identical names - use the image-mean variant instead",
      );
    }
    seen.set(cls.name, cls.local_id);
  }
  const prompts = classes.map((cls) => applyTemplate(job.template, cls.name));
  const vectors = await job.encoder.encodeTexts(prompts);
  const poolClasses: PoolClass[] = classes.map((cls, i) => {
    const vector = vectors[i];
    if (job.normalize) {
      l2Normalize(vector);
    }
    return {
      namespace: job.manifest.namespace,
      localId: cls.local_id,
      displayName: cls.name,
      entries: [
        {
          modality: Modality.Text,
          domainId: null,
          sampleCount: 0,
          vector,
        },
      ],
    };
  });
  writePoolFile(
    {
      dim: job.encoder.dim,
      provenance: [
        `text-export namespace=${job.manifest.namespace} classes=${classes.length} ` +
          `template=${JSON.stringify(job.template)} encoder=${job.encoder.id}` +
          (job.normalize ? " normalized" : ""),
      ],
      classes: poolClasses,
    },
    job.outPath,
  );
  return { records: classes.length, dim: job.encoder.dim };
}
