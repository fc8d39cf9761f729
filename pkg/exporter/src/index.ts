export {
  DOMAIN_NONE,
  FLAG_NORMALIZED,
  FORMAT_VERSION,
  Modality,
  encodeEmbeddingFile,
  encodePoolFile,
  l2Normalize,
  readEmbeddingFile,
  readPoolFile,
  writeEmbeddingFile,
  writePoolFile,
} from "./format.js";
export type {
  EmbeddingFile,
  EmbeddingRecord,
  PoolClass,
  PoolEntry,
  PoolFile,
} from "./format.js";
export { hashVector, loadEncoder } from "./encoder.js";
export type { Encoder, EncoderSpec } from "./encoder.js";
export { loadManifest } from "./manifest.js";
export type { Manifest, ManifestClass, ManifestImage } from "./manifest.js";
export {
  CLASS_PLACEHOLDER,
  applyTemplate,
  exportImages,
  exportTexts,
  validateTemplate,
} from "./export.js";
export type { ImageExportJob, ImageExportResult, TextExportJob } from "./export.js";
export { main } from "./cli.js";
