/**
 * Dataset manifests: a JSON description of an image dataset on disk.
 *
 * ```json
 * {
 *   "namespace": "cifar100",
 *   "classes": [{ "local_id": 0, "name": "apple" }, ...],
 *   "images": [
 *     { "path": "train/0001.png", "class": 0, "domain": null, "split": "train" },
 *     ...
 *   ]
 * }
 * ```
 *
 * Image paths are resolved relative to the manifest file. `domain` and
 * `split` are optional per image.
 */

import { readFileSync } from "node:fs";
import { dirname, resolve } from "node:path";

export interface ManifestClass {
  local_id: number;
  name: string;
}

export interface ManifestImage {
  path: string;
  class: number;
  domain?: number | null;
  split?: string;
}

export interface Manifest {
  namespace: string;
  classes: ManifestClass[];
  images: ManifestImage[];
  baseDir: string;
}

export function loadManifest(path: string): Manifest {
  let raw: unknown;
  try {
    raw = JSON.parse(readFileSync(path, "utf-8"));
  } catch (err) {
    throw new Error(`cannot read manifest ${path}: ${(err as Error).message}`);
  }
  const data = raw as Record<string, unknown>;
  if (typeof data.namespace !== "string" || !data.namespace) {
    throw new Error(`${path}: manifest needs a non-empty string "namespace"`);
  }
  if (!Array.isArray(data.classes)) {
    throw new Error(`${path}: manifest needs a "classes" array`);
  }
  const classes: ManifestClass[] = [];
  const seenIds = new Set<number>();
  for (const entry of data.classes) {
    const cls = entry as ManifestClass;
    if (!Number.isInteger(cls.local_id) || cls.local_id < 0 || typeof cls.name !== "string") {
      throw new Error(`${path}: every class needs a non-negative "local_id" and a "name"`);
    }
    if (seenIds.has(cls.local_id)) {
      throw new Error(`${path}: duplicate class local_id ${cls.local_id}`);
    }
    seenIds.add(cls.local_id);
    classes.push({ local_id: cls.local_id, name: cls.name });
  }
  const images: ManifestImage[] = [];
  if (data.images !== undefined) {
    if (!Array.isArray(data.images)) {
      throw new Error(`${path}: "images" must be an array when present`);
    }
    for (const entry of data.images) {
      const img = entry as ManifestImage;
      if (typeof img.path !== "string" || !seenIds.has(img.class)) {
        throw new Error(
          `${path}: every image needs a "path" and a "class" that is declared in "classes"`,
        );
      }
      if (img.domain !== undefined && img.domain !== null) {
        if (!Number.isInteger(img.domain) || img.domain < 0) {
          throw new Error(`${path}: image domain must be a non-negative integer`);
        }
      }
      images.push(img);
    }
  }
  return { namespace: data.namespace, classes, images, baseDir: dirname(resolve(path)) };
}
