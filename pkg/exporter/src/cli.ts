#!/usr/bin/env node
/**
 * lvp-export: encode image datasets and text prompts into the engine's
 * binary formats.
 *
 *   lvp-export images --manifest data/manifest.json --split train \
 *       --encoder mock --dim 768 --batch-size 64 --out train.lvpe
 *   lvp-export texts --manifest data/manifest.json \
 *       --template "a photo of a [cls]" --out text.lvpp
 *
 * Exit codes: 0 ok, 1 usage, 2 data/model error.
 */

import { parseArgs } from "node:util";

import { loadEncoder } from "./encoder.js";
import { exportImages, exportTexts } from "./export.js";
import { loadManifest } from "./manifest.js";

const USAGE = `usage:
  lvp-export images --manifest FILE --out FILE.lvpe
      [--split NAME] [--encoder mock|clip] [--model ID] [--dim N]
      [--batch-size N] [--device cpu|gpu] [--seed N] [--normalize]
  lvp-export texts --manifest FILE --out FILE.lvpp --template "a photo of a [cls]"
      [--encoder mock|clip] [--model ID] [--dim N] [--device cpu|gpu]
      [--seed N] [--normalize]`;

interface ParsedArgs {
  command: string;
  values: {
    manifest?: string;
    out?: string;
    split?: string;
    template?: string;
    encoder?: string;
    model?: string;
    dim?: string;
    "batch-size"?: string;
    device?: string;
    seed?: string;
    normalize?: boolean;
    help?: boolean;
  };
}

function parse(argv: string[]): ParsedArgs {
  const [command, ...rest] = argv;
  const { values } = parseArgs({
    args: rest,
    options: {
      manifest: { type: "string" },
      out: { type: "string" },
      split: { type: "string" },
      template: { type: "string" },
      encoder: { type: "string", default: "mock" },
      model: { type: "string" },
      dim: { type: "string", default: "768" },
      "batch-size": { type: "string", default: "64" },
      device: { type: "string", default: "cpu" },
      seed: { type: "string", default: "0" },
      normalize: { type: "boolean", default: false },
      help: { type: "boolean", default: false },
    },
  });
  return { command: command ?? "", values };
}

export async function main(argv: string[]): Promise<number> {
  let parsed: ParsedArgs;
  try {
    parsed = parse(argv);
  } catch (err) {
    console.error(`usage error: ${(err as Error).message}\n${USAGE}`);
    return 1;
  }
  const { command, values } = parsed;
  if (values.help || command === "help" || command === "") {
    console.log(USAGE);
    return values.help || command === "help" ? 0 : 1;
  }
  if (command !== "images" && command !== "texts") {
    console.error(`unknown command "${command}"\n${USAGE}`);
    return 1;
  }
  if (!values.manifest || !values.out) {
    console.error(`--manifest and --out are required\n${USAGE}`);
    return 1;
  }
  if (command === "texts" && !values.template) {
    console.error(`texts needs --template with one [cls] placeholder\n${USAGE}`);
    return 1;
  }
  const encoderKind = values.encoder === "clip" ? "clip" : values.encoder === "mock" ? "mock" : null;
  if (encoderKind === null) {
    console.error(`--encoder must be mock or clip\n${USAGE}`);
    return 1;
  }
  const dim = Number(values.dim);
  const batchSize = Number(values["batch-size"]);
  const seed = Number(values.seed);
  if (!Number.isInteger(dim) || dim < 1 || !Number.isInteger(batchSize) || batchSize < 1) {
    console.error(`--dim and --batch-size must be positive integers\n${USAGE}`);
    return 1;
  }

  try {
    const manifest = loadManifest(values.manifest);
    const encoder = await loadEncoder({
      kind: encoderKind,
      dim,
      model: values.model,
      device: values.device,
      seed,
    });
    if (command === "images") {
      const result = await exportImages({
        manifest,
        encoder,
        outPath: values.out,
        split: values.split,
        batchSize,
        normalize: values.normalize,
      });
      console.log(
        `wrote ${values.out}: ${result.records} records, dim ${result.dim}, ` +
          `encoder ${encoder.id}${values.normalize ? ", normalized" : ""}`,
      );
    } else {
      const result = await exportTexts({
        manifest,
        encoder,
        template: values.template as string,
        outPath: values.out,
        normalize: values.normalize,
      });
      console.log(
        `wrote ${values.out}: ${result.records} text vectors, dim ${result.dim}, ` +
          `encoder ${encoder.id}`,
      );
    }
    return 0;
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 2;
  }
}

const invokedDirectly =
  process.argv[1] !== undefined && import.meta.url === new URL(`file://${process.argv[1]}`).href;
if (invokedDirectly) {
  main(process.argv.slice(2)).then((code) => {
    process.exitCode = code;
  });
}
