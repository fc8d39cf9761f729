import { spawnSync } from "node:child_process";
import { mkdirSync, mkdtempSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterEach, beforeEach, describe, expect, it } from "vitest";

import { main } from "../src/cli.js";

let dir: string;
beforeEach(() => {
  dir = mkdtempSync(join(tmpdir(), "lvp-cli-"));
});
afterEach(() => {
  rmSync(dir, { recursive: true, force: true });
});

function fixtureManifest(): string {
  const imagesDir = join(dir, "img");
  mkdirSync(imagesDir, { recursive: true });
  const images = [];
  for (let cls = 0; cls < 3; cls++) {
    for (let i = 0; i < 3; i++) {
      const name = `img/c${cls}_${i}.bin`;
      writeFileSync(join(dir, name), Buffer.from(`payload ${cls} ${i}`));
      images.push({ path: name, class: cls, split: "train" });
    }
  }
  const manifestPath = join(dir, "manifest.json");
  writeFileSync(
    manifestPath,
    JSON.stringify({
      namespace: "smoke",
      classes: [
        { local_id: 0, name: "ant" },
        { local_id: 1, name: "bee" },
        { local_id: 2, name: "cat" },
      ],
      images,
    }),
  );
  return manifestPath;
}

describe("cli", () => {
  it("exports a 9-image smoke set with 9 records", async () => {
    const manifest = fixtureManifest();
    const out = join(dir, "train.lvpe");
    const code = await main([
      "images", "--manifest", manifest, "--out", out,
      "--split", "train", "--dim", "32", "--seed", "7",
    ]);
    expect(code).toBe(0);
    const { readEmbeddingFile } = await import("../src/format.js");
    expect(readEmbeddingFile(out).records.length).toBe(9);
  });

  it("exports text pools for both reference templates", async () => {
    const manifest = fixtureManifest();
    for (const template of ["[cls]", "a photo of a [cls]"]) {
      const out = join(dir, `text-${template.length}.lvpp`);
      const code = await main([
        "texts", "--manifest", manifest, "--out", out, "--template", template, "--dim", "16",
      ]);
      expect(code).toBe(0);
      const { readPoolFile } = await import("../src/format.js");
      expect(readPoolFile(out).classes.length).toBe(3);
    }
  });

  it("usage errors exit 1, data errors exit 2", async () => {
    expect(await main(["images"])).toBe(1);
    expect(await main(["bogus"])).toBe(1);
    expect(await main(["texts", "--manifest", "x.json", "--out", "y.lvpp"])).toBe(1);
    expect(
      await main(["images", "--manifest", join(dir, "absent.json"), "--out", join(dir, "o.lvpe")]),
    ).toBe(2);
  });

  it("help exits 0", async () => {
    expect(await main(["help"])).toBe(0);
  });
});

describe("cross-component round-trip", () => {
  const probe = spawnSync("python3", ["-c", "import labelpool"], { encoding: "utf-8" });
  const enginePresent = probe.status === 0;

  it.skipIf(!enginePresent)("engine readers accept exported files", async () => {
    const manifest = fixtureManifest();
    const embeddings = join(dir, "train.lvpe");
    const textPool = join(dir, "text.lvpp");
    expect(
      await main(["images", "--manifest", manifest, "--out", embeddings, "--dim", "24"]),
    ).toBe(0);
    expect(
      await main([
        "texts", "--manifest", manifest, "--out", textPool,
        "--template", "a photo of a [cls]", "--dim", "24",
      ]),
    ).toBe(0);
    const script = `
from labelpool.storage import read_embeddings, read_pool
from labelpool import complexity, memory_floats
ds = read_embeddings(${JSON.stringify(embeddings)})
assert ds.namespace == "smoke" and ds.dim == 24 and len(ds) == 9
pool = read_pool(${JSON.stringify(textPool)})
assert pool.num_classes == 3
assert complexity(pool) == 3
assert memory_floats(pool) == 3 * 24
names = set(pool.display_names.values())
assert names == {"ant", "bee", "cat"}, names
print("engine round-trip ok")
`;
    const result = spawnSync("python3", ["-c", script], { encoding: "utf-8" });
    expect(result.stderr).toBe("");
    expect(result.status).toBe(0);
    expect(result.stdout).toContain("engine round-trip ok");
  });

  it.skipIf(!enginePresent)("engine can build and evaluate from exported embeddings", async () => {
    const manifest = fixtureManifest();
    const embeddings = join(dir, "train.lvpe");
    expect(
      await main(["images", "--manifest", manifest, "--out", embeddings, "--dim", "24"]),
    ).toBe(0);
    const poolPath = join(dir, "pool.lvpp");
    const build = spawnSync(
      "python3",
      ["-m", "labelpool.cli", "build", "--train", embeddings, "--out-pool", poolPath],
      { encoding: "utf-8" },
    );
    expect(build.status).toBe(0);
    const evaluate = spawnSync(
      "python3",
      ["-m", "labelpool.cli", "eval", "--pool", poolPath, "--test", embeddings],
      { encoding: "utf-8" },
    );
    expect(evaluate.status).toBe(0);
    expect(evaluate.stdout).toContain("final average: 100.00");
  });
});
