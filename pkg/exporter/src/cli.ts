#!/usr/bin/env node
/** semb-export: export-vocab / export-images subcommands. */

import path from "node:path";
import yargs from "yargs";
import { hideBin } from "yargs/helpers";
import { makeEncoder } from "./encoders.js";
import { exportImages } from "./exportImages.js";
import { exportVocab } from "./exportVocab.js";
import { loadManifest } from "./manifest.js";

async function main(): Promise<number> {
  const argv = yargs(hideBin(process.argv))
    .scriptName("semb-export")
    .command(
      "export-vocab",
      "intersect vocabularies, prompt-ensemble token embeddings, write a SEMB store",
      (y) => y.option("manifest", { type: "string", demandOption: true }),
    )
    .command(
      "export-images",
      "embed an image folder into an observation-embedding sidecar",
      (y) =>
        y
          .option("manifest", { type: "string", demandOption: true })
          .option("folder", { type: "string", demandOption: true })
          .option("out", { type: "string", demandOption: true }),
    )
    .demandCommand(1)
    .strict()
    .help()
    .parseSync();

  const cmd = argv._[0];
  const { manifest, baseDir } = loadManifest(argv.manifest as string);
  if (cmd === "export-vocab") {
    const result = await exportVocab(manifest, baseDir);
    console.log(
      `wrote ${result.outputPath}: ${result.tokens.length} tokens, ` +
        `${result.promptCount} prompts`,
    );
    return 0;
  }
  if (cmd === "export-images") {
    const encoder = await makeEncoder(manifest.backend, {
      modelId: manifest.vision_language_model,
      dim: manifest.retrieval_dim,
    });
    // command-line paths are cwd-relative; manifest-internal paths stay
    // manifest-relative
    const folder = path.resolve(argv.folder as string);
    const out = path.resolve(argv.out as string);
    const images = await exportImages(encoder, folder, out);
    console.log(`wrote ${out}: ${images.length} images, dim ${encoder.dim}`);
    return 0;
  }
  console.error(`unknown command ${cmd}`);
  return 2;
}

main()
  .then((code) => process.exit(code))
  .catch((err) => {
    console.error(`error: ${err.message}`);
    process.exit(1);
  });
