/**
 * export-vocab: intersect the vision-language tokenizer vocabulary with the
 * target LM vocabulary, embed every shared token as the mean of its prompt
 * augmentations ("<prompt> <token>", one space; bare token when the prompt
 * list is empty), and write a SEMB store with a retrieval_space table (the
 * averaged text embeddings) plus an lm_input_space table.
 */

import { readFileSync, writeFileSync } from "node:fs";
import { Encoder, HashEncoder, XenovaClipEncoder, makeEncoder } from "./encoders.js";
import { Manifest, loadPrompts, resolveFrom } from "./manifest.js";
import { SembStore, SembTable, encodeStore } from "./semb.js";
import { intersectVocabularies } from "./vocab.js";

function readVocabFile(path: string): string[] {
  const data = JSON.parse(readFileSync(path, "utf-8"));
  if (!Array.isArray(data) || data.some((t) => typeof t !== "string")) {
    throw new Error(`${path}: expected a JSON array of token strings`);
  }
  return data;
}

export async function embedTokenWithPrompts(
  encoder: Encoder,
  token: string,
  prompts: string[],
): Promise<Float32Array> {
  if (prompts.length === 0) {
    return encoder.encodeText(token);
  }
  const acc = new Float64Array(encoder.dim);
  for (const prompt of prompts) {
    const vec = await encoder.encodeText(`${prompt} ${token}`);
    for (let i = 0; i < acc.length; i++) acc[i] += vec[i];
  }
  const out = new Float32Array(encoder.dim);
  for (let i = 0; i < out.length; i++) out[i] = acc[i] / prompts.length;
  return out;
}

export interface ExportVocabResult {
  tokens: string[];
  outputPath: string;
  promptCount: number;
}

export async function exportVocab(
  manifest: Manifest,
  baseDir: string,
): Promise<ExportVocabResult> {
  const prompts = loadPrompts(manifest.prompt_file, baseDir);

  let encoder: Encoder;
  let vlVocab: string[];
  if (manifest.backend === "xenova") {
    const clip = await XenovaClipEncoder.load(
      manifest.vision_language_model ?? "Xenova/clip-vit-base-patch16",
    );
    encoder = clip;
    vlVocab = clip.vocabulary();
  } else {
    encoder = await makeEncoder("hash", { dim: manifest.retrieval_dim });
    if (!manifest.vl_vocab_file) {
      throw new Error("hash backend needs vl_vocab_file in the manifest");
    }
    vlVocab = readVocabFile(resolveFrom(baseDir, manifest.vl_vocab_file));
  }

  if (!manifest.lm_vocab_file) {
    throw new Error("manifest needs lm_vocab_file (JSON array of LM tokens)");
  }
  const lmVocab = readVocabFile(resolveFrom(baseDir, manifest.lm_vocab_file));

  const tokens = intersectVocabularies(vlVocab, lmVocab, {
    lowercase: manifest.lowercase,
    wordsOnly: manifest.words_only,
  });
  if (tokens.length === 0) {
    throw new Error("vocabulary intersection is empty; nothing to export");
  }

  const retrieval = new Float32Array(tokens.length * encoder.dim);
  for (let i = 0; i < tokens.length; i++) {
    const vec = await embedTokenWithPrompts(encoder, tokens[i], prompts);
    retrieval.set(vec, i * encoder.dim);
  }

  let lmDim: number;
  let lmValues: Float32Array;
  if (manifest.lm_embedding_file) {
    const table = JSON.parse(
      readFileSync(resolveFrom(baseDir, manifest.lm_embedding_file), "utf-8"),
    ) as Record<string, number[]>;
    const missing = tokens.filter((t) => !(t in table));
    if (missing.length > 0) {
      throw new Error(
        `lm_embedding_file lacks ${missing.length} shared tokens, e.g. ${missing[0]}`,
      );
    }
    lmDim = table[tokens[0]].length;
    lmValues = new Float32Array(tokens.length * lmDim);
    tokens.forEach((t, i) => lmValues.set(table[t], i * lmDim));
  } else {
    // deterministic stand-in rows for the LM input space
    const lmEncoder = new HashEncoder(manifest.lm_dim, "lm-input-space");
    lmDim = lmEncoder.dim;
    lmValues = new Float32Array(tokens.length * lmDim);
    for (let i = 0; i < tokens.length; i++) {
      lmValues.set(await lmEncoder.encodeText(tokens[i]), i * lmDim);
    }
  }

  const tables: SembTable[] = [
    { spaceTag: "retrieval_space", dim: encoder.dim, values: retrieval },
    { spaceTag: "lm_input_space", dim: lmDim, values: lmValues },
  ];
  const store: SembStore = {
    tokens,
    tables,
    metadata: {
      provenance: `semb-exporter:${encoder.name}`,
      seed: null,
      extra: {
        prompts,
        backend: manifest.backend,
        lowercase: manifest.lowercase,
      },
    },
  };
  const outputPath = resolveFrom(baseDir, manifest.output);
  writeFileSync(outputPath, encodeStore(store));
  return { tokens, outputPath, promptCount: prompts.length };
}
