/** Export manifest schema and loading. */

import { readFileSync } from "node:fs";
import path from "node:path";
import { z } from "zod";

export const manifestSchema = z.object({
  /** encoder backend for the vision-language side */
  backend: z.enum(["hash", "xenova"]).default("hash"),
  /** model id for the xenova backend, e.g. Xenova/clip-vit-base-patch16 */
  vision_language_model: z.string().optional(),
  /** where the language-model vocabulary comes from: a JSON array file */
  lm_vocab_file: z.string().optional(),
  /** where the vision-language vocabulary comes from (hash backend only) */
  vl_vocab_file: z.string().optional(),
  /** optional JSON file {token: number[]} with real LM input embeddings */
  lm_embedding_file: z.string().optional(),
  /** prompt templates file, one per line; missing or empty = no prompts */
  prompt_file: z.string().optional(),
  lowercase: z.boolean().default(false),
  /** keep only alphabetic tokens after normalization */
  words_only: z.boolean().default(true),
  /** hash backend dims */
  retrieval_dim: z.number().int().positive().default(64),
  lm_dim: z.number().int().positive().default(64),
  output: z.string(),
});

export type Manifest = z.infer<typeof manifestSchema>;

export function loadManifest(file: string): { manifest: Manifest; baseDir: string } {
  const raw = JSON.parse(readFileSync(file, "utf-8"));
  const manifest = manifestSchema.parse(raw);
  return { manifest, baseDir: path.dirname(path.resolve(file)) };
}

export function resolveFrom(baseDir: string, p: string): string {
  return path.isAbsolute(p) ? p : path.join(baseDir, p);
}

export function loadPrompts(file: string | undefined, baseDir: string): string[] {
  if (!file) return [];
  const text = readFileSync(resolveFrom(baseDir, file), "utf-8");
  return text
    .split(/\r?\n/)
    .map((line) => line.trim())
    .filter((line) => line.length > 0);
}
