/**
 * Text/image encoder backends.
 *
 * "xenova": real CLIP towers via @xenova/transformers (weights must be
 * downloadable or already cached; the package is an optional peer).
 *
 * "hash": a fully deterministic offline stand-in. Text and image bytes are
 * expanded through SHA-256 counters into unit Gaussian-ish vectors, so the
 * whole export pipeline (intersection, prompt averaging, SEMB bytes) is
 * exercised without any model download. Hash vectors carry no semantics;
 * they exist for format/pipeline verification only.
 */

import { createHash } from "node:crypto";
import { readFileSync } from "node:fs";

export interface Encoder {
  readonly name: string;
  readonly dim: number;
  encodeText(text: string): Promise<Float32Array>;
  encodeImage(path: string): Promise<Float32Array>;
}

function hashStream(seedMaterial: Buffer, dim: number): Float32Array {
  // Box-Muller over sha256-counter output; deterministic across platforms
  const out = new Float32Array(dim);
  let counter = 0;
  let pos = 0;
  let block = Buffer.alloc(0);
  const nextU32 = (): number => {
    if (pos + 4 > block.length) {
      const h = createHash("sha256");
      h.update(seedMaterial);
      const c = Buffer.alloc(4);
      c.writeUInt32LE(counter++, 0);
      h.update(c);
      block = h.digest();
      pos = 0;
    }
    const v = block.readUInt32LE(pos);
    pos += 4;
    return v;
  };
  for (let i = 0; i < dim; i += 2) {
    const u1 = (nextU32() + 1) / 4294967297; // in (0, 1)
    const u2 = (nextU32() + 1) / 4294967297;
    const r = Math.sqrt(-2 * Math.log(u1));
    out[i] = r * Math.cos(2 * Math.PI * u2);
    if (i + 1 < dim) out[i + 1] = r * Math.sin(2 * Math.PI * u2);
  }
  return out;
}

export class HashEncoder implements Encoder {
  readonly name: string;
  readonly dim: number;
  private readonly salt: string;

  constructor(dim: number, salt = "semb-export") {
    if (dim <= 0) throw new Error("dim must be positive");
    this.dim = dim;
    this.salt = salt;
    this.name = `hash-${dim}`;
  }

  async encodeText(text: string): Promise<Float32Array> {
    return hashStream(Buffer.from(`${this.salt}|text|${text}`, "utf-8"), this.dim);
  }

  async encodeImage(path: string): Promise<Float32Array> {
    const bytes = readFileSync(path);
    const digest = createHash("sha256").update(bytes).digest();
    return hashStream(
      Buffer.concat([Buffer.from(`${this.salt}|image|`, "utf-8"), digest]),
      this.dim,
    );
  }
}

interface XenovaModules {
  tokenizer: any;
  textModel: any;
  processor: any;
  visionModel: any;
  RawImage: any;
}

export class XenovaClipEncoder implements Encoder {
  readonly name: string;
  readonly dim: number;
  private readonly mods: XenovaModules;

  private constructor(name: string, dim: number, mods: XenovaModules) {
    this.name = name;
    this.dim = dim;
    this.mods = mods;
  }

  /** Loads the CLIP text+vision towers; throws a descriptive error when the
   * package is missing or the weights cannot be fetched/cached. */
  static async load(modelId: string): Promise<XenovaClipEncoder> {
    let tf: any;
    try {
      const moduleName = "@xenova/transformers"; // optional peer; resolved at runtime
      tf = await import(moduleName);
    } catch (e) {
      throw new Error(
        "@xenova/transformers is not installed; " +
          "npm install @xenova/transformers to use the real encoder backend " +
          `(${(e as Error).message})`,
      );
    }
    const { AutoTokenizer, CLIPTextModelWithProjection, AutoProcessor,
            CLIPVisionModelWithProjection, RawImage } = tf;
    const tokenizer = await AutoTokenizer.from_pretrained(modelId);
    const textModel = await CLIPTextModelWithProjection.from_pretrained(modelId, {
      quantized: true,
    });
    const processor = await AutoProcessor.from_pretrained(modelId);
    const visionModel = await CLIPVisionModelWithProjection.from_pretrained(modelId, {
      quantized: true,
    });
    const probe = await textModel(tokenizer("probe", { padding: true, truncation: true }));
    const dim = probe.text_embeds.dims.at(-1);
    return new XenovaClipEncoder(modelId, dim, {
      tokenizer, textModel, processor, visionModel, RawImage,
    });
  }

  /** Tokenizer vocabulary of the loaded model, index order preserved. */
  vocabulary(): string[] {
    const vocab: Map<string, number> | Record<string, number> =
      this.mods.tokenizer.model.tokens_to_ids ?? this.mods.tokenizer.getVocab();
    const entries = vocab instanceof Map ? [...vocab.entries()] : Object.entries(vocab);
    return entries.sort((x, y) => x[1] - y[1]).map(([token]) => token);
  }

  async encodeText(text: string): Promise<Float32Array> {
    const inputs = this.mods.tokenizer(text, { padding: true, truncation: true });
    const { text_embeds } = await this.mods.textModel(inputs);
    return Float32Array.from(text_embeds.data);
  }

  async encodeImage(path: string): Promise<Float32Array> {
    const image = await this.mods.RawImage.read(path);
    const inputs = await this.mods.processor(image);
    const { image_embeds } = await this.mods.visionModel(inputs);
    return Float32Array.from(image_embeds.data);
  }
}

export async function makeEncoder(
  backend: "hash" | "xenova",
  opts: { modelId?: string; dim?: number; salt?: string },
): Promise<Encoder> {
  if (backend === "hash") {
    return new HashEncoder(opts.dim ?? 64, opts.salt);
  }
  if (!opts.modelId) throw new Error("xenova backend needs a model id");
  return XenovaClipEncoder.load(opts.modelId);
}
