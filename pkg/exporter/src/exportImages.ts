/**
 * export-images: embed a folder of images into an observation-embedding
 * sidecar file for offline re-tokenization demos.
 *
 * Sidecar format "SOBS" (little-endian): magic, version u16 = 1,
 * image count u32, dim u32, then per image: u16 name length + UTF-8 name,
 * dim float32 values; finally a u64 checksum (sum of all embedding payload
 * bytes mod 2^64) and an optional UTF-8 JSON metadata tail.
 */

import { readdirSync, writeFileSync } from "node:fs";
import path from "node:path";
import { Encoder } from "./encoders.js";

export const SOBS_MAGIC = "SOBS";
export const SOBS_VERSION = 1;

const MASK64 = (1n << 64n) - 1n;
const IMAGE_EXTENSIONS = new Set([".png", ".jpg", ".jpeg", ".bmp", ".gif", ".webp"]);

export interface ImageEmbedding {
  name: string;
  values: Float32Array;
}

export function encodeSidecar(
  dim: number,
  images: ImageEmbedding[],
  metadata?: Record<string, unknown>,
): Buffer {
  const chunks: Buffer[] = [];
  const head = Buffer.alloc(4 + 2 + 4 + 4);
  head.write(SOBS_MAGIC, 0, "ascii");
  head.writeUInt16LE(SOBS_VERSION, 4);
  head.writeUInt32LE(images.length, 6);
  head.writeUInt32LE(dim, 10);
  chunks.push(head);
  let checksum = 0n;
  for (const image of images) {
    if (image.values.length !== dim) {
      throw new Error(`${image.name}: dim ${image.values.length} != ${dim}`);
    }
    const name = Buffer.from(image.name, "utf-8");
    const len = Buffer.alloc(2);
    len.writeUInt16LE(name.length, 0);
    const payload = Buffer.alloc(dim * 4);
    for (let i = 0; i < dim; i++) payload.writeFloatLE(image.values[i], i * 4);
    let sum = 0;
    for (let i = 0; i < payload.length; i++) sum += payload[i];
    checksum = (checksum + BigInt(sum)) & MASK64;
    chunks.push(len, name, payload);
  }
  const tail = Buffer.alloc(8);
  tail.writeBigUInt64LE(checksum, 0);
  chunks.push(tail);
  if (metadata !== undefined) {
    chunks.push(Buffer.from(JSON.stringify(metadata), "utf-8"));
  }
  return Buffer.concat(chunks);
}

export function decodeSidecar(data: Buffer): {
  dim: number;
  images: ImageEmbedding[];
  metadata?: Record<string, unknown>;
} {
  let pos = 0;
  const take = (n: number, what: string): Buffer => {
    if (pos + n > data.length) throw new Error(`truncated while reading ${what}`);
    const out = data.subarray(pos, pos + n);
    pos += n;
    return out;
  };
  if (take(4, "magic").toString("ascii") !== SOBS_MAGIC) throw new Error("bad magic");
  const version = take(2, "version").readUInt16LE(0);
  if (version !== SOBS_VERSION) throw new Error(`unsupported SOBS version ${version}`);
  const count = take(4, "count").readUInt32LE(0);
  const dim = take(4, "dim").readUInt32LE(0);
  const images: ImageEmbedding[] = [];
  let checksum = 0n;
  for (let i = 0; i < count; i++) {
    const len = take(2, `image ${i} name length`).readUInt16LE(0);
    const name = take(len, `image ${i} name`).toString("utf-8");
    const payload = take(dim * 4, `image ${i} payload`);
    let sum = 0;
    for (let b = 0; b < payload.length; b++) sum += payload[b];
    checksum = (checksum + BigInt(sum)) & MASK64;
    const values = new Float32Array(dim);
    for (let v = 0; v < dim; v++) values[v] = payload.readFloatLE(v * 4);
    images.push({ name, values });
  }
  const stored = take(8, "checksum").readBigUInt64LE(0);
  if (stored !== checksum) throw new Error("sidecar checksum mismatch");
  let metadata: Record<string, unknown> | undefined;
  if (pos < data.length) metadata = JSON.parse(data.subarray(pos).toString("utf-8"));
  return { dim, images, metadata };
}

export async function exportImages(
  encoder: Encoder,
  folder: string,
  outputPath: string,
): Promise<ImageEmbedding[]> {
  const files = readdirSync(folder)
    .filter((f) => IMAGE_EXTENSIONS.has(path.extname(f).toLowerCase()))
    .sort();
  if (files.length === 0) throw new Error(`no images found under ${folder}`);
  const images: ImageEmbedding[] = [];
  for (const file of files) {
    images.push({
      name: file,
      values: await encoder.encodeImage(path.join(folder, file)),
    });
  }
  writeFileSync(
    outputPath,
    encodeSidecar(encoder.dim, images, { encoder: encoder.name, folder }),
  );
  return images;
}
