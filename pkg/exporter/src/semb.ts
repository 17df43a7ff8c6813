/**
 * SEMB store writer/reader.
 *
 * Layout (little-endian): magic "SEMB", version u16 = 1, table count u8,
 * vocab size u32, token table (per token: u16 byte length + UTF-8 bytes),
 * then per table: space tag u8 (0 = retrieval_space, 1 = lm_input_space),
 * dim u32, payload vocabSize*dim float32 row-major; finally a u64 checksum
 * (sum of all table payload bytes mod 2^64). An optional UTF-8 JSON tail
 * after the checksum carries metadata ({provenance, seed, extra, ...}).
 */

export const SEMB_MAGIC = "SEMB";
export const SEMB_VERSION = 1;

export const SPACE_CODES: Record<string, number> = {
  retrieval_space: 0,
  lm_input_space: 1,
};

export interface SembTable {
  spaceTag: "retrieval_space" | "lm_input_space";
  dim: number;
  /** vocabSize * dim values, row-major */
  values: Float32Array;
}

export interface SembStore {
  tokens: string[];
  tables: SembTable[];
  metadata?: Record<string, unknown>;
}

const MASK64 = (1n << 64n) - 1n;

function payloadChecksum(payloads: Buffer[]): bigint {
  let total = 0n;
  for (const payload of payloads) {
    let sum = 0;
    for (let i = 0; i < payload.length; i++) {
      sum += payload[i];
      // flush into the bigint well before Number.MAX_SAFE_INTEGER
      if (sum > 2 ** 48) {
        total += BigInt(sum);
        sum = 0;
      }
    }
    total += BigInt(sum);
  }
  return total & MASK64;
}

export function encodeStore(store: SembStore): Buffer {
  if (store.tokens.length === 0) {
    throw new Error("refusing to write a store with zero tokens");
  }
  if (store.tables.length === 0) {
    throw new Error("store needs at least one table");
  }
  const chunks: Buffer[] = [];
  const head = Buffer.alloc(4 + 2 + 1 + 4);
  head.write(SEMB_MAGIC, 0, "ascii");
  head.writeUInt16LE(SEMB_VERSION, 4);
  head.writeUInt8(store.tables.length, 6);
  head.writeUInt32LE(store.tokens.length, 7);
  chunks.push(head);

  for (const token of store.tokens) {
    const raw = Buffer.from(token, "utf-8");
    if (raw.length > 0xffff) throw new Error(`token too long: ${token.slice(0, 20)}…`);
    const len = Buffer.alloc(2);
    len.writeUInt16LE(raw.length, 0);
    chunks.push(len, raw);
  }

  const sorted = [...store.tables].sort(
    (a, b) => SPACE_CODES[a.spaceTag] - SPACE_CODES[b.spaceTag],
  );
  const payloads: Buffer[] = [];
  for (const table of sorted) {
    if (table.values.length !== store.tokens.length * table.dim) {
      throw new Error(
        `table ${table.spaceTag}: ${table.values.length} values != ` +
          `${store.tokens.length} x ${table.dim}`,
      );
    }
    for (const v of table.values) {
      if (!Number.isFinite(v)) throw new Error(`non-finite value in ${table.spaceTag}`);
    }
    const header = Buffer.alloc(5);
    header.writeUInt8(SPACE_CODES[table.spaceTag], 0);
    header.writeUInt32LE(table.dim, 1);
    chunks.push(header);
    // Float32Array is platform-endian; serialize explicitly little-endian
    const payload = Buffer.alloc(table.values.length * 4);
    for (let i = 0; i < table.values.length; i++) {
      payload.writeFloatLE(table.values[i], i * 4);
    }
    payloads.push(payload);
    chunks.push(payload);
  }

  const checksum = Buffer.alloc(8);
  checksum.writeBigUInt64LE(payloadChecksum(payloads), 0);
  chunks.push(checksum);

  if (store.metadata !== undefined) {
    chunks.push(Buffer.from(JSON.stringify(store.metadata), "utf-8"));
  }
  return Buffer.concat(chunks);
}

/** Parse a SEMB buffer back; used to self-verify what we write. */
export function decodeStore(data: Buffer): SembStore {
  let pos = 0;
  const take = (n: number, what: string): Buffer => {
    if (pos + n > data.length) throw new Error(`truncated while reading ${what}`);
    const out = data.subarray(pos, pos + n);
    pos += n;
    return out;
  };
  if (take(4, "magic").toString("ascii") !== SEMB_MAGIC) {
    throw new Error("bad magic: not a SEMB file");
  }
  const version = take(2, "version").readUInt16LE(0);
  if (version !== SEMB_VERSION) throw new Error(`unsupported SEMB version ${version}`);
  const tableCount = take(1, "table count").readUInt8(0);
  const vocabSize = take(4, "vocab size").readUInt32LE(0);

  const tokens: string[] = [];
  for (let i = 0; i < vocabSize; i++) {
    const len = take(2, `token ${i} length`).readUInt16LE(0);
    tokens.push(take(len, `token ${i}`).toString("utf-8"));
  }

  const names = Object.fromEntries(
    Object.entries(SPACE_CODES).map(([k, v]) => [v, k]),
  ) as Record<number, SembTable["spaceTag"]>;
  const tables: SembTable[] = [];
  const payloads: Buffer[] = [];
  for (let t = 0; t < tableCount; t++) {
    const code = take(1, `table ${t} tag`).readUInt8(0);
    const dim = take(4, `table ${t} dim`).readUInt32LE(0);
    const payload = take(vocabSize * dim * 4, `table ${t} payload`);
    payloads.push(Buffer.from(payload));
    const values = new Float32Array(vocabSize * dim);
    for (let i = 0; i < values.length; i++) values[i] = payload.readFloatLE(i * 4);
    tables.push({ spaceTag: names[code], dim, values });
  }

  const stored = take(8, "checksum").readBigUInt64LE(0);
  const actual = payloadChecksum(payloads);
  if (stored !== actual) {
    throw new Error(`checksum mismatch: stored ${stored}, computed ${actual}`);
  }
  let metadata: Record<string, unknown> | undefined;
  if (pos < data.length) {
    metadata = JSON.parse(data.subarray(pos).toString("utf-8"));
  }
  return { tokens, tables, metadata };
}
