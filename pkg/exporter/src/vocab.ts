/**
 * Vocabulary intersection between a vision-language tokenizer and a target
 * language model, matching the consumer's comparison rule: strip one
 * leading word-initial marker ("Ġ", "▁", or a literal space), optionally
 * lowercase, compare exact strings. The result carries normalized forms in
 * the first vocabulary's order.
 */

const SPACE_MARKERS = ["Ġ", "▁", " "];

export function normalizeToken(token: string, lowercase = false): string {
  for (const marker of SPACE_MARKERS) {
    if (token.startsWith(marker)) {
      token = token.slice(marker.length);
      break;
    }
  }
  return lowercase ? token.toLowerCase() : token;
}

export interface IntersectOptions {
  lowercase?: boolean;
  /** drop tokens that are empty or pure punctuation/digits after normalization */
  wordsOnly?: boolean;
}

export function intersectVocabularies(
  a: string[],
  b: string[],
  opts: IntersectOptions = {},
): string[] {
  const { lowercase = false, wordsOnly = false } = opts;
  const bSet = new Set(b.map((t) => normalizeToken(t, lowercase)));
  const seen = new Set<string>();
  const out: string[] = [];
  for (const token of a) {
    const n = normalizeToken(token, lowercase);
    if (!bSet.has(n) || seen.has(n)) continue;
    if (n.length === 0) continue;
    if (wordsOnly && !/^[\p{L}]+$/u.test(n)) continue;
    seen.add(n);
    out.push(n);
  }
  return out;
}
