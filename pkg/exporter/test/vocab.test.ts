import { describe, expect, it } from "vitest";
import { intersectVocabularies, normalizeToken } from "../src/vocab.js";

describe("token normalization", () => {
  it("strips one leading space marker", () => {
    expect(normalizeToken("Ġdog")).toBe("dog");
    expect(normalizeToken("▁dog")).toBe("dog");
    expect(normalizeToken(" dog")).toBe("dog");
    expect(normalizeToken("dog")).toBe("dog");
  });

  it("strips only one marker", () => {
    expect(normalizeToken("ĠĠdog")).toBe("Ġdog");
  });

  it("lowercases only when asked", () => {
    expect(normalizeToken("ĠDog")).toBe("Dog");
    expect(normalizeToken("ĠDog", true)).toBe("dog");
  });
});

describe("vocabulary intersection", () => {
  it("matches across different marker conventions", () => {
    const out = intersectVocabularies(
      ["Ġball", "Ġbox", "Ġzzz"],
      ["▁ball", "▁box", "▁yyy"],
    );
    expect(out).toEqual(["ball", "box"]);
  });

  it("keeps first-vocabulary order and dedupes", () => {
    const out = intersectVocabularies(["b", "a", "Ġa", "c"], ["a", "b"]);
    expect(out).toEqual(["b", "a"]);
  });

  it("words-only filter drops digits and punctuation", () => {
    const out = intersectVocabularies(["Ġ42", "Ġ!!", "Ġok"], ["42", "!!", "ok"], {
      wordsOnly: true,
    });
    expect(out).toEqual(["ok"]);
  });

  it("lowercase option merges case variants", () => {
    const out = intersectVocabularies(["Dog", "cat"], ["dog", "bird"], { lowercase: true });
    expect(out).toEqual(["dog"]);
  });
});
