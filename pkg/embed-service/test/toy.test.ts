import { describe, expect, it } from "vitest";
import { TOY_DIM, encodeImage, encodeText } from "../src/toy.js";

function norm(v: number[]): number {
  return Math.sqrt(v.reduce((s, x) => s + x * x, 0));
}

function solidImage(width: number, height: number, rgb: [number, number, number]): Float64Array {
  const pixels = new Float64Array(width * height * 3);
  for (let i = 0; i < width * height; i++) {
    pixels[i * 3] = rgb[0];
    pixels[i * 3 + 1] = rgb[1];
    pixels[i * 3 + 2] = rgb[2];
  }
  return pixels;
}

describe("toy encoder", () => {
  it("text embeddings are unit norm and deterministic", () => {
    const a = encodeText("a pink square");
    const b = encodeText("a pink square");
    expect(a).toHaveLength(TOY_DIM);
    expect(norm(a)).toBeCloseTo(1.0, 6);
    expect(a).toEqual(b);
  });

  it("different text maps to different vectors", () => {
    const a = encodeText("a pink square");
    const b = encodeText("a blue circle");
    const dot = a.reduce((s, v, i) => s + v * b[i], 0);
    expect(dot).toBeLessThan(0.999999);
  });

  it("image embeddings are unit norm and deterministic", () => {
    const img = solidImage(32, 32, [0.8, 0.1, 0.2]);
    const a = encodeImage(img, 32, 32);
    const b = encodeImage(img, 32, 32);
    expect(norm(a)).toBeCloseTo(1.0, 6);
    expect(a).toEqual(b);
  });

  it("all-black image falls back to the documented constant direction", () => {
    const black = encodeImage(solidImage(16, 16, [0, 0, 0]), 16, 16);
    const blackAgain = encodeImage(solidImage(128, 128, [0, 0, 0]), 128, 128);
    // the fallback is resolution independent: same ones-vector projection
    black.forEach((v, i) => expect(v).toBeCloseTo(blackAgain[i], 10));
  });

  it("rejects image sizes not divisible by 8", () => {
    expect(() => encodeImage(solidImage(30, 30, [1, 0, 0]), 30, 30)).toThrow(/divisible by 8/);
  });

  it("tokenization is case and whitespace insensitive", () => {
    expect(encodeText("Red  Square")).toEqual(encodeText("red square"));
  });
});
