/**
 * Deterministic reference encoder mapping images and text into one space.
 *
 * Images are average-pooled to 8x8x3 features; text is hashed token counts
 * over the same number of bins. Both go through a fixed seeded random
 * projection and are L2-normalized, mirroring the offline encoder used by
 * the exploration loop for CI-grade determinism.
 */

export const TOY_FEATURES = 192;
export const TOY_DIM = 64;

/** splitmix32: tiny deterministic PRNG for the projection matrix. */
function splitmix32(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x9e3779b9) >>> 0;
    let z = state;
    z = Math.imul(z ^ (z >>> 16), 0x21f0aaad);
    z = Math.imul(z ^ (z >>> 15), 0x735a2d97);
    z = z ^ (z >>> 15);
    return (z >>> 0) / 4294967296;
  };
}

function gaussianMatrix(rows: number, cols: number, seed: number): Float64Array {
  const rand = splitmix32(seed);
  const out = new Float64Array(rows * cols);
  for (let i = 0; i < out.length; i += 2) {
    // Box-Muller; u clamped away from zero so log stays finite
    const u = Math.max(rand(), 1e-12);
    const v = rand();
    const r = Math.sqrt(-2.0 * Math.log(u));
    out[i] = r * Math.cos(2.0 * Math.PI * v);
    if (i + 1 < out.length) out[i + 1] = r * Math.sin(2.0 * Math.PI * v);
  }
  return out;
}

const PROJECTION = gaussianMatrix(TOY_DIM, TOY_FEATURES, 7);

function project(features: Float64Array): number[] {
  let any = false;
  for (const f of features) if (f !== 0) { any = true; break; }
  if (!any) features.fill(1.0); // zero-feature fallback keeps output defined
  const out = new Array<number>(TOY_DIM).fill(0);
  for (let r = 0; r < TOY_DIM; r++) {
    let acc = 0;
    const base = r * TOY_FEATURES;
    for (let c = 0; c < TOY_FEATURES; c++) acc += PROJECTION[base + c] * features[c];
    out[r] = acc;
  }
  const norm = Math.sqrt(out.reduce((s, v) => s + v * v, 0));
  return out.map((v) => v / norm);
}

/** pixels: RGB triples in [0, 1], row-major; height and width divisible by 8. */
export function encodeImage(pixels: Float64Array, width: number, height: number): number[] {
  if (width % 8 !== 0 || height % 8 !== 0) {
    throw new Error(`image dimensions must be divisible by 8, got ${width}x${height}`);
  }
  const features = new Float64Array(TOY_FEATURES);
  const blockW = width / 8;
  const blockH = height / 8;
  for (let by = 0; by < 8; by++) {
    for (let bx = 0; bx < 8; bx++) {
      const sums = [0, 0, 0];
      for (let y = by * blockH; y < (by + 1) * blockH; y++) {
        for (let x = bx * blockW; x < (bx + 1) * blockW; x++) {
          const p = (y * width + x) * 3;
          sums[0] += pixels[p];
          sums[1] += pixels[p + 1];
          sums[2] += pixels[p + 2];
        }
      }
      const cells = blockW * blockH;
      const f = (by * 8 + bx) * 3;
      features[f] = sums[0] / cells;
      features[f + 1] = sums[1] / cells;
      features[f + 2] = sums[2] / cells;
    }
  }
  return project(features);
}

/** FNV-1a over a token, reduced to a feature bin. */
function tokenBin(token: string): number {
  let hash = 0x811c9dc5;
  for (let i = 0; i < token.length; i++) {
    hash ^= token.charCodeAt(i);
    hash = Math.imul(hash, 0x01000193);
  }
  return (hash >>> 0) % TOY_FEATURES;
}

export function encodeText(text: string): number[] {
  const features = new Float64Array(TOY_FEATURES);
  for (const token of text.toLowerCase().split(/\s+/)) {
    if (token.length > 0) features[tokenBin(token)] += 1.0;
  }
  return project(features);
}
