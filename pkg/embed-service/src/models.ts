/**
 * Model registry. The built-in deterministic encoder is always available;
 * pretrained CLIP/DINO backends load on demand when their env vars are set
 * and @xenova/transformers plus the model weights are reachable.
 */
import { PNG } from "pngjs";
import { TOY_DIM, encodeImage, encodeText } from "./toy.js";

export interface ModelEntry {
  model: string;
  dim: number;
  modalities: ("image" | "text")[];
  embedImage?: (png: Buffer) => Promise<number[]>;
  embedText?: (text: string) => Promise<number[]>;
}

export class ImageDecodeError extends Error {}

export function decodePng(data: Buffer): { pixels: Float64Array; width: number; height: number } {
  let png: PNG;
  try {
    png = PNG.sync.read(data);
  } catch (err) {
    throw new ImageDecodeError(`cannot decode PNG: ${(err as Error).message}`);
  }
  const { width, height } = png;
  const pixels = new Float64Array(width * height * 3);
  for (let i = 0; i < width * height; i++) {
    pixels[i * 3] = png.data[i * 4] / 255;
    pixels[i * 3 + 1] = png.data[i * 4 + 1] / 255;
    pixels[i * 3 + 2] = png.data[i * 4 + 2] / 255;
  }
  return { pixels, width, height };
}

function normalize(vec: number[]): number[] {
  const norm = Math.sqrt(vec.reduce((s, v) => s + v * v, 0));
  return vec.map((v) => v / norm);
}

function builtinModel(): ModelEntry {
  return {
    model: "builtin-miniclip",
    dim: TOY_DIM,
    modalities: ["image", "text"],
    embedImage: async (png: Buffer) => {
      const { pixels, width, height } = decodePng(png);
      try {
        return encodeImage(pixels, width, height);
      } catch (err) {
        throw new ImageDecodeError((err as Error).message);
      }
    },
    embedText: async (text: string) => encodeText(text),
  };
}

async function loadClip(name: string): Promise<ModelEntry | null> {
  try {
    // dynamic import: transformers is an optional heavyweight dependency
    const tf = await import("@xenova/transformers" as string);
    const processor = await tf.AutoProcessor.from_pretrained(name);
    const tokenizer = await tf.AutoTokenizer.from_pretrained(name);
    const vision = await tf.CLIPVisionModelWithProjection.from_pretrained(name);
    const textModel = await tf.CLIPTextModelWithProjection.from_pretrained(name);
    const probe = await textModel(tokenizer("probe", { padding: true, truncation: true }));
    const dim = probe.text_embeds.dims[1];
    return {
      model: name,
      dim,
      modalities: ["image", "text"],
      embedImage: async (png: Buffer) => {
        let image;
        try {
          const blob = new Blob([new Uint8Array(png)], { type: "image/png" });
          image = await tf.RawImage.fromBlob(blob);
        } catch (err) {
          throw new ImageDecodeError((err as Error).message);
        }
        const inputs = await processor(image);
        const out = await vision(inputs);
        return normalize(Array.from(out.image_embeds.data as Float32Array));
      },
      embedText: async (text: string) => {
        const inputs = tokenizer(text, { padding: true, truncation: true });
        const out = await textModel(inputs);
        return normalize(Array.from(out.text_embeds.data as Float32Array));
      },
    };
  } catch (err) {
    console.warn(`CLIP model ${name} unavailable: ${(err as Error).message}`);
    return null;
  }
}

async function loadDino(name: string): Promise<ModelEntry | null> {
  try {
    const tf = await import("@xenova/transformers" as string);
    const extractor = await tf.pipeline("image-feature-extraction", name);
    return {
      model: name,
      dim: -1, // resolved on first call; advertised after warm-up below
      modalities: ["image"],
      embedImage: async (png: Buffer) => {
        let image;
        try {
          const blob = new Blob([new Uint8Array(png)], { type: "image/png" });
          image = await tf.RawImage.fromBlob(blob);
        } catch (err) {
          throw new ImageDecodeError((err as Error).message);
        }
        const out = await extractor(image, { pooling: "mean" });
        return normalize(Array.from(out.data as Float32Array));
      },
    };
  } catch (err) {
    console.warn(`DINO model ${name} unavailable: ${(err as Error).message}`);
    return null;
  }
}

export async function buildRegistry(env: NodeJS.ProcessEnv = process.env): Promise<ModelEntry[]> {
  const entries: ModelEntry[] = [];
  if (env.EMBED_CLIP_MODEL) {
    const clip = await loadClip(env.EMBED_CLIP_MODEL);
    if (clip) entries.push(clip);
  }
  if (env.EMBED_DINO_MODEL) {
    const dino = await loadDino(env.EMBED_DINO_MODEL);
    if (dino && dino.embedImage) {
      // warm up once to learn the output dimension before advertising it
      const probe = new PNG({ width: 8, height: 8 });
      const vec = await dino.embedImage(PNG.sync.write(probe));
      entries.push({ ...dino, dim: vec.length });
    }
  }
  entries.push(builtinModel());
  return entries;
}
