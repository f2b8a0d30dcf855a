import express, { Express, Request, Response } from "express";
import { z } from "zod";
import { ImageDecodeError, ModelEntry } from "./models.js";

const MAX_BATCH = 64;

const embedRequestSchema = z.object({
  modality: z.enum(["image", "text"]),
  payload: z.string(),
  model: z.string().optional(),
});

const batchRequestSchema = z.object({
  items: z.array(embedRequestSchema).min(1).max(MAX_BATCH),
});

type EmbedRequest = z.infer<typeof embedRequestSchema>;

interface EmbedResponse {
  embedding: number[];
  model: string;
  dim: number;
}

class HttpError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

function pickModel(registry: ModelEntry[], req: EmbedRequest): ModelEntry {
  let entry: ModelEntry | undefined;
  if (req.model) {
    entry = registry.find((m) => m.model === req.model);
    if (!entry) throw new HttpError(503, `model ${req.model} not loaded`);
  } else {
    entry = registry.find((m) => m.modalities.includes(req.modality));
    if (!entry) throw new HttpError(503, `no model loaded for ${req.modality}`);
  }
  if (!entry.modalities.includes(req.modality)) {
    throw new HttpError(400, `model ${entry.model} does not support ${req.modality}`);
  }
  return entry;
}

async function runEmbed(registry: ModelEntry[], req: EmbedRequest): Promise<EmbedResponse> {
  const entry = pickModel(registry, req);
  if (req.modality === "text") {
    if (req.payload.trim().length === 0) throw new HttpError(400, "empty text payload");
    const embedding = await entry.embedText!(req.payload);
    return { embedding, model: entry.model, dim: entry.dim };
  }
  if (req.payload.length === 0) throw new HttpError(400, "empty image payload");
  let png: Buffer;
  try {
    png = Buffer.from(req.payload, "base64");
  } catch {
    throw new HttpError(400, "payload is not valid base64");
  }
  try {
    const embedding = await entry.embedImage!(png);
    return { embedding, model: entry.model, dim: entry.dim };
  } catch (err) {
    if (err instanceof ImageDecodeError) throw new HttpError(422, err.message);
    throw err;
  }
}

function handler(fn: (req: Request, res: Response) => Promise<void>) {
  return (req: Request, res: Response) => {
    fn(req, res).catch((err) => {
      if (err instanceof HttpError) {
        res.status(err.status).json({ error: err.message });
      } else {
        console.error(err);
        res.status(500).json({ error: String(err) });
      }
    });
  };
}

export function createApp(registry: ModelEntry[]): Express {
  const app = express();
  app.use(express.json({ limit: "64mb" }));

  app.get("/v1/models", (_req, res) => {
    res.json(registry.map(({ model, dim, modalities }) => ({ model, dim, modalities })));
  });

  const embedFor = (modality: "image" | "text") =>
    handler(async (req, res) => {
      const parsed = embedRequestSchema.safeParse(req.body);
      if (!parsed.success) throw new HttpError(400, parsed.error.message);
      if (parsed.data.modality !== modality) {
        throw new HttpError(400, `expected modality ${modality}`);
      }
      res.json(await runEmbed(registry, parsed.data));
    });

  app.post("/v1/embed/image", embedFor("image"));
  app.post("/v1/embed/text", embedFor("text"));

  app.post(
    "/v1/embed/batch",
    handler(async (req, res) => {
      const parsed = batchRequestSchema.safeParse(req.body);
      if (!parsed.success) throw new HttpError(400, parsed.error.message);
      const results: EmbedResponse[] = [];
      for (const [i, item] of parsed.data.items.entries()) {
        try {
          results.push(await runEmbed(registry, item));
        } catch (err) {
          if (err instanceof HttpError) throw new HttpError(err.status, `item ${i}: ${err.message}`);
          throw err;
        }
      }
      res.json({ results });
    })
  );
  return app;
}

export function parseBind(bind: string): { host: string; port: number } {
  // EMBED_BIND forms: "8090", ":8090", "0.0.0.0:8090"
  const idx = bind.lastIndexOf(":");
  if (idx < 0) return { host: "127.0.0.1", port: Number(bind) };
  const host = bind.slice(0, idx) || "127.0.0.1";
  return { host, port: Number(bind.slice(idx + 1)) };
}
