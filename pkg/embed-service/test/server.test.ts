import { PNG } from "pngjs";
import request from "supertest";
import { beforeAll, describe, expect, it } from "vitest";
import { buildRegistry } from "../src/models.js";
import { createApp, parseBind } from "../src/server.js";

function pngBase64(width: number, height: number, rgb: [number, number, number]): string {
  const png = new PNG({ width, height });
  for (let i = 0; i < width * height; i++) {
    png.data[i * 4] = rgb[0];
    png.data[i * 4 + 1] = rgb[1];
    png.data[i * 4 + 2] = rgb[2];
    png.data[i * 4 + 3] = 255;
  }
  return PNG.sync.write(png).toString("base64");
}

function norm(v: number[]): number {
  return Math.sqrt(v.reduce((s, x) => s + x * x, 0));
}

let app: ReturnType<typeof createApp>;

beforeAll(async () => {
  // built-in model only: tests must run without network or model downloads
  app = createApp(await buildRegistry({}));
});

describe("GET /v1/models", () => {
  it("advertises at least one image+text model with a stable dim", async () => {
    const first = await request(app).get("/v1/models").expect(200);
    const dual = first.body.filter(
      (m: any) => m.modalities.includes("image") && m.modalities.includes("text")
    );
    expect(dual.length).toBeGreaterThan(0);
    const again = await request(app).get("/v1/models").expect(200);
    expect(again.body).toEqual(first.body);
  });
});

describe("POST /v1/embed/text", () => {
  it("returns a unit-norm vector of the advertised dim", async () => {
    const models = (await request(app).get("/v1/models")).body;
    const res = await request(app)
      .post("/v1/embed/text")
      .send({ modality: "text", payload: "a pink square" })
      .expect(200);
    expect(norm(res.body.embedding)).toBeCloseTo(1.0, 6);
    const advertised = models.find((m: any) => m.model === res.body.model);
    expect(res.body.dim).toBe(advertised.dim);
    expect(res.body.embedding).toHaveLength(advertised.dim);
  });

  it("is deterministic for identical text", async () => {
    const payload = { modality: "text", payload: "spiral of mass" };
    const a = await request(app).post("/v1/embed/text").send(payload).expect(200);
    const b = await request(app).post("/v1/embed/text").send(payload).expect(200);
    expect(a.body.embedding).toEqual(b.body.embedding);
  });

  it("rejects empty text with 400", async () => {
    await request(app)
      .post("/v1/embed/text")
      .send({ modality: "text", payload: "   " })
      .expect(400);
  });

  it("rejects wrong modality with 400", async () => {
    await request(app)
      .post("/v1/embed/text")
      .send({ modality: "image", payload: "abcd" })
      .expect(400);
  });
});

describe("POST /v1/embed/image", () => {
  it("returns a unit-norm vector and is deterministic", async () => {
    const payload = { modality: "image", payload: pngBase64(32, 32, [200, 30, 30]) };
    const a = await request(app).post("/v1/embed/image").send(payload).expect(200);
    const b = await request(app).post("/v1/embed/image").send(payload).expect(200);
    expect(norm(a.body.embedding)).toBeCloseTo(1.0, 6);
    expect(a.body.embedding).toEqual(b.body.embedding);
  });

  it("shares dim with the text endpoint for the same model", async () => {
    const img = await request(app)
      .post("/v1/embed/image")
      .send({ modality: "image", payload: pngBase64(16, 16, [0, 0, 255]) })
      .expect(200);
    const txt = await request(app)
      .post("/v1/embed/text")
      .send({ modality: "text", payload: "blue", model: img.body.model })
      .expect(200);
    expect(txt.body.dim).toBe(img.body.dim);
  });

  it("rejects malformed bodies with 400", async () => {
    await request(app).post("/v1/embed/image").send({ payload: "xx" }).expect(400);
    await request(app)
      .post("/v1/embed/image")
      .send({ modality: "image", payload: "" })
      .expect(400);
  });

  it("rejects undecodable images with 422", async () => {
    const garbage = Buffer.from("definitely not a png").toString("base64");
    await request(app)
      .post("/v1/embed/image")
      .send({ modality: "image", payload: garbage })
      .expect(422);
  });

  it("unknown model gives 503", async () => {
    await request(app)
      .post("/v1/embed/image")
      .send({ modality: "image", payload: pngBase64(8, 8, [1, 2, 3]), model: "not-loaded" })
      .expect(503);
  });
});

describe("POST /v1/embed/batch", () => {
  it("embeds mixed batches in order", async () => {
    const items = [
      { modality: "text", payload: "one red dot" },
      { modality: "image", payload: pngBase64(16, 16, [255, 0, 0]) },
      { modality: "text", payload: "two green rings" },
    ];
    const res = await request(app).post("/v1/embed/batch").send({ items }).expect(200);
    expect(res.body.results).toHaveLength(3);
    const single = await request(app)
      .post("/v1/embed/text")
      .send(items[0])
      .expect(200);
    expect(res.body.results[0].embedding).toEqual(single.body.embedding);
  });

  it("caps batches at 64 items", async () => {
    const items = Array.from({ length: 65 }, () => ({
      modality: "text",
      payload: "filler goal",
    }));
    await request(app).post("/v1/embed/batch").send({ items }).expect(400);
  });

  it("reports the failing item index", async () => {
    const items = [
      { modality: "text", payload: "fine" },
      { modality: "image", payload: Buffer.from("junk").toString("base64") },
    ];
    const res = await request(app).post("/v1/embed/batch").send({ items }).expect(422);
    expect(res.body.error).toMatch(/item 1/);
  });
});

describe("parseBind", () => {
  it("accepts port, :port and host:port", () => {
    expect(parseBind("8090")).toEqual({ host: "127.0.0.1", port: 8090 });
    expect(parseBind(":8091")).toEqual({ host: "127.0.0.1", port: 8091 });
    expect(parseBind("0.0.0.0:8092")).toEqual({ host: "0.0.0.0", port: 8092 });
  });
});
