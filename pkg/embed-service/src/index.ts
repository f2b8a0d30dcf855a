import { buildRegistry } from "./models.js";
import { createApp, parseBind } from "./server.js";

async function main() {
  const registry = await buildRegistry();
  const names = registry.map((m) => `${m.model} (d=${m.dim}, ${m.modalities.join("+")})`);
  const { host, port } = parseBind(process.env.EMBED_BIND ?? "127.0.0.1:8090");
  const app = createApp(registry);
  app.listen(port, host, () => {
    console.log(`embed-service on http://${host}:${port} serving ${names.join(", ")}`);
  });
}

main().catch((err) => {
  console.error(err);
  process.exit(1);
});
