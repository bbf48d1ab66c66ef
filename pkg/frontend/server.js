// Tiny static server for local development. Serves index.html with the
// API base substituted from the API_BASE env var, plus styles and the
// compiled dist/ modules. No dependencies beyond node itself.
import { createServer } from "node:http";
import { readFile } from "node:fs/promises";
import { extname, join, normalize } from "node:path";
import { fileURLToPath } from "node:url";

const root = fileURLToPath(new URL(".", import.meta.url));
const apiBase = process.env.API_BASE || "http://127.0.0.1:8080";
const port = Number(process.env.PORT || 5173);

const types = {
  ".html": "text/html; charset=utf-8",
  ".css": "text/css; charset=utf-8",
  ".js": "text/javascript; charset=utf-8",
  ".map": "application/json",
  ".json": "application/json",
};

const server = createServer(async (req, res) => {
  let path = (req.url || "/").split("?")[0];
  if (path === "/") path = "/index.html";
  const file = normalize(join(root, path));
  if (!file.startsWith(root)) {
    res.writeHead(403).end();
    return;
  }
  try {
    let body = await readFile(file);
    if (path === "/index.html") {
      body = Buffer.from(body.toString("utf-8").replace("__API_BASE__", apiBase));
    }
    res.writeHead(200, { "content-type": types[extname(file)] || "application/octet-stream" });
    res.end(body);
  } catch {
    res.writeHead(404, { "content-type": "text/plain" });
    res.end("not found");
  }
});

server.listen(port, "127.0.0.1", () => {
  console.log(`ui at http://127.0.0.1:${port} -> api ${apiBase}`);
});
