// Spawns the backend API over a freshly seeded run fixture; tests talk to
// it over HTTP exactly as the browser console would.

import { spawn, ChildProcess } from "node:child_process";
import { mkdtempSync, writeFileSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join, resolve } from "node:path";
import { fileURLToPath } from "node:url";

const __dirname = fileURLToPath(new URL(".", import.meta.url));

const PORT = 8765;

let proc: ChildProcess;
let root: string;

async function waitForReady(child: ChildProcess): Promise<string> {
  return new Promise((resolvePromise, reject) => {
    let out = "";
    const timer = setTimeout(
      () => reject(new Error(`fixture server not ready; output:\n${out}`)),
      300_000
    );
    child.stdout!.on("data", (chunk: Buffer) => {
      out += chunk.toString();
      const match = out.match(/READY (\S+)/);
      if (match) {
        clearTimeout(timer);
        resolvePromise(match[1]);
      }
    });
    child.stderr!.on("data", (chunk: Buffer) => {
      out += chunk.toString();
    });
    child.on("exit", (code) => {
      clearTimeout(timer);
      reject(new Error(`fixture server exited with ${code}:\n${out}`));
    });
  });
}

async function waitForHttp(base: string) {
  for (let i = 0; i < 100; i++) {
    try {
      const resp = await fetch(`${base}/api/runs`);
      if (resp.ok) return;
    } catch {
      // server still starting
    }
    await new Promise((r) => setTimeout(r, 200));
  }
  throw new Error("API never answered");
}

export default async function setup() {
  root = mkdtempSync(join(tmpdir(), "console-fixture-"));
  const script = resolve(__dirname, "../scripts/serve_fixture.py");
  proc = spawn("python3", [script, root, String(PORT)], {
    stdio: ["ignore", "pipe", "pipe"],
  });
  const runId = await waitForReady(proc);
  const base = `http://127.0.0.1:${PORT}`;
  await waitForHttp(base);
  writeFileSync(
    resolve(__dirname, "fixture.json"),
    JSON.stringify({ base, runId, root })
  );
  return async () => {
    proc.kill();
    rmSync(root, { recursive: true, force: true });
    rmSync(resolve(__dirname, "fixture.json"), { force: true });
  };
}
