import * as assert from "node:assert";
import { test } from "node:test";
import { spawnSync } from "child_process";
import * as fs from "fs";
import * as os from "os";
import * as path from "path";

import { runPhases } from "../src/run-phases";

const SHIM = path.join(__dirname, "..", "src", "shim.js");

function makeFixturePackage(): string {
  const dir = fs.mkdtempSync(path.join(os.tmpdir(), "npmsift-fixture-"));
  fs.writeFileSync(path.join(dir, "package.json"), JSON.stringify({
    name: "fixture-exfil",
    version: "1.0.0",
    main: "index.js",
    scripts: { preinstall: "node setup.js" },
  }));
  fs.writeFileSync(path.join(dir, "seed.txt"), "marker-content\n");
  fs.writeFileSync(path.join(dir, "setup.js"), [
    "const fs = require('fs');",
    "const http = require('http');",
    "const data = fs.readFileSync('./seed.txt', 'utf8');",
    "const req = http.request('http://127.0.0.1:1/upload');",
    "req.on('error', () => {});",
    "req.end();",
    "console.log('setup-done ' + data.trim());",
  ].join("\n"));
  fs.writeFileSync(path.join(dir, "index.js"),
                   "module.exports = { ready: true };\n");
  return dir;
}

function readTrace(tracePath: string): Array<Record<string, unknown>> {
  if (!fs.existsSync(tracePath)) return [];
  return fs.readFileSync(tracePath, "utf8").trim().split("\n")
    .filter(Boolean).map((line) => JSON.parse(line));
}

test("run_phases tags install and import phases", () => {
  const dir = makeFixturePackage();
  const trace = path.join(dir, "trace.jsonl");
  const status = runPhases(dir, trace);
  assert.strictEqual(status, 0);
  const lines = readTrace(trace);
  const phases = new Set(lines.map((l) => l.phase));
  assert.ok(phases.has("install"));
  const installApis = lines.filter((l) => l.phase === "install")
    .map((l) => l.api);
  assert.ok(installApis.includes("fs.readFileSync"));
  assert.ok(installApis.includes("http.request"));
});

test("observable behavior is unchanged by hooking", () => {
  const dir = makeFixturePackage();
  const plain = spawnSync(process.execPath, ["setup.js"],
                          { cwd: dir, encoding: "utf8" });
  const trace = path.join(dir, "t.jsonl");
  const hooked = spawnSync(process.execPath, ["setup.js"], {
    cwd: dir,
    encoding: "utf8",
    env: {
      ...process.env,
      NODE_OPTIONS: `--require ${SHIM}`,
      NPMSIFT_TRACE_OUT: trace,
      NPMSIFT_PHASE: "install",
    },
  });
  assert.strictEqual(hooked.status, plain.status);
  assert.strictEqual(hooked.stdout, plain.stdout);
  assert.strictEqual(hooked.stderr, plain.stderr);
  assert.ok(readTrace(trace).length >= 2);
});

test("spawned children inherit the preload and trace under their pid",
     () => {
  const dir = fs.mkdtempSync(path.join(os.tmpdir(), "npmsift-child-"));
  fs.writeFileSync(path.join(dir, "parent.js"), [
    "const cp = require('child_process');",
    "cp.spawnSync(process.execPath,",
    "  ['-e', \"require('os').hostname()\"], {stdio: 'ignore'});",
  ].join("\n"));
  const trace = path.join(dir, "trace.jsonl");
  const result = spawnSync(process.execPath, ["parent.js"], {
    cwd: dir,
    encoding: "utf8",
    env: {
      ...process.env,
      NODE_OPTIONS: `--require ${SHIM}`,
      NPMSIFT_TRACE_OUT: trace,
      NPMSIFT_PHASE: "install",
    },
  });
  assert.strictEqual(result.status, 0);
  const lines = readTrace(trace);
  const pids = new Set(lines.map((l) => l.pid));
  assert.ok(pids.size >= 2, `expected two processes, saw ${pids.size}`);
  const childLines = lines.filter((l) => l.api === "os.hostname");
  assert.strictEqual(childLines.length, 1);
});

test("acceptance: trace ingests to FILE_READ then NETWORK_OUT in order",
     () => {
  const dir = makeFixturePackage();
  const trace = path.join(dir, "trace.jsonl");
  assert.strictEqual(runPhases(dir, trace), 0);
  const ingest = spawnSync("python3",
                           ["-m", "npmsift.cli", "ingest", trace,
                            "--root", dir], { encoding: "utf8" });
  assert.notStrictEqual(ingest.stdout, "");
  const subtypeLine = ingest.stdout.split("\n")
    .find((line) => line.startsWith("subtypes"));
  assert.ok(subtypeLine, ingest.stdout + ingest.stderr);
  const subtypes = subtypeLine!.split("\t")[1].split(",");
  assert.deepStrictEqual(subtypes, ["FILE_READ", "NETWORK_OUT"]);
});
