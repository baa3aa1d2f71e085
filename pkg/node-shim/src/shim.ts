/**
 * Preload instrumentation agent.
 *
 * Loaded with `node --require .../shim.js`, it wraps the sensitive
 * native APIs named in the hook spec file so every invocation appends
 * one trace line (the scanner's wire format) before delegating to the
 * original. Wrapping is transparent: `this`, return values and thrown
 * errors pass through untouched, and child processes inherit the
 * preload so their calls are traced under their own pid.
 *
 * Environment:
 *   NPMSIFT_TRACE_OUT  trace file path (agent is a no-op when unset)
 *   NPMSIFT_HOOKS      hook spec JSON (default: bundled data/hooks.json)
 *   NPMSIFT_PHASE      "install" | "import" tag for emitted lines
 */
import * as fs from "fs";
import * as path from "path";

export interface HookSpec {
  module_name: string;
  member_path: string;
  arg_capture: number;
}

const ARG_LIMIT = 4096;

interface Sink {
  write(line: string): void;
}

/* originals captured before any patching so the agent's own writes
   never re-enter the hooks */
const originalAppend = fs.appendFileSync;
const originalRead = fs.readFileSync;

let emitting = false;

function fileSink(target: string): Sink {
  return {
    write(line: string) {
      originalAppend.call(fs, target, line + "\n");
    },
  };
}

function sanitize(text: string): string {
  let out = "";
  for (const ch of text.slice(0, ARG_LIMIT)) {
    const code = ch.codePointAt(0) ?? 0;
    out += code < 0x20 || code === 0x7f ? "." : ch;
  }
  return out.slice(0, ARG_LIMIT);
}

function stringifyArg(value: unknown): string {
  if (typeof value === "string") return sanitize(value);
  if (value === null || value === undefined) return String(value);
  if (typeof value === "function") return "[function]";
  if (typeof value === "object") {
    try {
      return sanitize(JSON.stringify(value) ?? "[object]");
    } catch {
      return "[object]";
    }
  }
  return sanitize(String(value));
}

function captureStack(): string[] {
  const holder: { stack?: string } = {};
  Error.captureStackTrace(holder, captureStack);
  const frames: string[] = [];
  for (const line of (holder.stack ?? "").split("\n").slice(1)) {
    const match = /\(?([^()\s]+):(\d+):\d+\)?$/.exec(line.trim());
    if (!match) continue;
    const file = match[1];
    if (file === __filename) continue;
    frames.push(`${file}:${match[2]}`);
  }
  return frames.length ? frames : ["<anonymous>:0"];
}

function resolveMember(root: object, memberPath: string):
    { container: Record<string, unknown>; leaf: string } | null {
  const parts = memberPath.split(".");
  let container: Record<string, unknown> = root as Record<string, unknown>;
  for (const part of parts.slice(0, -1)) {
    const next = container[part];
    if (next === null || typeof next !== "object") return null;
    container = next as Record<string, unknown>;
  }
  const leaf = parts[parts.length - 1];
  if (typeof container[leaf] !== "function") return null;
  return { container, leaf };
}

export function installHooks(specs: HookSpec[], sink: Sink,
                             phase: string = "install",
                             warn: (msg: string) => void =
                               (msg) => process.stderr.write(msg + "\n")):
    number {
  let installed = 0;
  for (const spec of specs) {
    const apiId = spec.module_name === "global"
      ? spec.member_path
      : `${spec.module_name}.${spec.member_path}`;
    let root: object;
    if (spec.module_name === "global") {
      root = globalThis;
    } else {
      try {
        // eslint-disable-next-line @typescript-eslint/no-var-requires
        root = require(spec.module_name);
      } catch {
        warn(`npmsift-shim: module not loadable: ${spec.module_name}`);
        continue;
      }
    }
    const resolved = resolveMember(root, spec.member_path);
    if (resolved === null) {
      warn(`npmsift-shim: cannot resolve ${apiId}`);
      continue;
    }
    const { container, leaf } = resolved;
    const original = container[leaf] as (...args: unknown[]) => unknown;
    const argCount = spec.arg_capture;

    const wrapper = function (this: unknown, ...args: unknown[]): unknown {
      if (!emitting) {
        emitting = true;
        try {
          sink.write(JSON.stringify({
            ts: Number(process.hrtime.bigint()),
            api: apiId,
            args: args.slice(0, argCount).map(stringifyArg),
            stack: captureStack(),
            phase,
            pid: process.pid,
          }));
        } catch {
          /* tracing must never alter package behavior */
        } finally {
          emitting = false;
        }
      }
      return original.apply(this, args);
    };
    Object.defineProperty(wrapper, "name", { value: original.name });
    Object.assign(wrapper, original);
    wrapper.prototype = original.prototype;
    container[leaf] = wrapper;
    installed += 1;
  }
  return installed;
}

export function loadHookSpecs(specPath: string): HookSpec[] {
  const raw = JSON.parse(originalRead.call(fs, specPath, "utf8") as string);
  return raw.hooks as HookSpec[];
}

export function defaultHooksPath(): string {
  return process.env.NPMSIFT_HOOKS ??
    path.join(__dirname, "..", "..", "data", "hooks.json");
}

function activateFromEnvironment(): void {
  const traceOut = process.env.NPMSIFT_TRACE_OUT;
  if (!traceOut) return;
  const phase = process.env.NPMSIFT_PHASE === "import" ? "import"
    : "install";
  const specs = loadHookSpecs(defaultHooksPath());
  installHooks(specs, fileSink(traceOut), phase);
  // children spawned by the package must inherit the agent
  const preload = `--require ${__filename}`;
  const existing = process.env.NODE_OPTIONS ?? "";
  if (!existing.includes(__filename)) {
    process.env.NODE_OPTIONS = `${existing} ${preload}`.trim();
  }
}

if (require.main !== module) {
  activateFromEnvironment();
}
