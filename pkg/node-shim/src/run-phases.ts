/**
 * Drives the two monitored phases over an unpacked package directory:
 * runs the manifest's install-time scripts, then imports the package's
 * main entry, each in a child with the shim preloaded and the phase
 * tag set. Exit status is the worst child status.
 *
 * Usage: node run-phases.js <package_dir> [trace_out]
 */
import { spawnSync } from "child_process";
import * as fs from "fs";
import * as path from "path";

const INSTALL_FIELDS = ["preinstall", "install", "postinstall"];

function phaseEnv(phase: string, traceOut: string): NodeJS.ProcessEnv {
  const shimPath = path.join(__dirname, "shim.js");
  const preload = `--require ${shimPath}`;
  const existing = process.env.NODE_OPTIONS ?? "";
  return {
    ...process.env,
    NODE_OPTIONS: existing.includes(shimPath) ? existing
      : `${existing} ${preload}`.trim(),
    NPMSIFT_TRACE_OUT: traceOut,
    NPMSIFT_PHASE: phase,
  };
}

export function runPhases(packageDir: string, traceOut: string): number {
  const manifestPath = path.join(packageDir, "package.json");
  let manifest: { scripts?: Record<string, string>; main?: string } = {};
  try {
    manifest = JSON.parse(fs.readFileSync(manifestPath, "utf8"));
  } catch {
    process.stderr.write("npmsift-run-phases: unreadable package.json\n");
  }
  let worst = 0;

  for (const field of INSTALL_FIELDS) {
    const command = manifest.scripts?.[field];
    if (!command) continue;
    const result = spawnSync(command, {
      cwd: packageDir,
      shell: true,
      env: phaseEnv("install", traceOut),
      stdio: "inherit",
    });
    worst = Math.max(worst, result.status ?? 1);
  }

  const entry = manifest.main ?? "index.js";
  const entryPath = path.join(packageDir, entry);
  if (fs.existsSync(entryPath)) {
    const result = spawnSync(process.execPath, ["-e",
      `require(${JSON.stringify(path.resolve(entryPath))})`], {
      cwd: packageDir,
      env: phaseEnv("import", traceOut),
      stdio: "inherit",
    });
    worst = Math.max(worst, result.status ?? 1);
  }
  return worst;
}

if (require.main === module) {
  const [packageDir, traceOut] = process.argv.slice(2);
  if (!packageDir) {
    process.stderr.write(
      "usage: npmsift-run-phases <package_dir> [trace_out]\n");
    process.exit(64);
  }
  const out = traceOut ?? process.env.NPMSIFT_TRACE_OUT ??
    path.join(process.cwd(), "npmsift-trace.jsonl");
  process.exit(runPhases(packageDir, out));
}
