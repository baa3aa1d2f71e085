"""Dynamic trace ingestion and the external sandbox runner boundary.

Wire format, one JSON object per line:
  {"ts": <int ns>, "api": "...", "args": ["..."], "stack":
   ["path:line", ...], "phase": "install"|"import", "pid": <int>}

Ingestion drops installer side effects by stack provenance: a record
survives only when some stack frame lies under the analyzed package's
root and outside the installer's own module tree.
"""
from __future__ import annotations

import json
import os
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from .staticseq import ApiCallRecord, ApiCallSequence

ARG_TRUNCATION = 4096

DEFAULT_INSTALLER_PREFIXES = (
    "node:", "internal/", "/usr/lib/node_modules/npm",
    "/usr/local/lib/node_modules/npm", "/opt/npm",
)

# environment knobs spoofed inside the runner so packages probing for a
# sandbox see an ordinary machine; all overridable through RunnerConfig
DEFAULT_HARDENING_ENV = {
    "CI": "",
    "CONTAINER": "",
    "DOCKER": "",
    "TERM": "xterm-256color",
}


@dataclass
class TraceRecord:
    timestamp: int
    api_id: str
    args: list[str]
    stack: list[str]
    phase: str
    pid: int


@dataclass
class IngestStats:
    total: int = 0
    malformed: int = 0
    filtered: int = 0


@dataclass
class RunnerConfig:
    command_template: list[str] | None = None   # {package_dir} {trace_out}
    timeout: float = 600.0
    env: dict[str, str] = field(default_factory=lambda:
                                dict(DEFAULT_HARDENING_ENV))
    installer_prefixes: tuple[str, ...] = DEFAULT_INSTALLER_PREFIXES


def parse_trace_line(line: str) -> TraceRecord | None:
    try:
        obj = json.loads(line)
        record = TraceRecord(
            timestamp=int(obj["ts"]),
            api_id=str(obj["api"]),
            args=[str(a)[:ARG_TRUNCATION] for a in obj.get("args", [])],
            stack=[str(f) for f in obj.get("stack", [])],
            phase=str(obj.get("phase", "install")),
            pid=int(obj.get("pid", 0)),
        )
    except (json.JSONDecodeError, KeyError, TypeError, ValueError):
        return None
    if not record.stack:
        return None
    return record


def _attributable(record: TraceRecord, package_root: str,
                  installer_prefixes: tuple[str, ...]) -> bool:
    for frame in record.stack:
        path = frame.rsplit(":", 1)[0]
        if not path.startswith(package_root):
            continue
        if any(path.startswith(prefix) for prefix in installer_prefixes):
            continue
        return True
    return False


def _stack_digest(record: TraceRecord) -> str:
    import hashlib
    return hashlib.sha256("|".join(record.stack).encode()).hexdigest()[:12]


def ingest_trace(stream, package_root: str,
                 installer_prefixes: tuple[str, ...] =
                 DEFAULT_INSTALLER_PREFIXES,
                 package_id: str = "",
                 phase: str | None = None
                 ) -> tuple[ApiCallSequence, IngestStats]:
    """Fold trace lines into an ApiCallSequence ordered by timestamp
    (ties broken by input order), merging processes. `phase` restricts
    ingestion to one phase; by default all records are kept and the
    sequence is tagged install if any install-phase record survived."""
    stats = IngestStats()
    survivors: list[tuple[int, int, TraceRecord]] = []
    for line_no, line in enumerate(stream):
        line = line.strip()
        if not line:
            continue
        stats.total += 1
        record = parse_trace_line(line)
        if record is None:
            stats.malformed += 1
            continue
        if phase is not None and record.phase != phase:
            continue
        if not _attributable(record, package_root, installer_prefixes):
            stats.filtered += 1
            continue
        survivors.append((record.timestamp, line_no, record))
    survivors.sort(key=lambda t: (t[0], t[1]))
    records = []
    for ordinal, (_, _, tr) in enumerate(survivors):
        records.append(ApiCallRecord(
            api_id=tr.api_id,
            parameter_summary=list(tr.args),
            location=(_stack_digest(tr), 0, 0),
            origin="dynamic",
            ordinal=ordinal,
            meta={"ts": tr.timestamp, "stack": list(tr.stack),
                  "pid": tr.pid, "phase": tr.phase},
        ))
    seq_phase = phase
    if seq_phase is None:
        seq_phase = "install" if any(
            r.meta["phase"] == "install" for r in records) else "import"
    return (ApiCallSequence(package_id=package_id, phase=seq_phase,
                            records=records), stats)


def serialize_sequence(seq: ApiCallSequence) -> list[str]:
    """Render a dynamic sequence back to wire format lines."""
    lines = []
    for record in seq.records:
        meta = record.meta
        lines.append(json.dumps({
            "ts": meta.get("ts", record.ordinal),
            "api": record.api_id,
            "args": [a[:ARG_TRUNCATION] for a in record.parameter_summary],
            "stack": meta.get("stack", []),
            "phase": meta.get("phase", seq.phase),
            "pid": meta.get("pid", 0),
        }, sort_keys=True))
    return lines


def run_dynamic(package_dir: str | Path,
                config: RunnerConfig | None = None
                ) -> tuple[list[str], list[str]]:
    """Run the external sandbox runner over a package directory and
    return (trace lines, flags). The runner is expected to install and
    import the package with the instrumentation shim preloaded and
    write the trace to the path substituted for {trace_out}."""
    config = config or RunnerConfig()
    flags: list[str] = []
    if not config.command_template:
        return [], ["dynamic-runner-unavailable"]
    with tempfile.TemporaryDirectory(prefix="npmsift-dyn-") as tmp:
        trace_out = str(Path(tmp) / "trace.jsonl")
        command = [arg.replace("{package_dir}", str(package_dir))
                   .replace("{trace_out}", trace_out)
                   for arg in config.command_template]
        env = dict(os.environ)
        env.update(config.env)
        try:
            proc = subprocess.run(command, capture_output=True,
                                  timeout=config.timeout, env=env)
            if proc.returncode != 0:
                flags.append(f"dynamic-runner-exit:{proc.returncode}")
        except subprocess.TimeoutExpired:
            flags.append("dynamic-timeout")
        except OSError as exc:
            return [], [f"dynamic-runner-error:{exc}"]
        trace_path = Path(trace_out)
        if trace_path.exists():
            lines = trace_path.read_text(encoding="utf-8",
                                         errors="replace").splitlines()
        else:
            lines = []
            flags.append("dynamic-no-trace")
        return lines, flags
