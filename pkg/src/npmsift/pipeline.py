"""Per-package scan orchestration.

Stage order: load, entry extraction, shell detection over scripts and
.sh files, then the timed static phase (reconstruct, obfuscation check,
and, for unobfuscated packages, the static screen), then dynamic
execution when routed there and a runner is configured, and finally
behavior mapping and hierarchical classification. Every stage failure
degrades with flags; a scan never dies silently.

The static phase runs in a forked child so a stalled package can be
hard-aborted at the configured timeout; the child checkpoints each
sub-stage into the scratch directory so a timeout still yields partial
results.
"""
from __future__ import annotations

import json
import multiprocessing
import pickle
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import staticseq as staticseq_mod
from .archive import (EntryPointSet, PackageArchive, extract_entries,
                      load_archive, load_dir)
from .kb import KnowledgeBase, classify, default_kb, map_to_behaviors
from .obfuscation import classify_obfuscated, extract_obf_features
from .reconstruct import MergedProgram, reconstruct
from .shellcmd import (classify_command, extract_urls, match_rules,
                       parse_command, trace_sh_file)
from .staticseq import (ApiCallSequence, compute_behavior_features,
                        screen_suspicious, sequence_digest)
from .traces import RunnerConfig, ingest_trace, run_dynamic
from .urlfeat import UrlError, judge_url

EXIT_BENIGN = 0
EXIT_ERROR = 1
EXIT_MALICIOUS = 2
EXIT_NEEDS_DYNAMIC = 3


@dataclass
class ScanConfig:
    static_timeout: float = 300.0
    dynamic_timeout: float = 600.0
    recursion_limit: int = 2
    dynamic_runner: RunnerConfig | None = None
    trace_lines: list[str] | None = None    # pre-recorded dynamic trace
    kb: KnowledgeBase | None = None
    mirror_store: object | None = None
    package_root_hint: str = "/package"


@dataclass
class ShellVerdict:
    command: str
    source: str
    hits: list[tuple[str, str, int]]
    categories: list[str]


@dataclass
class Report:
    package_id: str
    stage_timings: dict[str, float] = field(default_factory=dict)
    shell_verdicts: list[ShellVerdict] = field(default_factory=list)
    obfuscation_verdict: dict = field(default_factory=dict)
    static_digest: str | None = None
    dynamic_digest: str | None = None
    behavior_subtypes: dict[str, list[str]] = field(default_factory=dict)
    categories: set[str] = field(default_factory=set)
    matched_rules: list[str] = field(default_factory=list)
    evidence: dict[str, list[dict]] = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)
    unknown_apis: list[str] = field(default_factory=list)
    suspicious_score: float | None = None
    needs_dynamic: bool = False

    @property
    def operational_error(self) -> bool:
        return any(f.startswith(("load-failed", "scan-error"))
                   for f in self.flags)

    @property
    def exit_code(self) -> int:
        if self.categories:
            return EXIT_MALICIOUS
        if self.operational_error:
            return EXIT_ERROR
        if self.needs_dynamic:
            return EXIT_NEEDS_DYNAMIC
        return EXIT_BENIGN


def _command_judge(command: str) -> set[str]:
    ast = parse_command(command, source="code-argument")
    hits = match_rules(ast)
    verdicts = []
    for url in extract_urls(ast):
        try:
            verdicts.append(judge_url(url))
        except UrlError:
            continue
    return classify_command(hits, verdicts)


def _shell_stage(archive: PackageArchive, entries: EntryPointSet,
                 report: Report, scratch: Path) -> None:
    seen: list[tuple[str, str]] = [
        (command, "manifest-script")
        for _, command in entries.script_commands]
    for path, entry in entries.entry_files.items():
        if path.endswith(".sh") and not entry.missing:
            sh_path = scratch / "sh" / path.replace("/", "__")
            sh_path.parent.mkdir(parents=True, exist_ok=True)
            sh_path.write_bytes(archive.files[path])
            asts, flags = trace_sh_file(sh_path, mode="static")
            report.flags.extend(flags)
            seen.extend((ast.raw, "sh-file") for ast in asts)
    for command, source in seen:
        ast = parse_command(command, source=source)
        hits = match_rules(ast)
        verdicts = []
        for url in extract_urls(ast):
            try:
                verdicts.append(judge_url(url))
            except UrlError:
                continue
        categories = classify_command(hits, verdicts)
        report.shell_verdicts.append(ShellVerdict(
            command=command, source=source,
            hits=[(h.rule_id, h.matched_token, h.position) for h in hits],
            categories=sorted(categories)))
        report.categories |= categories


def _static_phase(archive: PackageArchive, entries: EntryPointSet,
                  config: ScanConfig, scratch: Path) -> dict:
    """Runs inside the timed child. Checkpoints partial results into
    scratch as each sub-stage completes."""
    timings: dict[str, float] = {}
    out: dict = {"timings": timings, "flags": []}
    mirror = None
    if config.mirror_store is not None:
        mirror = config.mirror_store.archive_for

    t0 = time.monotonic()
    merged: list[MergedProgram] = []
    for path, entry in entries.entry_files.items():
        if entry.missing or not path.endswith((".js", ".mjs", ".cjs")):
            continue
        try:
            merged.append(reconstruct(
                archive, path, recursion_limit=config.recursion_limit,
                mirror=mirror, entry_origin=entry.origins[0]))
        except Exception as exc:   # degrade, never die
            out["flags"].append(f"reconstruct-failed:{path}:{exc}")
    timings["reconstruct"] = time.monotonic() - t0
    (scratch / "partial_reconstruct.json").write_text(json.dumps(
        {"entries": [m.entry_path for m in merged],
         "clean": sum(1 for m in merged if m.reparse_ok)}))

    t0 = time.monotonic()
    obf_flags = []
    for program in merged:
        if not program.text.strip():
            continue
        vector = extract_obf_features(program.text)
        label, score = classify_obfuscated(vector)
        if label == "obfuscated":
            obf_flags.append({"entry": program.entry_path, "score": score})
    out["obfuscation"] = {"obfuscated": bool(obf_flags),
                          "entries": obf_flags}
    timings["obfuscation"] = time.monotonic() - t0
    (scratch / "partial_obfuscation.json").write_text(
        json.dumps(out["obfuscation"]))

    out["merged"] = merged
    if obf_flags:
        return out   # obfuscated packages skip the static screen

    t0 = time.monotonic()
    phase_sequences: dict[str, ApiCallSequence] = {}
    kb = config.kb or default_kb()
    entry_phase = {path: e.phase for path, e in entries.entry_files.items()}
    for program in merged:
        phase = entry_phase.get(program.entry_path, "import")
        seq = staticseq_mod.extract_static_sequence(
            program, kb, phase=phase, package_id=archive.name)
        if phase not in phase_sequences:
            phase_sequences[phase] = seq
        else:
            base = phase_sequences[phase]
            base.records.extend(seq.records)
            for i, record in enumerate(base.records):
                record.ordinal = i
    features = {}
    screens = {}
    for phase, seq in phase_sequences.items():
        vector = compute_behavior_features(seq, kb)
        suspicious, score = screen_suspicious(vector)
        features[phase] = vector.values
        screens[phase] = {"suspicious": suspicious, "score": score}
    out["sequences"] = phase_sequences
    out["features"] = features
    out["screens"] = screens
    timings["static-screen"] = time.monotonic() - t0
    return out


def _run_static_child(conn, archive, entries, config, scratch) -> None:
    try:
        result = _static_phase(archive, entries, config, Path(scratch))
        conn.send(pickle.dumps(result))
    except Exception as exc:     # pragma: no cover - defensive
        conn.send(pickle.dumps({"error": str(exc)}))
    finally:
        conn.close()


def _static_with_timeout(archive, entries, config, scratch,
                         report) -> dict | None:
    if config.static_timeout is None or config.static_timeout <= 0:
        return _static_phase(archive, entries, config, scratch)
    ctx = multiprocessing.get_context("fork")
    parent_conn, child_conn = ctx.Pipe(duplex=False)
    proc = ctx.Process(target=_run_static_child,
                       args=(child_conn, archive, entries, config,
                             str(scratch)))
    proc.start()
    child_conn.close()
    result = None
    if parent_conn.poll(config.static_timeout):
        result = pickle.loads(parent_conn.recv())
    proc.join(timeout=0.5)
    if proc.is_alive():
        proc.terminate()
        proc.join()
    if result is None:
        report.flags.append("static-timeout")
        for name in ("partial_reconstruct", "partial_obfuscation"):
            partial = scratch / f"{name}.json"
            if partial.exists():
                report.flags.append(
                    f"{name}:{partial.read_text(encoding='utf-8')}")
        return None
    if "error" in result:
        report.flags.append(f"static-error:{result['error']}")
        return None
    return result


def _load_source(source, config: ScanConfig) -> PackageArchive:
    if isinstance(source, PackageArchive):
        return source
    if isinstance(source, bytes):
        return load_archive(source)
    text = str(source)
    path = Path(text)
    if path.is_dir():
        return load_dir(path)
    if path.exists():
        return load_archive(path.read_bytes())
    if "@" in text and config.mirror_store is not None:
        name, _, version = text.rpartition("@")
        return load_archive(config.mirror_store.get_tarball(name, version))
    raise FileNotFoundError(text)


def scan(source, config: ScanConfig | None = None) -> Report:
    config = config or ScanConfig()
    kb = config.kb or default_kb()
    report = Report(package_id="")
    # models are process-wide singletons; warm them before forking the
    # timed child so it inherits them
    from .models import (default_obfuscation_model, default_screen_model,
                         default_url_model)
    default_obfuscation_model()
    default_screen_model()
    default_url_model()

    with tempfile.TemporaryDirectory(prefix="npmsift-scan-") as scratch_dir:
        scratch = Path(scratch_dir)
        t0 = time.monotonic()
        try:
            archive = _load_source(source, config)
        except Exception as exc:
            report.flags.append(f"load-failed:{exc}")
            report.package_id = str(source)
            return report
        report.package_id = f"{archive.name}@{archive.version}"
        report.flags.extend(archive.warnings)
        report.stage_timings["load"] = time.monotonic() - t0

        t0 = time.monotonic()
        entries = extract_entries(archive)
        report.flags.extend(entries.warnings)
        report.stage_timings["entries"] = time.monotonic() - t0

        t0 = time.monotonic()
        _shell_stage(archive, entries, report, scratch)
        report.stage_timings["shell"] = time.monotonic() - t0

        t0 = time.monotonic()
        static = _static_with_timeout(archive, entries, config, scratch,
                                      report)
        report.stage_timings["static"] = time.monotonic() - t0

        obfuscated = False
        suspicious = False
        sequences: dict[str, ApiCallSequence] = {}
        if static is not None:
            report.stage_timings.update(static.get("timings", {}))
            report.flags.extend(static.get("flags", []))
            report.obfuscation_verdict = static.get("obfuscation", {})
            obfuscated = report.obfuscation_verdict.get("obfuscated", False)
            sequences = static.get("sequences", {})
            screens = static.get("screens", {})
            suspicious = any(s["suspicious"] for s in screens.values())
            if screens:
                report.suspicious_score = max(
                    s["score"] for s in screens.values())
        else:
            report.needs_dynamic = True

        # dynamic routing: obfuscated packages always go dynamic; static
        # suspects go for confirmation
        t0 = time.monotonic()
        dynamic_seq = None
        want_dynamic = obfuscated or suspicious or static is None
        trace_lines = config.trace_lines
        trace_root = config.package_root_hint
        if want_dynamic and trace_lines is None \
                and config.dynamic_runner is not None:
            runner = config.dynamic_runner
            runner.timeout = config.dynamic_timeout
            pkg_dir = scratch / "pkgdir"
            pkg_dir.mkdir(exist_ok=True)
            for rel, data in archive.files.items():
                target = pkg_dir / rel
                target.parent.mkdir(parents=True, exist_ok=True)
                target.write_bytes(data)
            trace_lines, dyn_flags = run_dynamic(pkg_dir, runner)
            report.flags.extend(dyn_flags)
            trace_root = str(pkg_dir)
        if trace_lines is not None:
            dynamic_seq, stats = ingest_trace(
                trace_lines, package_root=trace_root,
                package_id=archive.name)
            if stats.malformed:
                report.flags.append(f"trace-malformed:{stats.malformed}")
            report.dynamic_digest = sequence_digest(dynamic_seq)
            report.stage_timings["dynamic"] = time.monotonic() - t0
        elif want_dynamic:
            report.needs_dynamic = True
            report.flags.append("dynamic-unavailable")

        t0 = time.monotonic()
        all_sequences = list(sequences.values())
        if dynamic_seq is not None:
            all_sequences.append(dynamic_seq)
        if sequences:
            combined = [r for seq in sequences.values()
                        for r in seq.records]
            report.static_digest = sequence_digest(
                ApiCallSequence(package_id=archive.name, phase="install",
                                records=combined))
        for seq in all_sequences:
            behavior = map_to_behaviors(seq, kb,
                                        command_judge=_command_judge)
            key = f"{seq.records[0].origin if seq.records else 'static'}:" \
                  f"{seq.phase}"
            report.behavior_subtypes[key] = behavior.subtypes()
            verdict = classify(behavior, kb.rules)
            report.categories |= verdict.labels
            for rule_id in verdict.matched_rules:
                if rule_id not in report.matched_rules:
                    report.matched_rules.append(rule_id)
                    report.evidence[rule_id] = [
                        {"api": w.api_id, "location": list(w.location)}
                        for w in verdict.evidence.get(rule_id, [])]
            for record in seq.records:
                if not kb.knows(record.api_id) \
                        and record.api_id not in report.unknown_apis:
                    report.unknown_apis.append(record.api_id)
        report.stage_timings["classify"] = time.monotonic() - t0

    if report.categories:
        report.needs_dynamic = False
    return report


@dataclass
class BatchSummary:
    total: int
    malicious: int
    benign: int
    needs_dynamic: int
    errors: int
    wall_seconds: float

    @property
    def per_day_estimate(self) -> float:
        if self.wall_seconds <= 0:
            return float("inf")
        return self.total / self.wall_seconds * 86400


def scan_batch(sources, config: ScanConfig | None = None,
               parallelism: int = 4) -> tuple[list[Report], BatchSummary]:
    """Scan many packages with bounded parallelism; one package's
    failure never poisons its siblings."""
    from concurrent.futures import ThreadPoolExecutor
    config = config or ScanConfig()
    start = time.monotonic()

    def one(src) -> Report:
        try:
            return scan(src, config)
        except Exception as exc:
            report = Report(package_id=str(src))
            report.flags.append(f"scan-error:{exc}")
            return report

    with ThreadPoolExecutor(max_workers=max(1, parallelism)) as pool:
        reports = list(pool.map(one, sources))
    wall = time.monotonic() - start
    summary = BatchSummary(
        total=len(reports),
        malicious=sum(1 for r in reports if r.categories),
        benign=sum(1 for r in reports
                   if not r.categories and not r.needs_dynamic
                   and not r.operational_error),
        needs_dynamic=sum(1 for r in reports if r.needs_dynamic),
        errors=sum(1 for r in reports if r.operational_error),
        wall_seconds=wall)
    return reports, summary


def emit_report(report: Report, format: str = "json",
                include_timings: bool = False) -> bytes:
    """Stable-keyed, machine-diffable JSON (timings are excluded by
    default because they vary run to run), or a human text summary."""
    if format == "json":
        payload = {
            "package": report.package_id,
            "categories": sorted(report.categories),
            "matched_rules": report.matched_rules,
            "evidence": report.evidence,
            "behavior_subtypes": report.behavior_subtypes,
            "shell_verdicts": [vars(v) for v in report.shell_verdicts],
            "obfuscation": report.obfuscation_verdict,
            "static_digest": report.static_digest,
            "dynamic_digest": report.dynamic_digest,
            "suspicious_score": report.suspicious_score,
            "unknown_apis": report.unknown_apis,
            "flags": sorted(report.flags),
            "needs_dynamic": report.needs_dynamic,
            "verdict": ("malicious" if report.categories else
                        "needs-dynamic" if report.needs_dynamic
                        else "benign"),
        }
        if include_timings:
            payload["stage_timings"] = report.stage_timings
        return (json.dumps(payload, sort_keys=True, indent=1) + "\n").encode()
    lines = [f"package: {report.package_id}"]
    verdict = ("MALICIOUS " + ",".join(sorted(report.categories))
               if report.categories else
               "NEEDS-DYNAMIC" if report.needs_dynamic else "benign")
    lines.append(f"verdict: {verdict}")
    for rule in report.matched_rules:
        lines.append(f"  rule {rule}")
        for item in report.evidence.get(rule, []):
            lines.append(f"    {item['api']} @ {item['location']}")
    for sv in report.shell_verdicts:
        if sv.categories:
            lines.append(f"  shell {sv.categories}: {sv.command!r}")
    if report.flags:
        lines.append("flags: " + ", ".join(sorted(report.flags)))
    return ("\n".join(lines) + "\n").encode()
