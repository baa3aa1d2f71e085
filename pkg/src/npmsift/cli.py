"""Command-line interface.

One executable with subcommands per surface: package scanning, batch
mode, the registry mirror, and debug entry points for the individual
stages (reconstruct, shell, obf, staticseq, ingest, mltrain/mlpredict).
Scan exit codes: 0 benign, 2 malicious, 3 needs-dynamic, 1 error.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .pipeline import (EXIT_ERROR, ScanConfig, emit_report, scan,
                       scan_batch)


def _kb_from_dir(kb_dir: str | None):
    if kb_dir is None:
        return None
    from .kb import load_kb
    base = Path(kb_dir)
    return load_kb(api_table_file=base / "api_table.txt",
                   rule_file=base / "behavior_rules.txt",
                   sensitive_path_file=base / "sensitive_paths.txt")


def _scan_config(args) -> ScanConfig:
    config = ScanConfig(
        static_timeout=args.static_timeout,
        dynamic_timeout=args.dynamic_timeout,
        kb=_kb_from_dir(args.kb),
    )
    if getattr(args, "trace", None):
        config.trace_lines = Path(args.trace).read_text(
            encoding="utf-8").splitlines()
    if getattr(args, "dynamic_runner", None):
        from .traces import RunnerConfig
        config.dynamic_runner = RunnerConfig(
            command_template=args.dynamic_runner.split())
    if getattr(args, "mirror_store", None):
        from .mirror import MirrorStore
        config.mirror_store = MirrorStore(args.mirror_store)
    return config


def cmd_scan(args) -> int:
    config = _scan_config(args)
    report = scan(args.package, config)
    rendered = emit_report(report, format=args.format,
                           include_timings=args.timings)
    if args.out:
        Path(args.out).write_bytes(rendered)
    else:
        sys.stdout.buffer.write(rendered)
    return report.exit_code


def cmd_batch(args) -> int:
    sources = [line.strip() for line in
               Path(args.listfile).read_text(encoding="utf-8").splitlines()
               if line.strip()]
    config = _scan_config(args)
    reports, summary = scan_batch(sources, config, parallelism=args.jobs)
    out_dir = Path(args.out) if args.out else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    for report in reports:
        rendered = emit_report(report, format="json")
        if out_dir:
            safe = report.package_id.replace("/", "_").replace("@", "_")
            (out_dir / f"{safe}.json").write_bytes(rendered)
    print(f"scanned={summary.total} malicious={summary.malicious} "
          f"benign={summary.benign} needs_dynamic={summary.needs_dynamic} "
          f"errors={summary.errors} "
          f"throughput={summary.per_day_estimate:.0f}/day")
    return 0 if summary.errors == 0 else EXIT_ERROR


def cmd_mirror_sync(args) -> int:
    from .mirror import MirrorStore, sync_loop
    store = MirrorStore(args.store)
    cursor = sync_loop(args.feed, store,
                       cursor=args.cursor, batch_limit=args.batch)
    print(f"cursor={cursor} entries={len(store.entries)}")
    return 0


def cmd_mirror_serve(args) -> int:
    from .mirror import MirrorStore, make_server
    store = MirrorStore(args.store)
    server = make_server(store, host=args.host, port=args.port)
    host, port = server.server_address[:2]
    print(f"serving {len(store.entries)} entries on {host}:{port}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


def cmd_reconstruct(args) -> int:
    from .archive import load_archive, load_dir
    from .reconstruct import reconstruct
    path = Path(args.pkg)
    archive = load_dir(path) if path.is_dir() \
        else load_archive(path.read_bytes())
    merged = reconstruct(archive, args.entry,
                         recursion_limit=args.recursion)
    if args.out:
        Path(args.out).write_text(merged.text, encoding="utf-8")
    else:
        sys.stdout.write(merged.text)
    if merged.unresolved_imports:
        print(f"\n// unresolved: {merged.unresolved_imports}",
              file=sys.stderr)
    return 0 if merged.reparse_ok else EXIT_ERROR


def cmd_shell(args) -> int:
    from .shellcmd import (classify_command, extract_urls, match_rules,
                           parse_command)
    from .urlfeat import UrlError, judge_url
    ast = parse_command(args.cmd)
    hits = match_rules(ast)
    verdicts = []
    for url in extract_urls(ast):
        try:
            verdicts.append(judge_url(url))
        except UrlError:
            continue
    categories = classify_command(hits, verdicts)
    for hit in hits:
        print(f"{hit.rule_id}\t{hit.matched_token}\t@{hit.position}")
    for verdict in verdicts:
        print(f"url\t{verdict.url}\t{verdict.label}\t{verdict.score:.3f}")
    print("categories\t" + (",".join(sorted(categories)) or "-"))
    return 2 if categories else 0


def cmd_obf(args) -> int:
    from .obfuscation import (FEATURE_NAMES, classify_obfuscated,
                              extract_obf_features)
    source = Path(args.file).read_text(encoding="utf-8", errors="replace")
    vector = extract_obf_features(source)
    label, score = classify_obfuscated(vector)
    for name, value in zip(FEATURE_NAMES, vector.as_list()):
        print(f"{name}\t{value:.6g}")
    print(f"verdict\t{label}\t{score:.3f}")
    return 2 if label == "obfuscated" else 0


def cmd_staticseq(args) -> int:
    from .reconstruct import MergedProgram
    from .staticseq import extract_static_sequence
    text = Path(args.file).read_text(encoding="utf-8", errors="replace")
    program = MergedProgram(
        entry_path=args.file, entry_origin="main", module_system="commonjs",
        text=text, rename_map={}, unresolved_imports=[],
        parse_fallback_spans=[])
    seq = extract_static_sequence(program)
    for record in seq.records:
        print(json.dumps({
            "ts": record.ordinal, "api": record.api_id,
            "args": record.parameter_summary,
            "stack": [f"{record.location[0]}:{record.location[1]}"],
            "phase": seq.phase, "pid": 0}, sort_keys=True))
    return 0


def cmd_ingest(args) -> int:
    from .kb import classify, map_to_behaviors
    from .traces import ingest_trace
    lines = Path(args.trace).read_text(encoding="utf-8").splitlines()
    seq, stats = ingest_trace(lines, package_root=args.root)
    behavior = map_to_behaviors(seq)
    verdict = classify(behavior)
    print(f"records={len(seq.records)} malformed={stats.malformed} "
          f"filtered={stats.filtered}")
    print("subtypes\t" + ",".join(behavior.subtypes()))
    print("categories\t" + (",".join(sorted(verdict.labels)) or "-"))
    return 2 if verdict.labels else 0


def _read_csv(path: str) -> tuple[list[str], list[tuple[list[float], int]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = []
        for row in reader:
            *features, label = row
            rows.append(([float(x) for x in features], int(label)))
    return header[:-1], rows


def cmd_mltrain(args) -> int:
    from . import mlcore
    from .mlcore import TrainParams
    schema, rows = _read_csv(args.csv)
    model = mlcore.train(rows, TrainParams(n_trees=args.trees,
                                           seed=args.seed),
                         feature_schema=schema)
    mlcore.save(model, args.out)
    print(f"trained {args.trees} trees on {len(rows)} rows -> {args.out}")
    return 0


def cmd_mlpredict(args) -> int:
    from . import mlcore
    model = mlcore.load(args.model)
    _, rows = _read_csv(args.csv)
    correct = 0
    for vector, label in rows:
        pred, score = model.predict_one(vector)
        print(f"{pred}\t{score:.4f}")
        correct += int(pred == label)
    print(f"# accuracy {correct / len(rows):.4f} over {len(rows)}",
          file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="npmsift",
        description="static+dynamic malicious npm package scanner")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scan", help="scan one package")
    p.add_argument("package", help=".tgz path, package dir, or name@version"
                                   " with --mirror-store")
    p.add_argument("--static-timeout", type=float, default=300.0)
    p.add_argument("--dynamic-timeout", type=float, default=600.0)
    p.add_argument("--kb", help="directory with api_table.txt,"
                                " behavior_rules.txt, sensitive_paths.txt")
    p.add_argument("--trace", help="pre-recorded dynamic trace (jsonl)")
    p.add_argument("--dynamic-runner",
                   help="sandbox runner command; use {package_dir} and"
                        " {trace_out} placeholders")
    p.add_argument("--mirror-store")
    p.add_argument("--out")
    p.add_argument("--format", choices=("json", "text"), default="json")
    p.add_argument("--timings", action="store_true")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("batch", help="scan a list of packages")
    p.add_argument("listfile")
    p.add_argument("--jobs", type=int, default=4)
    p.add_argument("--static-timeout", type=float, default=300.0)
    p.add_argument("--dynamic-timeout", type=float, default=600.0)
    p.add_argument("--kb")
    p.add_argument("--out", help="directory for per-package reports")
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("mirror-sync", help="follow a change feed into a"
                                           " local store")
    p.add_argument("--feed", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--cursor", type=int, default=None)
    p.add_argument("--batch", type=int, default=100)
    p.set_defaults(func=cmd_mirror_sync)

    p = sub.add_parser("mirror-serve", help="serve stored tarballs")
    p.add_argument("--store", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8750)
    p.set_defaults(func=cmd_mirror_serve)

    p = sub.add_parser("reconstruct", help="merge an entry file and its"
                                           " dependencies")
    p.add_argument("--pkg", required=True)
    p.add_argument("--entry", required=True)
    p.add_argument("--recursion", type=int, default=2)
    p.add_argument("--out")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("shell", help="match one command against the rules")
    p.add_argument("--cmd", required=True)
    p.set_defaults(func=cmd_shell)

    p = sub.add_parser("obf", help="obfuscation features and verdict")
    p.add_argument("file")
    p.set_defaults(func=cmd_obf)

    p = sub.add_parser("staticseq", help="api call sequence of a merged"
                                         " file")
    p.add_argument("file")
    p.set_defaults(func=cmd_staticseq)

    p = sub.add_parser("ingest", help="ingest a dynamic trace")
    p.add_argument("trace")
    p.add_argument("--root", default="/package")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("mltrain", help="train a tree ensemble from csv")
    p.add_argument("--csv", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_mltrain)

    p = sub.add_parser("mlpredict", help="score csv rows with a model")
    p.add_argument("--model", required=True)
    p.add_argument("--csv", required=True)
    p.set_defaults(func=cmd_mlpredict)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BrokenPipeError:
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
