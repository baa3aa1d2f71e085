"""Deterministic fixture corpora.

Everything here is seeded generation: synthetic npm packages for
reconstructor stress, plain/obfuscated source pairs for the obfuscation
classifier, labeled URLs for the URL classifier and labeled behavior
vectors for the suspicious-package screen. Generators are part of the
artifact so training and evaluation are reproducible offline.
"""
from __future__ import annotations

import json
import random

from .archive import Manifest, PackageArchive
from .obfuscator import obfuscate

_WORDS = [
    "alpha", "batch", "cache", "delta", "entry", "field", "group", "handle",
    "index", "joint", "kernel", "layer", "merge", "nodes", "order", "parse",
    "queue", "range", "scale", "token", "utils", "value", "walker", "extra",
    "buffer", "config", "driver", "engine", "filter", "graph", "helper",
]

_SENSITIVE_SNIPPETS = [
    ("const os = require('os');", "os.userInfo();"),
    ("const os = require('os');", "os.hostname();"),
    ("const fs = require('fs');", "fs.readFileSync('/etc/passwd');"),
    ("const fs = require('fs');", "fs.writeFileSync('/tmp/d.bin', data);"),
    ("const https = require('https');",
     "https.request('https://collect.example.test/u');"),
    ("const cp = require('child_process');", "cp.exec('uname -a');"),
    ("", "eval(payload);"),
]


def _ident(rng: random.Random, used: set[str]) -> str:
    for _ in range(20):
        name = rng.choice(_WORDS) + rng.choice(["", "X", "2", "Item", "Map"])
        if name not in used:
            used.add(name)
            return name
    name = f"{rng.choice(_WORDS)}{len(used)}"
    used.add(name)
    return name


def _filler_statements(rng: random.Random, used: set[str]) -> list[str]:
    out = []
    for _ in range(rng.randint(1, 4)):
        kind = rng.randrange(8)
        a, b = _ident(rng, used), _ident(rng, used)
        if kind == 0:
            out.append(f"const {a} = {rng.randint(0, 99)};")
        elif kind == 1:
            out.append(f"function {a}(x, y) {{ return x * y + "
                       f"{rng.randint(1, 9)}; }}")
        elif kind == 2:
            out.append(f"let {a} = '{rng.choice(_WORDS)} text';")
        elif kind == 3:
            out.append(f"const {a} = (n) => n + {rng.randint(1, 5)};")
        elif kind == 4:
            out.append(f"class {a} {{ constructor(v) {{ this.v = v; }} "
                       f"size() {{ return this.v.length; }} }}")
        elif kind == 5:
            out.append(f"for (let i = 0; i < {rng.randint(2, 6)}; i++) "
                       f"{{ {b}_total = (typeof {b}_total === 'number' ? "
                       f"{b}_total : 0) + i; }}")
        elif kind == 6:
            out.append(f"const {a} = `tpl ${{{rng.randint(1, 9)} + 1}}`;")
        else:
            out.append(f"try {{ JSON.parse('{{}}'); }} catch (err) "
                       f"{{ console.error(err); }}")
    return out


def _dep_module(rng: random.Random, esm: bool,
                imports: list[tuple[str, str]]) -> tuple[str, list[str]]:
    """Generate one dependency file; returns (source, export_names)."""
    used: set[str] = set()
    lines: list[str] = []
    for local, spec in imports:
        if esm:
            lines.append(f"import {local} from '{spec}';")
        else:
            lines.append(f"const {local} = require('{spec}');")
        used.add(local)
    if rng.random() < 0.35:
        req, call = rng.choice(_SENSITIVE_SNIPPETS)
        if req and req.split()[1] not in used:
            lines.append(req)
            used.add(req.split()[1])
        lines.append(f"function probe() {{ {call} }}")
        used.add("probe")
    lines.extend(_filler_statements(rng, used))
    exports = []
    for _ in range(rng.randint(1, 3)):
        name = _ident(rng, used)
        exports.append(name)
        body = f"function {name}(v) {{ return v + {rng.randint(1, 7)}; }}"
        if esm:
            lines.append(f"export {body}")
        else:
            lines.append(body)
            lines.append(f"exports.{name} = {name};")
    if esm and rng.random() < 0.3:
        lines.append(f"export default function(v) {{ return v * 2; }}")
        exports.append("default")
    return "\n".join(lines) + "\n", exports


def generate_package(seed: int, broken: bool = False) -> PackageArchive:
    """One synthetic package: entry file(s) plus a small dependency
    graph, mixed module systems, occasional cycles and sensitive calls."""
    rng = random.Random(seed)
    pkg_esm = rng.random() < 0.4
    ext = ".mjs" if pkg_esm and rng.random() < 0.5 else ".js"
    esm = pkg_esm or ext == ".mjs"
    files: dict[str, bytes] = {}

    dep_names = [f"lib/{rng.choice(_WORDS)}{i}{ext}"
                 for i in range(rng.randint(0, 4))]
    dep_exports: dict[str, list[str]] = {}
    for i, dep in enumerate(dep_names):
        child_imports = []
        if i + 1 < len(dep_names) and rng.random() < 0.6:
            target = dep_names[i + 1]
            child_imports.append(
                (f"dep{i + 1}", "./" + target.split("/")[1]))
        src, exports = _dep_module(rng, esm, child_imports)
        files[dep] = src.encode()
        dep_exports[dep] = exports

    if len(dep_names) >= 2 and rng.random() < 0.25:
        # introduce a cycle between the first two deps
        first, second = dep_names[0], dep_names[1]
        extra = (f"\n{'import back from' if esm else 'const back = require('}"
                 f"'./{first.split('/')[1]}'{'' if esm else ')'};\n")
        files[second] = files[second] + extra.encode()

    used: set[str] = set()
    entry_lines = []
    for i, dep in enumerate(dep_names):
        if rng.random() < 0.8:
            local = f"m{i}"
            spec = "./" + dep[:-len(ext)] if rng.random() < 0.5 else "./" + dep
            if esm:
                entry_lines.append(f"import * as {local} from '{spec}';")
            else:
                entry_lines.append(f"const {local} = require('{spec}');")
            exports = dep_exports[dep]
            if exports:
                pick = rng.choice([e for e in exports if e != "default"]
                                  or ["default"])
                if pick != "default":
                    entry_lines.append(f"{local}.{pick}(1);")
            used.add(local)
    if rng.random() < 0.4:
        req, call = rng.choice(_SENSITIVE_SNIPPETS)
        if req and req.split()[1] not in used:
            entry_lines.append(req)
            used.add(req.split()[1])
        entry_lines.append(call.replace("data", "'x'").replace(
            "payload", "'1 + 1'"))
    if rng.random() < 0.3:
        entry_lines.append(f"const ext = require('pkg-{rng.randint(0, 99)}');")
    entry_lines.extend(_filler_statements(rng, used))
    entry = "index" + ext
    files[entry] = ("\n".join(entry_lines) + "\n").encode()

    manifest: dict = {
        "name": f"synth-{seed}",
        "version": f"1.{rng.randint(0, 9)}.{rng.randint(0, 9)}",
        "main": entry,
    }
    if pkg_esm and ext == ".js":
        manifest["type"] = "module"
    if rng.random() < 0.4:
        setup = "setup" + ext
        src, _ = _dep_module(rng, esm, [])
        files[setup] = src.encode()
        manifest["scripts"] = {"preinstall": f"node {setup}"}
    if broken:
        bad = "lib/corrupt" + ext
        files[bad] = b"function ( { this is deliberately broken :::\n"
        files[entry] += (
            f"{'import bad from' if esm else 'const bad = require('}"
            f"'./{bad}'{'' if esm else ')'};\n").encode()

    files["package.json"] = json.dumps(manifest).encode()
    return PackageArchive(name=manifest["name"], version=manifest["version"],
                          files=files,
                          manifest=Manifest.from_json(manifest))


def generate_reconstruction_corpus(count: int = 150,
                                   seed: int = 11,
                                   broken: int = 1) -> list[PackageArchive]:
    """`count` packages, the last `broken` of them carrying a
    deliberately unparseable dependency."""
    return [generate_package(seed + i, broken=i >= count - broken)
            for i in range(count)]


# -- plain / obfuscated sources ------------------------------------------------

def plain_source(seed: int) -> str:
    """Readable module in one of several realistic shapes: tiny
    re-export one-liners, ordinary utility modules, and the large
    many-function files big packages ship."""
    rng = random.Random(seed)
    used: set[str] = set()
    shape = rng.randrange(6)
    if shape == 0:
        return rng.choice([
            "module.exports = require('./lib/impl');\n",
            "module.exports = function(x) { return x + 1; };\n",
            "exports.version = '1.0.2';\n",
            "module.exports = { enabled: true };\n",
        ])
    if shape == 1:
        name = _ident(rng, used)
        return (f"'use strict';\nconst {name} = require('./core');\n"
                f"module.exports = {name};\n")
    lines = ["// small utility module"]
    blocks = rng.randint(1, 3) if shape < 5 else rng.randint(15, 40)
    for _ in range(blocks):
        lines.extend(_filler_statements(rng, used))
    if shape in (2, 5) and rng.random() < 0.5:
        # terminal color tables and regex escapes are ordinary plain code
        entries = ", ".join(
            f"c{i}: '\\u001b[{30 + i}m'" for i in range(rng.randint(3, 16)))
        lines.append(f"const styles = {{ {entries} }};")
    name = _ident(rng, used)
    lines.append(f"function {name}(items) {{")
    lines.append("  const out = [];")
    lines.append("  for (const item of items) {")
    lines.append(f"    out.push(item + {rng.randint(1, 9)});")
    lines.append("  }")
    lines.append("  return out;")
    lines.append("}")
    if shape == 3:
        lines.append(f"class Wrapper {{ run(v) {{ return {name}(v); }} }}")
        lines.append("module.exports = new Wrapper();")
    else:
        lines.append(f"module.exports = {{ {name} }};")
    return "\n".join(lines) + "\n"


def obfuscation_corpus(pairs: int = 60,
                       seed: int = 23) -> list[tuple[str, int]]:
    """Labeled sources: (text, 1) obfuscated, (text, 0) plain."""
    rows: list[tuple[str, int]] = []
    for i in range(pairs):
        src = plain_source(seed + i)
        rows.append((src, 0))
        rows.append((obfuscate(src, seed=seed + i), 1))
    return rows


# -- URLs ---------------------------------------------------------------------

_BENIGN_HOST_WORDS = ["files", "static", "assets", "api", "mail", "news",
                      "shop", "blog", "docs", "img", "data", "code"]
_BENIGN_DOMAINS = ["github.com", "npmjs.org", "nodejs.org", "example.org",
                   "googleapis.com", "cloudfront.net", "wikipedia.org",
                   "jsdelivr.net", "unpkg.com", "python.org"]
_ABUSED_TLDS = ["xyz", "top", "tk", "icu", "club", "work", "gq", "ml"]


def url_corpus(count: int = 400, seed: int = 31) -> list[tuple[str, int]]:
    """Labeled URLs: benign word-built hosts vs gibberish exfil hosts."""
    rng = random.Random(seed)
    rows: list[tuple[str, int]] = []
    for _ in range(count // 2):
        domain = rng.choice(_BENIGN_DOMAINS)
        sub = rng.choice(_BENIGN_HOST_WORDS)
        host = f"{sub}.{domain}" if rng.random() < 0.6 else domain
        rows.append((f"https://{host}/{rng.choice(_BENIGN_HOST_WORDS)}", 0))
    consonants = "bcdfghjklmnpqrstvwxz"
    alphabet = consonants + "0123456789"
    for _ in range(count - count // 2):
        label = "".join(rng.choice(alphabet)
                        for _ in range(rng.randint(8, 20)))
        tld = rng.choice(_ABUSED_TLDS)
        mid = rng.choice(["oastify", "burpcollab", "requestbin", "dnslog",
                          "exfil"])
        host = f"{label}.{mid}.{tld}"
        rows.append((f"http://{host}/{label[:4]}", 1))
    rng.shuffle(rows)
    return rows


# -- behavior feature vectors ---------------------------------------------------

def behavior_vector_corpus(count: int = 240,
                           seed: int = 41) -> list[tuple[list[float], int]]:
    """Labeled 12-dim behavior vectors for the static screen: malicious
    rows show ordered-pair combinations, benign rows at most isolated
    low-risk flags."""
    rng = random.Random(seed)
    rows: list[tuple[list[float], int]] = []
    malicious_combos = [
        {0, 1}, {2}, {3}, {4}, {5}, {6}, {7}, {0, 11}, {2, 10}, {3, 10},
        {0, 1, 8}, {5, 10}, {7, 10},
    ]
    benign_combos = [set(), {1}, {8}, {10}, {11}, {1, 8}, {8, 10}]
    for _ in range(count // 2):
        combo = rng.choice(malicious_combos)
        vec = [1.0 if i in combo else 0.0 for i in range(11)]
        vec.append(float(rng.randint(1, 4)) if 11 in combo or rng.random()
                   < 0.3 else 0.0)
        rows.append((vec, 1))
    for _ in range(count - count // 2):
        combo = rng.choice(benign_combos)
        vec = [1.0 if i in combo else 0.0 for i in range(11)]
        vec.append(float(rng.randint(1, 2)) if 11 in combo else 0.0)
        rows.append((vec, 0))
    rng.shuffle(rows)
    return rows
