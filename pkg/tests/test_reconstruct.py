from __future__ import annotations

import json

import pytest

from npmsift.archive import PackageArchive, Manifest
from npmsift.reconstruct import (classify_specifier,
                                 reconstruct, resolve_specifier,
                                 sanitize_file_stem)


def make_archive(files: dict[str, str], manifest: dict | None = None):
    manifest = manifest or {"name": "t", "version": "1.0.0"}
    raw = {p: s.encode() for p, s in files.items()}
    raw.setdefault("package.json", json.dumps(manifest).encode())
    return PackageArchive(name=manifest.get("name", "t"),
                          version=manifest.get("version", "0.0.0"),
                          files=raw, manifest=Manifest.from_json(manifest))


def test_identity_no_imports_exports():
    src = "const a = 1;\nfunction work() { return a + 2; }\nwork();\n"
    archive = make_archive({"index.js": src})
    merged = reconstruct(archive, "index.js")
    assert merged.text == src
    assert merged.reparse_ok
    assert merged.unresolved_imports == []


def test_cjs_require_merges_with_unified_names():
    archive = make_archive({
        "a.js": "const u = require('./utils'); u.f();",
        "utils.js": "exports.f = () => {};",
    })
    merged = reconstruct(archive, "a.js")
    assert "export_utils_f" in merged.text
    assert "var export_utils_f = () => {}" in merged.text
    assert "const u = ({ f: export_utils_f })" in merged.text
    assert merged.reparse_ok
    assert merged.rename_map["utils.js::f"] == "export_utils_f"


def test_special_chars_in_filename_become_dollar():
    archive = make_archive({
        "a.js": "const m = require('./my-lib'); m.bar();",
        "my-lib.js": "exports.bar = function() { return 1; };",
    })
    merged = reconstruct(archive, "a.js")
    assert "export_my$lib_bar" in merged.text
    assert sanitize_file_stem("my-lib.js") == "my$lib"


def test_recursion_limit_leaves_deep_import_unresolved():
    archive = make_archive({
        "a.js": "const b = require('./b'); b.x();",
        "b.js": "const c = require('./c'); exports.x = () => c.y();",
        "c.js": "const d = require('./d'); exports.y = () => d.z();",
        "d.js": "exports.z = () => 42;",
    })
    merged = reconstruct(archive, "a.js", recursion_limit=2)
    assert ("d.js", "recursion-limit") in merged.unresolved_imports
    assert "require('./d')" in merged.text
    assert "export_c_y" in merged.text
    assert merged.reparse_ok


def test_esm_import_and_export():
    archive = make_archive({
        "main.mjs": "import { f, g as h } from './lib.mjs';\nf(); h();",
        "lib.mjs": "export function f() {}\nexport const g = 1;",
    })
    merged = reconstruct(archive, "main.mjs")
    assert "function export_lib_f()" in merged.text
    assert "const export_lib_g = 1" in merged.text
    assert "const f = export_lib_f;" in merged.text
    assert "const h = export_lib_g;" in merged.text
    assert merged.reparse_ok


def test_esm_default_export_and_import():
    archive = make_archive({
        "main.mjs": "import lib from './lib.mjs';\nlib();",
        "lib.mjs": "export default function() { return 1; }",
    })
    merged = reconstruct(archive, "main.mjs")
    assert "var export_lib_default = function()" in merged.text
    assert "const lib = export_lib_default;" in merged.text
    assert merged.reparse_ok


def test_module_exports_assignment_maps_to_default():
    archive = make_archive({
        "a.js": "const lib = require('./lib'); lib();",
        "lib.js": "module.exports = function() { return 9; };",
    })
    merged = reconstruct(archive, "a.js")
    assert "var export_lib_default = function()" in merged.text
    assert "const lib = export_lib_default;" in merged.text
    assert merged.reparse_ok


def test_module_exports_object_mirrors_members():
    archive = make_archive({
        "a.js": "const lib = require('./lib'); lib.go();",
        "lib.js": "module.exports = { go() {}, n: 1 };",
    })
    merged = reconstruct(archive, "a.js")
    assert "var export_lib_go = export_lib_default.go;" in merged.text
    assert merged.reparse_ok


def test_circular_dependency_terminates():
    archive = make_archive({
        "a.js": "const b = require('./b'); exports.fa = () => b.fb();",
        "b.js": "const a = require('./a'); exports.fb = () => a.fa();",
    })
    merged = reconstruct(archive, "a.js")
    assert "circular import" in merged.text
    assert merged.reparse_ok


def test_same_file_inlined_once():
    archive = make_archive({
        "a.js": ("const x = require('./c'); const y = require('./c');\n"
                 "x.f(); y.f();"),
        "c.js": "exports.f = () => {};",
    })
    merged = reconstruct(archive, "a.js")
    assert merged.text.count("var export_c_f") == 1
    assert merged.reparse_ok


def test_local_name_collision_gets_suffix():
    archive = make_archive({
        "a.js": "const helper = 1; const b = require('./b'); b.f();",
        "b.js": "const helper = 2; exports.f = () => helper;",
    })
    merged = reconstruct(archive, "a.js")
    assert "const helper = 1" in merged.text
    assert "const helper_f2 = 2" in merged.text
    assert "() => helper_f2" in merged.text
    assert merged.reparse_ok


def test_unified_name_collision_tiebreak():
    # a-b.js and a$b.js both sanitize to a$b
    archive = make_archive({
        "main.js": ("const x = require('./a-b'); const y = require('./a$b');"
                    " x.v; y.v;"),
        "a-b.js": "exports.v = 1;",
        "a$b.js": "exports.v = 2;",
    })
    merged = reconstruct(archive, "main.js")
    assert "var export_a$b_v = 1" in merged.text
    assert "var export_a$b_v_2 = 2" in merged.text
    assert merged.reparse_ok
    values = list(merged.rename_map.values())
    assert len(values) == len(set(values))


def test_builtin_and_external_specifiers():
    archive = make_archive({
        "a.js": ("const fs = require('fs');\nconst lp = require('left-pad');"
                 "\nfs.readFileSync('/etc/passwd'); lp(1);"),
    })
    merged = reconstruct(archive, "a.js")
    assert "require('fs')" in merged.text
    assert "require('left-pad')" in merged.text
    assert ("left-pad", "external") in merged.unresolved_imports
    assert merged.reparse_ok


def test_dynamic_require_recorded_not_evaluated():
    archive = make_archive({
        "a.js": "const name = './x'; const m = require(name);",
        "x.js": "exports.q = 1;",
    })
    merged = reconstruct(archive, "a.js")
    assert any(reason == "dynamic-specifier"
               for _, reason in merged.unresolved_imports)
    assert "require(name)" in merged.text


def test_unparseable_dep_inlined_with_fallback_span():
    archive = make_archive({
        "a.js": "const b = require('./broken'); b;",
        "broken.js": "function ( { this is not js",
    })
    merged = reconstruct(archive, "a.js")
    assert len(merged.parse_fallback_spans) == 1
    s, e = merged.parse_fallback_spans[0]
    assert "this is not js" in merged.text[s:e]
    assert not merged.reparse_ok


def test_esm_import_of_builtin_normalized():
    archive = make_archive({
        "m.mjs": "import fs from 'node:fs';\nimport { exec } from "
                 "'child_process';\nfs.readFileSync('/x'); exec('ls');",
    })
    merged = reconstruct(archive, "m.mjs")
    assert "const fs = require('node:fs');" in merged.text
    assert "const { exec } = require('child_process');" in merged.text
    assert merged.reparse_ok


def test_export_specifier_list():
    archive = make_archive({
        "main.mjs": "import { a } from './lib.mjs'; a();",
        "lib.mjs": "const a = () => 1;\nconst b = 2;\nexport { a, b as c };",
    })
    merged = reconstruct(archive, "main.mjs")
    # lib's local `a` collides with the entry's import binding `a`
    assert "var export_lib_a = a_f2;" in merged.text
    assert "var export_lib_c = b;" in merged.text
    assert "const a = export_lib_a;" in merged.text
    assert merged.reparse_ok


def test_reexport_chain():
    archive = make_archive({
        "main.mjs": "import { f } from './mid.mjs'; f();",
        "mid.mjs": "export { f } from './leaf.mjs';",
        "leaf.mjs": "export function f() { return 7; }",
    })
    merged = reconstruct(archive, "main.mjs")
    assert "function export_leaf_f()" in merged.text
    assert "var export_mid_f = export_leaf_f;" in merged.text
    assert "const f = export_mid_f;" in merged.text
    assert merged.reparse_ok


def test_sensitive_callees_preserved_across_merge():
    """The merged program must contain every sensitive callee present in
    the constituent files (behavior preservation surrogate)."""
    files = {
        "index.js": ("const h = require('./net');\n"
                     "const os = require('os');\n"
                     "os.userInfo();\nh.send('x');"),
        "net.js": ("const https = require('https');\n"
                   "exports.send = d => https.request('http://x.test', "
                   "{method: 'POST'});"),
    }
    archive = make_archive(files)
    merged = reconstruct(archive, "index.js")
    for callee in ("os.userInfo", "https.request"):
        assert callee in merged.text
    assert merged.reparse_ok


def test_classify_and_resolve_specifier():
    archive = make_archive({"lib/a.js": "1;", "lib/b.js": "1;"})
    assert resolve_specifier(archive, "lib/a.js", "./b") == "lib/b.js"
    assert resolve_specifier(archive, "lib/a.js", "fs") == "builtin"
    assert resolve_specifier(archive, "lib/a.js", "left-pad") == "external"
    assert classify_specifier("node:path") == "builtin"
    assert classify_specifier("@scope/pkg") == "external"


def test_mirror_resolves_external_package():
    dep_files = {"package.json": json.dumps({"name": "left-pad",
                                             "main": "index.js"}).encode(),
                 "index.js": b"module.exports = function leftPad(s) "
                             b"{ return s; };"}
    dep = PackageArchive("left-pad", "1.0.0", dep_files,
                         Manifest.from_json({"name": "left-pad",
                                             "main": "index.js"}))

    def mirror(name):
        return dep if name == "left-pad" else None

    archive = make_archive({"a.js": "const lp = require('left-pad'); lp(1);"})
    merged = reconstruct(archive, "a.js", mirror=mirror)
    assert "leftPad" in merged.text
    assert ("left-pad", "external") not in merged.unresolved_imports
    assert merged.reparse_ok


def test_missing_entry_raises():
    archive = make_archive({"a.js": "1;"})
    with pytest.raises(FileNotFoundError):
        reconstruct(archive, "nope.js")
