"""Tarball loading, manifest parsing and entry-point extraction.

A package is analyzed through the five surfaces that run automatically
at install or import time: scripts, main, exports, imports and bin.
This module never evaluates any script text.
"""
from __future__ import annotations

import io
import json
import re
import shlex
import tarfile
from dataclasses import dataclass, field
from pathlib import PurePosixPath

INSTALL_SCRIPT_FIELDS = ("preinstall", "install", "postinstall", "prepare")

SCRIPT_FILENAME_RE = re.compile(r"^[\w./-]+\.(?:js|cjs|mjs|sh)$")

RESOLUTION_SUFFIXES = ("", ".js", ".cjs", ".mjs", ".json",
                       "/index.js", "/index.cjs", "/index.mjs")


class ArchiveError(Exception):
    pass


@dataclass
class Manifest:
    scripts: dict[str, str] = field(default_factory=dict)
    main_entry: str | None = None
    exports_entry: object = None      # str | dict | None
    imports_map: dict | None = None
    bin_map: dict[str, str] = field(default_factory=dict)
    declared_module_type: str = "unset"   # commonjs | esm | unset
    raw: dict = field(default_factory=dict)

    @classmethod
    def from_json(cls, data: dict) -> "Manifest":
        scripts = {}
        if isinstance(data.get("scripts"), dict):
            scripts = {str(k): str(v) for k, v in data["scripts"].items()}
        bin_map = {}
        bin_field = data.get("bin")
        if isinstance(bin_field, str):
            bin_map[str(data.get("name", "bin"))] = bin_field
        elif isinstance(bin_field, dict):
            bin_map = {str(k): str(v) for k, v in bin_field.items()}
        mod_type = data.get("type")
        declared = {"module": "esm", "commonjs": "commonjs"}.get(
            mod_type, "unset")
        main = data.get("main")
        return cls(
            scripts=scripts,
            main_entry=str(main) if isinstance(main, str) else None,
            exports_entry=data.get("exports"),
            imports_map=data.get("imports")
            if isinstance(data.get("imports"), dict) else None,
            bin_map=bin_map,
            declared_module_type=declared,
            raw=data,
        )


@dataclass
class PackageArchive:
    name: str
    version: str
    files: dict[str, bytes]
    manifest: Manifest
    warnings: list[str] = field(default_factory=list)

    def text(self, path: str) -> str:
        return self.files[path].decode("utf-8", "replace")


@dataclass
class EntryFile:
    path: str
    origins: list[str]
    phase: str            # install | import
    missing: bool = False


@dataclass
class EntryPointSet:
    script_commands: list[tuple[str, str]]
    entry_files: dict[str, EntryFile]
    warnings: list[str] = field(default_factory=list)


def _normalize_member(name: str) -> str | None:
    """Strip the leading tarball directory (npm uses `package/`) and
    reject escapes. Returns None for unsafe or non-content paths."""
    parts = PurePosixPath(name.replace("\\", "/")).parts
    if len(parts) > 1:
        parts = parts[1:]
    if not parts:
        return None
    if any(p in ("..", "") or p.startswith("/") for p in parts):
        return None
    if name.startswith("/") or ".." in PurePosixPath(name).parts:
        return None
    return "/".join(parts)


def load_archive(tarball: bytes) -> PackageArchive:
    """Unpack a gzip tarball in memory; a corrupt stream is a hard error,
    a missing manifest only a warning (malicious uploads are often
    malformed)."""
    warnings: list[str] = []
    files: dict[str, bytes] = {}
    try:
        with tarfile.open(fileobj=io.BytesIO(tarball), mode="r:*") as tf:
            for member in tf:
                if not member.isfile():
                    continue
                rel = _normalize_member(member.name)
                if rel is None:
                    warnings.append(f"unsafe-path:{member.name}")
                    continue
                fobj = tf.extractfile(member)
                if fobj is None:
                    continue
                files[rel] = fobj.read()
    except (tarfile.TarError, EOFError, OSError) as exc:
        raise ArchiveError(f"corrupt archive: {exc}") from exc
    return _build_archive(files, warnings)


def load_dir(root) -> PackageArchive:
    """Load an unpacked package directory (CLI convenience)."""
    from pathlib import Path
    rootp = Path(root)
    files: dict[str, bytes] = {}
    for p in sorted(rootp.rglob("*")):
        if p.is_file():
            files[p.relative_to(rootp).as_posix()] = p.read_bytes()
    return _build_archive(files, [])


def _build_archive(files: dict[str, bytes],
                   warnings: list[str]) -> PackageArchive:
    manifest = Manifest()
    if "package.json" in files:
        try:
            data = json.loads(files["package.json"].decode("utf-8", "replace"))
            if isinstance(data, dict):
                manifest = Manifest.from_json(data)
            else:
                warnings.append("manifest-not-object")
        except json.JSONDecodeError:
            warnings.append("manifest-unparseable")
    else:
        warnings.append("manifest-missing")
    name = str(manifest.raw.get("name", "")) or "<unnamed>"
    version = str(manifest.raw.get("version", "")) or "0.0.0"
    return PackageArchive(name=name, version=version, files=files,
                          manifest=manifest, warnings=warnings)


def resolve_relative(files: dict[str, bytes], base_dir: str,
                     spec: str) -> str | None:
    """Node-style relative resolution with extension/index probing."""
    joined = PurePosixPath(base_dir) / spec if base_dir else \
        PurePosixPath(spec)
    parts: list[str] = []
    for part in joined.parts:
        if part == "..":
            if not parts:
                return None
            parts.pop()
        elif part not in (".", ""):
            parts.append(part)
    stem = "/".join(parts)
    for suffix in RESOLUTION_SUFFIXES:
        candidate = stem + suffix
        if candidate in files:
            return candidate
    return None


def module_type_of(path: str, manifest: Manifest) -> str:
    """File extension wins over the manifest type field; commonjs is the
    ecosystem default."""
    if path.endswith(".mjs"):
        return "esm"
    if path.endswith(".cjs"):
        return "commonjs"
    if manifest.declared_module_type != "unset":
        return manifest.declared_module_type
    return "commonjs"


def _exports_leaf_paths(exports: object) -> tuple[list[str], bool]:
    """All string leaves of an exports value; second item flags a
    conditional map whose resolution is ambiguous."""
    if isinstance(exports, str):
        return [exports], False
    leaves: list[str] = []
    ambiguous = False
    if isinstance(exports, dict):
        ambiguous = True
        stack = [exports]
        while stack:
            current = stack.pop()
            for value in current.values():
                if isinstance(value, str):
                    leaves.append(value)
                elif isinstance(value, dict):
                    stack.append(value)
    return leaves, ambiguous


def _script_file_tokens(command: str) -> list[str]:
    try:
        words = shlex.split(command)
    except ValueError:
        words = command.split()
    out = []
    for word in words:
        word = word.strip("\"'")
        if SCRIPT_FILENAME_RE.match(word):
            out.append(word.lstrip("./"))
    return out


def extract_entries(archive: PackageArchive) -> EntryPointSet:
    """Collect the five entry surfaces. Absent fields yield absent
    entries; the only applied default is index.js for an unset main."""
    manifest = archive.manifest
    files = archive.files
    warnings: list[str] = []
    script_commands = list(manifest.scripts.items())
    entries: dict[str, EntryFile] = {}

    def add(path_spec: str, origin: str, phase: str) -> None:
        resolved = resolve_relative(files, "", path_spec.lstrip("./"))
        if resolved is None:
            path = path_spec.lstrip("./") or path_spec
            entry = entries.get(path)
            if entry is None:
                entries[path] = EntryFile(path, [origin], phase, missing=True)
            elif origin not in entry.origins:
                entry.origins.append(origin)
            return
        entry = entries.get(resolved)
        if entry is None:
            entries[resolved] = EntryFile(resolved, [origin], phase)
        else:
            if origin not in entry.origins:
                entry.origins.append(origin)
            if phase == "install":
                entry.phase = "install"

    for f, command in script_commands:
        phase = "install" if f in INSTALL_SCRIPT_FIELDS else "install"
        # custom fields run via `npm run <field>`; treat all referenced
        # files as install-phase surfaces
        for token in _script_file_tokens(command):
            add(token, "script-referenced", phase)

    if manifest.main_entry:
        add(manifest.main_entry, "main", "import")
    elif resolve_relative(files, "", "index.js"):
        add("index.js", "main", "import")

    if manifest.exports_entry is not None:
        leaves, ambiguous = _exports_leaf_paths(manifest.exports_entry)
        if ambiguous:
            warnings.append("exports-map-ambiguous")
        for leaf in leaves:
            add(leaf, "exports", "import")

    if manifest.imports_map:
        leaves, _ = _exports_leaf_paths(manifest.imports_map)
        for leaf in leaves:
            if not leaf.startswith("#"):
                add(leaf, "imports", "import")

    for _, target in manifest.bin_map.items():
        add(target, "bin", "import")

    return EntryPointSet(script_commands=script_commands,
                         entry_files=entries, warnings=warnings)
