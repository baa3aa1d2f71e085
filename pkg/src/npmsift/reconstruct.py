"""Entry-file dependency merging.

Each install/import entry file is expanded into a single source unit:
intra-package imports are replaced by the transformed text of their
targets (recursively, up to a depth budget), export statements become
plain declarations under unified names, and import bindings become
objects aggregating the target's exported members. The merged unit must
re-parse; files that fail to parse are inlined verbatim and their spans
reported so downstream extraction can fall back to regexes.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

from .archive import PackageArchive, module_type_of, resolve_relative
from .js import LexError, Node, ParseError, parse
from .js.nodes import iter_child_nodes
from .js.scopes import apply_edits, module_level_names, rename_edits

DEFAULT_RECURSION_LIMIT = 2

BUILTIN_MODULES = {
    "assert", "async_hooks", "buffer", "child_process", "cluster",
    "console", "constants", "crypto", "dgram", "diagnostics_channel",
    "dns", "domain", "events", "fs", "http", "http2", "https",
    "inspector", "module", "net", "os", "path", "perf_hooks", "process",
    "punycode", "querystring", "readline", "repl", "stream",
    "string_decoder", "sys", "timers", "tls", "trace_events", "tty",
    "url", "util", "v8", "vm", "worker_threads", "zlib",
}

_IDENT_RE = re.compile(r"^[A-Za-z_$][\w$]*$")
_FUNCTION_TYPES = {"FunctionDeclaration", "FunctionExpression",
                   "ArrowFunctionExpression", "ClassBody"}


@dataclass
class SourceUnit:
    path: str
    module_system: str
    text: str


@dataclass
class MergedProgram:
    entry_path: str
    entry_origin: str
    module_system: str
    text: str
    rename_map: dict[str, str]
    unresolved_imports: list[tuple[str, str]]
    parse_fallback_spans: list[tuple[int, int]]
    warnings: list[str] = field(default_factory=list)
    reparse_ok: bool = True


@dataclass
class _ExportInfo:
    names: dict[str, str] = field(default_factory=dict)
    default: str | None = None

    def binding_expr(self) -> str:
        """Expression a require() of this file evaluates to."""
        if self.default is not None and not self.names:
            return self.default
        members = dict(self.names)
        if self.default is not None:
            members["default"] = self.default
        return "(" + _object_literal(members) + ")"

    def namespace_expr(self) -> str:
        members = dict(self.names)
        if self.default is not None:
            members["default"] = self.default
        return "(" + _object_literal(members) + ")"


def _object_literal(members: dict[str, str]) -> str:
    parts = []
    for key, value in members.items():
        if _IDENT_RE.match(key):
            parts.append(f"{key}: {value}")
        else:
            escaped = key.replace("\\", "\\\\").replace("'", "\\'")
            parts.append(f"'{escaped}': {value}")
    return "{ " + ", ".join(parts) + " }"


def sanitize_file_stem(path: str) -> str:
    """Basename without extension, non-word characters replaced by '$'."""
    base = path.rsplit("/", 1)[-1]
    stem = base.rsplit(".", 1)[0] if "." in base else base
    return re.sub(r"[^\w]", "$", stem) or "file"


def classify_specifier(spec: str) -> str:
    """relative | builtin | external"""
    if spec.startswith("./") or spec.startswith("../") or spec in (".", ".."):
        return "relative"
    if spec.startswith("node:"):
        return "builtin"
    root = spec.split("/", 1)[0]
    return "builtin" if root in BUILTIN_MODULES else "external"


def resolve_specifier(archive: PackageArchive, from_path: str,
                      spec: str) -> str:
    """Resolve an import specifier to an archive path, 'builtin' or
    'external'."""
    kind = classify_specifier(spec)
    if kind != "relative":
        return kind
    base_dir = from_path.rsplit("/", 1)[0] if "/" in from_path else ""
    resolved = resolve_relative(archive.files, base_dir, spec)
    return resolved if resolved is not None else "external"


def parse_module(unit: SourceUnit) -> Node:
    """Parse one file; syntax errors carry a byte offset for fallback."""
    return parse(unit.text)


class _Merger:
    def __init__(self, archive: PackageArchive, recursion_limit: int,
                 mirror=None):
        self.archive = archive
        self.limit = recursion_limit
        self.mirror = mirror
        self.rename_map: dict[str, str] = {}
        self.unresolved: list[tuple[str, str]] = []
        self.warnings: list[str] = []
        self.used_names: set[str] = set()
        self.inlined: dict[tuple[str, str], _ExportInfo] = {}
        self.visiting: list[tuple[str, str]] = []
        self.file_counter = 0

    # -- naming ------------------------------------------------------------
    def _claim(self, candidate: str) -> str:
        name = candidate
        suffix = 2
        while name in self.used_names:
            name = f"{candidate}_{suffix}"
            suffix += 1
        self.used_names.add(name)
        return name

    def unified_name(self, pkg: str, path: str, obj: str) -> str:
        stem = sanitize_file_stem(path)
        safe_obj = re.sub(r"[^\w$]", "$", obj)
        name = self._claim(f"export_{stem}_{safe_obj}")
        prefix = f"{pkg}:" if pkg else ""
        self.rename_map[f"{prefix}{path}::{obj}"] = name
        return name

    def local_name(self, name: str, file_index: int) -> str:
        if name not in self.used_names:
            self.used_names.add(name)
            return name
        return self._claim(f"{name}_f{file_index}")

    # -- file processing -----------------------------------------------------
    def process_file(self, archive: PackageArchive, pkg: str, path: str,
                     depth: int) -> tuple[list[tuple[str, bool]], _ExportInfo]:
        """Transform one file; returns (chunks, exports). Each chunk is
        (text, is_fallback_span)."""
        key = (pkg, path)
        self.inlined[key] = _ExportInfo()  # placeholder, replaced below
        self.visiting.append(key)
        self.file_counter += 1
        file_index = self.file_counter
        source = archive.text(path)
        try:
            program = parse(source)
        except (ParseError, LexError) as exc:
            self.visiting.pop()
            self.warnings.append(f"parse-failed:{path}:{exc}")
            info = _ExportInfo()
            self.inlined[key] = info
            header = f"\n// begin unparsed file {path}\n"
            footer = f"\n// end unparsed file {path}\n"
            return ([(header, False), (source, True), (footer, False)], info)

        mod_names = module_level_names(program)
        exported = _esm_declaration_exports(program)
        has_cjs_exports = _uses_cjs_exports(program) \
            and "exports" not in mod_names and "module" not in mod_names

        info = _ExportInfo()
        mapping: dict[str, str] = {}
        for name in mod_names:
            if name in exported:
                uni = self.unified_name(pkg, path, name)
                mapping[name] = uni
                info.names[name] = uni
            else:
                renamed = self.local_name(name, file_index)
                if renamed != name:
                    mapping[name] = renamed
        self.inlined[key] = info

        edits = rename_edits(program, mapping)
        inserts: dict[int, list[list[tuple[str, bool]]]] = {}

        def add_dep_chunks(stmt: Node, chunks: list[tuple[str, bool]]):
            inserts.setdefault(stmt.start, []).append(chunks)

        for stmt in program.body:
            self._process_statement(archive, pkg, path, stmt, source, depth,
                                     mapping, info, edits, add_dep_chunks,
                                     has_cjs_exports)

        # member-style exports.NAME references -> unified names
        if has_cjs_exports:
            self._rewrite_export_members(program, info, pkg, path, edits)

        chunks = self._assemble(source, program, edits, inserts)
        self.visiting.pop()
        return chunks, info

    # -- statement handling ---------------------------------------------------
    def _process_statement(self, archive, pkg, path, stmt, source, depth,
                           mapping, info, edits, add_dep_chunks,
                           has_cjs_exports):
        t = stmt.type
        if t == "ImportDeclaration":
            self._handle_import(archive, pkg, path, stmt, depth, mapping,
                                edits, add_dep_chunks)
            return
        if t == "ExportNamedDeclaration":
            self._handle_export_named(archive, pkg, path, stmt, source,
                                      depth, mapping, info, edits,
                                      add_dep_chunks)
            return
        if t == "ExportDefaultDeclaration":
            self._handle_export_default(pkg, path, stmt, mapping, info,
                                        edits)
            for call in _top_level_requires(stmt.declaration):
                self._handle_require_call(archive, pkg, path, stmt, call,
                                          source, depth, edits,
                                          add_dep_chunks)
            return
        if t == "ExportAllDeclaration":
            self._handle_export_all(archive, pkg, path, stmt, depth, info,
                                    edits, add_dep_chunks)
            return
        # inline require()/import() calls appearing in this statement
        for call in _top_level_requires(stmt):
            self._handle_require_call(archive, pkg, path, stmt, call, source,
                                      depth, edits, add_dep_chunks)
        if has_cjs_exports:
            self._handle_cjs_export_stmt(pkg, path, stmt, source, info,
                                         edits)

    # .. imports ..
    def _handle_import(self, archive, pkg, path, stmt, depth, mapping,
                       edits, add_dep_chunks):
        spec = stmt.source
        target = resolve_specifier(archive, path, spec) if pkg == "" \
            else self._resolve_in(archive, path, spec)
        if target in ("builtin", "external"):
            dep_info = None
            if target == "external":
                dep_info = self._try_mirror(pkg, spec, depth, stmt,
                                            add_dep_chunks)
            if dep_info is None:
                text = _import_as_require(stmt, mapping)
                edits.append((stmt.start, stmt.end, text))
                return
        else:
            dep_info = self._inline(archive, pkg, target, depth + 1, stmt,
                                    add_dep_chunks)
            if dep_info is None:
                text = _import_as_require(stmt, mapping)
                edits.append((stmt.start, stmt.end, text))
                return
        bindings = []
        for s in stmt.specifiers:
            local = mapping.get(s.local, s.local)
            if s.kind == "default":
                value = dep_info.default or dep_info.namespace_expr()
            elif s.kind == "namespace":
                value = dep_info.namespace_expr()
            else:
                value = dep_info.names.get(s.imported)
                if value is None:
                    value = "undefined"
                    self.warnings.append(
                        f"missing-export:{spec}:{s.imported}")
            bindings.append(f"const {local} = {value};")
        edits.append((stmt.start, stmt.end, " ".join(bindings)))

    def _resolve_in(self, archive, path, spec):
        kind = classify_specifier(spec)
        if kind != "relative":
            return kind
        base_dir = path.rsplit("/", 1)[0] if "/" in path else ""
        resolved = resolve_relative(archive.files, base_dir, spec)
        return resolved if resolved is not None else "external"

    def _try_mirror(self, pkg, spec, depth, stmt, add_dep_chunks):
        """One mirror fetch per bare specifier, root archive only."""
        if self.mirror is None or pkg != "":
            self.unresolved.append((spec, "external"))
            return None
        name = spec.split("/")[0] if not spec.startswith("@") \
            else "/".join(spec.split("/")[:2])
        try:
            dep_archive = self.mirror(name)
        except Exception as exc:
            self.warnings.append(f"mirror-error:{name}:{exc}")
            dep_archive = None
        if dep_archive is None:
            self.unresolved.append((spec, "external"))
            return None
        entry = _archive_default_entry(dep_archive)
        if entry is None:
            self.unresolved.append((spec, "external-no-entry"))
            return None
        return self._inline(dep_archive, name, entry, depth + 1, stmt,
                            add_dep_chunks)

    def _inline(self, archive, pkg, target_path, child_depth, stmt,
                add_dep_chunks) -> _ExportInfo | None:
        key = (pkg, target_path)
        if key in self.visiting:
            # circular: bind to the names the in-progress inline declares
            info = self.inlined.get(key) or _ExportInfo()
            add_dep_chunks(stmt, [(f"// circular import of {target_path}"
                                   " skipped\n", False)])
            return info
        if key in self.inlined:
            return self.inlined[key]
        if child_depth > self.limit:
            self.unresolved.append((target_path, "recursion-limit"))
            return None
        chunks, info = self.process_file(archive, pkg, target_path,
                                         child_depth)
        add_dep_chunks(stmt, chunks)
        return info

    # .. exports ..
    def _handle_export_named(self, archive, pkg, path, stmt, source, depth,
                             mapping, info, edits, add_dep_chunks):
        if stmt.declaration is not None:
            # strip the `export` keyword; declared names were renamed
            edits.append((stmt.start, stmt.declaration.start, ""))
            decl = stmt.declaration
            for call in _top_level_requires(decl):
                self._handle_require_call(archive, pkg, path, stmt, call,
                                          source, depth, edits,
                                          add_dep_chunks)
            return
        if stmt.get("source"):
            target = self._resolve_in(archive, path, stmt.source) \
                if pkg else resolve_specifier(archive, path, stmt.source)
            dep_info = None
            if target not in ("builtin", "external"):
                dep_info = self._inline(archive, pkg, target, depth + 1,
                                        stmt, add_dep_chunks)
            if dep_info is None:
                self.unresolved.append((stmt.source, "re-export"))
                edits.append((stmt.start, stmt.end, ""))
                return
            parts = []
            for s in stmt.specifiers:
                uni = self.unified_name(pkg, path, s.exported)
                info.names[s.exported] = uni
                value = dep_info.names.get(s.local) or "undefined"
                parts.append(f"var {uni} = {value};")
            edits.append((stmt.start, stmt.end, " ".join(parts)))
            return
        parts = []
        for s in stmt.specifiers:
            local = mapping.get(s.local, s.local)
            uni = self.unified_name(pkg, path, s.exported)
            info.names[s.exported] = uni
            parts.append(f"var {uni} = {local};")
        edits.append((stmt.start, stmt.end, " ".join(parts)))

    def _handle_export_default(self, pkg, path, stmt, mapping, info, edits):
        decl = stmt.declaration
        uni = self.unified_name(pkg, path, "default")
        info.default = uni
        if decl.type in ("FunctionDeclaration", "ClassDeclaration") \
                and decl.id is not None:
            local = mapping.get(decl.id.name, decl.id.name)
            edits.append((stmt.start, decl.start, ""))
            edits.append((stmt.end, stmt.end, f"\nvar {uni} = {local};"))
        else:
            edits.append((stmt.start, decl.start, f"var {uni} = "))
            edits.append((stmt.end, stmt.end, ";"))

    def _handle_export_all(self, archive, pkg, path, stmt, depth, info,
                           edits, add_dep_chunks):
        target = self._resolve_in(archive, path, stmt.source) if pkg \
            else resolve_specifier(archive, path, stmt.source)
        dep_info = None
        if target not in ("builtin", "external"):
            dep_info = self._inline(archive, pkg, target, depth + 1, stmt,
                                    add_dep_chunks)
        if dep_info is None:
            self.unresolved.append((stmt.source, "re-export"))
            edits.append((stmt.start, stmt.end, ""))
            return
        if stmt.get("exported"):
            uni = self.unified_name(pkg, path, stmt.exported)
            info.names[stmt.exported] = uni
            edits.append((stmt.start, stmt.end,
                          f"var {uni} = {dep_info.namespace_expr()};"))
            return
        parts = []
        for name, dep_uni in dep_info.names.items():
            uni = self.unified_name(pkg, path, name)
            info.names[name] = uni
            parts.append(f"var {uni} = {dep_uni};")
        edits.append((stmt.start, stmt.end, " ".join(parts)))

    def _handle_cjs_export_stmt(self, pkg, path, stmt, source, info,
                                edits) -> bool:
        """Rewrite top-level `exports.x = ...` / `module.exports = ...`."""
        if stmt.type != "ExpressionStatement":
            return False
        expr = stmt.expression
        if expr.type != "AssignmentExpression" or expr.operator != "=":
            return False
        left = expr.left
        name = _cjs_export_target(left)
        if name is None:
            return False
        if name == "*default*":
            uni = info.default
            if uni is None:
                uni = self.unified_name(pkg, path, "default")
                info.default = uni
            edits.append((left.start, left.end, f"var {uni}"))
            right = expr.right
            if right.type == "ObjectExpression":
                mirrors = []
                for prop in right.properties:
                    if prop.type != "Property" or prop.computed \
                            or prop.kind not in ("init", "method"):
                        continue
                    key = prop.key
                    key_name = key.get("name") if key.type == "Identifier" \
                        else (key.get("value")
                              if key.type == "Literal"
                              and key.kind == "string" else None)
                    if key_name is None or not _IDENT_RE.match(str(key_name)):
                        continue
                    member_uni = info.names.get(key_name)
                    if member_uni is None:
                        member_uni = self.unified_name(pkg, path, key_name)
                        info.names[key_name] = member_uni
                    mirrors.append(f"var {member_uni} = {uni}.{key_name};")
                if mirrors:
                    edits.append((stmt.end, stmt.end,
                                  "\n" + " ".join(mirrors)))
            return True
        uni = info.names.get(name)
        if uni is None:
            uni = self.unified_name(pkg, path, name)
            info.names[name] = uni
        edits.append((left.start, left.end, f"var {uni}"))
        return True

    def _rewrite_export_members(self, program, info, pkg, path, edits):
        """Replace reads of exports.NAME with the unified name."""
        taken = {(s, e) for s, e, _ in edits}
        stack = list(program.body)
        while stack:
            node = stack.pop()
            if not isinstance(node, Node):
                continue
            if node.type == "MemberExpression" and not node.computed:
                name = _cjs_export_target(node)
                if name and name != "*default*" and name in info.names:
                    span = (node.start, node.end)
                    if span not in taken and not any(
                            s <= node.start < e for s, e, _ in edits):
                        edits.append((node.start, node.end,
                                      info.names[name]))
                        continue
            stack.extend(iter_child_nodes(node))

    # .. require() ..
    def _handle_require_call(self, archive, pkg, path, stmt, call, source,
                             depth, edits, add_dep_chunks):
        arg = call.arguments[0] if call.get("arguments") else \
            call.get("argument")
        is_dynamic_import = call.type == "ImportExpression"
        if arg is None or arg.type != "Literal" or arg.kind != "string":
            span = source[call.start:call.end]
            self.unresolved.append((span, "dynamic-specifier"))
            return
        spec = arg.value
        target = self._resolve_in(archive, path, spec) if pkg \
            else resolve_specifier(archive, path, spec)
        if target == "builtin":
            return
        if target == "external":
            dep_info = self._try_mirror(pkg, spec, depth, stmt,
                                        add_dep_chunks)
            if dep_info is None:
                return
        else:
            dep_info = self._inline(archive, pkg, target, depth + 1, stmt,
                                    add_dep_chunks)
            if dep_info is None:
                return
        value = dep_info.binding_expr()
        if is_dynamic_import:
            value = f"Promise.resolve({value})"
        edits.append((call.start, call.end, value))


    # -- assembly ---------------------------------------------------------
    def _assemble(self, source, program, edits,
                  inserts) -> list[tuple[str, bool]]:
        chunks: list[tuple[str, bool]] = []
        body = program.body
        if not body:
            return [(source, False)]
        edits = sorted(edits)
        boundaries = [stmt.start for stmt in body] + [len(source)]
        if boundaries[0] > 0:
            chunks.append((source[:boundaries[0]], False))
        for i, stmt in enumerate(body):
            for dep_chunks in inserts.get(stmt.start, []):
                chunks.extend(dep_chunks)
                chunks.append(("\n", False))
            seg_start, seg_end = boundaries[i], boundaries[i + 1]
            seg_edits = [e for e in edits
                         if seg_start <= e[0] and e[1] <= seg_end]
            text = apply_edits(source[seg_start:seg_end], seg_edits,
                               base=seg_start)
            chunks.append((text, False))
        return chunks


# -- helpers ---------------------------------------------------------------

def _esm_declaration_exports(program: Node) -> set[str]:
    """Binding names exported via `export <declaration>` forms; these are
    renamed in place to their unified names."""
    names: set[str] = set()
    for stmt in program.body:
        if stmt.type == "ExportNamedDeclaration" \
                and stmt.declaration is not None:
            decl = stmt.declaration
            if decl.type == "VariableDeclaration":
                from .js.scopes import pattern_names
                for d in decl.declarations:
                    names |= pattern_names(d.id)
            elif decl.id is not None:
                names.add(decl.id.name)
    return names


def _uses_cjs_exports(program: Node) -> bool:
    for stmt in program.body:
        if stmt.type == "ExpressionStatement" \
                and stmt.expression.type == "AssignmentExpression" \
                and _cjs_export_target(stmt.expression.left):
            return True
    return False


def _cjs_export_target(node: Node) -> str | None:
    """'name' for exports.name/module.exports.name, '*default*' for
    module.exports, else None."""
    if node.type != "MemberExpression" or node.computed:
        return None
    obj = node.object
    if obj.type == "Identifier" and obj.name == "module" \
            and node.property == "exports":
        return "*default*"
    if obj.type == "Identifier" and obj.name == "exports":
        return node.property
    if obj.type == "MemberExpression" and not obj.computed \
            and obj.property == "exports" \
            and obj.object.type == "Identifier" \
            and obj.object.name == "module":
        return node.property
    return None


def _top_level_requires(stmt: Node) -> list[Node]:
    """require()/import() calls in a statement, outside nested function
    and class bodies, in source order."""
    out: list[Node] = []

    def visit(node: Node) -> None:
        if node.type in _FUNCTION_TYPES:
            return
        if node.type == "CallExpression" \
                and node.callee.type == "Identifier" \
                and node.callee.name == "require":
            out.append(node)
        elif node.type == "ImportExpression":
            out.append(node)
        for child in iter_child_nodes(node):
            visit(child)

    visit(stmt)
    return out


def _import_as_require(stmt: Node, mapping: dict[str, str]) -> str:
    """Rewrite an ESM import of a builtin/external module to require()
    form so merged output is module-system neutral."""
    spec = stmt.source.replace("\\", "\\\\").replace("'", "\\'")
    if not stmt.specifiers:
        return f"require('{spec}');"
    parts = []
    named = []
    for s in stmt.specifiers:
        local = mapping.get(s.local, s.local)
        if s.kind == "default":
            parts.append(f"const {local} = require('{spec}');")
        elif s.kind == "namespace":
            parts.append(f"const {local} = require('{spec}');")
        else:
            named.append((s.imported, local))
    if named:
        inner = ", ".join(i if i == l else f"{i}: {l}" for i, l in named)
        parts.append(f"const {{ {inner} }} = require('{spec}');")
    return " ".join(parts)


def _archive_default_entry(archive: PackageArchive) -> str | None:
    manifest = archive.manifest
    if manifest.main_entry:
        resolved = resolve_relative(archive.files, "",
                                    manifest.main_entry.lstrip("./"))
        if resolved:
            return resolved
    return resolve_relative(archive.files, "", "index.js")


def reconstruct(archive: PackageArchive, entry: str,
                recursion_limit: int = DEFAULT_RECURSION_LIMIT,
                mirror=None, entry_origin: str = "main") -> MergedProgram:
    """Merge an entry file and its intra-package dependency closure into
    one source unit (depth-limited, cycle-safe)."""
    if entry not in archive.files:
        raise FileNotFoundError(f"entry {entry!r} not in archive")
    merger = _Merger(archive, recursion_limit, mirror)
    chunks, _ = merger.process_file(archive, "", entry, depth=0)
    text_parts: list[str] = []
    spans: list[tuple[int, int]] = []
    pos = 0
    for text, is_fallback in chunks:
        if is_fallback:
            spans.append((pos, pos + len(text)))
        text_parts.append(text)
        pos += len(text)
    text = "".join(text_parts)

    reparse_ok = True
    if not spans:
        try:
            parse(text)
        except (ParseError, LexError) as exc:
            reparse_ok = False
            merger.warnings.append(f"reparse-failed:{exc}")
            spans.append((0, len(text)))
    else:
        reparse_ok = False

    _assert_rename_injective(merger.rename_map)
    return MergedProgram(
        entry_path=entry,
        entry_origin=entry_origin,
        module_system=module_type_of(entry, archive.manifest),
        text=text,
        rename_map=merger.rename_map,
        unresolved_imports=merger.unresolved,
        parse_fallback_spans=spans,
        warnings=merger.warnings,
        reparse_ok=reparse_ok,
    )


def _assert_rename_injective(rename_map: dict[str, str]) -> None:
    seen: dict[str, str] = {}
    for orig, unified in rename_map.items():
        if unified in seen and seen[unified] != orig:
            raise AssertionError(
                f"rename collision: {orig} and {seen[unified]} -> {unified}")
        seen[unified] = orig
