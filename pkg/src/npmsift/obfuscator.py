"""Bundled source obfuscator for corpus generation.

Applies the transformations common in public JavaScript obfuscators:
hex-style identifier renaming, string-literal hex encoding, string array
indirection and whitespace stripping. Output stays parseable and
semantics-preserving; it exists to train and exercise the obfuscation
detector, not to protect anything.
"""
from __future__ import annotations

import random

from .js import parse, tokenize
from .js.lexer import NAME, STRING, KEYWORDS
from .js.nodes import Node, iter_child_nodes
from .js.scopes import _Renamer, apply_edits, pattern_names


def _all_binding_names(program: Node) -> set[str]:
    names: set[str] = set()
    stack = [program]
    while stack:
        node = stack.pop()
        t = node.type
        if t in ("FunctionDeclaration", "FunctionExpression"):
            if node.id is not None:
                names.add(node.id.name)
            for p in node.params:
                names |= pattern_names(p)
        elif t == "ArrowFunctionExpression":
            for p in node.params:
                names |= pattern_names(p)
        elif t == "VariableDeclaration":
            for d in node.declarations:
                names |= pattern_names(d.id)
        elif t in ("ClassDeclaration", "ClassExpression"):
            if node.id is not None:
                names.add(node.id.name)
        elif t == "CatchClause" and node.param is not None:
            names |= pattern_names(node.param)
        stack.extend(iter_child_nodes(node))
    return names


class _UniformRenamer(_Renamer):
    """Renames every binding occurrence; scope shadowing is irrelevant
    because the mapping is total and injective."""

    def shadowed(self, name: str) -> bool:
        return False


def _hex_name(rng: random.Random, taken: set[str]) -> str:
    while True:
        name = "_0x" + "".join(rng.choice("0123456789abcdef")
                               for _ in range(6))
        if name not in taken:
            taken.add(name)
            return name


def _hex_encode_string(raw: str) -> str:
    quote = raw[0]
    value = raw[1:-1]
    out = []
    i = 0
    while i < len(value):
        c = value[i]
        if c == "\\" and i + 1 < len(value):
            out.append(value[i:i + 2])
            i += 2
            continue
        o = ord(c)
        if o < 256:
            out.append(f"\\x{o:02x}")
        else:
            out.append(f"\\u{o:04x}")
        i += 1
    return quote + "".join(out) + quote


def minify(source: str) -> str:
    """Strip comments and collapse whitespace outside literals."""
    try:
        toks = tokenize(source)
    except SyntaxError:
        # crude fallback: drop blank lines only
        return "\n".join(line for line in source.splitlines()
                         if line.strip())
    out: list[str] = []
    prev = None
    for tok in toks:
        if tok.type == "eof":
            break
        if prev is not None and _needs_space(prev, tok):
            out.append(" ")
        out.append(source[tok.start:tok.end])
        prev = tok
    return "".join(out)


def _needs_space(prev, cur) -> bool:
    if prev.type in (NAME, "num", "private") and cur.type in (NAME, "num",
                                                              "private"):
        return True
    # avoid gluing operators into different operators (e.g. + + -> ++)
    if prev.type == "punct" and cur.type == "punct" \
            and prev.value[-1] == cur.value[0] \
            and prev.value[-1] in "+-<>&|=*?":
        return True
    if prev.type == NAME and cur.type == "regex":
        return True
    return False


def obfuscate(source: str, seed: int = 0, string_array: bool = True) -> str:
    """Obfuscate one source file; raises SyntaxError on unparseable
    input."""
    rng = random.Random(seed)
    program = parse(source)
    taken: set[str] = set()
    mapping = {name: _hex_name(rng, taken)
               for name in sorted(_all_binding_names(program))
               if name not in KEYWORDS}
    renamer = _UniformRenamer(mapping)
    for stmt in program.body:
        renamer.visit(stmt)
    renamed = apply_edits(source, renamer.edits)

    toks = tokenize(renamed)
    string_toks = [t for t in toks if t.type == STRING and len(t.value) > 2]
    edits = []
    pool: list[str] = []
    pool_name = _hex_name(rng, taken)
    for tok in string_toks:
        if string_array and rng.random() < 0.5:
            pool.append(_hex_encode_string(tok.value))
            edits.append((tok.start, tok.end,
                          f"{pool_name}[{len(pool) - 1}]"))
        else:
            edits.append((tok.start, tok.end, _hex_encode_string(tok.value)))
    encoded = apply_edits(renamed, edits)
    if pool:
        encoded = f"var {pool_name} = [{', '.join(pool)}];" + encoded
    # decoder prologue: present in the output of every public obfuscator
    # this mimics, even when the input had nothing to encode
    key_name = _hex_name(rng, taken)
    dec_name = _hex_name(rng, taken)
    arg_name = _hex_name(rng, taken)
    prologue = (f"var {key_name} = '\\x6b\\x65\\x79';"
                f"var {dec_name} = function({arg_name})"
                f"{{ return {arg_name}; }};")
    return minify(prologue + encoded)
