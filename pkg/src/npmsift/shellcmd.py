"""Shell command tokenization, rule matching and category mapping.

Commands reach us from three places: manifest script fields, .sh files
and the string arguments of command-execution APIs. They are tokenized
into a flat, execution-ordered stream (pipelines and &&/; chains
flatten left to right, command substitutions are parsed recursively),
matched against the editable rule file, and mapped to categories by
ordered-subsequence rules. URL verdicts gate the network-driven
sequences.
"""
from __future__ import annotations

import re
import subprocess
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

CATEGORY_SEQUENCES: dict[str, list[list[str]]] = {
    "M1": [["R4", "R3"], ["R4", "R6"]],
    "M2": [["R2", "R6"], ["R5", "R1"]],
    "M3": [["R4", "R8"], ["R7"]],
    "M4": [["R4", "R1"]],
}

_OPERATORS = ("||", "&&", "|&", ";;", "|", ";", "&", "\n")
_URL_RE = re.compile(r"(?:https?|ftp)://[^\s'\"<>|;&]+", re.IGNORECASE)


@dataclass
class ShellToken:
    text: str
    role: str          # program | flag | argument | redirect | operator
    position: int = -1


@dataclass
class ShellCommandAst:
    source: str        # manifest-script | sh-file | code-argument
    raw: str
    tokens: list[ShellToken]
    parse_degraded: bool = False

    def programs(self) -> list[str]:
        return [t.text for t in self.tokens if t.role == "program"]


@dataclass
class Rule:
    rule_id: str
    description: str
    patterns: list[re.Pattern]


@dataclass
class RuleHit:
    rule_id: str
    matched_token: str
    position: int


@dataclass
class UrlVerdict:
    url: str
    label: str          # benign | malicious
    score: float


class ShellParseError(ValueError):
    pass


# -- tokenizer -------------------------------------------------------------

class _Scanner:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def eof(self) -> bool:
        return self.pos >= len(self.text)

    def peek(self) -> str:
        return self.text[self.pos] if not self.eof() else ""

    def take(self) -> str:
        c = self.text[self.pos]
        self.pos += 1
        return c


def _scan_word(sc: _Scanner, subs: list[str]) -> str:
    """One shell word; $(...) and `...` bodies are recorded in subs and
    kept in the word text."""
    out: list[str] = []
    while not sc.eof():
        c = sc.peek()
        if c in " \t":
            break
        if c in "|;&\n":
            break
        if c in "<>":
            break
        if c == "\\":
            sc.take()
            if not sc.eof():
                out.append(sc.take())
            continue
        if c == "'":
            sc.take()
            while not sc.eof() and sc.peek() != "'":
                out.append(sc.take())
            if sc.eof():
                raise ShellParseError("unterminated single quote")
            sc.take()
            continue
        if c == '"':
            sc.take()
            while not sc.eof() and sc.peek() != '"':
                if sc.peek() == "\\":
                    sc.take()
                    if not sc.eof():
                        out.append(sc.take())
                    continue
                if sc.peek() == "$" and sc.text[sc.pos:sc.pos + 2] == "$(":
                    out.append(_scan_substitution(sc, subs))
                    continue
                if sc.peek() == "`":
                    out.append(_scan_backtick(sc, subs))
                    continue
                out.append(sc.take())
            if sc.eof():
                raise ShellParseError("unterminated double quote")
            sc.take()
            continue
        if c == "$" and sc.text[sc.pos:sc.pos + 2] == "$(":
            out.append(_scan_substitution(sc, subs))
            continue
        if c == "`":
            out.append(_scan_backtick(sc, subs))
            continue
        out.append(sc.take())
    return "".join(out)


def _scan_substitution(sc: _Scanner, subs: list[str]) -> str:
    sc.take()  # $
    sc.take()  # (
    depth = 1
    body: list[str] = []
    while not sc.eof():
        c = sc.take()
        if c == "(":
            depth += 1
        elif c == ")":
            depth -= 1
            if depth == 0:
                inner = "".join(body)
                subs.append(inner)
                return f"$({inner})"
        body.append(c)
    raise ShellParseError("unterminated command substitution")


def _scan_backtick(sc: _Scanner, subs: list[str]) -> str:
    sc.take()  # `
    body: list[str] = []
    while not sc.eof():
        c = sc.take()
        if c == "`":
            inner = "".join(body)
            subs.append(inner)
            return f"`{inner}`"
        body.append(c)
    raise ShellParseError("unterminated backquote")


_ASSIGNMENT_RE = re.compile(r"^[A-Za-z_]\w*=")


def _tokenize(text: str) -> list[ShellToken]:
    sc = _Scanner(text)
    tokens: list[ShellToken] = []
    expect_program = True
    redirect_next = False
    while not sc.eof():
        c = sc.peek()
        if c in " \t\n":
            if c == "\n":
                expect_program = True
            sc.take()
            continue
        if c == "#":
            while not sc.eof() and sc.peek() != "\n":
                sc.take()
            continue
        matched_op = None
        for op in _OPERATORS:
            if sc.text.startswith(op, sc.pos):
                matched_op = op
                break
        if matched_op:
            sc.pos += len(matched_op)
            tokens.append(ShellToken(matched_op, "operator"))
            expect_program = True
            redirect_next = False
            continue
        if c in "<>":
            redir = sc.take()
            if sc.peek() == ">":
                redir += sc.take()
            if sc.peek() == "&":
                redir += sc.take()
                if sc.peek().isdigit():
                    redir += sc.take()
            tokens.append(ShellToken(redir, "operator"))
            redirect_next = True
            continue
        if c.isdigit() and sc.text[sc.pos:sc.pos + 2] in ("2>", "1>"):
            redir = sc.take() + sc.take()
            if sc.peek() == "&":
                redir += sc.take()
                if sc.peek().isdigit():
                    redir += sc.take()
            tokens.append(ShellToken(redir, "operator"))
            redirect_next = True
            continue
        subs: list[str] = []
        word = _scan_word(sc, subs)
        if not word:
            sc.take()
            continue
        if redirect_next:
            role = "redirect"
            redirect_next = False
        elif expect_program:
            if _ASSIGNMENT_RE.match(word):
                role = "argument"     # env assignment prefix
            else:
                role = "program"
                expect_program = False
        elif word.startswith("-"):
            role = "flag"
        else:
            role = "argument"
        tokens.append(ShellToken(word, role))
        for inner in subs:
            tokens.extend(_tokenize(inner))
    return tokens


def parse_command(text: str,
                  source: str = "manifest-script") -> ShellCommandAst:
    """Tokenize one command line; on failure, degrade to whitespace
    splitting with a flag."""
    degraded = False
    try:
        tokens = _tokenize(text)
    except ShellParseError:
        degraded = True
        tokens = []
        first = True
        for word in text.split():
            role = "program" if first else (
                "flag" if word.startswith("-") else "argument")
            first = False
            tokens.append(ShellToken(word, role))
    visible = [t for t in tokens if t.role != "operator"]
    for i, tok in enumerate(visible):
        tok.position = i
    return ShellCommandAst(source=source, raw=text, tokens=visible,
                           parse_degraded=degraded)


# -- rules ------------------------------------------------------------------

def load_rules(path: str | Path | None = None) -> list[Rule]:
    if path is None:
        text = resources.files("npmsift.data").joinpath(
            "shell_rules.txt").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    rules: list[Rule] = []
    current: Rule | None = None
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            rule_id, _, description = line.partition("]")
            current = Rule(rule_id.lstrip("["), description.strip(), [])
            rules.append(current)
        elif current is not None:
            current.patterns.append(re.compile(line))
    return rules


_DEFAULT_RULES: list[Rule] | None = None


def default_rules() -> list[Rule]:
    global _DEFAULT_RULES
    if _DEFAULT_RULES is None:
        _DEFAULT_RULES = load_rules()
    return _DEFAULT_RULES


def match_rules(ast: ShellCommandAst,
                rules: list[Rule] | None = None) -> list[RuleHit]:
    """Every token tested against every rule pattern; hits in token
    order."""
    rules = rules if rules is not None else default_rules()
    hits: list[RuleHit] = []
    for token in ast.tokens:
        for rule in rules:
            if any(p.search(token.text) for p in rule.patterns):
                hits.append(RuleHit(rule.rule_id, token.text,
                                    token.position))
    hits.sort(key=lambda h: h.position)
    return hits


def _is_subsequence(pattern: list[str], ids: list[str]) -> bool:
    it = iter(ids)
    return all(p in it for p in pattern)


def extract_urls(ast: ShellCommandAst) -> list[str]:
    urls: list[str] = []
    for token in ast.tokens:
        urls.extend(_URL_RE.findall(token.text))
    return urls


def classify_command(hits: list[RuleHit],
                     urls: list[UrlVerdict] | None = None) -> set[str]:
    """Categories whose rule sequence occurs as an ordered subsequence
    of the hits. Sequences driven by networking (leading R4) are
    suppressed when every networking target is a benign-judged URL."""
    if not hits:
        return set()
    ids = [h.rule_id for h in hits]
    urls = urls or []
    all_benign = bool(urls) and all(v.label == "benign" for v in urls)
    categories: set[str] = set()
    for category, sequences in CATEGORY_SEQUENCES.items():
        for seq in sequences:
            if not _is_subsequence(seq, ids):
                continue
            if seq[0] == "R4" and all_benign:
                continue
            categories.add(category)
            break
    return categories


# -- .sh files ----------------------------------------------------------------

def _static_sh_commands(text: str) -> list[str]:
    lines: list[str] = []
    pending = ""
    for line in text.splitlines():
        if line.startswith("#!"):
            continue
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if stripped.endswith("\\"):
            pending += stripped[:-1] + " "
            continue
        lines.append(pending + stripped)
        pending = ""
    if pending:
        lines.append(pending)
    return lines


def trace_sh_file(path: str | Path, mode: str = "static",
                  runner_cmd: list[str] | None = None,
                  timeout: float = 60.0) -> tuple[list[ShellCommandAst],
                                                  list[str]]:
    """Parse a .sh file into command ASTs.

    static mode reads the script text; sandboxed mode runs an external
    runner (expected to execute `/bin/sh -x` in isolation) and parses
    the `+ cmd` trace lines, falling back to static when the runner is
    missing or fails."""
    path = Path(path)
    flags: list[str] = []
    if mode == "sandboxed":
        if not runner_cmd:
            flags.append("sandbox-unavailable")
        else:
            try:
                proc = subprocess.run(
                    [arg.replace("{script}", str(path)) for arg in
                     runner_cmd],
                    capture_output=True, text=True, timeout=timeout)
                commands = []
                for line in (proc.stdout + proc.stderr).splitlines():
                    line = line.strip()
                    if line.startswith("+"):
                        commands.append(line.lstrip("+ "))
                return ([parse_command(c, source="sh-file")
                         for c in commands], flags)
            except (OSError, subprocess.SubprocessError) as exc:
                flags.append(f"sandbox-failed:{exc}")
    text = path.read_text(encoding="utf-8", errors="replace")
    return ([parse_command(c, source="sh-file")
             for c in _static_sh_commands(text)], flags)
