"""Hand-rolled ECMAScript tokenizer.

Produces a flat token stream with enough structure for parsing, renaming
and lexical feature extraction. Template literals are emitted as single
tokens carrying the source ranges of their embedded expressions so the
parser can sub-parse them.
"""
from __future__ import annotations

from dataclasses import dataclass, field


class LexError(SyntaxError):
    def __init__(self, message: str, offset: int, line: int, col: int):
        super().__init__(f"{message} at line {line}:{col} (offset {offset})")
        self.offset = offset
        self.line = line
        self.col = col


# Token types
NAME = "name"          # identifiers and keywords
PRIVATE = "private"    # #field
NUM = "num"
STRING = "string"
TEMPLATE = "template"
REGEX = "regex"
PUNCT = "punct"
EOF = "eof"

KEYWORDS = {
    "break", "case", "catch", "class", "const", "continue", "debugger",
    "default", "delete", "do", "else", "enum", "export", "extends",
    "false", "finally", "for", "function", "if", "import", "in",
    "instanceof", "new", "null", "return", "super", "switch", "this",
    "throw", "true", "try", "typeof", "var", "void", "while", "with",
    # contextual but safe to treat as names at lex time: async, await,
    # let, static, yield, of, get, set, as, from
}

PUNCTUATORS = [
    ">>>=",
    "...", "===", "!==", "**=", "<<=", ">>=", "&&=", "||=", "??=", ">>>",
    "=>", "**", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&",
    "||", "??", "?.", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=",
    "{", "}", "(", ")", "[", "]", ";", ",", "<", ">", "+", "-", "*",
    "/", "%", "&", "|", "^", "!", "~", "?", ":", "=", ".", "@",
]
_PUNCT_BY_LEN = sorted(PUNCTUATORS, key=len, reverse=True)
_PUNCT_FIRST = {p[0] for p in PUNCTUATORS}

_ID_START = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ_$")
_ID_CONT = _ID_START | set("0123456789")
_HEX = set("0123456789abcdefABCDEF")

# tokens after which a `/` starts a regex rather than a division
_REGEX_AFTER_KEYWORDS = {
    "return", "typeof", "instanceof", "in", "of", "new", "delete", "void",
    "throw", "case", "do", "else", "yield", "await",
}


@dataclass
class Token:
    type: str
    value: str
    start: int
    end: int
    line: int
    col: int
    nl_before: bool = False
    # for TEMPLATE tokens: [(expr_start, expr_end), ...] absolute offsets
    expr_ranges: list[tuple[int, int]] = field(default_factory=list)

    def __repr__(self) -> str:  # pragma: no cover - debug aid
        return f"Token({self.type}, {self.value!r}@{self.start})"


def is_identifier_name(text: str) -> bool:
    if not text or text[0] not in _ID_START:
        return False
    return all(c in _ID_CONT for c in text[1:])


class Lexer:
    def __init__(self, source: str, offset: int = 0, line: int = 1):
        self.src = source
        self.pos = 0
        self.offset = offset      # added to reported positions
        self.line = line
        self.line_start = 0
        self.tokens: list[Token] = []
        self._nl_pending = False

    def error(self, msg: str) -> LexError:
        return LexError(msg, self.pos + self.offset, self.line,
                        self.pos - self.line_start)

    # -- helpers ---------------------------------------------------------
    def _peek(self, ahead: int = 0) -> str:
        i = self.pos + ahead
        return self.src[i] if i < len(self.src) else ""

    def _emit(self, type_: str, start: int, value: str,
              expr_ranges: list[tuple[int, int]] | None = None) -> None:
        tok = Token(type_, value, start + self.offset, self.pos + self.offset,
                    self.line, start - self.line_start, self._nl_pending)
        if expr_ranges:
            tok.expr_ranges = expr_ranges
        self.tokens.append(tok)
        self._nl_pending = False

    def _newline(self, at: int) -> None:
        self.line += 1
        self.line_start = at + 1
        self._nl_pending = True

    # -- scanners --------------------------------------------------------
    def _skip_space_and_comments(self) -> None:
        src, n = self.src, len(self.src)
        while self.pos < n:
            c = src[self.pos]
            if c in " \t\r\f\v ﻿":
                self.pos += 1
            elif c == "\n":
                self._newline(self.pos)
                self.pos += 1
            elif c == "/" and self._peek(1) == "/":
                while self.pos < n and src[self.pos] != "\n":
                    self.pos += 1
            elif c == "/" and self._peek(1) == "*":
                self.pos += 2
                while self.pos < n:
                    if src[self.pos] == "\n":
                        self._newline(self.pos)
                    elif src[self.pos] == "*" and self._peek(1) == "/":
                        self.pos += 2
                        break
                    self.pos += 1
                else:
                    raise self.error("unterminated block comment")
            elif c == "#" and self.pos == 0 and self._peek(1) == "!":
                # shebang line
                while self.pos < n and src[self.pos] != "\n":
                    self.pos += 1
            else:
                return

    def _scan_identifier(self) -> None:
        start = self.pos
        src, n = self.src, len(self.src)
        self.pos += 1
        while self.pos < n and (src[self.pos] in _ID_CONT
                                or ord(src[self.pos]) > 127):
            self.pos += 1
        self._emit(NAME, start, src[start:self.pos])

    def _scan_number(self) -> None:
        start = self.pos
        src, n = self.src, len(self.src)
        if src[self.pos] == "0" and self._peek(1) in "xXoObB":
            self.pos += 2
            while self.pos < n and (src[self.pos] in _ID_CONT):
                self.pos += 1
        else:
            while self.pos < n and (src[self.pos].isdigit()
                                    or src[self.pos] == "_"):
                self.pos += 1
            if self._peek() == "." :
                self.pos += 1
                while self.pos < n and (src[self.pos].isdigit()
                                        or src[self.pos] == "_"):
                    self.pos += 1
            if self._peek() in "eE":
                save = self.pos
                self.pos += 1
                if self._peek() in "+-":
                    self.pos += 1
                if self._peek().isdigit():
                    while self.pos < n and src[self.pos].isdigit():
                        self.pos += 1
                else:
                    self.pos = save
        if self._peek() == "n":  # bigint
            self.pos += 1
        self._emit(NUM, start, src[start:self.pos])

    def _scan_string(self) -> None:
        start = self.pos
        quote = self.src[self.pos]
        src, n = self.src, len(self.src)
        self.pos += 1
        while self.pos < n:
            c = src[self.pos]
            if c == "\\":
                if self._peek(1) == "\n":
                    self._newline(self.pos + 1)
                    self._nl_pending = False  # continuation, not a real break
                self.pos += 2
                continue
            if c == quote:
                self.pos += 1
                self._emit(STRING, start, src[start:self.pos])
                return
            if c == "\n":
                raise self.error("unterminated string literal")
            self.pos += 1
        raise self.error("unterminated string literal")

    def _scan_template(self) -> None:
        start = self.pos
        src, n = self.src, len(self.src)
        self.pos += 1  # opening backtick
        ranges: list[tuple[int, int]] = []
        while self.pos < n:
            c = src[self.pos]
            if c == "\\":
                self.pos += 2
                continue
            if c == "\n":
                self._newline(self.pos)
                self._nl_pending = False
                self.pos += 1
                continue
            if c == "`":
                self.pos += 1
                self._emit(TEMPLATE, start, src[start:self.pos], ranges)
                return
            if c == "$" and self._peek(1) == "{":
                expr_start = self.pos + 2
                self.pos = self._match_template_expr(expr_start)
                ranges.append((expr_start + self.offset,
                               self.pos + self.offset))
                self.pos += 1  # closing }
                continue
            self.pos += 1
        raise self.error("unterminated template literal")

    def _match_template_expr(self, start: int) -> int:
        """Return offset of the `}` closing a ${ opened just before start.

        Tracks nested braces, strings, comments and templates; regex
        literals containing braces inside a template expression are not
        handled.
        """
        src, n = self.src, len(self.src)
        depth = 1
        i = start
        while i < n:
            c = src[i]
            if c == "\n":
                self._newline(i)
                self._nl_pending = False
                i += 1
            elif c in "'\"":
                q = c
                i += 1
                while i < n and src[i] != q:
                    i += 2 if src[i] == "\\" else 1
                i += 1
            elif c == "`":
                i = self._skip_nested_template(i)
            elif c == "/" and i + 1 < n and src[i + 1] == "/":
                while i < n and src[i] != "\n":
                    i += 1
            elif c == "/" and i + 1 < n and src[i + 1] == "*":
                i += 2
                while i + 1 < n and not (src[i] == "*" and src[i + 1] == "/"):
                    i += 1
                i += 2
            elif c == "{":
                depth += 1
                i += 1
            elif c == "}":
                depth -= 1
                if depth == 0:
                    return i
                i += 1
            else:
                i += 1
        raise self.error("unterminated template expression")

    def _skip_nested_template(self, i: int) -> int:
        src, n = self.src, len(self.src)
        i += 1
        while i < n:
            c = src[i]
            if c == "\\":
                i += 2
            elif c == "`":
                return i + 1
            elif c == "$" and i + 1 < n and src[i + 1] == "{":
                i = self._match_template_expr(i + 2) + 1
            else:
                i += 1
        raise self.error("unterminated template literal")

    def _regex_allowed(self) -> bool:
        for tok in reversed(self.tokens):
            if tok.type == PUNCT:
                return tok.value not in (")", "]")
            if tok.type == NAME:
                return tok.value in _REGEX_AFTER_KEYWORDS
            return False  # num, string, template, regex
        return True

    def _scan_regex(self) -> None:
        start = self.pos
        src, n = self.src, len(self.src)
        self.pos += 1
        in_class = False
        while self.pos < n:
            c = src[self.pos]
            if c == "\\":
                self.pos += 2
                continue
            if c == "\n":
                raise self.error("unterminated regex literal")
            if c == "[":
                in_class = True
            elif c == "]":
                in_class = False
            elif c == "/" and not in_class:
                self.pos += 1
                while self.pos < n and src[self.pos] in _ID_CONT:
                    self.pos += 1  # flags
                self._emit(REGEX, start, src[start:self.pos])
                return
            self.pos += 1
        raise self.error("unterminated regex literal")

    def _scan_punct(self) -> None:
        start = self.pos
        for p in _PUNCT_BY_LEN:
            if self.src.startswith(p, self.pos):
                # `?.3` is ternary-then-number, not optional chaining
                if p == "?." and self._peek(2).isdigit():
                    continue
                self.pos += len(p)
                self._emit(PUNCT, start, p)
                return
        raise self.error(f"unexpected character {self.src[self.pos]!r}")

    # -- driver ----------------------------------------------------------
    def tokenize(self) -> list[Token]:
        n = len(self.src)
        while True:
            self._skip_space_and_comments()
            if self.pos >= n:
                break
            c = self.src[self.pos]
            if c in _ID_START or ord(c) > 127:
                self._scan_identifier()
            elif c.isdigit() or (c == "." and self._peek(1).isdigit()):
                self._scan_number()
            elif c in "'\"":
                self._scan_string()
            elif c == "`":
                self._scan_template()
            elif c == "#":
                start = self.pos
                self.pos += 1
                while self.pos < n and self.src[self.pos] in _ID_CONT:
                    self.pos += 1
                self._emit(PRIVATE, start, self.src[start:self.pos])
            elif c == "/" and self._regex_allowed():
                self._scan_regex()
            elif c in _PUNCT_FIRST:
                self._scan_punct()
            else:
                raise self.error(f"unexpected character {c!r}")
        self._emit(EOF, self.pos, "")
        return self.tokens


def tokenize(source: str, offset: int = 0) -> list[Token]:
    return Lexer(source, offset=offset).tokenize()
