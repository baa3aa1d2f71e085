"""Lexical obfuscation features and the obfuscated/plain decision.

25 features over keywords and code shape. Extraction is a pure function
of the text; sources the lexer cannot handle fall back to regex
tokenization (obfuscated inputs are exactly the ones that break tools).
"""
from __future__ import annotations

import re
from dataclasses import dataclass

from .js.lexer import KEYWORDS, NAME, STRING, TEMPLATE, tokenize
from .mlcore import TreeEnsembleModel
from .obfuscator import minify
from .urlfeat import char_entropy


@dataclass(frozen=True)
class ObfuscationConfig:
    string_functions: tuple[str, ...] = (
        "subString", "substring", "charAt", "charCodeAt", "fromCharCode",
        "slice", "split", "replace")
    encoding_functions: tuple[str, ...] = (
        "escape", "unescape", "String", "atob", "btoa",
        "encodeURIComponent", "decodeURIComponent")
    special_characters: tuple[str, ...] = ("%", "$", "\\")
    keywords: tuple[str, ...] = (
        "if", "else", "for", "while", "function", "var", "let", "const",
        "return", "new", "typeof", "try")
    long_string_threshold: int = 200


DEFAULT_CONFIG = ObfuscationConfig()

FEATURE_NAMES = [f"of{i}" for i in range(1, 14)] + [
    f"of{i}_kw_{kw}" for i, kw in enumerate(DEFAULT_CONFIG.keywords,
                                            start=14)]

_IDENT_FALLBACK_RE = re.compile(r"[A-Za-z_$][\w$]*")
_STRING_FALLBACK_RE = re.compile(
    r"'(?:\\.|[^'\\\n])*'|\"(?:\\.|[^\"\\\n])*\"|`(?:\\.|[^`\\])*`")
_HEX_ESCAPE_RE = re.compile(r"\\x[0-9a-fA-F]{2}")
_UNICODE_ESCAPE_RE = re.compile(r"\\u[0-9a-fA-F]{4}")
_HEX_LITERAL_RE = re.compile(r"(?<![\w$])0x[0-9a-fA-F]+")
_PROTOTYPE_RE = re.compile(r"\.\s*prototype\b")
_INDIRECT_CALL_RE = re.compile(r"\.\s*(?:call|apply|bind)\s*\(")


@dataclass(frozen=True)
class ObfuscationFeatureVector:
    values: tuple[float, ...]
    degraded: bool = False

    def as_list(self) -> list[float]:
        return list(self.values)

    def __getitem__(self, name: str) -> float:
        return self.values[FEATURE_NAMES.index(name)]


def _lex_identifiers_strings(source: str) -> tuple[list[str], list[str],
                                                   list[str], bool]:
    """(identifiers, string bodies, all token texts, degraded)."""
    try:
        toks = tokenize(source)
    except SyntaxError:
        idents = [m.group(0) for m in _IDENT_FALLBACK_RE.finditer(source)
                  if m.group(0) not in KEYWORDS]
        strings = [m.group(0)[1:-1]
                   for m in _STRING_FALLBACK_RE.finditer(source)]
        return idents, strings, idents + strings, True
    idents, strings, texts = [], [], []
    for tok in toks:
        if tok.type == "eof":
            break
        texts.append(tok.value)
        if tok.type == NAME and tok.value not in KEYWORDS:
            idents.append(tok.value)
        elif tok.type == STRING:
            strings.append(tok.value[1:-1])
        elif tok.type == TEMPLATE:
            strings.append(tok.value[1:-1])
    return idents, strings, texts, False


def extract_obf_features(source: str,
                         config: ObfuscationConfig = DEFAULT_CONFIG
                         ) -> ObfuscationFeatureVector:
    if not source.strip():
        raise ValueError("empty source")
    minified = minify(source)
    original_lines = max(1, len(source.splitlines()))
    minified_lines = max(1, len(minified.splitlines()))
    original_spaces = source.count(" ")
    minified_spaces = minified.count(" ")

    idents, strings, _texts, degraded = _lex_identifiers_strings(source)
    token_total = max(1, len(_texts))

    string_fn_re = re.compile(
        r"\.\s*(?:" + "|".join(map(re.escape, config.string_functions))
        + r")\s*\(")
    encoding_fn_re = re.compile(
        r"(?<![\w$.])(?:" + "|".join(map(re.escape,
                                         config.encoding_functions))
        + r")\s*\(")

    of = {
        "of1": minified_lines / original_lines,
        # +1 smoothing keeps the ratio positive when minification strips
        # every space, and exactly 1.0 on already-minified input
        "of2": (minified_spaces + 1) / (original_spaces + 1),
        "of3": float(len(string_fn_re.findall(source))),
        "of4": float(len(encoding_fn_re.findall(source))),
        "of5": float(sum(source.count(c)
                         for c in config.special_characters)),
        "of6": float(len(source.splitlines())),
        "of7": float(source.count(" ") + source.count("\t")),
        "of8": float(len(_HEX_ESCAPE_RE.findall(source))
                     + len(_UNICODE_ESCAPE_RE.findall(source))
                     + len(_HEX_LITERAL_RE.findall(source))),
        "of9": (sum(map(len, idents)) / len(idents)) if idents else 0.0,
        "of10": char_entropy("".join(idents)),
        "of11": float(max(map(len, strings)) if strings else 0),
        "of12": float(sum(1 for s in strings
                          if len(s) > config.long_string_threshold)),
        "of13": float(len(_PROTOTYPE_RE.findall(source))
                      + len(_INDIRECT_CALL_RE.findall(source))),
    }
    keyword_counts = {kw: 0 for kw in config.keywords}
    for ident in _IDENT_FALLBACK_RE.finditer(source):
        word = ident.group(0)
        if word in keyword_counts:
            keyword_counts[word] += 1
    values = [of[f"of{i}"] for i in range(1, 14)]
    values.extend(keyword_counts[kw] / token_total
                  for kw in config.keywords)
    return ObfuscationFeatureVector(values=tuple(float(v) for v in values),
                                    degraded=degraded)


def classify_obfuscated(vector: ObfuscationFeatureVector,
                        model: TreeEnsembleModel | None = None
                        ) -> tuple[str, float]:
    if model is None:
        from .models import default_obfuscation_model
        model = default_obfuscation_model()
    _, score = model.predict_one(vector.as_list())
    return ("obfuscated" if score >= 0.5 else "plain", score)


def feature_importance(model: TreeEnsembleModel | None = None
                       ) -> list[tuple[str, float]]:
    if model is None:
        from .models import default_obfuscation_model
        model = default_obfuscation_model()
    return model.importances()
