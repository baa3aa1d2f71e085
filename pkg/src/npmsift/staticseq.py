"""Sensitive-API call sequence extraction from merged programs.

AST first, regex later: parsed regions are walked with single-pass
alias tracking (required modules and their members), regions that did
not parse are scanned with per-API regexes. Records are ordered by
source position; behavior features are ordered-pair combinations over
the knowledge base's subtypes.
"""
from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field

from .js import LexError, ParseError, Parser
from .js.nodes import Node, walk
from .kb import KnowledgeBase, default_kb
from .mlcore import TreeEnsembleModel
from .reconstruct import BUILTIN_MODULES, MergedProgram

# call-less member accesses worth recording
ACCESS_APIS = {"process.env", "process.platform", "process.arch",
               "process.argv"}

# bare global callables
GLOBAL_CALLABLES = {"eval", "Function", "fetch", "atob", "btoa"}

# global namespace objects whose members are API ids as-is
GLOBAL_NAMESPACES = {"JSON", "Buffer", "process"}

BEHAVIOR_FEATURE_NAMES = [f"bf{i}" for i in range(1, 13)]

_INFO_SOURCES = frozenset({"SYSTEM_MESSAGE", "SYSTEM_ENV_QUERY",
                           "OS_PLATFORM_QUERY"})

# ordered-pair features: bf -> (source subtypes, sink subtypes)
BEHAVIOR_PAIRS: dict[str, tuple[frozenset[str], frozenset[str]]] = {
    "bf1": (_INFO_SOURCES, frozenset({"NETWORK_OUT"})),
    "bf3": (frozenset({"NETWORK_IN"}), frozenset({"DYNAMIC_CODE_EXEC"})),
    "bf4": (frozenset({"FILE_CREATE"}),
            frozenset({"PROCESS_FILE_EXECUTION"})),
    "bf5": (frozenset({"FILE_READ"}),
            frozenset({"PROCESS_COMMAND_EXECUTION",
                       "PROCESS_FILE_EXECUTION"})),
    "bf6": (frozenset({"FILE_READ"}), frozenset({"DYNAMIC_CODE_EXEC"})),
    "bf7": (frozenset({"NETWORK_OUT"}), frozenset({"DYNAMIC_CODE_EXEC"})),
    "bf8": (frozenset({"FILE_PERMISSION"}),
            frozenset({"PROCESS_COMMAND_EXECUTION",
                       "PROCESS_FILE_EXECUTION"})),
    "bf10": (frozenset({"PROCESS_COMMAND_EXECUTION"}),
             frozenset({"SERIALIZATION", "NETWORK_OUT", "FILE_CREATE"})),
}

# single-occurrence features
BEHAVIOR_SINGLES = {
    "bf2": "SYSTEM_ENV_QUERY",
    "bf9": "OS_PLATFORM_QUERY",
    "bf11": "PROCESS_COMMAND_EXECUTION",
}


@dataclass
class ApiCallRecord:
    api_id: str
    parameter_summary: list[str] = field(default_factory=list)
    location: tuple[str, int, int] = ("", 0, 0)
    origin: str = "static"           # static | dynamic
    ordinal: int = 0
    known_api: bool = True
    via_regex: bool = False
    meta: dict = field(default_factory=dict)


@dataclass
class ApiCallSequence:
    package_id: str
    phase: str                        # install | import
    records: list[ApiCallRecord] = field(default_factory=list)

    def api_ids(self) -> list[str]:
        return [r.api_id for r in self.records]


@dataclass
class BehaviorFeatureVector:
    values: dict[str, float]

    def as_list(self) -> list[float]:
        return [self.values[name] for name in BEHAVIOR_FEATURE_NAMES]

    def __getitem__(self, name: str) -> float:
        return self.values[name]


def _line_index(text: str) -> list[int]:
    starts = [0]
    for i, c in enumerate(text):
        if c == "\n":
            starts.append(i + 1)
    return starts


def _pos_to_line_col(starts: list[int], offset: int) -> tuple[int, int]:
    import bisect
    line = bisect.bisect_right(starts, offset) - 1
    return line + 1, offset - starts[line]


def _literal_arg(node: Node) -> str | None:
    if node.type == "Literal" and node.get("kind") in ("string", "num"):
        return str(node.get("value"))
    if node.type == "TemplateLiteral" and not node.expressions:
        return node.raw[1:-1]
    if node.type == "UnaryExpression" and node.operator == "-" \
            and node.argument.type == "Literal":
        return "-" + str(node.argument.get("value"))
    return None


class _AliasTracker:
    """Flow-insensitive single pass: identifiers assigned from required
    modules or their members resolve to dotted API paths."""

    def __init__(self):
        self.env: dict[str, str] = {}

    def _expr_path(self, node: Node) -> str | None:
        t = node.type
        if t == "CallExpression" and node.callee.type == "Identifier" \
                and node.callee.name == "require" and node.arguments \
                and node.arguments[0].type == "Literal":
            spec = str(node.arguments[0].get("value"))
            if spec.startswith("node:"):
                spec = spec[5:]
            root = spec.split("/")[0]
            if root in BUILTIN_MODULES:
                return spec.replace("/", ".") if "/" in spec else root
            return None
        if t == "Identifier":
            return self.env.get(node.name)
        if t == "MemberExpression" and not node.computed \
                and isinstance(node.property, str):
            base = self._expr_path(node.object)
            if base is None and node.object.type == "Identifier" \
                    and node.object.name in GLOBAL_NAMESPACES:
                base = node.object.name
            if base is not None:
                return f"{base}.{node.property}"
            return None
        if t == "AwaitExpression":
            return self._expr_path(node.argument)
        return None

    def learn(self, target: Node, value: Node) -> None:
        path = self._expr_path(value)
        if target.type == "Identifier":
            if path is not None:
                self.env[target.name] = path
            return
        if target.type == "ObjectPattern" and path is not None:
            for prop in target.properties:
                if prop.type != "Property" or prop.computed:
                    continue
                key = prop.key
                if key.type != "Identifier":
                    continue
                binding = prop.value
                if binding.type == "AssignmentPattern":
                    binding = binding.left
                if binding.type == "Identifier":
                    self.env[binding.name] = f"{path}.{key.name}"

    def resolve_callee(self, callee: Node) -> str | None:
        if callee.type == "Identifier":
            if callee.name in GLOBAL_CALLABLES:
                return callee.name
            return self.env.get(callee.name)
        if callee.type in ("MemberExpression", "CallExpression",
                           "AwaitExpression"):
            return self._expr_path(callee)
        return None


def _complement_segments(text: str,
                         spans: list[tuple[int, int]]
                         ) -> list[tuple[int, int]]:
    segments = []
    cursor = 0
    for start, end in sorted(spans):
        if start > cursor:
            segments.append((cursor, start))
        cursor = max(cursor, end)
    if cursor < len(text):
        segments.append((cursor, len(text)))
    return segments


def _regex_patterns(kb: KnowledgeBase) -> list[tuple[str, re.Pattern]]:
    patterns = []
    for api_id in kb.entries:
        parts = api_id.split(".")
        if len(parts) == 1:
            pattern = re.compile(r"(?<![\w$.])" + re.escape(parts[0])
                                 + r"\s*\(")
        else:
            tail = r"\s*\.\s*".join(re.escape(p) for p in parts)
            pattern = re.compile(r"(?<![\w$.])" + tail
                                 + (r"\s*\(" if api_id not in ACCESS_APIS
                                    else r"\b"))
        patterns.append((api_id, pattern))
    return patterns


_REGEX_CACHE: list[tuple[str, re.Pattern]] | None = None


def extract_static_sequence(program: MergedProgram,
                            kb: KnowledgeBase | None = None,
                            phase: str = "import",
                            package_id: str = "") -> ApiCallSequence:
    """Collect sensitive-API calls from a merged program in source
    position order."""
    global _REGEX_CACHE
    kb = kb or default_kb()
    text = program.text
    starts = _line_index(text)
    records: list[ApiCallRecord] = []

    for seg_start, seg_end in _complement_segments(
            text, program.parse_fallback_spans):
        segment = text[seg_start:seg_end]
        try:
            ast = Parser(segment, offset=seg_start).parse_program()
        except (ParseError, LexError):
            program.parse_fallback_spans.append((seg_start, seg_end))
            continue
        records.extend(_walk_segment(ast, text, starts, program, kb))

    if kb is default_kb():
        if _REGEX_CACHE is None:
            _REGEX_CACHE = _regex_patterns(kb)
        patterns = _REGEX_CACHE
    else:
        patterns = _regex_patterns(kb)
    for span_start, span_end in program.parse_fallback_spans:
        body = text[span_start:span_end]
        for api_id, pattern in patterns:
            for match in pattern.finditer(body):
                line, col = _pos_to_line_col(starts,
                                             span_start + match.start())
                records.append(ApiCallRecord(
                    api_id=api_id,
                    location=(program.entry_path, line, col),
                    origin="static", via_regex=True))

    records.sort(key=lambda r: r.location)
    for i, record in enumerate(records):
        record.ordinal = i
    return ApiCallSequence(package_id=package_id, phase=phase,
                           records=records)


def _walk_segment(ast: Node, text: str, starts: list[int],
                  program: MergedProgram,
                  kb: KnowledgeBase) -> list[ApiCallRecord]:
    tracker = _AliasTracker()
    records: list[ApiCallRecord] = []
    for node in walk(ast):
        t = node.type
        if t == "VariableDeclaration":
            for d in node.declarations:
                if d.get("init") is not None:
                    tracker.learn(d.id, d.init)
        elif t == "AssignmentExpression" and node.operator == "=":
            tracker.learn(node.left, node.right)
        elif t == "CallExpression":
            api = tracker.resolve_callee(node.callee)
            if api is None:
                continue
            if api.startswith("require.") or api == "require":
                continue
            args = [a for a in (_literal_arg(arg)
                                for arg in node.arguments)
                    if a is not None]
            line, col = _pos_to_line_col(starts, node.start)
            records.append(ApiCallRecord(
                api_id=api, parameter_summary=args,
                location=(program.entry_path, line, col),
                origin="static", known_api=kb.knows(api)))
        elif t == "NewExpression":
            api = tracker.resolve_callee(node.callee)
            if api is not None and kb.knows(api):
                line, col = _pos_to_line_col(starts, node.start)
                args = [a for a in (_literal_arg(arg)
                                    for arg in node.arguments)
                        if a is not None]
                records.append(ApiCallRecord(
                    api_id=api, parameter_summary=args,
                    location=(program.entry_path, line, col),
                    origin="static"))
        elif t == "MemberExpression":
            path = tracker._expr_path(node)
            if path in ACCESS_APIS:
                line, col = _pos_to_line_col(starts, node.start)
                records.append(ApiCallRecord(
                    api_id=path,
                    location=(program.entry_path, line, col),
                    origin="static", known_api=kb.knows(path)))
    # drop member-access records that are prefixes of an adjacent call
    # (process.env.X read inside a recorded call is fine; a call record
    # at the same spot shadows its own callee access)
    deduped: list[ApiCallRecord] = []
    seen_spots: set[tuple[int, int, str]] = set()
    for record in records:
        key = (record.location[1], record.location[2], record.api_id)
        if key in seen_spots:
            continue
        seen_spots.add(key)
        deduped.append(record)
    return deduped


def compute_behavior_features(seq: ApiCallSequence,
                              kb: KnowledgeBase | None = None
                              ) -> BehaviorFeatureVector:
    """Ordered-pair behavior combinations; unknown APIs are excluded."""
    kb = kb or default_kb()
    subtype_sequence: list[str] = []
    sensitive_count = 0
    for record in seq.records:
        subtype = kb.subtype_of(record.api_id)
        if subtype is None:
            continue
        subtype_sequence.append(subtype)
        joined = "\x00".join(record.parameter_summary)
        if record.parameter_summary and kb.path_is_sensitive(joined):
            sensitive_count += 1

    values: dict[str, float] = {}
    for name, (sources, sinks) in BEHAVIOR_PAIRS.items():
        hit = False
        seen_source = False
        for subtype in subtype_sequence:
            if seen_source and subtype in sinks:
                hit = True
                break
            if subtype in sources:
                seen_source = True
        values[name] = 1.0 if hit else 0.0
    for name, subtype in BEHAVIOR_SINGLES.items():
        values[name] = 1.0 if subtype in subtype_sequence else 0.0
    values["bf12"] = float(sensitive_count)
    return BehaviorFeatureVector(values=values)


def screen_suspicious(vector: BehaviorFeatureVector,
                      model: TreeEnsembleModel | None = None
                      ) -> tuple[bool, float]:
    """Suspicious packages are forwarded to dynamic confirmation."""
    if model is None:
        from .models import default_screen_model
        model = default_screen_model()
    label, score = model.predict_one(vector.as_list())
    return bool(label == 1), score


def sequence_digest(seq: ApiCallSequence) -> str:
    payload = "\n".join(f"{r.api_id}|{','.join(r.parameter_summary)}"
                        for r in seq.records)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]
