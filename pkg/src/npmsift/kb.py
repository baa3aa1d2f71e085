"""Hierarchical behavior knowledge base.

Three layers: sensitive API entries (optionally refined by parameter
patterns), behavior subtypes grouped into types, and category rules
matched as ordered gap-tolerant subsequences over behavior events.
Unknown APIs are never silently dropped; they are surfaced for triage.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

CATEGORIES = ("M1", "M2", "M3", "M4", "M5")


class KnowledgeBaseError(ValueError):
    pass


@dataclass(frozen=True)
class SensitiveApiEntry:
    api_id: str
    parameter_pattern: str | None   # None, '@sensitive_path', or regex
    behavior_subtype: str
    behavior_type: str


@dataclass
class BehaviorEvent:
    subtype: str
    witness: object                  # originating ApiCallRecord
    sensitive: bool = False
    shell_suspicious: bool = False
    shell_categories: set[str] = field(default_factory=set)


@dataclass
class BehaviorSequence:
    events: list[BehaviorEvent]
    package_id: str = ""
    phase: str = "install"
    skipped_unknown: list[str] = field(default_factory=list)

    def subtypes(self) -> list[str]:
        return [e.subtype for e in self.events]


@dataclass(frozen=True)
class RuleElement:
    subtypes: frozenset[str]
    require_sensitive: bool = False
    require_shell: bool = False

    def matches(self, event: BehaviorEvent) -> bool:
        if event.subtype not in self.subtypes:
            return False
        if self.require_sensitive and not event.sensitive:
            return False
        if self.require_shell and not event.shell_suspicious:
            return False
        return True


@dataclass(frozen=True)
class CategoryRule:
    rule_id: str
    category: str
    pattern: tuple[RuleElement, ...]
    note: str = ""


@dataclass
class CategoryVerdict:
    labels: set[str] = field(default_factory=set)
    matched_rules: list[str] = field(default_factory=list)
    evidence: dict[str, list[object]] = field(default_factory=dict)


@dataclass
class KnowledgeBase:
    entries: dict[str, list[SensitiveApiEntry]]
    rules: list[CategoryRule]
    sensitive_paths: tuple[str, ...]
    subtype_to_type: dict[str, str]

    def knows(self, api_id: str) -> bool:
        return api_id in self.entries

    def subtype_of(self, api_id: str) -> str | None:
        entries = self.entries.get(api_id)
        if not entries:
            return None
        return entries[-1].behavior_subtype   # bare entry sorts last

    def path_is_sensitive(self, text: str) -> bool:
        return any(fragment in text for fragment in self.sensitive_paths)


def _data_text(name: str) -> str:
    return resources.files("npmsift.data").joinpath(name).read_text(
        encoding="utf-8")


def _parse_rule_element(token: str) -> RuleElement:
    token = token.strip()
    require_sensitive = require_shell = False
    if token.endswith("~sensitive"):
        require_sensitive = True
        token = token[:-len("~sensitive")]
    elif token.endswith("~shell"):
        require_shell = True
        token = token[:-len("~shell")]
    subtypes = frozenset(part.strip() for part in token.split("/")
                         if part.strip())
    if not subtypes:
        raise KnowledgeBaseError(f"empty rule element in {token!r}")
    return RuleElement(subtypes=subtypes, require_sensitive=require_sensitive,
                       require_shell=require_shell)


def load_kb(api_table_file: str | Path | None = None,
            rule_file: str | Path | None = None,
            sensitive_path_file: str | Path | None = None) -> KnowledgeBase:
    """Parse and validate the knowledge base; duplicates and dangling
    subtype references are rejected."""
    api_text = Path(api_table_file).read_text(encoding="utf-8") \
        if api_table_file else _data_text("api_table.txt")
    rule_text = Path(rule_file).read_text(encoding="utf-8") \
        if rule_file else _data_text("behavior_rules.txt")
    paths_text = Path(sensitive_path_file).read_text(encoding="utf-8") \
        if sensitive_path_file else _data_text("sensitive_paths.txt")

    sensitive_paths = tuple(
        line.strip() for line in paths_text.splitlines()
        if line.strip() and not line.strip().startswith("#"))

    entries: dict[str, list[SensitiveApiEntry]] = {}
    subtype_to_type: dict[str, str] = {}
    seen_pairs: set[tuple[str, str | None]] = set()
    for lineno, line in enumerate(api_text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split("|")]
        if len(parts) != 4:
            raise KnowledgeBaseError(f"api_table line {lineno}: "
                                     f"expected 4 fields, got {len(parts)}")
        api_id, pattern, subtype, type_ = parts
        pattern_value = None if pattern == "-" else pattern
        key = (api_id, pattern_value)
        if key in seen_pairs:
            raise KnowledgeBaseError(
                f"duplicate (api_id, parameter_pattern): {key}")
        seen_pairs.add(key)
        prior = subtype_to_type.get(subtype)
        if prior is not None and prior != type_:
            raise KnowledgeBaseError(
                f"subtype {subtype} assigned to two types: "
                f"{prior} and {type_}")
        subtype_to_type[subtype] = type_
        entry = SensitiveApiEntry(api_id, pattern_value, subtype, type_)
        entries.setdefault(api_id, []).append(entry)
    for api_id, api_entries in entries.items():
        api_entries.sort(key=lambda e: e.parameter_pattern is None)

    rules: list[CategoryRule] = []
    seen_rule_ids: set[str] = set()
    for lineno, line in enumerate(rule_text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split("|")]
        if len(parts) < 3:
            raise KnowledgeBaseError(f"rule line {lineno}: expected at "
                                     f"least 3 fields")
        rule_id, category, sequence = parts[0], parts[1], parts[2]
        note = parts[3] if len(parts) > 3 else ""
        if rule_id in seen_rule_ids:
            raise KnowledgeBaseError(f"duplicate rule id {rule_id}")
        seen_rule_ids.add(rule_id)
        if category not in CATEGORIES:
            raise KnowledgeBaseError(f"unknown category {category!r}")
        elements = tuple(_parse_rule_element(tok)
                         for tok in sequence.split(","))
        if not elements:
            raise KnowledgeBaseError(f"rule {rule_id} has empty pattern")
        for element in elements:
            for subtype in element.subtypes:
                if subtype not in subtype_to_type:
                    raise KnowledgeBaseError(
                        f"rule {rule_id} references unknown subtype "
                        f"{subtype}")
        rules.append(CategoryRule(rule_id, category, elements, note))

    return KnowledgeBase(entries=entries, rules=rules,
                         sensitive_paths=sensitive_paths,
                         subtype_to_type=subtype_to_type)


_DEFAULT_KB: KnowledgeBase | None = None


def default_kb() -> KnowledgeBase:
    global _DEFAULT_KB
    if _DEFAULT_KB is None:
        _DEFAULT_KB = load_kb()
    return _DEFAULT_KB


def _entry_for(kb: KnowledgeBase, api_id: str, args: list[str],
               origin: str) -> tuple[SensitiveApiEntry | None, bool]:
    """Most specific entry for a record plus the sensitivity flag: a
    matched parameter pattern always qualifies; missing arguments on a
    pattern-refined API qualify only for dynamic records, where explicit
    parameters were supposed to be captured. Statically-unknown
    arguments are ordinary (nearly every package passes variables to fs
    APIs) and must not qualify on their own."""
    entries = kb.entries.get(api_id)
    if not entries:
        return None, False
    has_refined = any(e.parameter_pattern is not None for e in entries)
    if args:
        joined = "\x00".join(args)
        for entry in entries:
            if entry.parameter_pattern is None:
                continue
            if entry.parameter_pattern == "@sensitive_path":
                if kb.path_is_sensitive(joined):
                    return entry, True
            elif re.search(entry.parameter_pattern, joined):
                return entry, True
        bare = [e for e in entries if e.parameter_pattern is None]
        return (bare[0] if bare else entries[-1]), False
    bare = [e for e in entries if e.parameter_pattern is None]
    entry = bare[0] if bare else entries[-1]
    return entry, has_refined and origin == "dynamic"


def map_to_behaviors(seq, kb: KnowledgeBase | None = None,
                     command_judge=None) -> BehaviorSequence:
    """Abstract an API call sequence to behavior events, bottom-up.
    Unmatched records are skipped but counted. command_judge, when
    given, maps a command string to shell categories for
    PROCESS_COMMAND_EXECUTION witnesses."""
    kb = kb or default_kb()
    events: list[BehaviorEvent] = []
    skipped: list[str] = []
    for record in seq.records:
        args = list(record.parameter_summary or [])
        entry, sensitive = _entry_for(kb, record.api_id, args,
                                      getattr(record, "origin", "static"))
        if entry is None:
            skipped.append(record.api_id)
            continue
        event = BehaviorEvent(subtype=entry.behavior_subtype,
                              witness=record, sensitive=sensitive)
        if command_judge is not None and args \
                and entry.behavior_subtype == "PROCESS_COMMAND_EXECUTION":
            categories = command_judge(args[0])
            if categories:
                event.shell_suspicious = True
                event.shell_categories = set(categories)
        events.append(event)
    return BehaviorSequence(events=events, package_id=seq.package_id,
                            phase=seq.phase, skipped_unknown=skipped)


def _match_rule(rule: CategoryRule,
                events: list[BehaviorEvent]) -> list[BehaviorEvent] | None:
    matched: list[BehaviorEvent] = []
    position = 0
    for element in rule.pattern:
        while position < len(events):
            event = events[position]
            position += 1
            if element.matches(event):
                matched.append(event)
                break
        else:
            return None
    return matched


def classify(behavior_seq: BehaviorSequence,
             rules: list[CategoryRule] | None = None) -> CategoryVerdict:
    """Every rule whose pattern occurs as an ordered subsequence
    contributes its category; multi-label throughout."""
    rules = rules if rules is not None else default_kb().rules
    verdict = CategoryVerdict()
    for rule in rules:
        matched = _match_rule(rule, behavior_seq.events)
        if matched is None:
            continue
        verdict.labels.add(rule.category)
        verdict.matched_rules.append(rule.rule_id)
        verdict.evidence[rule.rule_id] = [e.witness for e in matched]
    for event in behavior_seq.events:
        for category in event.shell_categories:
            verdict.labels.add(category)
            marker = f"shell:{event.subtype}"
            if marker not in verdict.matched_rules:
                verdict.matched_rules.append(marker)
                verdict.evidence[marker] = [event.witness]
    return verdict


def classify_with_sets(behavior_seq: BehaviorSequence,
                       rules: list[CategoryRule] | None = None
                       ) -> CategoryVerdict:
    """Order-insensitive variant used to quantify how much ordered
    matching reduces false positives."""
    rules = rules if rules is not None else default_kb().rules
    verdict = CategoryVerdict()
    events = behavior_seq.events
    for rule in rules:
        ok = all(any(element.matches(e) for e in events)
                 for element in rule.pattern)
        if ok:
            verdict.labels.add(rule.category)
            verdict.matched_rules.append(rule.rule_id)
    return verdict


def report_unknown_apis(seqs, kb: KnowledgeBase | None = None
                        ) -> tuple[list[str], list[tuple[str, ...]]]:
    """API ids and observed behavior subtype sequences absent from the
    knowledge base, for analyst triage."""
    kb = kb or default_kb()
    unknown_apis: list[str] = []
    novel_sequences: list[tuple[str, ...]] = []
    for seq in seqs:
        for record in seq.records:
            if not kb.knows(record.api_id) \
                    and record.api_id not in unknown_apis:
                unknown_apis.append(record.api_id)
        behavior = map_to_behaviors(seq, kb)
        verdict = classify(behavior, kb.rules)
        signature = tuple(behavior.subtypes())
        if signature and not verdict.labels \
                and signature not in novel_sequences:
            novel_sequences.append(signature)
    return unknown_apis, novel_sequences
