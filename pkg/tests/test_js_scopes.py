from __future__ import annotations

from npmsift.js import parse
from npmsift.js.scopes import apply_edits, module_level_names, rename_edits


def rename(src: str, mapping: dict[str, str]) -> str:
    prog = parse(src)
    return apply_edits(src, rename_edits(prog, mapping))


def test_module_level_names():
    src = ("var a = 1; let b; const c = 3; function f() {} class K {}\n"
           "if (x) { var hoisted = 1; let hidden = 2; }\n"
           "import imp from 'm';")
    names = module_level_names(parse(src))
    assert set(names) == {"a", "b", "c", "f", "K", "hoisted", "imp"}
    assert names["f"] == "function"
    assert names["hoisted"] == "var"


def test_rename_simple_reference():
    out = rename("var f = 1; g(f);", {"f": "F2"})
    assert out == "var F2 = 1; g(F2);"


def test_rename_skips_shadowed():
    src = "var f = 1; function g(f) { return f; } g(f);"
    out = rename(src, {"f": "F2"})
    assert out == "var F2 = 1; function g(f) { return f; } g(F2);"


def test_rename_skips_member_property():
    out = rename("var f = o.f; f.f(); x[f];", {"f": "F2"})
    assert out == "var F2 = o.f; F2.f(); x[F2];"


def test_rename_skips_object_keys_expands_shorthand():
    out = rename("var a = 1; var o = {a: a, b: 2}; var p = {a};",
                 {"a": "A2"})
    assert out == "var A2 = 1; var o = {a: A2, b: 2}; var p = {a: A2};"


def test_rename_block_let_shadow():
    src = "let v = 1; { let v = 2; use(v); } use(v);"
    out = rename(src, {"v": "V2"})
    assert out == "let V2 = 1; { let v = 2; use(v); } use(V2);"


def test_rename_var_in_block_not_shadowing():
    src = "var v = 1; { v = 2; } use(v);"
    out = rename(src, {"v": "V2"})
    assert out == "var V2 = 1; { V2 = 2; } use(V2);"


def test_rename_function_declaration_and_calls():
    src = "function f(x) { return f(x - 1); } f(3);"
    out = rename(src, {"f": "export_a_f"})
    assert out == ("function export_a_f(x) { return export_a_f(x - 1); } "
                   "export_a_f(3);")


def test_function_expression_own_name_shadows():
    src = "var f = 1; var g = function f() { return f; }; use(f);"
    out = rename(src, {"f": "F2"})
    assert out == "var F2 = 1; var g = function f() { return f; }; use(F2);"


def test_catch_param_shadows():
    src = "var e = 1; try { x(); } catch (e) { log(e); } log(e);"
    out = rename(src, {"e": "E2"})
    assert out == "var E2 = 1; try { x(); } catch (e) { log(e); } log(E2);"


def test_for_let_scope():
    src = "let i = 9; for (let i = 0; i < 3; i++) { use(i); } use(i);"
    out = rename(src, {"i": "I2"})
    assert out == "let I2 = 9; for (let i = 0; i < 3; i++) { use(i); } use(I2);"


def test_arrow_params_shadow():
    src = "const a = 1; xs.map(a => a + 1); use(a);"
    out = rename(src, {"a": "A2"})
    assert out == "const A2 = 1; xs.map(a => a + 1); use(A2);"


def test_class_methods_and_this():
    src = "var h = 1; class C { m() { return h; } h() {} } new C();"
    out = rename(src, {"h": "H2", "C": "C2"})
    assert out == "var H2 = 1; class C2 { m() { return H2; } h() {} } new C2();"


def test_destructuring_declaration_renamed():
    src = "const {a, b: c} = o; use(a, c);"
    out = rename(src, {"a": "A2", "c": "C2"})
    assert out == "const {a: A2, b: C2} = o; use(A2, C2);"


def test_template_expression_renamed():
    src = "var a = 1; s = `v=${a}`;"
    out = rename(src, {"a": "A2"})
    assert out == "var A2 = 1; s = `v=${A2}`;"


def test_label_not_renamed():
    src = "var a = 1; a: for (;;) { break a; } use(a);"
    out = rename(src, {"a": "A2"})
    assert out == "var A2 = 1; a: for (;;) { break a; } use(A2);"
