"""Recursive-descent ECMAScript parser.

Covers the statement and expression grammar found in real-world npm
package code (ES2020-ish): modules, classes, async/generators, template
literals, destructuring, optional chaining, spread. Not covered: JSX,
decorators. Semicolon insertion follows the standard rules.

The parser is deliberately permissive: it accepts both module systems in
any file and does not enforce binding or strict-mode errors. Its job is
structure recovery, not validation.
"""
from __future__ import annotations

from .lexer import (EOF, NAME, NUM, PRIVATE, PUNCT, REGEX, STRING,
                    TEMPLATE, Token, tokenize)
from .nodes import Node

__all__ = ["Parser", "ParseError", "parse", "parse_expression"]


class ParseError(SyntaxError):
    def __init__(self, message: str, token: Token):
        super().__init__(
            f"{message} at line {token.line}:{token.col} (offset {token.start})")
        self.offset = token.start
        self.line = token.line
        self.col = token.col


ASSIGN_OPS = {"=", "+=", "-=", "*=", "/=", "%=", "**=", "<<=", ">>=",
              ">>>=", "&=", "|=", "^=", "&&=", "||=", "??="}

# binary operator precedence (higher binds tighter)
BINOP_PREC = {
    "??": 1,
    "||": 2, "&&": 3,
    "|": 4, "^": 5, "&": 6,
    "==": 7, "!=": 7, "===": 7, "!==": 7,
    "<": 8, ">": 8, "<=": 8, ">=": 8, "in": 8, "instanceof": 8,
    "<<": 9, ">>": 9, ">>>": 9,
    "+": 10, "-": 10,
    "*": 11, "/": 11, "%": 11,
}

UNARY_OPS = {"delete", "void", "typeof", "+", "-", "~", "!"}

DECL_KINDS = {"var", "let", "const"}


class Parser:
    def __init__(self, source: str, offset: int = 0):
        self.src = source
        self.offset = offset
        self.toks = tokenize(source, offset)
        self.i = 0

    # -- cursor ----------------------------------------------------------
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, ahead: int = 1) -> Token:
        j = min(self.i + ahead, len(self.toks) - 1)
        return self.toks[j]

    def at(self, type_: str, value: str | None = None) -> bool:
        t = self.tok
        return t.type == type_ and (value is None or t.value == value)

    def at_punct(self, value: str) -> bool:
        return self.tok.type == PUNCT and self.tok.value == value

    def at_name(self, value: str) -> bool:
        return self.tok.type == NAME and self.tok.value == value

    def advance(self) -> Token:
        t = self.tok
        if t.type != EOF:
            self.i += 1
        return t

    def expect(self, type_: str, value: str | None = None) -> Token:
        if not self.at(type_, value):
            want = value or type_
            raise ParseError(f"expected {want!r}, found {self.tok.value!r}",
                             self.tok)
        return self.advance()

    def expect_punct(self, value: str) -> Token:
        return self.expect(PUNCT, value)

    def error(self, msg: str) -> ParseError:
        return ParseError(msg, self.tok)

    # -- semicolon handling ------------------------------------------------
    def eat_semicolon(self) -> None:
        if self.at_punct(";"):
            self.advance()
            return
        if self.at_punct("}") or self.tok.type == EOF or self.tok.nl_before:
            return  # automatic insertion
        raise self.error(f"expected ';', found {self.tok.value!r}")

    # -- program -----------------------------------------------------------
    def parse_program(self) -> Node:
        body = []
        while self.tok.type != EOF:
            body.append(self.parse_statement())
        end = self.toks[-1].end
        return Node("Program", self.offset, end, body=body)

    # -- statements ---------------------------------------------------------
    def parse_statement(self) -> Node:
        t = self.tok
        if t.type == PUNCT:
            if t.value == "{":
                return self.parse_block()
            if t.value == ";":
                self.advance()
                return Node("EmptyStatement", t.start, t.end)
        if t.type == NAME:
            v = t.value
            if v in DECL_KINDS:
                if v != "let" or self._let_is_declaration():
                    return self.parse_var_declaration()
            elif v == "function":
                return self.parse_function(declaration=True)
            elif v == "async" and self.peek().type == NAME \
                    and self.peek().value == "function" \
                    and not self.peek().nl_before:
                return self.parse_function(declaration=True)
            elif v == "class":
                return self.parse_class(declaration=True)
            elif v == "if":
                return self.parse_if()
            elif v == "for":
                return self.parse_for()
            elif v == "while":
                return self.parse_while()
            elif v == "do":
                return self.parse_do_while()
            elif v == "switch":
                return self.parse_switch()
            elif v == "try":
                return self.parse_try()
            elif v == "return":
                return self.parse_return()
            elif v == "throw":
                return self.parse_throw()
            elif v in ("break", "continue"):
                return self.parse_break_continue()
            elif v == "debugger":
                self.advance()
                self.eat_semicolon()
                return Node("DebuggerStatement", t.start, t.end)
            elif v == "with":
                return self.parse_with()
            elif v == "import" and not (
                    self.peek().type == PUNCT
                    and self.peek().value in ("(", ".")):
                return self.parse_import()
            elif v == "export":
                return self.parse_export()
            # labeled statement: plain identifier followed by ':'
            if self.peek().type == PUNCT and self.peek().value == ":" \
                    and self._is_plain_name(t):
                label = self.advance()
                self.advance()  # ':'
                body = self.parse_statement()
                return Node("LabeledStatement", t.start, body.end,
                            label=label.value, body=body)
        expr = self.parse_expression()
        self.eat_semicolon()
        return Node("ExpressionStatement", expr.start, expr.end,
                    expression=expr)

    @staticmethod
    def _is_plain_name(tok: Token) -> bool:
        from .lexer import KEYWORDS
        return tok.type == NAME and tok.value not in KEYWORDS

    def _let_is_declaration(self) -> bool:
        nxt = self.peek()
        if nxt.type == NAME and nxt.value not in ("in", "instanceof"):
            return True
        return nxt.type == PUNCT and nxt.value in ("[", "{")

    def parse_block(self) -> Node:
        start = self.expect_punct("{").start
        body = []
        while not self.at_punct("}"):
            if self.tok.type == EOF:
                raise self.error("unterminated block")
            body.append(self.parse_statement())
        end = self.advance().end
        return Node("BlockStatement", start, end, body=body)

    def parse_var_declaration(self, eat_semi: bool = True) -> Node:
        kw = self.advance()
        decls = []
        while True:
            target = self.parse_binding_target()
            init = None
            if self.at_punct("="):
                self.advance()
                init = self.parse_assignment()
            end = init.end if init else target.end
            decls.append(Node("VariableDeclarator", target.start, end,
                              id=target, init=init))
            if self.at_punct(","):
                self.advance()
                continue
            break
        if eat_semi:
            self.eat_semicolon()
        return Node("VariableDeclaration", kw.start, decls[-1].end,
                    kind=kw.value, declarations=decls)

    # -- binding patterns ---------------------------------------------------
    def parse_binding_target(self) -> Node:
        if self.at_punct("["):
            return self.parse_array_pattern()
        if self.at_punct("{"):
            return self.parse_object_pattern()
        t = self.expect(NAME)
        if not self._is_plain_name(t):
            raise ParseError(f"reserved word {t.value!r} as binding name", t)
        return Node("Identifier", t.start, t.end, name=t.value)

    def parse_array_pattern(self) -> Node:
        start = self.expect_punct("[").start
        elements: list[Node | None] = []
        while not self.at_punct("]"):
            if self.at_punct(","):
                self.advance()
                elements.append(None)
                continue
            if self.at_punct("..."):
                rstart = self.advance().start
                arg = self.parse_binding_target()
                elements.append(Node("RestElement", rstart, arg.end,
                                     argument=arg))
            else:
                elements.append(self._binding_with_default())
            if self.at_punct(","):
                self.advance()
        end = self.expect_punct("]").end
        return Node("ArrayPattern", start, end, elements=elements)

    def parse_object_pattern(self) -> Node:
        start = self.expect_punct("{").start
        props = []
        while not self.at_punct("}"):
            if self.at_punct("..."):
                rstart = self.advance().start
                arg = self.parse_binding_target()
                props.append(Node("RestElement", rstart, arg.end,
                                  argument=arg))
            else:
                computed = False
                if self.at_punct("["):
                    self.advance()
                    key = self.parse_assignment()
                    self.expect_punct("]")
                    computed = True
                else:
                    kt = self.advance()
                    if kt.type not in (NAME, STRING, NUM):
                        raise ParseError("bad object pattern key", kt)
                    key = Node("Identifier", kt.start, kt.end, name=kt.value) \
                        if kt.type == NAME else _literal_node(kt)
                if self.at_punct(":"):
                    self.advance()
                    value = self._binding_with_default()
                    shorthand = False
                else:
                    value = Node("Identifier", key.start, key.end,
                                 name=key.get("name"))
                    if self.at_punct("="):
                        self.advance()
                        default = self.parse_assignment()
                        value = Node("AssignmentPattern", key.start,
                                     default.end, left=value, right=default)
                    shorthand = True
                props.append(Node("Property", key.start, value.end, key=key,
                                  value=value, computed=computed,
                                  shorthand=shorthand, kind="init",
                                  is_async=False, is_generator=False))
            if self.at_punct(","):
                self.advance()
        end = self.expect_punct("}").end
        return Node("ObjectPattern", start, end, properties=props)

    def _binding_with_default(self) -> Node:
        target = self.parse_binding_target()
        if self.at_punct("="):
            self.advance()
            default = self.parse_assignment()
            return Node("AssignmentPattern", target.start, default.end,
                        left=target, right=default)
        return target

    # -- functions and classes ----------------------------------------------
    def parse_function(self, declaration: bool) -> Node:
        start = self.tok.start
        is_async = False
        if self.at_name("async"):
            self.advance()
            is_async = True
        self.expect(NAME, "function")
        is_generator = False
        if self.at_punct("*"):
            self.advance()
            is_generator = True
        name = None
        if self.tok.type == NAME and not self.at_punct("("):
            nt = self.advance()
            name = Node("Identifier", nt.start, nt.end, name=nt.value)
        params = self.parse_params()
        body = self.parse_block()
        type_ = "FunctionDeclaration" if declaration \
            else "FunctionExpression"
        return Node(type_, start, body.end, id=name, params=params,
                    body=body, is_async=is_async, is_generator=is_generator)

    def parse_params(self) -> list[Node]:
        self.expect_punct("(")
        params = []
        while not self.at_punct(")"):
            if self.at_punct("..."):
                rstart = self.advance().start
                arg = self.parse_binding_target()
                params.append(Node("RestElement", rstart, arg.end,
                                   argument=arg))
            else:
                params.append(self._binding_with_default())
            if self.at_punct(","):
                self.advance()
        self.expect_punct(")")
        return params

    def parse_class(self, declaration: bool) -> Node:
        start = self.expect(NAME, "class").start
        name = None
        if self.tok.type == NAME and self.tok.value != "extends":
            nt = self.advance()
            name = Node("Identifier", nt.start, nt.end, name=nt.value)
        superclass = None
        if self.at_name("extends"):
            self.advance()
            superclass = self.parse_unary_and_postfix()
        body = self.parse_class_body()
        type_ = "ClassDeclaration" if declaration else "ClassExpression"
        return Node(type_, start, body.end, id=name, superclass=superclass,
                    body=body)

    def parse_class_body(self) -> Node:
        start = self.expect_punct("{").start
        members = []
        while not self.at_punct("}"):
            if self.at_punct(";"):
                self.advance()
                continue
            members.append(self.parse_class_member())
        end = self.advance().end
        return Node("ClassBody", start, end, body=members)

    def parse_class_member(self) -> Node:
        start = self.tok.start
        static = False
        if self.at_name("static") and not (
                self.peek().type == PUNCT
                and self.peek().value in ("(", "=", ";", "}")):
            self.advance()
            static = True
            if self.at_punct("{"):  # static initialization block
                body = self.parse_block()
                return Node("StaticBlock", start, body.end, body=body.body)
        is_async = False
        is_generator = False
        kind = "method"
        if self.at_name("async") and not (
                self.peek().type == PUNCT
                and self.peek().value in ("(", "=", ";", "}")) \
                and not self.peek().nl_before:
            self.advance()
            is_async = True
        if self.at_punct("*"):
            self.advance()
            is_generator = True
        if (self.at_name("get") or self.at_name("set")) and not (
                self.peek().type == PUNCT
                and self.peek().value in ("(", "=", ";", "}", ":")):
            kind = self.advance().value
        key, computed = self.parse_property_key()
        if self.at_punct("("):
            params = self.parse_params()
            body = self.parse_block()
            fn = Node("FunctionExpression", key.start, body.end, id=None,
                      params=params, body=body, is_async=is_async,
                      is_generator=is_generator)
            if kind == "method" and not computed \
                    and key.type == "Identifier" \
                    and key.get("name") == "constructor":
                kind = "constructor"
            return Node("MethodDefinition", start, body.end, key=key,
                        value=fn, kind=kind, static=static,
                        computed=computed)
        value = None
        if self.at_punct("="):
            self.advance()
            value = self.parse_assignment()
        self.eat_semicolon()
        end = value.end if value else key.end
        return Node("PropertyDefinition", start, end, key=key, value=value,
                    static=static, computed=computed)

    def parse_property_key(self) -> tuple[Node, bool]:
        if self.at_punct("["):
            self.advance()
            key = self.parse_assignment()
            self.expect_punct("]")
            return key, True
        t = self.advance()
        if t.type == NAME:
            return Node("Identifier", t.start, t.end, name=t.value), False
        if t.type == PRIVATE:
            return Node("PrivateName", t.start, t.end, name=t.value), False
        if t.type in (STRING, NUM):
            return _literal_node(t), False
        raise ParseError("bad property key", t)

    # -- control flow ---------------------------------------------------------
    def parse_if(self) -> Node:
        start = self.advance().start
        self.expect_punct("(")
        test = self.parse_expression()
        self.expect_punct(")")
        consequent = self.parse_statement()
        alternate = None
        if self.at_name("else"):
            self.advance()
            alternate = self.parse_statement()
        end = (alternate or consequent).end
        return Node("IfStatement", start, end, test=test,
                    consequent=consequent, alternate=alternate)

    def parse_for(self) -> Node:
        start = self.advance().start
        is_await = False
        if self.at_name("await"):
            self.advance()
            is_await = True
        self.expect_punct("(")
        init = None
        if self.at_punct(";"):
            self.advance()
        else:
            if self.tok.type == NAME and self.tok.value in DECL_KINDS and (
                    self.tok.value != "let" or self._let_is_declaration()):
                init = self.parse_var_declaration(eat_semi=False)
            else:
                init = self.parse_expression(no_in=True)
            if self.at_name("of") or self.at_name("in"):
                of = self.advance().value == "of"
                right = self.parse_assignment()
                self.expect_punct(")")
                body = self.parse_statement()
                return Node("ForInStatement", start, body.end, left=init,
                            right=right, body=body, of=of, is_await=is_await)
            self.expect_punct(";")
        test = None
        if not self.at_punct(";"):
            test = self.parse_expression()
        self.expect_punct(";")
        update = None
        if not self.at_punct(")"):
            update = self.parse_expression()
        self.expect_punct(")")
        body = self.parse_statement()
        return Node("ForStatement", start, body.end, init=init, test=test,
                    update=update, body=body)

    def parse_while(self) -> Node:
        start = self.advance().start
        self.expect_punct("(")
        test = self.parse_expression()
        self.expect_punct(")")
        body = self.parse_statement()
        return Node("WhileStatement", start, body.end, test=test, body=body)

    def parse_do_while(self) -> Node:
        start = self.advance().start
        body = self.parse_statement()
        self.expect(NAME, "while")
        self.expect_punct("(")
        test = self.parse_expression()
        end = self.expect_punct(")").end
        if self.at_punct(";"):
            self.advance()
        return Node("DoWhileStatement", start, end, body=body, test=test)

    def parse_switch(self) -> Node:
        start = self.advance().start
        self.expect_punct("(")
        discriminant = self.parse_expression()
        self.expect_punct(")")
        self.expect_punct("{")
        cases = []
        while not self.at_punct("}"):
            if self.at_name("case"):
                cstart = self.advance().start
                test = self.parse_expression()
            elif self.at_name("default"):
                cstart = self.advance().start
                test = None
            else:
                raise self.error("expected 'case' or 'default'")
            self.expect_punct(":")
            consequent = []
            while not (self.at_punct("}") or self.at_name("case")
                       or self.at_name("default")):
                consequent.append(self.parse_statement())
            cend = consequent[-1].end if consequent else cstart
            cases.append(Node("SwitchCase", cstart, cend, test=test,
                              consequent=consequent))
        end = self.advance().end
        return Node("SwitchStatement", start, end, discriminant=discriminant,
                    cases=cases)

    def parse_try(self) -> Node:
        start = self.advance().start
        block = self.parse_block()
        handler = None
        finalizer = None
        if self.at_name("catch"):
            cstart = self.advance().start
            param = None
            if self.at_punct("("):
                self.advance()
                param = self.parse_binding_target()
                self.expect_punct(")")
            cbody = self.parse_block()
            handler = Node("CatchClause", cstart, cbody.end, param=param,
                           body=cbody)
        if self.at_name("finally"):
            self.advance()
            finalizer = self.parse_block()
        if handler is None and finalizer is None:
            raise self.error("try without catch or finally")
        end = (finalizer or handler).end
        return Node("TryStatement", start, end, block=block, handler=handler,
                    finalizer=finalizer)

    def parse_return(self) -> Node:
        kw = self.advance()
        argument = None
        if not (self.at_punct(";") or self.at_punct("}")
                or self.tok.type == EOF or self.tok.nl_before):
            argument = self.parse_expression()
        self.eat_semicolon()
        end = argument.end if argument else kw.end
        return Node("ReturnStatement", kw.start, end, argument=argument)

    def parse_throw(self) -> Node:
        kw = self.advance()
        if self.tok.nl_before:
            raise self.error("newline after throw")
        argument = self.parse_expression()
        self.eat_semicolon()
        return Node("ThrowStatement", kw.start, argument.end,
                    argument=argument)

    def parse_break_continue(self) -> Node:
        kw = self.advance()
        label = None
        if self.tok.type == NAME and not self.tok.nl_before \
                and self._is_plain_name(self.tok):
            label = self.advance().value
        self.eat_semicolon()
        type_ = "BreakStatement" if kw.value == "break" \
            else "ContinueStatement"
        return Node(type_, kw.start, kw.end, label=label)

    def parse_with(self) -> Node:
        start = self.advance().start
        self.expect_punct("(")
        obj = self.parse_expression()
        self.expect_punct(")")
        body = self.parse_statement()
        return Node("WithStatement", start, body.end, object=obj, body=body)

    # -- modules ------------------------------------------------------------
    def parse_import(self) -> Node:
        start = self.advance().start
        if self.tok.type == STRING:  # side-effect import
            src_tok = self.advance()
            self.eat_semicolon()
            return Node("ImportDeclaration", start, src_tok.end,
                        specifiers=[], source=_string_value(src_tok.value))
        specifiers = []
        if self.tok.type == NAME:
            local = self.advance().value
            specifiers.append(Node("ImportSpecifier", start, self.tok.end,
                                   kind="default", imported="default",
                                   local=local))
            if self.at_punct(","):
                self.advance()
        if self.at_punct("*"):
            self.advance()
            self.expect(NAME, "as")
            local = self.expect(NAME).value
            specifiers.append(Node("ImportSpecifier", start, self.tok.end,
                                   kind="namespace", imported="*",
                                   local=local))
        elif self.at_punct("{"):
            self.advance()
            while not self.at_punct("}"):
                it = self.advance()
                if it.type not in (NAME, STRING):
                    raise ParseError("bad import specifier", it)
                imported = it.value if it.type == NAME \
                    else _string_value(it.value)
                local = imported
                if self.at_name("as"):
                    self.advance()
                    local = self.expect(NAME).value
                specifiers.append(Node("ImportSpecifier", it.start, it.end,
                                       kind="named", imported=imported,
                                       local=local))
                if self.at_punct(","):
                    self.advance()
            self.advance()
        self.expect(NAME, "from")
        src_tok = self.expect(STRING)
        self.eat_semicolon()
        return Node("ImportDeclaration", start, src_tok.end,
                    specifiers=specifiers, source=_string_value(src_tok.value))

    def parse_export(self) -> Node:
        start = self.advance().start
        if self.at_name("default"):
            self.advance()
            if self.at_name("function") or (
                    self.at_name("async") and self.peek().value == "function"):
                decl = self.parse_function(declaration=True)
            elif self.at_name("class"):
                decl = self.parse_class(declaration=True)
            else:
                decl = self.parse_assignment()
                self.eat_semicolon()
            return Node("ExportDefaultDeclaration", start, decl.end,
                        declaration=decl)
        if self.at_punct("*"):
            self.advance()
            exported = None
            if self.at_name("as"):
                self.advance()
                exported = self.expect(NAME).value
            self.expect(NAME, "from")
            src_tok = self.expect(STRING)
            self.eat_semicolon()
            return Node("ExportAllDeclaration", start, src_tok.end,
                        source=_string_value(src_tok.value), exported=exported)
        if self.at_punct("{"):
            self.advance()
            specifiers = []
            while not self.at_punct("}"):
                lt = self.expect(NAME)
                exported = lt.value
                if self.at_name("as"):
                    self.advance()
                    et = self.advance()
                    exported = et.value if et.type == NAME \
                        else _string_value(et.value)
                specifiers.append(Node("ExportSpecifier", lt.start, lt.end,
                                       local=lt.value, exported=exported))
                if self.at_punct(","):
                    self.advance()
            end = self.advance().end
            source = None
            if self.at_name("from"):
                self.advance()
                src_tok = self.expect(STRING)
                source = _string_value(src_tok.value)
                end = src_tok.end
            self.eat_semicolon()
            return Node("ExportNamedDeclaration", start, end,
                        declaration=None, specifiers=specifiers,
                        source=source)
        if self.tok.type == NAME and (
                self.tok.value in DECL_KINDS
                or self.tok.value in ("function", "class")
                or (self.tok.value == "async"
                    and self.peek().value == "function")):
            if self.tok.value in DECL_KINDS:
                decl = self.parse_var_declaration()
            elif self.tok.value == "class":
                decl = self.parse_class(declaration=True)
            else:
                decl = self.parse_function(declaration=True)
            return Node("ExportNamedDeclaration", start, decl.end,
                        declaration=decl, specifiers=[], source=None)
        raise self.error("unsupported export form")

    # -- expressions -----------------------------------------------------------
    def parse_expression(self, no_in: bool = False) -> Node:
        expr = self.parse_assignment(no_in=no_in)
        if self.at_punct(","):
            exprs = [expr]
            while self.at_punct(","):
                self.advance()
                exprs.append(self.parse_assignment(no_in=no_in))
            return Node("SequenceExpression", exprs[0].start, exprs[-1].end,
                        expressions=exprs)
        return expr

    def parse_assignment(self, no_in: bool = False) -> Node:
        arrow = self._try_parse_arrow()
        if arrow is not None:
            return arrow
        if self.at_name("yield"):
            return self.parse_yield()
        left = self.parse_conditional(no_in=no_in)
        if self.tok.type == PUNCT and self.tok.value in ASSIGN_OPS:
            op = self.advance().value
            right = self.parse_assignment(no_in=no_in)
            return Node("AssignmentExpression", left.start, right.end,
                        operator=op, left=left, right=right)
        return left

    def parse_yield(self) -> Node:
        kw = self.advance()
        delegate = False
        argument = None
        if self.at_punct("*"):
            self.advance()
            delegate = True
        if not (self.tok.nl_before or self.tok.type == EOF
                or (self.tok.type == PUNCT
                    and self.tok.value in (")", "]", "}", ",", ";", ":"))):
            argument = self.parse_assignment()
        end = argument.end if argument else kw.end
        return Node("YieldExpression", kw.start, end, argument=argument,
                    delegate=delegate)

    # arrow detection -------------------------------------------------------
    def _try_parse_arrow(self) -> Node | None:
        start_i = self.i
        is_async = False
        if self.at_name("async") and not self.peek().nl_before and (
                self.peek().type == NAME
                or (self.peek().type == PUNCT and self.peek().value == "(")):
            # `async x => ...` or `async (...) => ...`; anything else falls
            # through to normal parsing (e.g. a call to a function `async`)
            if self.peek().type == NAME:
                if self.peek(2).type == PUNCT and self.peek(2).value == "=>":
                    is_async = True
                    self.advance()
            else:
                close = self._matching_paren(self.i + 1)
                if close is not None \
                        and self.toks[close + 1].type == PUNCT \
                        and self.toks[close + 1].value == "=>" \
                        and not self.toks[close + 1].nl_before:
                    is_async = True
                    self.advance()
            if not is_async:
                return None
        if self.tok.type == NAME and self._is_plain_name(self.tok) \
                and self.peek().type == PUNCT and self.peek().value == "=>" \
                and not self.peek().nl_before:
            p = self.advance()
            params = [Node("Identifier", p.start, p.end, name=p.value)]
            return self._finish_arrow(params, p.start, is_async)
        if self.at_punct("("):
            close = self._matching_paren(self.i)
            if close is not None and self.toks[close + 1].type == PUNCT \
                    and self.toks[close + 1].value == "=>" \
                    and not self.toks[close + 1].nl_before:
                start = self.tok.start
                params = self.parse_params()
                return self._finish_arrow(params, start, is_async)
        self.i = start_i
        return None

    def _matching_paren(self, open_i: int) -> int | None:
        depth = 0
        j = open_i
        while j < len(self.toks):
            t = self.toks[j]
            if t.type == PUNCT:
                if t.value == "(":
                    depth += 1
                elif t.value == ")":
                    depth -= 1
                    if depth == 0:
                        return j
            elif t.type == EOF:
                return None
            j += 1
        return None

    def _finish_arrow(self, params: list[Node], start: int,
                      is_async: bool) -> Node:
        self.expect_punct("=>")
        if self.at_punct("{"):
            body = self.parse_block()
            expression = False
        else:
            body = self.parse_assignment()
            expression = True
        return Node("ArrowFunctionExpression", start, body.end, params=params,
                    body=body, is_async=is_async, expression=expression,
                    is_generator=False)

    def parse_conditional(self, no_in: bool = False) -> Node:
        test = self.parse_binary(0, no_in=no_in)
        if self.at_punct("?"):
            self.advance()
            consequent = self.parse_assignment()
            self.expect_punct(":")
            alternate = self.parse_assignment(no_in=no_in)
            return Node("ConditionalExpression", test.start, alternate.end,
                        test=test, consequent=consequent, alternate=alternate)
        return test

    def parse_binary(self, min_prec: int, no_in: bool = False) -> Node:
        left = self.parse_unary_and_postfix()
        while True:
            op = None
            if self.tok.type == PUNCT and self.tok.value in BINOP_PREC:
                op = self.tok.value
            elif self.tok.type == NAME \
                    and self.tok.value in ("in", "instanceof"):
                if self.tok.value == "in" and no_in:
                    break
                op = self.tok.value
            if op is None:
                break
            prec = BINOP_PREC[op]
            if prec < min_prec:
                break
            self.advance()
            right = self.parse_binary(prec + 1, no_in=no_in)
            type_ = "LogicalExpression" if op in ("&&", "||", "??") \
                else "BinaryExpression"
            left = Node(type_, left.start, right.end, operator=op, left=left,
                        right=right)
        return left

    def parse_unary_and_postfix(self) -> Node:
        t = self.tok
        if t.type == PUNCT and t.value in ("++", "--"):
            self.advance()
            arg = self.parse_unary_and_postfix()
            return Node("UpdateExpression", t.start, arg.end,
                        operator=t.value, argument=arg, prefix=True)
        if (t.type == PUNCT and t.value in ("+", "-", "~", "!")) or (
                t.type == NAME and t.value in ("delete", "void", "typeof")):
            self.advance()
            arg = self.parse_unary_and_postfix()
            return Node("UnaryExpression", t.start, arg.end,
                        operator=t.value, argument=arg)
        if t.type == NAME and t.value == "await":
            nxt = self.peek()
            can_start = (nxt.type in (NAME, NUM, STRING, TEMPLATE, REGEX,
                                      PRIVATE)
                         or (nxt.type == PUNCT
                             and nxt.value in ("(", "[", "{", "!", "~", "+",
                                               "-", "++", "--", "...")))
            if can_start:
                self.advance()
                arg = self.parse_unary_and_postfix()
                return Node("AwaitExpression", t.start, arg.end, argument=arg)
        expr = self.parse_exponent_base()
        if self.at_punct("**"):
            self.advance()
            right = self.parse_unary_and_postfix()
            return Node("BinaryExpression", expr.start, right.end,
                        operator="**", left=expr, right=right)
        if self.tok.type == PUNCT and self.tok.value in ("++", "--") \
                and not self.tok.nl_before:
            op = self.advance()
            return Node("UpdateExpression", expr.start, op.end,
                        operator=op.value, argument=expr, prefix=False)
        return expr

    def parse_exponent_base(self) -> Node:
        if self.at_name("new"):
            return self.parse_new()
        expr = self.parse_primary()
        return self.parse_call_tail(expr)

    def parse_new(self) -> Node:
        kw = self.advance()
        if self.at_punct("."):
            self.advance()
            prop = self.expect(NAME)
            return Node("MetaProperty", kw.start, prop.end, meta="new",
                        property=prop.value)
        callee = self.parse_exponent_base_for_new()
        args: list[Node] = []
        end = callee.end
        if self.at_punct("("):
            args = self.parse_arguments()
            end = self.toks[self.i - 1].end
        node = Node("NewExpression", kw.start, end, callee=callee,
                    arguments=args)
        return self.parse_call_tail(node)

    def parse_exponent_base_for_new(self) -> Node:
        if self.at_name("new"):
            return self.parse_new()
        expr = self.parse_primary()
        # member chain only; a '(' belongs to the new-expression arguments
        while True:
            if self.at_punct("."):
                self.advance()
                prop = self.advance()
                expr = Node("MemberExpression", expr.start, prop.end,
                            object=expr, property=prop.value,
                            computed=False, optional=False)
            elif self.at_punct("["):
                self.advance()
                prop = self.parse_expression()
                end = self.expect_punct("]").end
                expr = Node("MemberExpression", expr.start, end, object=expr,
                            property=prop, computed=True, optional=False)
            else:
                return expr

    def parse_call_tail(self, expr: Node) -> Node:
        while True:
            if self.at_punct("."):
                self.advance()
                prop = self.advance()
                if prop.type not in (NAME, PRIVATE):
                    raise ParseError("bad member access", prop)
                expr = Node("MemberExpression", expr.start, prop.end,
                            object=expr, property=prop.value, computed=False,
                            optional=False)
            elif self.at_punct("?."):
                self.advance()
                if self.at_punct("("):
                    args = self.parse_arguments()
                    expr = Node("CallExpression", expr.start,
                                self.toks[self.i - 1].end, callee=expr,
                                arguments=args, optional=True)
                elif self.at_punct("["):
                    self.advance()
                    prop = self.parse_expression()
                    end = self.expect_punct("]").end
                    expr = Node("MemberExpression", expr.start, end,
                                object=expr, property=prop, computed=True,
                                optional=True)
                else:
                    prop = self.advance()
                    expr = Node("MemberExpression", expr.start, prop.end,
                                object=expr, property=prop.value,
                                computed=False, optional=True)
            elif self.at_punct("["):
                self.advance()
                prop = self.parse_expression()
                end = self.expect_punct("]").end
                expr = Node("MemberExpression", expr.start, end, object=expr,
                            property=prop, computed=True, optional=False)
            elif self.at_punct("("):
                args = self.parse_arguments()
                expr = Node("CallExpression", expr.start,
                            self.toks[self.i - 1].end, callee=expr,
                            arguments=args, optional=False)
            elif self.tok.type == TEMPLATE:
                quasi = self.parse_template()
                expr = Node("TaggedTemplateExpression", expr.start, quasi.end,
                            tag=expr, quasi=quasi)
            else:
                return expr

    def parse_arguments(self) -> list[Node]:
        self.expect_punct("(")
        args = []
        while not self.at_punct(")"):
            if self.at_punct("..."):
                s = self.advance().start
                arg = self.parse_assignment()
                args.append(Node("SpreadElement", s, arg.end, argument=arg))
            else:
                args.append(self.parse_assignment())
            if self.at_punct(","):
                self.advance()
        self.advance()
        return args

    def parse_template(self) -> Node:
        t = self.advance()
        expressions = []
        for (s, e) in t.expr_ranges:
            sub = Parser(self.src[s - self.offset:e - self.offset], offset=s)
            expressions.append(sub.parse_expression())
            if sub.tok.type != EOF:
                raise ParseError("trailing tokens in template expression",
                                 sub.tok)
        return Node("TemplateLiteral", t.start, t.end, raw=t.value,
                    expressions=expressions)

    def parse_primary(self) -> Node:
        t = self.tok
        if t.type == NUM:
            self.advance()
            return _literal_node(t)
        if t.type == STRING:
            self.advance()
            return _literal_node(t)
        if t.type == REGEX:
            self.advance()
            return Node("Literal", t.start, t.end, raw=t.value, kind="regex",
                        value=t.value)
        if t.type == TEMPLATE:
            return self.parse_template()
        if t.type == PRIVATE:
            # `#x in obj` ergonomic brand check
            self.advance()
            return Node("PrivateName", t.start, t.end, name=t.value)
        if t.type == PUNCT:
            if t.value == "(":
                self.advance()
                expr = self.parse_expression()
                self.expect_punct(")")
                return expr
            if t.value == "[":
                return self.parse_array_literal()
            if t.value == "{":
                return self.parse_object_literal()
        if t.type == NAME:
            v = t.value
            if v == "function" or (v == "async"
                                   and self.peek().type == NAME
                                   and self.peek().value == "function"
                                   and not self.peek().nl_before):
                return self.parse_function(declaration=False)
            if v == "class":
                return self.parse_class(declaration=False)
            if v == "this":
                self.advance()
                return Node("ThisExpression", t.start, t.end)
            if v == "super":
                self.advance()
                return Node("Super", t.start, t.end)
            if v in ("true", "false"):
                self.advance()
                return Node("Literal", t.start, t.end, raw=v, kind="bool",
                            value=v == "true")
            if v == "null":
                self.advance()
                return Node("Literal", t.start, t.end, raw=v, kind="null",
                            value=None)
            if v == "import":
                self.advance()
                if self.at_punct("."):
                    self.advance()
                    prop = self.expect(NAME)
                    return Node("MetaProperty", t.start, prop.end,
                                meta="import", property=prop.value)
                args = self.parse_arguments()
                return Node("ImportExpression", t.start,
                            self.toks[self.i - 1].end,
                            argument=args[0] if args else None)
            from .lexer import KEYWORDS
            if v not in KEYWORDS or v in ("let",):
                self.advance()
                return Node("Identifier", t.start, t.end, name=v)
        raise self.error(f"unexpected token {t.value!r}")

    def parse_array_literal(self) -> Node:
        start = self.expect_punct("[").start
        elements: list[Node | None] = []
        while not self.at_punct("]"):
            if self.at_punct(","):
                self.advance()
                elements.append(None)
                continue
            if self.at_punct("..."):
                s = self.advance().start
                arg = self.parse_assignment()
                elements.append(Node("SpreadElement", s, arg.end,
                                     argument=arg))
            else:
                elements.append(self.parse_assignment())
            if self.at_punct(","):
                self.advance()
        end = self.advance().end
        return Node("ArrayExpression", start, end, elements=elements)

    def parse_object_literal(self) -> Node:
        start = self.expect_punct("{").start
        props = []
        while not self.at_punct("}"):
            props.append(self.parse_object_property())
            if self.at_punct(","):
                self.advance()
        end = self.advance().end
        return Node("ObjectExpression", start, end, properties=props)

    def parse_object_property(self) -> Node:
        t = self.tok
        if self.at_punct("..."):
            s = self.advance().start
            arg = self.parse_assignment()
            return Node("SpreadElement", s, arg.end, argument=arg)
        is_async = False
        is_generator = False
        kind = "init"
        if self.at_name("async") and not self.peek().nl_before and not (
                self.peek().type == PUNCT
                and self.peek().value in (":", "(", ",", "}", "=")):
            self.advance()
            is_async = True
        if self.at_punct("*"):
            self.advance()
            is_generator = True
        if (self.at_name("get") or self.at_name("set")) and not (
                self.peek().type == PUNCT
                and self.peek().value in (":", "(", ",", "}", "=")):
            kind = self.advance().value
        key, computed = self.parse_property_key()
        if self.at_punct("("):
            params = self.parse_params()
            body = self.parse_block()
            fn = Node("FunctionExpression", key.start, body.end, id=None,
                      params=params, body=body, is_async=is_async,
                      is_generator=is_generator)
            return Node("Property", t.start, body.end, key=key, value=fn,
                        computed=computed, shorthand=False,
                        kind=kind if kind != "init" else "method",
                        is_async=is_async, is_generator=is_generator)
        if kind != "init":
            raise self.error("getter/setter requires a body")
        if self.at_punct(":"):
            self.advance()
            value = self.parse_assignment()
            return Node("Property", t.start, value.end, key=key, value=value,
                        computed=computed, shorthand=False, kind="init",
                        is_async=False, is_generator=False)
        # shorthand { a } or { a = default } (the latter in patterns)
        if key.type != "Identifier":
            raise self.error("expected ':' after property key")
        value: Node = Node("Identifier", key.start, key.end,
                           name=key.get("name"))
        if self.at_punct("="):
            self.advance()
            default = self.parse_assignment()
            value = Node("AssignmentPattern", key.start, default.end,
                         left=value, right=default)
        return Node("Property", t.start, value.end, key=key, value=value,
                    computed=False, shorthand=True, kind="init",
                    is_async=False, is_generator=False)


def _string_value(raw: str) -> str:
    """Decode a string token's raw text to its value (simple escapes)."""
    body = raw[1:-1]
    out = []
    i = 0
    simple = {"n": "\n", "t": "\t", "r": "\r", "b": "\b", "f": "\f",
              "v": "\v", "0": "\0"}
    while i < len(body):
        c = body[i]
        if c == "\\" and i + 1 < len(body):
            nxt = body[i + 1]
            if nxt in simple:
                out.append(simple[nxt])
                i += 2
            elif nxt == "x" and i + 3 < len(body) + 1:
                try:
                    out.append(chr(int(body[i + 2:i + 4], 16)))
                    i += 4
                except ValueError:
                    out.append(nxt)
                    i += 2
            elif nxt == "u":
                if i + 2 < len(body) and body[i + 2] == "{":
                    j = body.index("}", i + 3)
                    try:
                        out.append(chr(int(body[i + 3:j], 16)))
                    except ValueError:
                        pass
                    i = j + 1
                else:
                    try:
                        out.append(chr(int(body[i + 2:i + 6], 16)))
                        i += 6
                    except ValueError:
                        out.append(nxt)
                        i += 2
            elif nxt == "\n":
                i += 2
            else:
                out.append(nxt)
                i += 2
        else:
            out.append(c)
            i += 1
    return "".join(out)


def _literal_node(tok: Token) -> Node:
    if tok.type == NUM:
        return Node("Literal", tok.start, tok.end, raw=tok.value, kind="num",
                    value=tok.value)
    return Node("Literal", tok.start, tok.end, raw=tok.value, kind="string",
                value=_string_value(tok.value))


def parse(source: str, offset: int = 0) -> Node:
    return Parser(source, offset=offset).parse_program()


def parse_expression(source: str, offset: int = 0) -> Node:
    p = Parser(source, offset=offset)
    expr = p.parse_expression()
    if p.tok.type != EOF:
        raise ParseError("trailing tokens", p.tok)
    return expr
