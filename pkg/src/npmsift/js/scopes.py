"""Scope-aware identifier renaming over parsed source.

Produces text edits (start, end, replacement) for every reference to a
module-level binding named in the rename map, skipping references that
resolve to a shadowing local binding. Member properties, non-computed
object keys and labels are never touched; shorthand object properties
are expanded (`{a}` becomes `{a: newName}`) so the key survives.
"""
from __future__ import annotations

from .nodes import Node, iter_child_nodes

Edit = tuple[int, int, str]

_FUNCTION_TYPES = {"FunctionDeclaration", "FunctionExpression",
                   "ArrowFunctionExpression"}


def pattern_identifiers(pattern: Node) -> list[Node]:
    """Identifier nodes bound by a binding pattern, in source order."""
    out: list[Node] = []
    stack = [pattern]
    while stack:
        node = stack.pop()
        if node is None:
            continue
        t = node.type
        if t == "Identifier":
            out.append(node)
        elif t == "ObjectPattern":
            for prop in reversed(node.properties):
                if prop.type == "RestElement":
                    stack.append(prop.argument)
                else:
                    stack.append(prop.value)
        elif t == "ArrayPattern":
            for el in reversed(node.elements):
                stack.append(el)
        elif t == "AssignmentPattern":
            stack.append(node.left)
        elif t == "RestElement":
            stack.append(node.argument)
    return out


def pattern_names(pattern: Node) -> set[str]:
    return {n.name for n in pattern_identifiers(pattern)}


def _hoisted_names(body: list[Node]) -> set[str]:
    """var and function names hoisted to the enclosing function scope."""
    names: set[str] = set()
    stack = list(body)
    while stack:
        node = stack.pop()
        if not isinstance(node, Node):
            continue
        t = node.type
        if t in _FUNCTION_TYPES or t in ("ClassDeclaration",
                                         "ClassExpression"):
            if t == "FunctionDeclaration" and node.id is not None:
                names.add(node.id.name)
            continue  # do not descend into nested function/class scopes
        if t == "VariableDeclaration" and node.kind == "var":
            for d in node.declarations:
                names |= pattern_names(d.id)
        stack.extend(iter_child_nodes(node))
    return names


def _lexical_names(body: list[Node]) -> set[str]:
    """let/const/class/function names declared directly in a block."""
    names: set[str] = set()
    for node in body:
        if node.type == "VariableDeclaration" and node.kind in ("let",
                                                                "const"):
            for d in node.declarations:
                names |= pattern_names(d.id)
        elif node.type in ("FunctionDeclaration", "ClassDeclaration"):
            if node.id is not None:
                names.add(node.id.name)
    return names


def module_level_names(program: Node) -> dict[str, str]:
    """All module-scope binding names, mapped to their declaration kind."""
    names: dict[str, str] = {}
    for name in _hoisted_names(program.body):
        names[name] = "var"
    for node in program.body:
        if node.type == "VariableDeclaration":
            for d in node.declarations:
                for n in pattern_names(d.id):
                    names[n] = node.kind
        elif node.type in ("FunctionDeclaration", "ClassDeclaration"):
            if node.id is not None:
                names[node.id.name] = "function" \
                    if node.type == "FunctionDeclaration" else "class"
        elif node.type == "ImportDeclaration":
            for spec in node.specifiers:
                names[spec.local] = "import"
        elif node.type == "ExportNamedDeclaration" and node.declaration:
            decl = node.declaration
            if decl.type == "VariableDeclaration":
                for d in decl.declarations:
                    for n in pattern_names(d.id):
                        names[n] = decl.kind
            elif decl.id is not None:
                names[decl.id.name] = "function" \
                    if decl.type == "FunctionDeclaration" else "class"
        elif node.type == "ExportDefaultDeclaration":
            decl = node.declaration
            if decl.type in ("FunctionDeclaration", "ClassDeclaration") \
                    and decl.id is not None:
                names[decl.id.name] = "function"
    return names


class _Renamer:
    def __init__(self, mapping: dict[str, str]):
        self.mapping = mapping
        self.scopes: list[set[str]] = []
        self.edits: list[Edit] = []

    def shadowed(self, name: str) -> bool:
        return any(name in scope for scope in self.scopes)

    def maybe_rename(self, ident: Node) -> None:
        new = self.mapping.get(ident.name)
        if new is not None and not self.shadowed(ident.name):
            self.edits.append((ident.start, ident.end, new))

    def visit(self, node: Node | None) -> None:
        if node is None:
            return
        t = node.type
        method = getattr(self, f"visit_{t}", None)
        if method is not None:
            method(node)
            return
        for child in iter_child_nodes(node):
            self.visit(child)

    def generic_children(self, node: Node) -> None:
        for child in iter_child_nodes(node):
            self.visit(child)

    # -- leaves ----------------------------------------------------------
    def visit_Identifier(self, node: Node) -> None:
        self.maybe_rename(node)

    # -- scope creators ----------------------------------------------------
    def _visit_function(self, node: Node, own_name: bool) -> None:
        scope: set[str] = set()
        if own_name and node.get("id") is not None:
            scope.add(node.id.name)
        for p in node.params:
            scope |= pattern_names(p)
        body = node.body
        if body.type == "BlockStatement":
            scope |= _hoisted_names(body.body)
            scope |= _lexical_names(body.body)
        self.scopes.append(scope)
        for p in node.params:
            self._visit_pattern(p)
        self.visit(body)
        self.scopes.pop()

    def visit_FunctionDeclaration(self, node: Node) -> None:
        if node.id is not None:
            self.maybe_rename(node.id)
        self._visit_function(node, own_name=False)

    def visit_FunctionExpression(self, node: Node) -> None:
        self._visit_function(node, own_name=True)

    def visit_ArrowFunctionExpression(self, node: Node) -> None:
        self._visit_function(node, own_name=False)

    def visit_ClassDeclaration(self, node: Node) -> None:
        if node.id is not None:
            self.maybe_rename(node.id)
        self._visit_class(node)

    def visit_ClassExpression(self, node: Node) -> None:
        self._visit_class(node)

    def _visit_class(self, node: Node) -> None:
        scope = {node.id.name} if node.get("id") is not None else set()
        self.scopes.append(scope)
        self.visit(node.get("superclass"))
        self.visit(node.body)
        self.scopes.pop()

    def visit_BlockStatement(self, node: Node) -> None:
        scope = _lexical_names(node.body)
        # sloppy-mode var hoisting: vars escape the block, so they do not
        # shadow here unless also declared lexically
        self.scopes.append(scope)
        self.generic_children(node)
        self.scopes.pop()

    def visit_CatchClause(self, node: Node) -> None:
        scope = pattern_names(node.param) if node.param is not None else set()
        self.scopes.append(scope)
        if node.param is not None:
            self._visit_pattern(node.param)
        self.visit(node.body)
        self.scopes.pop()

    def _for_scope(self, node: Node) -> set[str]:
        head = node.get("init") or node.get("left")
        if isinstance(head, Node) and head.type == "VariableDeclaration" \
                and head.kind in ("let", "const"):
            names: set[str] = set()
            for d in head.declarations:
                names |= pattern_names(d.id)
            return names
        return set()

    def visit_ForStatement(self, node: Node) -> None:
        self.scopes.append(self._for_scope(node))
        self.generic_children(node)
        self.scopes.pop()

    def visit_ForInStatement(self, node: Node) -> None:
        self.scopes.append(self._for_scope(node))
        self.generic_children(node)
        self.scopes.pop()

    # -- reference-position exceptions ---------------------------------------
    def visit_MemberExpression(self, node: Node) -> None:
        self.visit(node.object)
        if node.computed:
            self.visit(node.property)

    def visit_Property(self, node: Node) -> None:
        if node.computed:
            self.visit(node.key)
        if node.shorthand:
            value = node.value
            target = value.left if value.type == "AssignmentPattern" \
                else value
            new = self.mapping.get(target.name)
            if new is not None and not self.shadowed(target.name):
                self.edits.append((node.key.start, node.key.end,
                                   f"{target.name}: {new}"))
            if value.type == "AssignmentPattern":
                self.visit(value.right)
            return
        self.visit(node.value)

    def visit_MethodDefinition(self, node: Node) -> None:
        if node.computed:
            self.visit(node.key)
        self.visit(node.value)

    def visit_PropertyDefinition(self, node: Node) -> None:
        if node.computed:
            self.visit(node.key)
        self.visit(node.get("value"))

    def visit_VariableDeclaration(self, node: Node) -> None:
        for d in node.declarations:
            self._visit_pattern(d.id)
            self.visit(d.get("init"))

    def _visit_pattern(self, pattern: Node | None) -> None:
        """Visit a binding pattern: identifiers are declaration sites that
        may themselves be renamed; defaults and computed keys are
        expressions."""
        if pattern is None:
            return
        t = pattern.type
        if t == "Identifier":
            self.maybe_rename(pattern)
        elif t == "ObjectPattern":
            for prop in pattern.properties:
                if prop.type == "RestElement":
                    self._visit_pattern(prop.argument)
                    continue
                if prop.computed:
                    self.visit(prop.key)
                if prop.shorthand:
                    value = prop.value
                    target = value.left \
                        if value.type == "AssignmentPattern" else value
                    new = self.mapping.get(target.name)
                    if new is not None and not self.shadowed(target.name):
                        self.edits.append((prop.key.start, prop.key.end,
                                           f"{target.name}: {new}"))
                    if value.type == "AssignmentPattern":
                        self.visit(value.right)
                    continue
                self._visit_pattern(prop.value)
        elif t == "ArrayPattern":
            for el in pattern.elements:
                self._visit_pattern(el)
        elif t == "AssignmentPattern":
            self._visit_pattern(pattern.left)
            self.visit(pattern.right)
        elif t == "RestElement":
            self._visit_pattern(pattern.argument)
        else:
            self.visit(pattern)

    def visit_ImportDeclaration(self, node: Node) -> None:
        pass  # specifiers are strings; handled by the reconstructor

    def visit_LabeledStatement(self, node: Node) -> None:
        self.visit(node.body)


def rename_edits(program: Node, mapping: dict[str, str]) -> list[Edit]:
    if not mapping:
        return []
    renamer = _Renamer(mapping)
    for stmt in program.body:
        renamer.visit(stmt)
    return sorted(renamer.edits)


def apply_edits(source: str, edits: list[Edit], base: int = 0) -> str:
    """Apply non-overlapping (start, end, text) edits; positions are
    absolute and shifted by -base before indexing into source."""
    out = []
    cursor = 0
    for start, end, text in sorted(edits):
        s, e = start - base, end - base
        if s < cursor:
            raise ValueError(f"overlapping edit at {start}")
        out.append(source[cursor:s])
        out.append(text)
        cursor = e
    out.append(source[cursor:])
    return "".join(out)
