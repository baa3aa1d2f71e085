"""Lightweight ESTree-flavored AST nodes with generic traversal."""
from __future__ import annotations

from typing import Any, Iterator


class Node:
    def __init__(self, type: str, start: int = 0, end: int = 0, **fields: Any):
        self.type = type
        self.start = start
        self.end = end
        self.__dict__.update(fields)

    def get(self, name: str, default: Any = None) -> Any:
        return self.__dict__.get(name, default)

    def __repr__(self) -> str:  # pragma: no cover - debug aid
        skip = {"type", "start", "end"}
        inner = ", ".join(f"{k}={v!r}" for k, v in self.__dict__.items()
                          if k not in skip)
        return f"{self.type}({inner})"


def iter_child_nodes(node: Node) -> Iterator[Node]:
    for key, value in node.__dict__.items():
        if key in ("type", "start", "end"):
            continue
        if isinstance(value, Node):
            yield value
        elif isinstance(value, list):
            for item in value:
                if isinstance(item, Node):
                    yield item


def walk(node: Node) -> Iterator[Node]:
    """Yield node and all descendants, depth-first, in source order."""
    stack = [node]
    while stack:
        current = stack.pop()
        yield current
        children = list(iter_child_nodes(current))
        stack.extend(reversed(children))
