from .lexer import LexError, Token, tokenize
from .nodes import Node, iter_child_nodes, walk
from .parser import ParseError, Parser, parse, parse_expression

__all__ = [
    "LexError", "Token", "tokenize",
    "Node", "iter_child_nodes", "walk",
    "ParseError", "Parser", "parse", "parse_expression",
]
