"""Text format: tokenizer, parser and pretty-printer."""

from .lexer import Token, tokenize
from .parser import Parser, parse_bindings, parse_expr, parse_module, parse_type
from .printer import attr_text, literal_text, print_expr, print_module

__all__ = [
    "Token",
    "tokenize",
    "Parser",
    "parse_bindings",
    "parse_expr",
    "parse_module",
    "parse_type",
    "attr_text",
    "literal_text",
    "print_expr",
    "print_module",
]
