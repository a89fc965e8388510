"""Tokenizer for the text format."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterator

from ..utils.errors import RelaySyntaxError
from ..utils.span import SourceSpan

LOCAL = "LOCAL"
GLOBAL = "GLOBAL"
IDENT = "IDENT"
INT = "INT"
FLOAT = "FLOAT"
STRING = "STRING"
PUNCT = "PUNCT"
METADATA = "METADATA"
EOF = "EOF"

KEYWORDS = frozenset(
    {"def", "type", "fn", "let", "if", "else", "match", "ref", "const", "meta", "where"}
)

# Suffixes select the literal's dtype; a bare integer is int32, a bare decimal float32.
NUMBER_SUFFIXES = {
    "": None,
    "f": "float32",
    "f16": "float16",
    "f32": "float32",
    "f64": "float64",
    "i8": "int8",
    "i16": "int16",
    "i32": "int32",
    "i64": "int64",
    "u8": "uint8",
}

_SUFFIX = r"(?P<suffix>f16|f32|f64|f|i8|i16|i32|i64|u8)?(?![A-Za-z0-9_])"

_TOKEN_RE = re.compile(
    "|".join(
        [
            r"(?P<ws>[ \t\r]+)",
            r"(?P<newline>\n)",
            r"(?P<comment>//[^\n]*)",
            r"(?P<metadata>\#\[metadata\])",
            r"(?P<local>%[A-Za-z0-9_]+)",
            r"(?P<global>@[A-Za-z_][A-Za-z0-9_]*)",
            r"(?P<special>-?(?:inf|nan))(?![A-Za-z0-9_])",
            r"(?P<float>(?P<fnum>-?\d+(?:\.\d+(?:[eE][+-]?\d+)?|[eE][+-]?\d+))" + _SUFFIX.replace("suffix", "fsuffix") + ")",
            r"(?P<int>(?P<inum>-?\d+)" + _SUFFIX.replace("suffix", "isuffix") + ")",
            r"(?P<string>\"(?:[^\"\\\n]|\\.)*\")",
            r"(?P<ident>[A-Za-z_][A-Za-z0-9_]*)",
            r"(?P<punct>->|=>|:=|[()\[\]{}<>,;:=.!?])",
        ]
    )
)

_DIGITS_RE = re.compile(r"\d+")


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    span: SourceSpan
    # dtype name chosen by a numeric suffix, if any
    suffix: str = ""

    def is_punct(self, text: str) -> bool:
        return self.kind == PUNCT and self.text == text

    def is_keyword(self, text: str) -> bool:
        return self.kind == IDENT and self.text == text

    def describe(self) -> str:
        return "end of input" if self.kind == EOF else self.text


def tokenize(text: str, file: str = "<string>") -> list[Token]:
    """Split `text` into tokens, ending with an EOF token.

    Raises:
        RelaySyntaxError: On a character that starts no token
    """
    return list(_tokens(text, file))


def _tokens(text: str, file: str) -> Iterator[Token]:
    pos = 0
    line, col = 1, 1
    after_dot = False
    while pos < len(text):
        if after_dot:
            # Projection indices: `%t.0.1` is two projections, not a float.
            digits = _DIGITS_RE.match(text, pos)
            if digits is not None:
                end = digits.end()
                span = SourceSpan(file, line, col, line, col + end - pos)
                yield Token(INT, digits.group(), span)
                col += end - pos
                pos = end
                after_dot = False
                continue
        match = _TOKEN_RE.match(text, pos)
        if match is None:
            span = SourceSpan(file, line, col, line, col + 1)
            raise RelaySyntaxError(text[pos], ("a token",), span)
        kind = match.lastgroup
        lexeme = match.group()
        span = SourceSpan(file, line, col, line, col + len(lexeme))
        pos = match.end()
        if kind == "newline":
            line, col = line + 1, 1
            continue
        col += len(lexeme)
        if kind in ("ws", "comment"):
            continue
        after_dot = False
        if kind == "metadata":
            yield Token(METADATA, lexeme, span)
        elif kind == "local":
            yield Token(LOCAL, lexeme[1:], span)
        elif kind == "global":
            yield Token(GLOBAL, lexeme[1:], span)
        elif kind == "special":
            yield Token(FLOAT, lexeme, span)
        elif kind == "float":
            yield Token(FLOAT, match.group("fnum"), span, match.group("fsuffix") or "")
        elif kind == "int":
            yield Token(INT, match.group("inum"), span, match.group("isuffix") or "")
        elif kind == "string":
            try:
                value = bytes(lexeme[1:-1], "utf-8").decode("unicode_escape")
            except UnicodeDecodeError:
                raise RelaySyntaxError(lexeme, ("a string with valid escapes",), span) from None
            yield Token(STRING, value, span)
        elif kind == "ident":
            yield Token(IDENT, lexeme, span)
        else:
            yield Token(PUNCT, lexeme, span)
            after_dot = lexeme == "."
    yield Token(EOF, "", SourceSpan(file, line, col, line, col))
