"""Lexer for the supported Solidity subset.

Comments and whitespace are discarded here; every surviving token keeps its
1-based source line. Version literals like ``0.4.15`` are lexed as a single
token whose canonical text is ``versionliteral`` (the original digits are not
needed downstream and the canonical text is what serialization emits).
"""
from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import SyntaxDiagnostic

KEYWORDS = frozenset({
    "pragma", "contract", "library", "interface", "function", "constructor",
    "modifier", "event", "struct", "enum", "mapping", "using", "is",
    "if", "else", "while", "for", "return", "returns", "emit", "throw",
    "break", "continue", "new", "delete",
    "public", "private", "internal", "external",
    "pure", "view", "payable", "constant",
    "memory", "storage", "calldata", "indexed", "anonymous",
    "true", "false",
})

# Recognized but deliberately outside the grammar subset; the parser reports
# them as unsupported constructs rather than generic syntax errors.
UNSUPPORTED_KEYWORDS = frozenset({
    "assembly", "do", "try", "catch", "import", "unchecked", "selfdestruct_",
})

_SIZED_INTS = tuple(f"int{n}" for n in range(8, 257, 8))
_SIZED_UINTS = tuple(f"uint{n}" for n in range(8, 257, 8))
_SIZED_BYTES = tuple(f"bytes{n}" for n in range(1, 33))

ELEMENTARY_TYPES = frozenset(
    ("address", "bool", "string", "var", "byte", "bytes", "int", "uint")
    + _SIZED_INTS + _SIZED_UINTS + _SIZED_BYTES
)

VERSION_LITERAL_TEXT = "versionliteral"

_IDENT_RE = re.compile(r"[A-Za-z_$][A-Za-z0-9_$]*")
_VERSION_RE = re.compile(r"\d+\.\d+\.\d+")
_HEX_RE = re.compile(r"0[xX][0-9a-fA-F]+")
_DECIMAL_RE = re.compile(r"\d+(\.\d+)?([eE][+-]?\d+)?")
_STRING_RE = re.compile(r"\"(?:[^\"\\\n]|\\.)*\"|'(?:[^'\\\n]|\\.)*'")
_HEX_LITERAL_RE = re.compile(r"hex(\"[0-9a-fA-F_]*\"|'[0-9a-fA-F_]*')")

_OPERATORS = (
    "<<=", ">>=",
    "**", "==", "!=", "<=", ">=", "&&", "||",
    "+=", "-=", "*=", "/=", "%=", "|=", "&=", "^=",
    "<<", ">>", "++", "--", "=>",
    "+", "-", "*", "/", "%", "=", "<", ">", "!", "&", "|", "^", "~", "?", ":",
)
_PUNCTUATION = frozenset("{}()[];,.")


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int


def lex(source: str) -> list[Token]:
    """Tokenize ``source``, dropping comments and whitespace.

    Raises :class:`SyntaxDiagnostic` on unterminated comments/strings and on
    characters outside the language.
    """
    tokens: list[Token] = []
    i = 0
    line = 1
    line_start = 0  # offset of the current line's first character
    n = len(source)

    def col(offset: int) -> int:
        return offset - line_start + 1

    while i < n:
        ch = source[i]

        if ch == "\n":
            line += 1
            i += 1
            line_start = i
            continue
        if ch in " \t\r\f\v":
            i += 1
            continue

        if source.startswith("//", i):
            end = source.find("\n", i)
            i = n if end == -1 else end
            continue
        if source.startswith("/*", i):
            end = source.find("*/", i + 2)
            if end == -1:
                raise SyntaxDiagnostic(line, col(i), {"*/"}, "end of input")
            for off in range(i, end):
                if source[off] == "\n":
                    line += 1
                    line_start = off + 1
            i = end + 2
            continue

        m = _HEX_LITERAL_RE.match(source, i)
        if m:
            tokens.append(Token("hexLiteral", m.group(0), line, col(i)))
            i = m.end()
            continue

        if ch.isdigit():
            m = _VERSION_RE.match(source, i)
            if m:
                tokens.append(Token("versionLiteral", VERSION_LITERAL_TEXT, line, col(i)))
                i = m.end()
                continue
            m = _HEX_RE.match(source, i)
            if m:
                tokens.append(Token("hexNumber", m.group(0), line, col(i)))
                i = m.end()
                continue
            m = _DECIMAL_RE.match(source, i)
            tokens.append(Token("decimalNumber", m.group(0), line, col(i)))
            i = m.end()
            continue

        if ch in "\"'":
            m = _STRING_RE.match(source, i)
            if not m:
                raise SyntaxDiagnostic(line, col(i), {"string terminator"}, "end of line")
            tokens.append(Token("stringLiteral", m.group(0), line, col(i)))
            i = m.end()
            continue

        m = _IDENT_RE.match(source, i)
        if m:
            word = m.group(0)
            if word in KEYWORDS or word in UNSUPPORTED_KEYWORDS:
                kind = word
            elif word in ELEMENTARY_TYPES:
                kind = "elementaryTypeName"
            else:
                kind = "identifier"
            tokens.append(Token(kind, word, line, col(i)))
            i = m.end()
            continue

        for op in _OPERATORS:
            if source.startswith(op, i):
                tokens.append(Token("operator", op, line, col(i)))
                i += len(op)
                break
        else:
            if ch in _PUNCTUATION:
                tokens.append(Token("punctuation", ch, line, col(i)))
                i += 1
            else:
                raise SyntaxDiagnostic(line, col(i), {"token"}, repr(ch))

    return tokens
