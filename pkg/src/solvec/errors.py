"""Shared exception types."""
from __future__ import annotations


class SolvecError(Exception):
    """Base class for all errors raised by this package."""


class IngestError(SolvecError):
    """Corpus ingestion failure: missing file, duplicate id, bad encoding."""


class ParseError(SolvecError):
    """Base class for lexing/parsing diagnostics."""


class SyntaxDiagnostic(ParseError):
    """Malformed input at a known position, with the expected-token set."""

    def __init__(self, line: int, col: int, expected: set[str], found: str):
        self.line = line
        self.col = col
        self.expected = frozenset(expected)
        self.found = found
        want = ", ".join(sorted(self.expected))
        super().__init__(f"syntax error at {line}:{col}: expected {want}, found {found}")


class UnsupportedConstruct(ParseError):
    """Input is valid Solidity but outside the supported grammar subset."""

    def __init__(self, line: int, col: int, construct: str):
        self.line = line
        self.col = col
        self.construct = construct
        super().__init__(f"unsupported construct at {line}:{col}: {construct}")


class StructureError(SolvecError):
    """An element is missing required context (e.g. orphan function) or a
    line span does not resolve to exactly one element."""


class ConfigError(SolvecError):
    """Invalid configuration value or CLI argument combination."""


class VersionMismatch(SolvecError):
    """Artifacts built against different model versions were combined."""
