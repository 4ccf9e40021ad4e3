"""Serialization of parse trees into leveled token streams, and normalization.

Streams carry a parallel ``kinds`` tuple so normalization is a pure map over
token kinds rather than a regex pass over text; that is what keeps it
idempotent (split identifiers are re-tagged and never split twice) and keeps
identifiers like ``x0`` from being mistaken for numbers.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

from .errors import StructureError
from .lexer import lex
from .parser import ParseNode, ParseTree, contracts_of

LEVELS = ("contract", "function", "statement")
MODES = ("structural", "basic")

# Kinds introduced during serialization/normalization, never by the lexer.
KIND_AST_NODE = "astNode"
KIND_IDENTIFIER_PART = "identifierPart"
KIND_SPLIT_IDENTIFIER = "splitIdentifier"
KIND_PLACEHOLDER = "placeholder"

_LITERAL_PLACEHOLDERS = {
    "stringLiteral": "stringliteral",
    "decimalNumber": "decimalnumber",
    "hexNumber": "hexnumber",
    "hexLiteral": "hexliteral",
    "versionLiteral": "versionliteral",
}

_REMOVED_PUNCTUATION = frozenset({"'", '"', ",", ";"})


@dataclass(frozen=True)
class TokenStream:
    level: str
    element_key: str
    tokens: tuple[str, ...]
    contract_id: str
    mode: str
    kinds: tuple[str, ...]
    line_start: int
    line_end: int
    normalized: bool = False

    def __post_init__(self):
        if self.level not in LEVELS:
            raise ValueError(f"unknown level: {self.level}")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode: {self.mode}")
        if len(self.tokens) != len(self.kinds):
            raise ValueError("tokens and kinds must be parallel")
        if self.line_start > self.line_end:
            raise ValueError("line_start must not exceed line_end")

    def format_line(self) -> str:
        return f"{self.element_key} : {' '.join(self.tokens)}"


def _key(start: int, end: int) -> str:
    return f"{start}_{end}"


def _pairs_of(node: ParseNode) -> list[tuple[str, str]]:
    return [(t.token_text, t.kind) for t in node.iter_terminals()]


def split_identifier(name: str) -> list[str]:
    """Lowercased constituent words of an identifier.

    Boundaries: underscores, a lowercase letter followed by an uppercase one,
    and letter/digit transitions. Always returns at least one part for a
    non-empty name.
    """
    parts: list[str] = []
    current = ""
    prev = ""
    for ch in name:
        if ch == "_":
            if current:
                parts.append(current.lower())
            current = ""
            prev = ch
            continue
        boundary = (
            (prev.islower() and ch.isupper())
            or (prev.isalpha() and ch.isdigit())
            or (prev.isdigit() and ch.isalpha())
        )
        if boundary and current:
            parts.append(current.lower())
            current = ""
        current += ch
        prev = ch
    if current:
        parts.append(current.lower())
    return parts


def has_split_boundary(name: str) -> bool:
    parts = split_identifier(name)
    return len(parts) > 1 or "_" in name


def _contract_signature(contract: ParseNode) -> list[tuple[str, str]]:
    """``contract <Name> <name parts> { }`` (keyword taken from the source)."""
    keyword = contract.children[0]
    name = contract.children[1]
    sig = [(keyword.token_text, keyword.kind), (name.token_text, "identifier")]
    sig += [(p, KIND_IDENTIFIER_PART) for p in split_identifier(name.token_text)]
    sig += [("{", "punctuation"), ("}", "punctuation")]
    return sig


def _function_signature(function: ParseNode) -> list[tuple[str, str]]:
    """Keyword, name with its camel-split parts, parameters, returns clause."""
    children = list(function.children)
    keyword = children[0]
    sig = [(keyword.token_text, keyword.kind)]
    idx = 1
    if idx < len(children) and children[idx].is_terminal and children[idx].kind == "identifier":
        name = children[idx]
        sig.append((name.token_text, "identifier"))
        sig += [(p, KIND_IDENTIFIER_PART) for p in split_identifier(name.token_text)]
        idx += 1
    if idx < len(children) and children[idx].kind == "parameterList":
        sig += _pairs_of(children[idx])
    for pos, child in enumerate(children):
        if child.is_terminal and child.token_text == "returns":
            sig.append(("returns", child.kind))
            if pos + 1 < len(children) and children[pos + 1].kind == "parameterList":
                sig += _pairs_of(children[pos + 1])
            break
    return sig


def _leading_pragmas(tree: ParseTree, contract: ParseNode) -> list[ParseNode]:
    pragmas: list[ParseNode] = []
    for child in tree.root.children:
        if child is contract:
            break
        if child.kind == "pragmaDirective":
            pragmas.append(child)
    return pragmas


def serialize_contract(tree: ParseTree, node: ParseNode, contract_id: str = "") -> TokenStream:
    """In-order terminal tokens of a contract definition.

    The file's leading pragma tokens are prepended when ``node`` is the file's
    first contract, and the element key then starts at the pragma line.
    """
    if node.kind != "contractDefinition":
        raise StructureError(f"expected contractDefinition, got {node.kind}")
    pairs: list[tuple[str, str]] = []
    start = node.line_start
    all_contracts = contracts_of(tree)
    if all_contracts and all_contracts[0] is node:
        for pragma in _leading_pragmas(tree, node):
            pairs += _pairs_of(pragma)
            start = min(start, pragma.line_start)
    pairs += _pairs_of(node)
    return _make_stream("contract", pairs, start, node.line_end, contract_id, "structural")


def serialize_function(tree: ParseTree, node: ParseNode, contract_id: str = "") -> TokenStream:
    """Function terminal tokens followed by the enclosing contract signature."""
    if node.kind != "functionDefinition":
        raise StructureError(f"expected functionDefinition, got {node.kind}")
    contract = tree.enclosing(node, "contractDefinition")
    if contract is None:
        raise StructureError("function has no enclosing contract")
    pairs = _pairs_of(node) + _contract_signature(contract)
    return _make_stream("function", pairs, node.line_start, node.line_end, contract_id, "structural")


def serialize_statement(tree: ParseTree, node: ParseNode, mode: str = "structural",
                        contract_id: str = "") -> TokenStream:
    """Statement-unit tokens, with ancestry and signatures in structural mode."""
    if mode not in MODES:
        raise ValueError(f"unknown mode: {mode}")
    pairs: list[tuple[str, str]] = []
    if mode == "structural":
        pairs += [(n.kind, KIND_AST_NODE) for n in tree.ancestor_path(node)]
    pairs += _pairs_of(node)
    if mode == "structural":
        function = tree.enclosing(node, "functionDefinition")
        if function is not None:
            pairs += _function_signature(function)
        contract = tree.enclosing(node, "contractDefinition")
        if contract is not None:
            pairs += _contract_signature(contract)
    return _make_stream("statement", pairs, node.line_start, node.line_end, contract_id, mode)


def statement_stream_from_tokens(source: str, key: str = "1_1", mode: str = "basic",
                                 contract_id: str = "") -> TokenStream:
    """Lex a raw statement snippet into a stream (no tree context)."""
    pairs = [(t.text, t.kind) for t in lex(source)]
    start, _, end = key.partition("_")
    return _make_stream("statement", pairs, int(start), int(end or start), contract_id, mode)


def _make_stream(level: str, pairs: list[tuple[str, str]], start: int, end: int,
                 contract_id: str, mode: str) -> TokenStream:
    tokens = tuple(p[0] for p in pairs)
    kinds = tuple(p[1] for p in pairs)
    return TokenStream(level, _key(start, end), tokens, contract_id, mode, kinds, start, end)


# --- normalization ----------------------------------------------------------


def unify_literals(pairs: list[tuple[str, str]]) -> list[tuple[str, str]]:
    out = []
    for text, kind in pairs:
        placeholder = _LITERAL_PLACEHOLDERS.get(kind)
        if placeholder is not None:
            out.append((placeholder, KIND_PLACEHOLDER))
        else:
            out.append((text, kind))
    return out


def replace_single_char_identifiers(pairs: list[tuple[str, str]]) -> list[tuple[str, str]]:
    return [("simplevar", KIND_PLACEHOLDER) if kind == "identifier" and len(text) == 1
            else (text, kind) for text, kind in pairs]


def drop_punctuation(pairs: list[tuple[str, str]]) -> list[tuple[str, str]]:
    return [(text, kind) for text, kind in pairs
            if not (kind == "punctuation" and text in _REMOVED_PUNCTUATION)]


def split_camel_case(pairs: list[tuple[str, str]]) -> list[tuple[str, str]]:
    out = []
    for text, kind in pairs:
        if kind == "identifier" and has_split_boundary(text):
            out.append((text, KIND_SPLIT_IDENTIFIER))
            out += [(p, KIND_IDENTIFIER_PART) for p in split_identifier(text)]
        else:
            out.append((text, kind))
    return out


def normalize(stream: TokenStream) -> TokenStream:
    """Literal unification, simplevar replacement, punctuation removal and
    camel-case splitting, in that order. Idempotent."""
    if stream.normalized:
        return stream
    pairs = list(zip(stream.tokens, stream.kinds))
    pairs = unify_literals(pairs)
    pairs = replace_single_char_identifiers(pairs)
    pairs = drop_punctuation(pairs)
    pairs = split_camel_case(pairs)
    return replace(
        stream,
        tokens=tuple(p[0] for p in pairs),
        kinds=tuple(p[1] for p in pairs),
        normalized=True,
    )


# --- whole-tree convenience -------------------------------------------------


def serialize_all(tree: ParseTree, level: str, mode: str = "structural",
                  contract_id: str = "") -> list[TokenStream]:
    from .parser import functions_of, statements_of

    if level == "contract":
        return [serialize_contract(tree, n, contract_id) for n in contracts_of(tree)]
    if level == "function":
        return [serialize_function(tree, n, contract_id) for n in functions_of(tree)]
    if level == "statement":
        return [serialize_statement(tree, n, mode, contract_id) for n in statements_of(tree)]
    raise ValueError(f"unknown level: {level}")
