"""Recursive-descent parser for the supported Solidity subset.

The tree shape is modelled on the ANTLR Solidity grammar: contract members
are wrapped in ``contractPart`` nodes, statements in ``statement`` nodes, and
expression statements in ``statement -> simpleStatement -> expressionStatement``
chains, so the ancestor path of a simple statement inside a function is

    sourceUnit contractDefinition contractPart functionDefinition
    block statement simpleStatement

Compound statements carry an explicit header node (``ifHeader`` etc.) so the
condition/init clause is an addressable, line-pinpointable element on its own.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from xml.etree import ElementTree

from .errors import StructureError, SyntaxDiagnostic, UnsupportedConstruct
from .lexer import ELEMENTARY_TYPES, KEYWORDS, Token, UNSUPPORTED_KEYWORDS, lex


@dataclass(eq=False)
class ParseNode:
    kind: str
    children: tuple["ParseNode", ...] = ()
    token_text: str | None = None
    line_start: int = 1
    line_end: int = 1

    @property
    def is_terminal(self) -> bool:
        return self.token_text is not None

    def iter_terminals(self):
        if self.is_terminal:
            yield self
            return
        for child in self.children:
            yield from child.iter_terminals()

    def terminal_texts(self) -> list[str]:
        return [t.token_text for t in self.iter_terminals()]


NONTERMINAL_KINDS = (
    "sourceUnit", "pragmaDirective", "contractDefinition", "inheritanceSpecifier",
    "contractPart", "stateVariableDeclaration", "usingForDeclaration",
    "structDefinition", "enumDefinition", "eventDefinition", "modifierDefinition",
    "functionDefinition", "parameterList", "parameter", "modifierList",
    "modifierInvocation", "block", "statement", "ifStatement", "ifHeader",
    "whileStatement", "whileHeader", "forStatement", "forHeader",
    "simpleStatement", "variableDeclarationStatement", "expressionStatement",
    "returnStatement", "emitStatement", "throwStatement", "breakStatement",
    "continueStatement", "variableDeclaration", "typeName", "userDefinedTypeName",
    "expression", "functionCall", "functionCallArguments", "memberAccess",
    "indexAccess",
)

TERMINAL_KINDS = (
    "identifier", "elementaryTypeName", "decimalNumber", "hexNumber",
    "stringLiteral", "hexLiteral", "versionLiteral", "operator", "punctuation",
)


@dataclass(frozen=True)
class NodeCatalog:
    names: tuple[str, ...]

    @property
    def size(self) -> int:
        return len(self.names)

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise ValueError("node catalog names must be unique")


NODE_CATALOG = NodeCatalog(NONTERMINAL_KINDS + TERMINAL_KINDS + tuple(sorted(KEYWORDS)))


def derive_dim(catalog: NodeCatalog = NODE_CATALOG) -> int:
    """Half the node-kind count, the embedding width a catalog would suggest."""
    return math.ceil(catalog.size / 2)


# Statement-unit kinds: simple statements plus return/emit; the headers of
# compound statements stand in for the statement itself.
UNIT_KINDS = frozenset({"simpleStatement", "returnStatement", "emitStatement"})
HEADER_KINDS = frozenset({"ifHeader", "whileHeader", "forHeader"})


class ParseTree:
    """Immutable parse result with parent links for ancestor queries."""

    def __init__(self, root: ParseNode):
        self.root = root
        self._parent: dict[int, ParseNode] = {}
        stack = [root]
        while stack:
            node = stack.pop()
            for child in node.children:
                self._parent[id(child)] = node
                stack.append(child)

    def parent(self, node: ParseNode) -> ParseNode | None:
        return self._parent.get(id(node))

    def ancestor_path(self, node: ParseNode) -> list[ParseNode]:
        """Nodes from the root down to ``node``, inclusive."""
        path = [node]
        current = node
        while (up := self.parent(current)) is not None:
            path.append(up)
            current = up
        path.reverse()
        if path[0] is not self.root:
            raise StructureError("node does not belong to this tree")
        return path

    def enclosing(self, node: ParseNode, kind: str) -> ParseNode | None:
        for candidate in reversed(self.ancestor_path(node)[:-1]):
            if candidate.kind == kind:
                return candidate
        return None


def _span(children: list[ParseNode], default: tuple[int, int] = (1, 1)) -> tuple[int, int]:
    if not children:
        return default
    return children[0].line_start, children[-1].line_end


def _node(kind: str, children: list[ParseNode]) -> ParseNode:
    start, end = _span(children)
    return ParseNode(kind, tuple(children), None, start, end)


def _terminal(tok: Token) -> ParseNode:
    return ParseNode(tok.kind, (), tok.text, tok.line, tok.line)


_MUTABILITY = frozenset({"public", "private", "internal", "external",
                         "pure", "view", "payable", "constant"})
_LOCATIONS = frozenset({"memory", "storage", "calldata"})

_ASSIGN_OPS = frozenset({"=", "+=", "-=", "*=", "/=", "%=", "|=", "&=", "^=", "<<=", ">>="})
_BINARY_LEVELS = (   # loosest first
    ("||",),
    ("&&",),
    ("|",),
    ("^",),
    ("&",),
    ("==", "!="),
    ("<", ">", "<=", ">="),
    ("<<", ">>"),
    ("+", "-"),
    ("*", "/", "%"),
)
_UNARY_OPS = frozenset({"!", "~", "-", "+", "++", "--"})


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    # --- cursor helpers -------------------------------------------------

    def peek(self, ahead: int = 0) -> Token | None:
        idx = self.pos + ahead
        return self.tokens[idx] if idx < len(self.tokens) else None

    def at(self, text: str, ahead: int = 0) -> bool:
        tok = self.peek(ahead)
        return tok is not None and tok.text == text

    def at_kind(self, kind: str, ahead: int = 0) -> bool:
        tok = self.peek(ahead)
        return tok is not None and tok.kind == kind

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def error(self, expected: set[str]) -> SyntaxDiagnostic:
        tok = self.peek()
        if tok is None:
            last = self.tokens[-1] if self.tokens else None
            line = last.line if last else 1
            col = (last.col + len(last.text)) if last else 1
            return SyntaxDiagnostic(line, col, expected, "end of input")
        return SyntaxDiagnostic(tok.line, tok.col, expected, repr(tok.text))

    def expect(self, text: str) -> ParseNode:
        if not self.at(text):
            raise self.error({text})
        return _terminal(self.advance())

    def expect_kind(self, kind: str) -> ParseNode:
        if not self.at_kind(kind):
            raise self.error({kind})
        return _terminal(self.advance())

    def _check_unsupported(self):
        tok = self.peek()
        if tok is not None and tok.kind in UNSUPPORTED_KEYWORDS:
            raise UnsupportedConstruct(tok.line, tok.col, tok.text)

    # --- grammar --------------------------------------------------------

    def source_unit(self) -> ParseNode:
        children: list[ParseNode] = []
        while self.peek() is not None:
            self._check_unsupported()
            if self.at("pragma"):
                children.append(self.pragma_directive())
            elif self.peek().text in ("contract", "library", "interface"):
                children.append(self.contract_definition())
            else:
                raise self.error({"pragma", "contract", "library", "interface"})
        start, end = _span(children)
        return ParseNode("sourceUnit", tuple(children), None, start, end)

    def pragma_directive(self) -> ParseNode:
        children = [self.expect("pragma")]
        while self.peek() is not None and not self.at(";"):
            children.append(_terminal(self.advance()))
        children.append(self.expect(";"))
        return _node("pragmaDirective", children)

    def contract_definition(self) -> ParseNode:
        kw = _terminal(self.advance())
        children = [kw, self.expect_kind("identifier")]
        if self.at("is"):
            children.append(self.expect("is"))
            children.append(self.inheritance_specifier())
            while self.at(","):
                children.append(self.expect(","))
                children.append(self.inheritance_specifier())
        children.append(self.expect("{"))
        while not self.at("}"):
            if self.peek() is None:
                raise self.error({"}"})
            part = self.contract_part()
            children.append(part)
        children.append(self.expect("}"))
        return _node("contractDefinition", children)

    def inheritance_specifier(self) -> ParseNode:
        children = [self.expect_kind("identifier")]
        if self.at("("):
            children.append(self.expect("("))
            if not self.at(")"):
                children.append(self.call_arguments())
            children.append(self.expect(")"))
        return _node("inheritanceSpecifier", children)

    def contract_part(self) -> ParseNode:
        self._check_unsupported()
        tok = self.peek()
        if tok.text == "using":
            inner = self.using_for_declaration()
        elif tok.text == "struct":
            inner = self.struct_definition()
        elif tok.text == "enum":
            inner = self.enum_definition()
        elif tok.text == "event":
            inner = self.event_definition()
        elif tok.text == "modifier":
            inner = self.modifier_definition()
        elif tok.text in ("function", "constructor"):
            inner = self.function_definition()
        else:
            inner = self.state_variable_declaration()
        return _node("contractPart", [inner])

    def using_for_declaration(self) -> ParseNode:
        children = [self.expect("using"), self.expect_kind("identifier"), self.expect("for")]
        if self.at("*"):
            children.append(_terminal(self.advance()))
        else:
            children.append(self.type_name())
        children.append(self.expect(";"))
        return _node("usingForDeclaration", children)

    def struct_definition(self) -> ParseNode:
        children = [self.expect("struct"), self.expect_kind("identifier"), self.expect("{")]
        while not self.at("}"):
            if self.peek() is None:
                raise self.error({"}"})
            member = [self.type_name(), self.expect_kind("identifier"), self.expect(";")]
            children.append(_node("variableDeclaration", member))
        children.append(self.expect("}"))
        return _node("structDefinition", children)

    def enum_definition(self) -> ParseNode:
        children = [self.expect("enum"), self.expect_kind("identifier"), self.expect("{")]
        if not self.at("}"):
            children.append(self.expect_kind("identifier"))
            while self.at(","):
                children.append(self.expect(","))
                children.append(self.expect_kind("identifier"))
        children.append(self.expect("}"))
        return _node("enumDefinition", children)

    def event_definition(self) -> ParseNode:
        children = [self.expect("event"), self.expect_kind("identifier"), self.parameter_list()]
        if self.at("anonymous"):
            children.append(_terminal(self.advance()))
        children.append(self.expect(";"))
        return _node("eventDefinition", children)

    def modifier_definition(self) -> ParseNode:
        children = [self.expect("modifier"), self.expect_kind("identifier")]
        if self.at("("):
            children.append(self.parameter_list())
        children.append(self.block())
        return _node("modifierDefinition", children)

    def function_definition(self) -> ParseNode:
        children: list[ParseNode] = []
        if self.at("constructor"):
            children.append(_terminal(self.advance()))
        else:
            children.append(self.expect("function"))
            if self.at_kind("identifier"):
                children.append(_terminal(self.advance()))
        children.append(self.parameter_list())
        mods: list[ParseNode] = []
        while True:
            tok = self.peek()
            if tok is None:
                break
            if tok.text in _MUTABILITY:
                mods.append(_terminal(self.advance()))
            elif tok.kind == "identifier":
                mods.append(self.modifier_invocation())
            else:
                break
        if mods:
            children.append(_node("modifierList", mods))
        if self.at("returns"):
            children.append(self.expect("returns"))
            children.append(self.parameter_list())
        if self.at(";"):
            children.append(self.expect(";"))
        else:
            children.append(self.block())
        return _node("functionDefinition", children)

    def modifier_invocation(self) -> ParseNode:
        children = [self.expect_kind("identifier")]
        if self.at("("):
            children.append(self.expect("("))
            if not self.at(")"):
                children.append(self.call_arguments())
            children.append(self.expect(")"))
        return _node("modifierInvocation", children)

    def parameter_list(self) -> ParseNode:
        children = [self.expect("(")]
        if not self.at(")"):
            children.append(self.parameter())
            while self.at(","):
                children.append(self.expect(","))
                children.append(self.parameter())
        children.append(self.expect(")"))
        return _node("parameterList", children)

    def parameter(self) -> ParseNode:
        children = [self.type_name()]
        tok = self.peek()
        if tok is not None and (tok.text in _LOCATIONS or tok.text == "indexed"):
            children.append(_terminal(self.advance()))
        if self.at_kind("identifier"):
            children.append(_terminal(self.advance()))
        return _node("parameter", children)

    def state_variable_declaration(self) -> ParseNode:
        children = [self.type_name()]
        while self.peek() is not None and self.peek().text in _MUTABILITY:
            children.append(_terminal(self.advance()))
        children.append(self.expect_kind("identifier"))
        if self.at("="):
            children.append(_terminal(self.advance()))
            children.append(self.expression())
        children.append(self.expect(";"))
        return _node("stateVariableDeclaration", children)

    def type_name(self) -> ParseNode:
        children: list[ParseNode] = []
        if self.at_kind("elementaryTypeName"):
            children.append(_terminal(self.advance()))
        elif self.at("mapping"):
            children.append(_terminal(self.advance()))
            children.append(self.expect("("))
            if self.at_kind("elementaryTypeName"):
                children.append(_terminal(self.advance()))
            else:
                children.append(self.user_defined_type_name())
            children.append(self.expect("=>"))
            children.append(self.type_name())
            children.append(self.expect(")"))
        elif self.at_kind("identifier"):
            children.append(self.user_defined_type_name())
        else:
            raise self.error({"type name"})
        while self.at("["):
            children.append(self.expect("["))
            if not self.at("]"):
                children.append(self.expression())
            children.append(self.expect("]"))
        return _node("typeName", children)

    def user_defined_type_name(self) -> ParseNode:
        children = [self.expect_kind("identifier")]
        while self.at(".") and self.at_kind("identifier", 1):
            children.append(self.expect("."))
            children.append(self.expect_kind("identifier"))
        return _node("userDefinedTypeName", children)

    # --- statements -----------------------------------------------------

    def block(self) -> ParseNode:
        children = [self.expect("{")]
        while not self.at("}"):
            if self.peek() is None:
                raise self.error({"}"})
            children.append(self.statement())
        children.append(self.expect("}"))
        return _node("block", children)

    def statement(self) -> ParseNode:
        self._check_unsupported()
        tok = self.peek()
        if tok is None:
            raise self.error({"statement"})
        if tok.text == "{":
            inner = self.block()
        elif tok.text == "if":
            inner = self.if_statement()
        elif tok.text == "while":
            inner = self.while_statement()
        elif tok.text == "for":
            inner = self.for_statement()
        elif tok.text == "return":
            children = [self.expect("return")]
            if not self.at(";"):
                children.append(self.expression())
            children.append(self.expect(";"))
            inner = _node("returnStatement", children)
        elif tok.text == "emit":
            children = [self.expect("emit"), self.expression(), self.expect(";")]
            inner = _node("emitStatement", children)
        elif tok.text == "throw":
            inner = _node("throwStatement", [self.expect("throw"), self.expect(";")])
        elif tok.text == "break":
            inner = _node("breakStatement", [self.expect("break"), self.expect(";")])
        elif tok.text == "continue":
            inner = _node("continueStatement", [self.expect("continue"), self.expect(";")])
        else:
            inner = self.simple_statement()
        return _node("statement", [inner])

    def if_statement(self) -> ParseNode:
        header = _node("ifHeader", [
            self.expect("if"), self.expect("("), self.expression(), self.expect(")"),
        ])
        children = [header, self.statement()]
        if self.at("else"):
            children.append(self.expect("else"))
            children.append(self.statement())
        return _node("ifStatement", children)

    def while_statement(self) -> ParseNode:
        header = _node("whileHeader", [
            self.expect("while"), self.expect("("), self.expression(), self.expect(")"),
        ])
        return _node("whileStatement", [header, self.statement()])

    def for_statement(self) -> ParseNode:
        children = [self.expect("for"), self.expect("(")]
        if self.at(";"):
            children.append(self.expect(";"))
        else:
            children.append(self.simple_statement())
        if not self.at(";"):
            children.append(self.expression())
        children.append(self.expect(";"))
        if not self.at(")"):
            children.append(self.expression())
        children.append(self.expect(")"))
        header = _node("forHeader", children)
        return _node("forStatement", [header, self.statement()])

    def simple_statement(self) -> ParseNode:
        inner = self._try_variable_declaration()
        if inner is None:
            inner = _node("expressionStatement", [self.expression(), self.expect(";")])
        return _node("simpleStatement", [inner])

    def _try_variable_declaration(self) -> ParseNode | None:
        tok = self.peek()
        if tok is None:
            return None
        # A cast like uint256(x) starts with a type token but is an expression.
        if tok.kind == "elementaryTypeName" and self.at("(", 1):
            return None
        if tok.kind not in ("elementaryTypeName", "identifier") and tok.text != "mapping":
            return None
        saved = self.pos
        try:
            children = [self.type_name()]
            if self.peek() is not None and self.peek().text in _LOCATIONS:
                children.append(_terminal(self.advance()))
            if not self.at_kind("identifier"):
                raise self.error({"identifier"})
            children.append(_terminal(self.advance()))
            if self.at("="):
                children.append(_terminal(self.advance()))
                children.append(self.expression())
            children.append(self.expect(";"))
            return _node("variableDeclarationStatement", children)
        except SyntaxDiagnostic:
            self.pos = saved
            return None

    # --- expressions ------------------------------------------------------

    def expression(self) -> ParseNode:
        return self.assignment()

    def assignment(self) -> ParseNode:
        left = self.ternary()
        tok = self.peek()
        if tok is not None and tok.text in _ASSIGN_OPS:
            op = _terminal(self.advance())
            right = self.assignment()
            return _node("expression", [left, op, right])
        return left

    def ternary(self) -> ParseNode:
        cond = self.binary(0)
        if self.at("?"):
            q = _terminal(self.advance())
            then = self.expression()
            colon = self.expect(":")
            other = self.expression()
            return _node("expression", [cond, q, then, colon, other])
        return cond

    def binary(self, level: int) -> ParseNode:
        if level >= len(_BINARY_LEVELS):
            return self.power()
        node = self.binary(level + 1)
        ops = _BINARY_LEVELS[level]
        while self.peek() is not None and self.peek().text in ops and self.peek().kind == "operator":
            op = _terminal(self.advance())
            right = self.binary(level + 1)
            node = _node("expression", [node, op, right])
        return node

    def power(self) -> ParseNode:
        base = self.unary()
        if self.at("**"):
            op = _terminal(self.advance())
            exponent = self.power()
            return _node("expression", [base, op, exponent])
        return base

    def unary(self) -> ParseNode:
        tok = self.peek()
        if tok is not None and tok.kind == "operator" and tok.text in _UNARY_OPS:
            op = _terminal(self.advance())
            return _node("expression", [op, self.unary()])
        if tok is not None and tok.text in ("delete", "new"):
            op = _terminal(self.advance())
            return _node("expression", [op, self.unary()])
        return self.postfix()

    def postfix(self) -> ParseNode:
        node = self.primary()
        while True:
            if self.at("("):
                children = [node, self.expect("(")]
                if not self.at(")"):
                    children.append(self.call_arguments())
                children.append(self.expect(")"))
                node = _node("functionCall", children)
            elif self.at(".") and self.at_kind("identifier", 1):
                node = _node("memberAccess", [node, self.expect("."), self.expect_kind("identifier")])
            elif self.at("["):
                children = [node, self.expect("[")]
                if not self.at("]"):
                    children.append(self.expression())
                children.append(self.expect("]"))
                node = _node("indexAccess", children)
            elif self.at("++") or self.at("--"):
                node = _node("expression", [node, _terminal(self.advance())])
            else:
                return node

    def call_arguments(self) -> ParseNode:
        children = [self.expression()]
        while self.at(","):
            children.append(self.expect(","))
            children.append(self.expression())
        return _node("functionCallArguments", children)

    def primary(self) -> ParseNode:
        self._check_unsupported()
        tok = self.peek()
        if tok is None:
            raise self.error({"expression"})
        if tok.kind in ("identifier", "elementaryTypeName", "decimalNumber",
                        "hexNumber", "stringLiteral", "hexLiteral",
                        "versionLiteral") or tok.text in ("true", "false"):
            return _terminal(self.advance())
        if tok.text == "(":
            open_paren = _terminal(self.advance())
            inner = self.expression()
            close = self.expect(")")
            return _node("expression", [open_paren, inner, close])
        raise self.error({"expression"})


def parse(source_text: str) -> ParseTree:
    """Parse UTF-8 source into a :class:`ParseTree` rooted at ``sourceUnit``."""
    tokens = lex(source_text)
    parser = _Parser(tokens)
    root = parser.source_unit()
    return ParseTree(root)


# --- element populations -------------------------------------------------


def contracts_of(tree: ParseTree) -> list[ParseNode]:
    """All contract/library/interface definitions, in source order."""
    return [n for n in _walk(tree.root) if n.kind == "contractDefinition"]


def functions_of(tree: ParseTree) -> list[ParseNode]:
    """All function definitions (including constructors), in source order."""
    return [n for n in _walk(tree.root) if n.kind == "functionDefinition"]


def statements_of(tree: ParseTree) -> list[ParseNode]:
    """Statement units in source order.

    A unit is a simple statement, a return or emit statement, or the header
    of an if/while/for statement (the body is walked for further units but
    never counted as part of the header). Modifier bodies are opaque.
    """
    units: list[ParseNode] = []

    def visit(node: ParseNode):
        if node.kind in ("modifierDefinition",) or node.kind in HEADER_KINDS:
            return
        if node.kind in UNIT_KINDS:
            units.append(node)
            return
        if node.kind in ("ifStatement", "whileStatement", "forStatement"):
            units.append(node.children[0])  # the header node
            for child in node.children[1:]:
                visit(child)
            return
        for child in node.children:
            visit(child)

    visit(tree.root)
    return units


def _walk(node: ParseNode):
    yield node
    for child in node.children:
        yield from _walk(child)


# --- XML export / import ---------------------------------------------------


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def export_xml(tree: ParseTree) -> str:
    """Serialize the tree to deterministic XML.

    Each element is named after its node kind, carries ``line_start`` and
    ``line_end`` attributes, and terminals hold their text as content.
    """
    parts: list[str] = []

    def emit(node: ParseNode):
        parts.append(f'<{node.kind} line_start="{node.line_start}" line_end="{node.line_end}">')
        if node.is_terminal:
            parts.append(_escape(node.token_text))
        else:
            for child in node.children:
                emit(child)
        parts.append(f"</{node.kind}>")

    emit(tree.root)
    return "".join(parts)


def import_xml(xml_text: str) -> ParseTree:
    """Rebuild a tree from :func:`export_xml` output."""
    def build(elem: ElementTree.Element) -> ParseNode:
        start = int(elem.attrib["line_start"])
        end = int(elem.attrib["line_end"])
        children = tuple(build(c) for c in elem)
        if children:
            return ParseNode(elem.tag, children, None, start, end)
        text = elem.text or ""
        if text == "" and elem.tag == "sourceUnit":
            return ParseNode(elem.tag, (), None, start, end)
        return ParseNode(elem.tag, (), text, start, end)

    return ParseTree(build(ElementTree.fromstring(xml_text)))


def structurally_equal(a: ParseNode, b: ParseNode) -> bool:
    if (a.kind, a.token_text, a.line_start, a.line_end) != (b.kind, b.token_text, b.line_start, b.line_end):
        return False
    if len(a.children) != len(b.children):
        return False
    return all(structurally_equal(x, y) for x, y in zip(a.children, b.children))


def check_line_containment(node: ParseNode) -> bool:
    """Recursive line-span containment: every child's span lies in its parent's."""
    if node.line_start > node.line_end:
        return False
    for child in node.children:
        if child.line_start < node.line_start or child.line_end > node.line_end:
            return False
        if not check_line_containment(child):
            return False
    return True
