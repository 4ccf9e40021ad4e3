"""Database of known buggy statements and the bug embedding matrix.

Records are newline-delimited JSON with human-auditable provenance; vectors
live only in built matrix files, recomputed from the source whenever a model
is supplied, so a retrain can never leave stale rows behind.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._io import atomic_write_text
from .embedding import CodeVector, ElementRef, EmbeddingMatrix, EmbeddingModel, compose
from .errors import SolvecError, StructureError
from .parser import ParseNode, ParseTree, parse, statements_of
from .tokenizer import normalize, serialize_statement, statement_stream_from_tokens

CATEGORIES = (
    "Overflow/Underflow",
    "Blockhash/Timestamp",
    "Implicit Visibility/HoneyPot",
    "Overpowered Owner",
    "Reentrancy",
    "Gas Limit",
    "Incorrect Signature/Replay",
    "ERC-20 Transfer Flaw",
    "Batch Overflow",
    "Unsafe/Verify Reverse",
)

SPLITS = ("detection", "validation")


@dataclass(frozen=True)
class BugRecord:
    bug_id: str
    category: str
    contract_name: str
    line_start: int
    line_end: int
    statement_source: str
    split: str
    source_path: str | None = None
    model_version: str | None = None
    vector: CodeVector | None = None

    def persistable(self) -> dict:
        return {
            "bug_id": self.bug_id,
            "category": self.category,
            "contract_name": self.contract_name,
            "line_start": self.line_start,
            "line_end": self.line_end,
            "statement_source": self.statement_source,
            "split": self.split,
            "source_path": self.source_path,
            "model_version": self.model_version,
        }


class BugDatabase:
    def __init__(self):
        self.records: list[BugRecord] = []
        self._by_id: dict[str, BugRecord] = {}
        # contract sources kept in memory for rebuilds when no path was given
        self._sources: dict[str, str] = {}

    def __len__(self) -> int:
        return len(self.records)

    def get(self, bug_id: str) -> BugRecord | None:
        return self._by_id.get(bug_id)

    def categories(self) -> dict[str, str]:
        return {r.bug_id: r.category for r in self.records}

    def split_records(self, split: str) -> list[BugRecord]:
        if split not in SPLITS:
            raise StructureError(f"unknown split: {split}")
        return sorted((r for r in self.records if r.split == split),
                      key=lambda r: r.bug_id)

    def save(self, path) -> None:
        lines = [json.dumps(r.persistable(), sort_keys=True) for r in self.records]
        atomic_write_text(path, "".join(line + "\n" for line in lines))

    @classmethod
    def load(cls, path) -> "BugDatabase":
        db = cls()
        for line in Path(path).read_text("utf-8").splitlines():
            if not line.strip():
                continue
            entry = json.loads(line)
            record = BugRecord(
                bug_id=entry["bug_id"],
                category=entry["category"],
                contract_name=entry["contract_name"],
                line_start=entry["line_start"],
                line_end=entry["line_end"],
                statement_source=entry["statement_source"],
                split=entry["split"],
                source_path=entry.get("source_path"),
                model_version=entry.get("model_version"),
            )
            db.records.append(record)
            db._by_id[record.bug_id] = record
        return db

    def contract_source(self, record: BugRecord) -> str:
        cached = self._sources.get(record.bug_id)
        if cached is not None:
            return cached
        if record.source_path is None:
            raise StructureError(
                f"bug {record.bug_id} has no stored source; re-add it with a source path")
        return Path(record.source_path).read_text("utf-8")


def resolve_statement(tree: ParseTree, line_start: int, line_end: int) -> ParseNode:
    """The unique statement unit covered by the line span."""
    candidates = [u for u in statements_of(tree)
                  if line_start <= u.line_start and u.line_end <= line_end]
    if len(candidates) == 1:
        return candidates[0]
    if not candidates:
        raise StructureError(
            f"no statement unit within lines {line_start}-{line_end}")
    spans = ", ".join(f"{u.line_start}_{u.line_end}" for u in candidates)
    raise StructureError(
        f"lines {line_start}-{line_end} cover {len(candidates)} statement units: {spans}")


def _enclosing_contract_name(tree: ParseTree, unit: ParseNode) -> str:
    contract = tree.enclosing(unit, "contractDefinition")
    if contract is None:
        raise StructureError("statement has no enclosing contract")
    return contract.children[1].token_text


def add_bug(db: BugDatabase, contract_source: str, line_span: tuple[int, int],
            category: str, split: str, model: EmbeddingModel | None = None,
            source_path: str | None = None) -> BugRecord:
    """Register one buggy statement; adding the same span twice is a no-op."""
    if category not in CATEGORIES:
        raise StructureError(f"unknown vulnerability category: {category}")
    if split not in SPLITS:
        raise StructureError(f"unknown split: {split}")
    line_start, line_end = line_span
    tree = parse(contract_source)
    unit = resolve_statement(tree, line_start, line_end)
    contract_name = _enclosing_contract_name(tree, unit)
    bug_id = f"{contract_name}@{unit.line_start}-{unit.line_end}"
    statement_source = " ".join(unit.terminal_texts())

    existing = db.get(bug_id)
    if existing is not None:
        if (existing.category, existing.split, existing.statement_source) != (
                category, split, statement_source):
            raise StructureError(
                f"bug {bug_id} already registered with different fields")
        return existing

    vector = None
    model_version = None
    if model is not None:
        stream = normalize(serialize_statement(tree, unit, "structural", bug_id))
        vector = compose(model, stream)
        model_version = model.version_id
    record = BugRecord(bug_id, category, contract_name, unit.line_start,
                       unit.line_end, statement_source, split, source_path,
                       model_version, vector)
    db.records.append(record)
    db._by_id[bug_id] = record
    db._sources[bug_id] = contract_source
    return record


def build_bug_matrix(db: BugDatabase, split: str, model: EmbeddingModel,
                     mode: str = "structural") -> EmbeddingMatrix:
    """Bug vectors for one split, row order fixed by bug_id.

    Structural vectors are recomputed from the full contract source; basic
    vectors need only the stored statement tokens.
    """
    records = db.split_records(split)
    if not records:
        raise StructureError(f"bug database has no records in split {split!r}")
    rows = []
    refs = []
    for record in records:
        key = f"{record.line_start}_{record.line_end}"
        if mode == "structural":
            tree = parse(db.contract_source(record))
            unit = resolve_statement(tree, record.line_start, record.line_end)
            stream = serialize_statement(tree, unit, "structural", record.bug_id)
        elif mode == "basic":
            stream = statement_stream_from_tokens(
                record.statement_source, key, "basic", record.bug_id)
        else:
            raise SolvecError(f"unknown mode: {mode}")
        vec = compose(model, normalize(stream))
        rows.append(np.asarray(vec.values, dtype=np.float32))
        refs.append(ElementRef(record.bug_id, "statement", key, 0))
    return EmbeddingMatrix("statement", mode, np.vstack(rows), tuple(refs),
                           model.version_id)
