"""Local corpus ingestion from a newline-delimited JSON manifest.

Each manifest row names one Solidity source file:

    {"contract_id": "...", "source_path": "a.sol", "creator_address": "0x..."}

Paths are resolved relative to the manifest. Files that later fail parsing
stay in the corpus but are flagged, so matrices can exclude them without
losing the record.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

from ._io import atomic_write_text
from .errors import IngestError, ParseError, SolvecError
from .parser import ParseTree, contracts_of, functions_of, parse, statements_of

_CREATOR_RE = re.compile(r"^0x[0-9a-fA-F]{40}$")
RECORDS_FILENAME = "records.jsonl"


@dataclass(frozen=True)
class ContractRecord:
    contract_id: str
    source_path: str
    creator_address: str | None
    source_text: str
    line_count: int


@dataclass(frozen=True)
class CorpusStats:
    n_contracts: int = 0
    n_individual_contracts: int = 0
    n_functions: int = 0
    n_statements: int = 0
    n_lines: int = 0

    def as_dict(self) -> dict:
        return {
            "n_contracts": self.n_contracts,
            "n_individual_contracts": self.n_individual_contracts,
            "n_functions": self.n_functions,
            "n_statements": self.n_statements,
            "n_lines": self.n_lines,
        }


class Corpus:
    """Immutable after load; parse trees are attached by :meth:`parse_all`."""

    def __init__(self, records: list[ContractRecord]):
        self.records = tuple(records)
        self._by_id = {r.contract_id: r for r in self.records}
        self.trees: dict[str, ParseTree] = {}
        self.parse_errors: dict[str, str] = {}
        self.parsed = False

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def record(self, contract_id: str) -> ContractRecord:
        return self._by_id[contract_id]

    def parse_all(self) -> "Corpus":
        if self.parsed:
            return self
        for record in self.records:
            try:
                self.trees[record.contract_id] = parse(record.source_text)
            except ParseError as exc:
                self.parse_errors[record.contract_id] = str(exc)
        self.parsed = True
        return self


def _validate_contract_id(contract_id, row: int) -> str:
    if not isinstance(contract_id, str) or not contract_id:
        raise IngestError(f"manifest row {row}: contract_id must be a non-empty string")
    if any(ch.isspace() for ch in contract_id):
        raise IngestError(f"manifest row {row}: contract_id contains whitespace: {contract_id!r}")
    return contract_id


def _read_source(path: Path) -> str:
    try:
        raw = path.read_bytes()
    except FileNotFoundError:
        raise IngestError(f"source file not found: {path}") from None
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise IngestError(
            f"source file {path} is not valid UTF-8 at byte offset {exc.start}") from None


def load_corpus(manifest_path) -> Corpus:
    """Build a corpus from a manifest, preserving manifest row order."""
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise IngestError(f"manifest not found: {manifest_path}")
    base = manifest_path.parent
    records: list[ContractRecord] = []
    seen: set[str] = set()
    for row, line in enumerate(manifest_path.read_text("utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            entry = json.loads(line)
        except json.JSONDecodeError as exc:
            raise IngestError(f"manifest row {row}: invalid JSON ({exc.msg})") from None
        contract_id = _validate_contract_id(entry.get("contract_id"), row)
        if contract_id in seen:
            raise IngestError(f"duplicate contract_id: {contract_id}")
        seen.add(contract_id)
        source_path = entry.get("source_path")
        if not source_path:
            raise IngestError(f"manifest row {row}: missing source_path")
        resolved = Path(source_path)
        if not resolved.is_absolute():
            resolved = base / resolved
        creator = entry.get("creator_address")
        if creator is not None and not _CREATOR_RE.match(str(creator)):
            raise IngestError(
                f"manifest row {row}: invalid creator_address {creator!r}")
        text = _read_source(resolved)
        records.append(ContractRecord(
            contract_id=contract_id,
            source_path=str(resolved),
            creator_address=creator,
            source_text=text,
            line_count=len(text.splitlines()),
        ))
    return Corpus(records)


def save_corpus_dir(corpus: Corpus, out_dir) -> Path:
    """Persist record metadata (with parse flags) under ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = []
    for record in corpus.records:
        lines.append(json.dumps({
            "contract_id": record.contract_id,
            "source_path": record.source_path,
            "creator_address": record.creator_address,
            "line_count": record.line_count,
            "parse_ok": record.contract_id not in corpus.parse_errors if corpus.parsed else None,
            "parse_error": corpus.parse_errors.get(record.contract_id),
        }, sort_keys=True))
    target = out_dir / RECORDS_FILENAME
    atomic_write_text(target, "".join(line + "\n" for line in lines))
    return target


def load_corpus_dir(corpus_dir) -> Corpus:
    """Reload a corpus persisted by :func:`save_corpus_dir` (sources re-read)."""
    records_path = Path(corpus_dir) / RECORDS_FILENAME
    if not records_path.exists():
        raise IngestError(f"corpus records not found: {records_path}")
    records: list[ContractRecord] = []
    for row, line in enumerate(records_path.read_text("utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        entry = json.loads(line)
        text = _read_source(Path(entry["source_path"]))
        records.append(ContractRecord(
            contract_id=_validate_contract_id(entry["contract_id"], row),
            source_path=entry["source_path"],
            creator_address=entry.get("creator_address"),
            source_text=text,
            line_count=len(text.splitlines()),
        ))
    return Corpus(records)


def corpus_stats(corpus: Corpus) -> CorpusStats:
    """Definition/function/statement counts over parseable records; line
    totals over all records."""
    if not corpus.parsed:
        raise SolvecError("corpus_stats requires a parsed corpus")
    individual = functions = statements = 0
    for record in corpus.records:
        tree = corpus.trees.get(record.contract_id)
        if tree is None:
            continue
        individual += len(contracts_of(tree))
        functions += len(functions_of(tree))
        statements += len(statements_of(tree))
    return CorpusStats(
        n_contracts=len(corpus.records),
        n_individual_contracts=individual,
        n_functions=functions,
        n_statements=statements,
        n_lines=sum(r.line_count for r in corpus.records),
    )
