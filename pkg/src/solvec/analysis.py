"""Detectors and evaluation statistics built on the similarity index.

Covers clone detection with line-union statistics and same-creator
exclusion, known-bug detection against a bug matrix, per-statement contract
validation, bug-vs-fix scoring, clone-type classification, the ERC20
interface check, the structure-free ablation comparison, and confusion-matrix
metrics.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bugdb import BugRecord, resolve_statement
from .corpus import Corpus
from .embedding import ElementRef, EmbeddingMatrix, EmbeddingModel, compose
from .errors import ConfigError, SolvecError, VersionMismatch
from .parser import ParseTree, functions_of, parse, statements_of
from .simindex import (_norms, _score_block, check_threshold, matches_threshold,
                       scan_pairs, similarity)
from .tokenizer import TokenStream, normalize, serialize_statement

CLONE_TYPES = ("I", "II", "III_IV", "not_clone")


@dataclass(frozen=True)
class Finding:
    kind: str  # clone | bug | validation
    query_ref: ElementRef
    matched_ref: ElementRef | str
    score: float
    category: str | None = None
    clone_type: str | None = None

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise SolvecError(f"score out of range: {self.score}")
        if (self.category is not None) != (self.kind != "clone"):
            raise SolvecError("category is present exactly when kind is not clone")


@dataclass(frozen=True)
class CloneStats:
    level: str
    cloned_lines: int
    total_lines: int

    @property
    def clone_ratio(self) -> float:
        return self.cloned_lines / self.total_lines if self.total_lines else 0.0

    def as_dict(self) -> dict:
        return {"level": self.level, "cloned_lines": self.cloned_lines,
                "total_lines": self.total_lines, "clone_ratio": self.clone_ratio}


@dataclass(frozen=True)
class EvalReport:
    tp: int
    fp: int
    tn: int
    fn: int
    precision: float
    recall: float
    f1: float
    fpr: float
    fnr: float

    @classmethod
    def from_counts(cls, tp: int, fp: int, tn: int, fn: int) -> "EvalReport":
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = (2 * precision * recall / (precision + recall)
              if precision + recall else 0.0)
        fpr = fp / (fp + tn) if fp + tn else 0.0
        fnr = fn / (fn + tp) if fn + tp else 0.0
        return cls(tp, fp, tn, fn, precision, recall, f1, fpr, fnr)

    def as_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
                "precision": self.precision, "recall": self.recall,
                "f1": self.f1, "fpr": self.fpr, "fnr": self.fnr}


def _ref_key(ref: ElementRef) -> tuple:
    return (ref.contract_id, ref.element_key, ref.ordinal)


def _span_lines(ref: ElementRef) -> set[tuple[str, int]]:
    start, _, end = ref.element_key.partition("_")
    return {(ref.contract_id, line) for line in range(int(start), int(end) + 1)}


def detect_clones(matrix: EmbeddingMatrix, delta: float, corpus: Corpus | None = None,
                  exclude_same_creator: bool = False,
                  query_contract_ids: set[str] | None = None):
    """Clone pairs above threshold plus line-union clone statistics.

    ``query_contract_ids`` restricts the query side (sampling); statistics are
    computed over the query element population either way.
    """
    delta = check_threshold(delta)
    creators: dict[str, str | None] = {}
    if exclude_same_creator:
        if corpus is None:
            raise ConfigError("creator exclusion requires the corpus")
        creators = {r.contract_id: r.creator_address for r in corpus.records}
        if all(v is None for v in creators.values()):
            raise ConfigError("creator exclusion requested but corpus has no creator addresses")

    if query_contract_ids is None:
        queries = matrix
        query_refs = matrix.refs
    else:
        keep = [i for i, ref in enumerate(matrix.refs)
                if ref.contract_id in query_contract_ids]
        queries = matrix.rows[keep].astype(np.float64)
        query_refs = tuple(matrix.refs[i] for i in keep)

    raw_pairs = _scan_with_refs(queries, query_refs, matrix, delta)

    seen: set[tuple] = set()
    findings: list[Finding] = []
    for q_ref, t_ref, score in raw_pairs:
        if exclude_same_creator:
            query_creator = creators.get(q_ref.contract_id)
            target_creator = creators.get(t_ref.contract_id)
            if query_creator is not None and query_creator == target_creator:
                continue
        unordered = tuple(sorted((_ref_key(q_ref), _ref_key(t_ref))))
        if unordered in seen:
            continue
        seen.add(unordered)
        findings.append(Finding("clone", q_ref, t_ref, score))

    participating: set[tuple] = set()
    for finding in findings:
        participating.add(_ref_key(finding.query_ref))
        participating.add(_ref_key(finding.matched_ref))
    cloned: set[tuple[str, int]] = set()
    total: set[tuple[str, int]] = set()
    for ref in query_refs:
        lines = _span_lines(ref)
        total |= lines
        if _ref_key(ref) in participating:
            cloned |= lines
    stats = CloneStats(matrix.level, len(cloned), len(total))
    return findings, stats


def _scan_with_refs(queries, query_refs, target_matrix, delta):
    if isinstance(queries, EmbeddingMatrix):
        return scan_pairs(queries, target_matrix, delta)
    # ndarray query subset with explicit refs
    t_rows = target_matrix.rows.astype(np.float64)
    t_norms = _norms(t_rows)
    q_norms = _norms(queries)
    results = []
    scores = _score_block(queries, q_norms, t_rows, t_norms)
    for qi, q_ref in enumerate(query_refs):
        row = scores[qi]
        hits = [(ti, float(row[ti])) for ti in range(len(target_matrix.refs))
                if target_matrix.refs[ti] != q_ref and matches_threshold(float(row[ti]), delta)]
        hits.sort(key=lambda h: (-h[1], h[0]))
        results += [(q_ref, target_matrix.refs[ti], s) for ti, s in hits]
    return results


def detect_bugs(statements: EmbeddingMatrix, bugs: EmbeddingMatrix, delta: float,
                categories: dict[str, str]) -> list[Finding]:
    """Every (statement, bug) pair above threshold, tagged with the bug's
    category."""
    delta = check_threshold(delta)
    if statements.model_version != bugs.model_version:
        raise VersionMismatch(
            f"statement matrix built with model {statements.model_version}, "
            f"bug matrix with {bugs.model_version}")
    findings = []
    for q_ref, bug_ref, score in scan_pairs(statements, bugs, delta):
        bug_id = bug_ref.contract_id
        findings.append(Finding("bug", q_ref, bug_id, score,
                                category=categories.get(bug_id, "unknown")))
    return findings


def edit_similarity(a, b) -> float:
    """1 - Levenshtein(a, b) / max(len); 1.0 when both are empty."""
    a = list(a)
    b = list(b)
    if not a and not b:
        return 1.0
    previous = list(range(len(b) + 1))
    for i, token in enumerate(a, start=1):
        current = [i] + [0] * len(b)
        for j, other in enumerate(b, start=1):
            cost = 0 if token == other else 1
            current[j] = min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + cost)
        previous = current
    return 1.0 - previous[-1] / max(len(a), len(b))


def _abstracted(stream: TokenStream) -> tuple[str, ...]:
    """Normalized stream with identifiers and elementary types abstracted."""
    norm = normalize(stream)
    out = []
    for text, kind in zip(norm.tokens, norm.kinds):
        if kind in ("identifier", "splitIdentifier"):
            out.append("id")
        elif kind == "identifierPart":
            continue
        elif kind == "elementaryTypeName":
            out.append("type")
        else:
            out.append(text)
    return tuple(out)


def classify_clone_type(query_stream: TokenStream, bug_stream: TokenStream,
                        edit_threshold: float = 0.5) -> str:
    """Grade a matched pair: exact copy, identifier/literal/type variation,
    edited copy, or no clone at all. Expects raw (pre-normalization) streams."""
    if query_stream.tokens == bug_stream.tokens:
        return "I"
    if _abstracted(query_stream) == _abstracted(bug_stream):
        return "II"
    if edit_similarity(query_stream.tokens, bug_stream.tokens) >= edit_threshold:
        return "III_IV"
    return "not_clone"


def validate_contract(contract_source: str, model: EmbeddingModel,
                      bugs: EmbeddingMatrix, delta: float,
                      categories: dict[str, str],
                      contract_id: str = "<input>") -> list[Finding]:
    """Per statement unit, the maximal-scoring bug above threshold (if any)."""
    delta = check_threshold(delta)
    if bugs.model_version != model.version_id:
        raise VersionMismatch(
            f"bug matrix built with model {bugs.model_version}, "
            f"queried with {model.version_id}")
    tree = parse(contract_source)
    bug_rows = bugs.rows.astype(np.float64)
    bug_norms = _norms(bug_rows)
    findings = []
    for unit in statements_of(tree):
        stream = normalize(serialize_statement(tree, unit, bugs.mode, contract_id))
        vec = compose(model, stream).values.astype(np.float32).astype(np.float64)
        scores = _score_block(vec[None, :], _norms(vec[None, :]), bug_rows, bug_norms)[0]
        best = int(np.argmax(scores))
        best_score = float(scores[best])
        if matches_threshold(best_score, delta):
            bug_id = bugs.refs[best].contract_id
            findings.append(Finding(
                "validation",
                ElementRef(contract_id, "statement", stream.element_key, 0),
                bug_id, best_score, category=categories.get(bug_id, "unknown")))
    return findings


def compare_fix(model: EmbeddingModel, bug: BugRecord, fixed_source: str,
                fixed_span: tuple[int, int]) -> float:
    """Similarity between a bug's vector and its fixed statement's vector."""
    if bug.vector is None:
        raise SolvecError(f"bug {bug.bug_id} has no vector; re-add it with a model")
    tree = parse(fixed_source)
    unit = resolve_statement(tree, *fixed_span)
    stream = normalize(serialize_statement(tree, unit, "structural"))
    fixed_vec = compose(model, stream).values.astype(np.float32).astype(np.float64)
    bug_vec = np.asarray(bug.vector.values, dtype=np.float32).astype(np.float64)
    return similarity(bug_vec, fixed_vec)


def eval_metrics(findings: list[Finding], ground_truth: dict) -> EvalReport:
    """Confusion counts against per-statement labels.

    ``ground_truth`` maps (contract_id, element_key) to a bool label and must
    cover every statement the findings mention.
    """
    predicted = {(f.query_ref.contract_id, f.query_ref.element_key) for f in findings}
    unlabeled = sorted(predicted - set(ground_truth))
    if unlabeled:
        listing = ", ".join(f"{c}:{k}" for c, k in unlabeled)
        raise SolvecError(f"findings reference unlabeled statements: {listing}")
    tp = fp = tn = fn = 0
    for key, is_bug in ground_truth.items():
        hit = key in predicted
        if is_bug and hit:
            tp += 1
        elif is_bug:
            fn += 1
        elif hit:
            fp += 1
        else:
            tn += 1
    return EvalReport.from_counts(tp, fp, tn, fn)


ERC20_INTERFACE = frozenset({
    ("totalSupply", 0),
    ("balanceOf", 1),
    ("transfer", 2),
    ("transferFrom", 3),
    ("approve", 2),
    ("allowance", 2),
})


def _function_signature_arity(function) -> tuple[str, int] | None:
    children = list(function.children)
    if len(children) < 2 or not children[1].is_terminal or children[1].kind != "identifier":
        return None
    name = children[1].token_text
    params = next((c for c in children if c.kind == "parameterList"), None)
    arity = sum(1 for c in params.children if c.kind == "parameter") if params else 0
    return name, arity


def erc20_check(tree: ParseTree) -> bool:
    """True iff the file's contracts together define the six ERC20 functions
    by name and arity."""
    defined = set()
    for function in functions_of(tree):
        sig = _function_signature_arity(function)
        if sig is not None:
            defined.add(sig)
    return ERC20_INTERFACE <= defined


@dataclass(frozen=True)
class AblationResult:
    structural: tuple[Finding, ...]
    basic: tuple[Finding, ...]

    def counts(self) -> dict:
        return {"structural": len(self.structural), "basic": len(self.basic)}


def ablation_run(structural_matrix: EmbeddingMatrix, structural_bugs: EmbeddingMatrix,
                 basic_matrix: EmbeddingMatrix, basic_bugs: EmbeddingMatrix,
                 delta: float, categories: dict[str, str]) -> AblationResult:
    """Bug detection with and without structural context, same corpus and
    threshold."""
    if structural_matrix.mode != "structural" or structural_bugs.mode != "structural":
        raise ConfigError("structural inputs must be structural-mode artifacts")
    if basic_matrix.mode != "basic" or basic_bugs.mode != "basic":
        raise ConfigError("basic inputs must be basic-mode artifacts")
    structural = detect_bugs(structural_matrix, structural_bugs, delta, categories)
    basic = detect_bugs(basic_matrix, basic_bugs, delta, categories)
    return AblationResult(tuple(structural), tuple(basic))
