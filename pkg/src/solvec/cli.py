"""Command-line entry point covering the full pipeline.

Exit codes: 0 on success, 1 on an operational failure or on findings when
``--fail-on-findings`` is set, 2 on usage/config/version errors.
"""
from __future__ import annotations

import argparse
import json
import sys
import tomllib
from pathlib import Path

from . import __version__
from ._io import artifact_lock, atomic_write_text
from .analysis import (ablation_run, detect_bugs, detect_clones, erc20_check,
                       eval_metrics, validate_contract)
from .bugdb import BugDatabase, CATEGORIES, SPLITS, add_bug, build_bug_matrix
from .corpus import corpus_stats, load_corpus, load_corpus_dir, save_corpus_dir
from .embedding import (MATRIX_MAGIC, MODEL_MAGIC, EmbeddingMatrix,
                        EmbeddingModel, TrainingConfig, build_matrix, train)
from .errors import ConfigError, ParseError, SolvecError, VersionMismatch
from .parser import export_xml, parse
from .simindex import check_threshold, scan_pairs
from .tokenizer import LEVELS, normalize, serialize_all

_CONFIG_DEFAULTS = {
    "threshold_clone": 0.95,
    "threshold_bug": 0.90,
    "threshold_validate": 0.90,
    "dim": 150,
    "window": 5,
    "epochs": 5,
    "negative": 5,
    "learning_rate": 0.05,
    "min_count": 1,
    "ngram_min": 3,
    "ngram_max": 6,
    "buckets": 200_000,
    "hash_seed": 0,
    "rng_seed": 1,
}


def _load_config(path: str | None) -> dict:
    config = dict(_CONFIG_DEFAULTS)
    if path:
        try:
            with open(path, "rb") as handle:
                config.update(tomllib.load(handle))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"unreadable config {path}: {exc}") from None
    for key in ("threshold_clone", "threshold_bug", "threshold_validate"):
        check_threshold(config[key])
    return config


def _training_config(config: dict, args) -> TrainingConfig:
    def pick(name, fallback):
        value = getattr(args, name, None)
        return value if value is not None else config.get(name, fallback)

    return TrainingConfig(
        dim=int(pick("dim", 150)),
        window=int(pick("window", 5)),
        epochs=int(pick("epochs", 5)),
        negative=int(pick("negative", 5)),
        learning_rate=float(pick("learning_rate", 0.05)),
        min_count=int(pick("min_count", 1)),
        ngram_min=int(pick("ngram_min", 3)),
        ngram_max=int(pick("ngram_max", 6)),
        buckets=int(pick("buckets", 200_000)),
        hash_seed=int(pick("hash_seed", 0)),
        rng_seed=int(pick("seed", None) or config.get("rng_seed", 1)),
    )


def _write_findings_tsv(path: str | None, findings) -> str:
    lines = ["kind\tquery_contract\tquery_lines\tmatch_id\tscore\tcategory\tclone_type"]
    for f in findings:
        match = (f.matched_ref if isinstance(f.matched_ref, str)
                 else f"{f.matched_ref.contract_id}:{f.matched_ref.element_key}")
        lines.append("\t".join([
            f.kind, f.query_ref.contract_id, f.query_ref.element_key, match,
            f"{f.score:.6f}", f.category or "-", f.clone_type or "-"]))
    text = "\n".join(lines) + "\n"
    if path:
        with artifact_lock(path):
            atomic_write_text(path, text)
    return text


def _corpus_streams(corpus, level: str, mode: str):
    streams = []
    for record in sorted(corpus.records, key=lambda r: r.contract_id):
        tree = corpus.trees.get(record.contract_id)
        if tree is None:
            continue
        streams += [normalize(s) for s in serialize_all(tree, level, mode, record.contract_id)]
    return streams


# --- subcommands -------------------------------------------------------------


def _cmd_ingest(args, config):
    corpus = load_corpus(args.manifest)
    corpus.parse_all()
    out = Path(args.out)
    with artifact_lock(out / "records.jsonl"):
        save_corpus_dir(corpus, out)
    stats = corpus_stats(corpus)
    print(json.dumps(stats.as_dict(), sort_keys=True))
    if corpus.parse_errors:
        for contract_id, message in sorted(corpus.parse_errors.items()):
            print(f"parse error: {contract_id}: {message}", file=sys.stderr)
    return 0


def _cmd_parse(args, config):
    source = Path(args.file).read_text("utf-8")
    tree = parse(source)
    xml = export_xml(tree)
    if args.xml:
        with artifact_lock(args.xml):
            atomic_write_text(args.xml, xml)
    else:
        print(xml)
    if args.erc20:
        print(f"erc20: {erc20_check(tree)}")
    return 0


def _cmd_tokenize(args, config):
    source = Path(args.file).read_text("utf-8")
    tree = parse(source)
    mode = "basic" if args.basic else "structural"
    for stream in serialize_all(tree, args.level, mode):
        if not args.raw:
            stream = normalize(stream)
        print(stream.format_line())
    return 0


def _cmd_train(args, config):
    corpus = load_corpus_dir(args.corpus).parse_all()
    train_config = _training_config(config, args)
    levels = LEVELS if args.level == "all" else (args.level,)
    streams = []
    for level in levels:
        streams += _corpus_streams(corpus, level, args.mode if level == "statement" else "structural")
    model = train(streams, train_config)
    with artifact_lock(args.out):
        model.save(args.out)
    print(f"model {model.version_id} vocab={len(model.vocab)} dim={model.dim} -> {args.out}")
    return 0


def _cmd_embed(args, config):
    model = EmbeddingModel.load(args.model)
    corpus = load_corpus_dir(args.corpus).parse_all()
    matrix = build_matrix(model, corpus, args.level, args.mode)
    with artifact_lock(args.out):
        matrix.save(args.out)
    print(f"matrix level={matrix.level} mode={matrix.mode} rows={matrix.n_rows} -> {args.out}")
    return 0


def _cmd_sim_pair(args, config):
    queries = EmbeddingMatrix.load(args.matrix_a)
    targets = EmbeddingMatrix.load(args.matrix_b)
    delta = args.threshold if args.threshold is not None else config["threshold_clone"]
    pairs = scan_pairs(queries, targets, check_threshold(delta))
    lines = ["query_contract\tquery_key\ttarget_contract\ttarget_key\tscore"]
    lines += [f"{q.contract_id}\t{q.element_key}\t{t.contract_id}\t{t.element_key}\t{score:.6f}"
              for q, t, score in pairs]
    text = "\n".join(lines) + "\n"
    if args.out:
        with artifact_lock(args.out):
            atomic_write_text(args.out, text)
    else:
        print(text, end="")
    return 0


def _cmd_bugdb_add(args, config):
    db_path = Path(args.db)
    db = BugDatabase.load(db_path) if db_path.exists() else BugDatabase()
    start, _, end = args.lines.partition("-")
    span = (int(start), int(end or start))
    model = EmbeddingModel.load(args.model) if args.model else None
    source = Path(args.contract).read_text("utf-8")
    record = add_bug(db, source, span, args.category, args.split, model,
                     source_path=str(Path(args.contract).resolve()))
    with artifact_lock(db_path):
        db.save(db_path)
    print(f"bug {record.bug_id} category={record.category} split={record.split}")
    return 0


def _cmd_bugdb_build(args, config):
    db = BugDatabase.load(args.db)
    model = EmbeddingModel.load(args.model)
    matrix = build_bug_matrix(db, args.split, model, args.mode)
    with artifact_lock(args.out):
        matrix.save(args.out)
    print(f"bug matrix rows={matrix.n_rows} mode={matrix.mode} -> {args.out}")
    return 0


def _cmd_clones(args, config):
    matrix = EmbeddingMatrix.load(args.matrix)
    delta = args.threshold if args.threshold is not None else config["threshold_clone"]
    corpus = None
    if args.corpus:
        corpus = load_corpus_dir(args.corpus).parse_all()
    sample_ids = None
    if args.sample is not None:
        if corpus is None:
            raise ConfigError("--sample requires --corpus")
        import random

        ids = sorted({ref.contract_id for ref in matrix.refs})
        rng = random.Random(args.seed or 0)
        sample_ids = set(rng.sample(ids, min(args.sample, len(ids))))
    findings, stats = detect_clones(matrix, check_threshold(delta), corpus,
                                    args.exclude_same_creator, sample_ids)
    text = _write_findings_tsv(args.out, findings)
    if not args.out:
        print(text, end="")
    stats_payload = stats.as_dict()
    if args.erc20 and corpus is not None:
        stats_payload["n_erc20"] = sum(
            1 for record in corpus.records
            if (tree := corpus.trees.get(record.contract_id)) is not None
            and erc20_check(tree))
    if args.stats:
        with artifact_lock(args.stats):
            atomic_write_text(args.stats, json.dumps(stats_payload, sort_keys=True) + "\n")
    else:
        print(json.dumps(stats_payload, sort_keys=True))
    return 1 if findings and args.fail_on_findings else 0


def _cmd_bugs(args, config):
    statements = EmbeddingMatrix.load(args.matrix)
    bugs = EmbeddingMatrix.load(args.bug_matrix)
    db = BugDatabase.load(args.db)
    delta = args.threshold if args.threshold is not None else config["threshold_bug"]
    findings = detect_bugs(statements, bugs, check_threshold(delta), db.categories())
    text = _write_findings_tsv(args.out, findings)
    if not args.out:
        print(text, end="")
    return 1 if findings and args.fail_on_findings else 0


def _cmd_validate(args, config):
    model = EmbeddingModel.load(args.model)
    bugs = EmbeddingMatrix.load(args.bug_matrix)
    db = BugDatabase.load(args.db)
    delta = args.threshold if args.threshold is not None else config["threshold_validate"]
    source = Path(args.file).read_text("utf-8")
    findings = validate_contract(source, model, bugs, check_threshold(delta),
                                 db.categories(), contract_id=Path(args.file).stem)
    text = _write_findings_tsv(args.out, findings)
    if not args.out:
        print(text, end="")
    verdict = "flagged" if findings else "clean"
    print(f"verdict: {verdict} ({len(findings)} finding(s))")
    return 1 if findings and args.fail_on_findings else 0


def _cmd_ablation(args, config):
    delta = args.threshold if args.threshold is not None else config["threshold_bug"]
    db = BugDatabase.load(args.db)
    result = ablation_run(
        EmbeddingMatrix.load(args.structural_matrix),
        EmbeddingMatrix.load(args.structural_bugs),
        EmbeddingMatrix.load(args.basic_matrix),
        EmbeddingMatrix.load(args.basic_bugs),
        check_threshold(delta), db.categories())
    print(json.dumps(result.counts(), sort_keys=True))
    if args.out:
        structural = _write_findings_tsv(None, result.structural)
        basic = _write_findings_tsv(None, result.basic)
        with artifact_lock(args.out):
            atomic_write_text(args.out, f"# structural\n{structural}# basic\n{basic}")
    return 0


def _read_findings_tsv(path: str):
    rows = []
    lines = Path(path).read_text("utf-8").splitlines()
    for line in lines[1:]:
        if line and not line.startswith("#"):
            rows.append(line.split("\t"))
    return rows


def _cmd_metrics(args, config):
    truth = {}
    for line in Path(args.truth).read_text("utf-8").splitlines():
        if not line.strip() or line.startswith("contract"):
            continue
        contract_id, key, label = line.split("\t")
        truth[(contract_id, key)] = label.strip() in ("1", "bug", "true")
    from .analysis import Finding
    from .embedding import ElementRef

    findings = []
    for row in _read_findings_tsv(args.findings):
        kind, contract_id, key, match, score = row[0], row[1], row[2], row[3], float(row[4])
        category = None if kind == "clone" else (row[5] if row[5] != "-" else "unknown")
        findings.append(Finding(kind, ElementRef(contract_id, "statement", key, 0),
                                match, score, category=category))
    report = eval_metrics(findings, truth)
    payload = json.dumps(report.as_dict(), sort_keys=True)
    if args.out:
        with artifact_lock(args.out):
            atomic_write_text(args.out, payload + "\n")
    else:
        print(payload)
    return 0


def _cmd_report(args, config):
    rows = _read_findings_tsv(args.findings)
    if args.format == "tsv":
        print("kind\tquery_contract\tquery_lines\tmatch_id\tscore\tcategory\tclone_type")
        for row in rows:
            print("\t".join(row))
    else:
        keys = ("kind", "query_contract", "query_lines", "match_id", "score",
                "category", "clone_type")
        payload = [dict(zip(keys, row)) for row in rows]
        print(json.dumps(payload, sort_keys=True))
    return 0


# --- argument wiring ----------------------------------------------------------


def _threshold_arg(value: str) -> float:
    try:
        parsed = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {value!r}") from None
    if not 0.0 <= parsed <= 1.0:
        raise argparse.ArgumentTypeError(f"threshold must be in [0, 1], got {value}")
    return parsed


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="solvec",
        description="Structural code embeddings for Solidity contracts")
    parser.add_argument("--config", help="TOML config file; flags override it")
    parser.add_argument("--version", action="version",
                        version=f"solvec {__version__} ({MODEL_MAGIC}, {MATRIX_MAGIC})")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load a manifest into a corpus directory")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("parse", help="parse one file, print or write XML")
    p.add_argument("file")
    p.add_argument("--xml")
    p.add_argument("--erc20", action="store_true")
    p.set_defaults(func=_cmd_parse)

    p = sub.add_parser("tokenize", help="print leveled token streams for one file")
    p.add_argument("file")
    p.add_argument("--level", required=True, choices=LEVELS)
    p.add_argument("--basic", action="store_true")
    p.add_argument("--raw", action="store_true", help="skip normalization")
    p.set_defaults(func=_cmd_tokenize)

    p = sub.add_parser("train", help="train an embedding model over a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--level", required=True, choices=LEVELS + ("all",))
    p.add_argument("--mode", default="structural", choices=("structural", "basic"))
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    for name in ("dim", "window", "epochs", "negative", "min-count",
                 "ngram-min", "ngram-max", "buckets", "hash-seed"):
        p.add_argument(f"--{name}", type=int, dest=name.replace("-", "_"))
    p.add_argument("--learning-rate", type=float, dest="learning_rate")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("embed", help="build an embedding matrix")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--level", required=True, choices=LEVELS)
    p.add_argument("--mode", default="structural", choices=("structural", "basic"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_embed)

    p = sub.add_parser("sim", help="similarity utilities")
    sim_sub = p.add_subparsers(dest="sim_command", required=True)
    sp = sim_sub.add_parser("pair", help="threshold scan between two matrices")
    sp.add_argument("matrix_a")
    sp.add_argument("matrix_b")
    sp.add_argument("--threshold", type=_threshold_arg)
    sp.add_argument("--out")
    sp.set_defaults(func=_cmd_sim_pair)

    p = sub.add_parser("bugdb", help="bug database maintenance")
    bug_sub = p.add_subparsers(dest="bugdb_command", required=True)
    bp = bug_sub.add_parser("add")
    bp.add_argument("--db", required=True)
    bp.add_argument("--contract", required=True)
    bp.add_argument("--lines", required=True, help="A-B line span")
    bp.add_argument("--category", required=True, choices=CATEGORIES)
    bp.add_argument("--split", required=True, choices=SPLITS)
    bp.add_argument("--model")
    bp.set_defaults(func=_cmd_bugdb_add)
    bp = bug_sub.add_parser("build")
    bp.add_argument("--db", required=True)
    bp.add_argument("--model", required=True)
    bp.add_argument("--split", required=True, choices=SPLITS)
    bp.add_argument("--mode", default="structural", choices=("structural", "basic"))
    bp.add_argument("--out", required=True)
    bp.set_defaults(func=_cmd_bugdb_build)

    p = sub.add_parser("clones", help="clone detection over a matrix")
    p.add_argument("--matrix", required=True)
    p.add_argument("--threshold", type=_threshold_arg)
    p.add_argument("--corpus")
    p.add_argument("--exclude-same-creator", action="store_true")
    p.add_argument("--sample", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--erc20", action="store_true",
                   help="include ERC20 compliance count in stats")
    p.add_argument("--out")
    p.add_argument("--stats")
    p.add_argument("--fail-on-findings", action="store_true")
    p.set_defaults(func=_cmd_clones)

    p = sub.add_parser("bugs", help="bug detection against the bug matrix")
    p.add_argument("--matrix", required=True)
    p.add_argument("--bug-matrix", required=True)
    p.add_argument("--db", required=True)
    p.add_argument("--threshold", type=_threshold_arg)
    p.add_argument("--out")
    p.add_argument("--fail-on-findings", action="store_true")
    p.set_defaults(func=_cmd_bugs)

    p = sub.add_parser("validate", help="validate one contract against known bugs")
    p.add_argument("file")
    p.add_argument("--model", required=True)
    p.add_argument("--bug-matrix", required=True)
    p.add_argument("--db", required=True)
    p.add_argument("--threshold", type=_threshold_arg)
    p.add_argument("--out")
    p.add_argument("--fail-on-findings", action="store_true")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("ablation", help="structural vs basic bug detection")
    p.add_argument("--structural-matrix", required=True)
    p.add_argument("--structural-bugs", required=True)
    p.add_argument("--basic-matrix", required=True)
    p.add_argument("--basic-bugs", required=True)
    p.add_argument("--db", required=True)
    p.add_argument("--threshold", type=_threshold_arg)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_ablation)

    p = sub.add_parser("metrics", help="confusion metrics from findings + labels")
    p.add_argument("--findings", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("report", help="reformat a findings file")
    p.add_argument("--findings", required=True)
    p.add_argument("--format", default="tsv", choices=("tsv", "json"))
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config(args.config)
        return args.func(args, config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except VersionMismatch as exc:
        print(f"version error: {exc}", file=sys.stderr)
        return 2
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return 1
    except SolvecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
