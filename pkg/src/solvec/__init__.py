"""Structural code embeddings for Solidity.

Parse contracts into typed trees, serialize and normalize them into leveled
token streams, train subword skip-gram embeddings, compose per-element
vectors, and run clone detection, known-bug detection and contract validation
over normalized-Euclidean similarity.
"""
from .analysis import (AblationResult, CloneStats, EvalReport, Finding,
                       ablation_run, classify_clone_type, compare_fix,
                       detect_bugs, detect_clones, erc20_check, eval_metrics,
                       validate_contract)
from .bugdb import (BugDatabase, BugRecord, CATEGORIES, SPLITS, add_bug,
                    build_bug_matrix, resolve_statement)
from .corpus import (ContractRecord, Corpus, CorpusStats, corpus_stats,
                     load_corpus, load_corpus_dir, save_corpus_dir)
from .embedding import (CodeVector, ElementRef, EmbeddingMatrix, EmbeddingModel,
                        TrainingConfig, TrainingError, build_matrix, compose,
                        init_model, token_vector, train)
from .errors import (ConfigError, IngestError, ParseError, SolvecError,
                     StructureError, SyntaxDiagnostic, UnsupportedConstruct,
                     VersionMismatch)
from .parser import (NodeCatalog, NODE_CATALOG, ParseNode, ParseTree,
                     contracts_of, derive_dim, export_xml, functions_of,
                     import_xml, parse, statements_of, structurally_equal)
from .simindex import (PairMatrix, benchmark_similarity, pairwise, scan_pairs,
                       similarity, threshold_pairs)
from .tokenizer import (TokenStream, normalize, serialize_all,
                        serialize_contract, serialize_function,
                        serialize_statement, split_identifier)

__version__ = "0.1.0"
