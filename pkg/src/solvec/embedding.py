"""Subword skip-gram token embeddings and element vector composition.

Training is skip-gram with negative sampling where the projection of a token
is the sum of its whole-word vector and its character-n-gram bucket vectors
(buckets start at zero, so an untrained model embeds unseen tokens as zero).
Single-threaded training with a fixed seed is bit-reproducible.

Frozen models are quantized: every stored component is a multiple of 2^-17
bounded by 2^7. Sums of such values stay exactly representable in float64 up
to ~2^35 addends, so token vectors and composed element vectors are exact and
independent of summation order; that is what makes composition genuinely
linear bit for bit.
"""
from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._io import atomic_write_bytes
from .errors import ConfigError, SolvecError
from .tokenizer import TokenStream

MODEL_MAGIC = "SMEMB v1"
MATRIX_MAGIC = "SMMAT v1"

_GRID = float(2 ** 17)
_VMAX = float(2 ** 7) - 1.0 / _GRID

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_U64 = 0xFFFFFFFFFFFFFFFF

_ZERO_I64 = np.zeros(1, dtype=np.int64)


class TrainingError(SolvecError):
    """Raised when the training corpus is unusable."""


def fnv1a64(data: bytes, seed: int = 0) -> int:
    """Seeded 64-bit FNV-1a over raw bytes."""
    h = (_FNV_OFFSET ^ seed) & _U64
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _U64
    return h


def char_ngrams(token: str, n_min: int, n_max: int) -> list[str]:
    """Character n-grams of ``<token>``, by start position then length."""
    wrapped = f"<{token}>"
    grams = []
    for start in range(len(wrapped)):
        for n in range(n_min, n_max + 1):
            if start + n <= len(wrapped):
                grams.append(wrapped[start:start + n])
    return grams


def bucket_ids(token: str, n_min: int, n_max: int, buckets: int, seed: int = 0) -> list[int]:
    return [fnv1a64(g.encode("utf-8"), seed) % buckets
            for g in char_ngrams(token, n_min, n_max)]


@dataclass(frozen=True)
class TrainingConfig:
    dim: int = 150
    window: int = 5
    epochs: int = 5
    negative: int = 5
    learning_rate: float = 0.05
    min_learning_rate: float = 1e-4
    min_count: int = 1
    ngram_min: int = 3
    ngram_max: int = 6
    buckets: int = 200_000
    hash_seed: int = 0
    rng_seed: int = 1
    shuffle: bool = True

    def validate(self) -> None:
        if self.dim <= 0:
            raise ConfigError(f"dim must be positive, got {self.dim}")
        if self.epochs <= 0:
            raise ConfigError(f"epochs must be positive, got {self.epochs}")
        if self.window <= 0:
            raise ConfigError(f"window must be positive, got {self.window}")
        if self.negative < 0:
            raise ConfigError("negative sample count must be non-negative")
        if self.buckets <= 0:
            raise ConfigError("bucket count must be positive")
        if not 0 < self.ngram_min <= self.ngram_max:
            raise ConfigError("require 0 < ngram_min <= ngram_max")
        if self.min_count < 1:
            raise ConfigError("min_count must be at least 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning rate must be positive")


@dataclass(frozen=True)
class ElementRef:
    contract_id: str
    level: str
    element_key: str
    ordinal: int = 0


@dataclass(frozen=True)
class CodeVector:
    values: np.ndarray
    element_ref: ElementRef | None = None

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise SolvecError("code vector has non-finite components")


def _quantize(arr: np.ndarray) -> np.ndarray:
    q = np.round(arr.astype(np.float64) * _GRID) / _GRID
    np.clip(q, -_VMAX, _VMAX, out=q)
    return q.astype(np.float32)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # exp overflow saturates to 0/1, which is the correct limit; callers on
    # the hot path silence the overflow warning with np.errstate
    return 1.0 / (1.0 + np.exp(-x))


class EmbeddingModel:
    """Frozen token + n-gram-bucket vectors; lookups never mutate state."""

    def __init__(self, dim: int, vocab: dict[str, int], word_vectors: np.ndarray,
                 ngram_buckets: np.ndarray, ngram_range: tuple[int, int],
                 hash_seed: int, training_config: TrainingConfig | None = None):
        if word_vectors.shape != (len(vocab), dim):
            raise SolvecError("word vector shape does not match vocab/dim")
        if ngram_buckets.ndim != 2 or ngram_buckets.shape[1] != dim:
            raise SolvecError("bucket matrix width does not match dim")
        if sorted(vocab.values()) != list(range(len(vocab))):
            raise SolvecError("vocab indices must be dense 0..V-1")
        if not (np.all(np.isfinite(word_vectors)) and np.all(np.isfinite(ngram_buckets))):
            raise SolvecError("model vectors must be finite")
        self.dim = dim
        self.vocab = dict(vocab)
        self.word_vectors = word_vectors
        self.ngram_buckets = ngram_buckets
        self.ngram_range = ngram_range
        self.hash_seed = hash_seed
        self.training_config = training_config
        self.word_vectors.setflags(write=False)
        self.ngram_buckets.setflags(write=False)
        self._index_to_token = sorted(vocab, key=vocab.get)
        self._vector_cache: dict[str, np.ndarray] = {}
        self._version: str | None = None

    @property
    def n_buckets(self) -> int:
        return self.ngram_buckets.shape[0]

    def bucket_ids(self, token: str) -> np.ndarray:
        lo, hi = self.ngram_range
        return np.asarray(bucket_ids(token, lo, hi, self.n_buckets, self.hash_seed),
                          dtype=np.int64)

    def token_vector(self, token: str) -> np.ndarray:
        """Word vector plus n-gram bucket rows; bucket rows only when OOV."""
        cached = self._vector_cache.get(token)
        if cached is not None:
            return cached
        rows = []
        index = self.vocab.get(token)
        if index is not None:
            rows.append(self.word_vectors[index][None, :])
        ids = self.bucket_ids(token)
        if ids.size:
            rows.append(self.ngram_buckets[ids])
        if rows:
            vec = np.concatenate(rows).astype(np.float64).sum(axis=0)
        else:
            vec = np.zeros(self.dim, dtype=np.float64)
        vec.setflags(write=False)
        self._vector_cache[token] = vec
        return vec

    # --- serialization ---------------------------------------------------

    def to_bytes(self) -> bytes:
        lo, hi = self.ngram_range
        head = (f"{MODEL_MAGIC} dim={self.dim} vocab={len(self.vocab)} "
                f"buckets={self.n_buckets} ngrams={lo}-{hi} seed={self.hash_seed}\n")
        lines = [head]
        lines += [f"{token} {idx}\n" for idx, token in enumerate(self._index_to_token)]
        body = "".join(lines).encode("utf-8")
        vectors = np.concatenate([self.word_vectors, self.ngram_buckets])
        return body + vectors.astype("<f4").tobytes()

    @property
    def version_id(self) -> str:
        if self._version is None:
            self._version = hashlib.sha256(self.to_bytes()).hexdigest()[:16]
        return self._version

    def save(self, path) -> None:
        atomic_write_bytes(path, self.to_bytes())

    @classmethod
    def load(cls, path) -> "EmbeddingModel":
        return cls.from_bytes(Path(path).read_bytes())

    @classmethod
    def from_bytes(cls, data: bytes) -> "EmbeddingModel":
        cursor = data.find(b"\n")
        if cursor == -1:
            raise SolvecError("truncated model file")
        header = data[:cursor].decode("utf-8")
        parts = header.split()
        if parts[:2] != MODEL_MAGIC.split():
            raise SolvecError(f"not a {MODEL_MAGIC} file: {header!r}")
        fields = dict(p.split("=", 1) for p in parts[2:])
        dim = int(fields["dim"])
        n_vocab = int(fields["vocab"])
        n_buckets = int(fields["buckets"])
        lo, hi = (int(x) for x in fields["ngrams"].split("-"))
        seed = int(fields["seed"])
        vocab: dict[str, int] = {}
        offset = cursor + 1
        for _ in range(n_vocab):
            end = data.find(b"\n", offset)
            if end == -1:
                raise SolvecError("truncated model vocabulary")
            token, _, idx = data[offset:end].decode("utf-8").rpartition(" ")
            vocab[token] = int(idx)
            offset = end + 1
        expected = (n_vocab + n_buckets) * dim * 4
        blob = data[offset:]
        if len(blob) != expected:
            raise SolvecError(f"model vector section has {len(blob)} bytes, expected {expected}")
        vectors = np.frombuffer(blob, dtype="<f4").reshape(n_vocab + n_buckets, dim)
        word = vectors[:n_vocab].copy()
        buckets = vectors[n_vocab:].copy()
        return cls(dim, vocab, word, buckets, (lo, hi), seed)


def train(streams, config: TrainingConfig = TrainingConfig()) -> EmbeddingModel:
    """Train a subword skip-gram model over normalized token streams."""
    config.validate()
    sentences: list[list[str]] = []
    counts: Counter[str] = Counter()
    for stream in streams:
        tokens = list(stream.tokens) if isinstance(stream, TokenStream) else list(stream)
        if not tokens:
            continue
        for token in tokens:
            if not token or any(ch.isspace() for ch in token):
                raise TrainingError(f"token not storable in model vocabulary: {token!r}")
        sentences.append(tokens)
        counts.update(tokens)
    if not sentences:
        raise TrainingError("empty training corpus")
    vocab_tokens = [t for t, c in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
                    if c >= config.min_count]
    if not vocab_tokens:
        raise TrainingError(f"no token reaches min_count={config.min_count}")
    vocab = {t: i for i, t in enumerate(vocab_tokens)}

    dim = config.dim
    rng = np.random.default_rng(config.rng_seed)
    word = ((rng.random((len(vocab), dim), dtype=np.float32) - 0.5) / dim).astype(np.float32)
    buckets = np.zeros((config.buckets, dim), dtype=np.float32)
    out_layer = np.zeros((len(vocab), dim), dtype=np.float32)

    noise = np.array([counts[t] for t in vocab_tokens], dtype=np.float64) ** 0.75
    cum = np.cumsum(noise)
    total_noise = cum[-1]

    sent_ids = [np.array([vocab[t] for t in s if t in vocab], dtype=np.int64)
                for s in sentences]
    # per-word n-gram buckets as (unique ids, multiplicities) for cheap
    # weighted gathers and scatter-adds
    sub_unique: list[np.ndarray] = []
    sub_counts: list[np.ndarray] = []
    for t in vocab_tokens:
        ids_arr = np.array(bucket_ids(t, config.ngram_min, config.ngram_max,
                                      config.buckets, config.hash_seed), dtype=np.int64)
        uniq, mult = np.unique(ids_arr, return_counts=True)
        sub_unique.append(uniq)
        sub_counts.append(mult.astype(np.float32))

    total_positions = config.epochs * sum(len(ids) for ids in sent_ids)
    processed = 0
    lr0 = config.learning_rate
    lr_floor = config.min_learning_rate
    k = config.negative

    with np.errstate(over="ignore"):
        for _ in range(config.epochs):
            if config.shuffle:
                order = rng.permutation(len(sent_ids))
            else:
                order = np.arange(len(sent_ids))
            for si in order:
                ids = sent_ids[si]
                length = len(ids)
                if length == 0:
                    continue
                id_list = ids.tolist()
                reaches = rng.integers(1, config.window + 1, size=length)
                lows = np.maximum(0, np.arange(length) - reaches)
                highs = np.minimum(length, np.arange(length) + reaches + 1)
                win_counts = highs - lows - 1
                total_ctx = int(win_counts.sum())
                if k > 0 and total_ctx > 0:
                    draws = rng.random((total_ctx, k)) * total_noise
                    negatives_all = np.searchsorted(cum, draws, side="right")
                offset = 0
                for pos in range(length):
                    lr = max(lr_floor, lr0 * (1.0 - processed / max(1, total_positions)))
                    processed += 1
                    n_ctx = int(win_counts[pos])
                    if n_ctx == 0:
                        continue
                    center = id_list[pos]
                    bucket_rows = sub_unique[center]
                    bucket_mult = sub_counts[center]
                    if bucket_rows.size:
                        hidden = word[center] + bucket_mult @ buckets[bucket_rows]
                    else:
                        hidden = word[center]
                    left = pos - int(lows[pos])
                    targets = np.empty((n_ctx, 1 + k), dtype=np.int64)
                    targets[:left, 0] = ids[lows[pos]:pos]
                    targets[left:, 0] = ids[pos + 1:highs[pos]]
                    if k > 0:
                        targets[:, 1:] = negatives_all[offset:offset + n_ctx]
                        offset += n_ctx
                    flat_targets = targets.ravel()
                    outputs = out_layer[flat_targets]        # (n*(1+k), dim) f32
                    grad = -_sigmoid(outputs @ hidden).reshape(n_ctx, 1 + k)
                    grad[:, 0] += 1.0
                    grad *= lr
                    if k > 0:
                        # a negative draw hitting the true target contributes nothing
                        grad[:, 1:] *= targets[:, 1:] != targets[:, 0:1]
                    flat_grad = grad.ravel()
                    grad_hidden = outputs.T @ flat_grad
                    # output rows move by (sum of their scalar grads) * hidden;
                    # segment-summing the scalars avoids np.add.at
                    sort_order = np.argsort(flat_targets, kind="stable")
                    sorted_targets = flat_targets[sort_order]
                    seg_starts = np.nonzero(sorted_targets[1:] != sorted_targets[:-1])[0]
                    seg_starts = np.concatenate((_ZERO_I64, seg_starts + 1))
                    seg_grads = np.add.reduceat(flat_grad[sort_order], seg_starts)
                    out_layer[sorted_targets[seg_starts]] += seg_grads[:, None] * hidden
                    word[center] += grad_hidden
                    if bucket_rows.size:
                        buckets[bucket_rows] += bucket_mult[:, None] * grad_hidden

    return EmbeddingModel(dim, vocab, _quantize(word), _quantize(buckets),
                          (config.ngram_min, config.ngram_max),
                          config.hash_seed, config)


def init_model(tokens, config: TrainingConfig = TrainingConfig()) -> EmbeddingModel:
    """An untrained model: random word vectors, all-zero n-gram buckets."""
    config.validate()
    ordered = sorted(set(tokens))
    vocab = {t: i for i, t in enumerate(ordered)}
    rng = np.random.default_rng(config.rng_seed)
    word = ((rng.random((len(vocab), config.dim), dtype=np.float32) - 0.5)
            / config.dim).astype(np.float32)
    buckets = np.zeros((config.buckets, config.dim), dtype=np.float32)
    return EmbeddingModel(config.dim, vocab, _quantize(word), buckets,
                          (config.ngram_min, config.ngram_max),
                          config.hash_seed, config)


def token_vector(model: EmbeddingModel, token: str) -> np.ndarray:
    return model.token_vector(token)


def compose(model: EmbeddingModel, stream) -> CodeVector:
    """Sum of token vectors over the stream (Eq.-style additive composition).

    Exact in float64 thanks to model quantization, so the result is identical
    for any summation order and strictly linear over concatenation.
    """
    ref = None
    if isinstance(stream, TokenStream):
        if not stream.normalized:
            raise SolvecError("compose expects a normalized stream")
        ref = ElementRef(stream.contract_id, stream.level, stream.element_key)
        tokens = stream.tokens
    else:
        tokens = list(stream)
    if not tokens:
        return CodeVector(np.zeros(model.dim, dtype=np.float64), ref)
    stacked = np.stack([model.token_vector(t) for t in tokens])
    return CodeVector(stacked.sum(axis=0), ref)


class EmbeddingMatrix:
    """Row-stacked element vectors with a row -> element_ref index."""

    def __init__(self, level: str, mode: str, rows: np.ndarray,
                 refs: tuple[ElementRef, ...], model_version: str):
        if rows.ndim != 2:
            raise SolvecError("matrix rows must be 2-D")
        if rows.shape[0] != len(refs):
            raise SolvecError("row count does not match index size")
        if not np.all(np.isfinite(rows)):
            raise SolvecError("matrix contains non-finite values")
        self.level = level
        self.mode = mode
        self.rows = rows.astype(np.float32)
        self.rows.setflags(write=False)
        self.refs = tuple(refs)
        self.model_version = model_version

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]

    def to_bytes(self) -> bytes:
        lines = [f"{MATRIX_MAGIC} level={self.level} rows={self.n_rows} dim={self.dim}\n",
                 f"meta model={self.model_version} mode={self.mode}\n"]
        for ref in self.refs:
            lines.append(f"{ref.contract_id}\t{ref.element_key}\t{ref.ordinal}\n")
        return "".join(lines).encode("utf-8") + self.rows.astype("<f4").tobytes()

    def save(self, path) -> None:
        atomic_write_bytes(path, self.to_bytes())

    @classmethod
    def load(cls, path) -> "EmbeddingMatrix":
        return cls.from_bytes(Path(path).read_bytes())

    @classmethod
    def from_bytes(cls, data: bytes) -> "EmbeddingMatrix":
        cursor = data.find(b"\n")
        if cursor == -1:
            raise SolvecError("truncated matrix file")
        header = data[:cursor].decode("utf-8")
        parts = header.split()
        if parts[:2] != MATRIX_MAGIC.split():
            raise SolvecError(f"not a {MATRIX_MAGIC} file: {header!r}")
        fields = dict(p.split("=", 1) for p in parts[2:])
        level = fields["level"]
        n_rows = int(fields["rows"])
        dim = int(fields["dim"])
        offset = cursor + 1
        end = data.find(b"\n", offset)
        meta = dict(p.split("=", 1) for p in data[offset:end].decode("utf-8").split()[1:])
        offset = end + 1
        refs = []
        for _ in range(n_rows):
            end = data.find(b"\n", offset)
            contract_id, key, ordinal = data[offset:end].decode("utf-8").split("\t")
            refs.append(ElementRef(contract_id, level, key, int(ordinal)))
            offset = end + 1
        blob = data[offset:]
        if len(blob) != n_rows * dim * 4:
            raise SolvecError("matrix vector section has unexpected size")
        rows = np.frombuffer(blob, dtype="<f4").reshape(n_rows, dim).copy()
        return cls(level, meta["mode"], rows, tuple(refs), meta["model"])


def build_matrix(model: EmbeddingModel, corpus, level: str,
                 mode: str = "structural") -> EmbeddingMatrix:
    """One row per element at ``level`` across the corpus, parse-error files
    excluded, ordered by (contract_id, source order)."""
    from .tokenizer import normalize, serialize_all

    if not corpus.parsed:
        raise SolvecError("corpus must be parsed before building matrices")
    rows: list[np.ndarray] = []
    refs: list[ElementRef] = []
    for record in sorted(corpus.records, key=lambda r: r.contract_id):
        tree = corpus.trees.get(record.contract_id)
        if tree is None:
            continue
        seen: dict[str, int] = {}
        for stream in serialize_all(tree, level, mode, record.contract_id):
            vec = compose(model, normalize(stream))
            ordinal = seen.get(stream.element_key, 0)
            seen[stream.element_key] = ordinal + 1
            refs.append(ElementRef(record.contract_id, level, stream.element_key, ordinal))
            rows.append(vec.values.astype(np.float32))
    stacked = np.vstack(rows) if rows else np.zeros((0, model.dim), dtype=np.float32)
    return EmbeddingMatrix(level, mode, stacked, tuple(refs), model.version_id)
