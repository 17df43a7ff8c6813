"""Token vocabularies, embedding tables, and the SEMB on-disk format.

SEMB layout (all integers little-endian):

    magic        4 bytes  b"SEMB"
    version      u16      currently 1
    table_count  u8
    vocab_size   u32
    token table           per token: u16 byte length + UTF-8 bytes
    tables                per table: space_tag u8, dim u32,
                          payload vocab_size * dim f32 row-major
    checksum     u64      sum of all table payload bytes mod 2**64

After the checksum an optional UTF-8 JSON tail may follow carrying store
metadata (provenance, creation seed, synthetic cluster layout, vocabulary
normalization tag). Readers that only understand the core format can stop
at the checksum; files without a tail load with default metadata.

Embedding scalars are 32-bit little-endian floats so that save/load round
trips are bit-exact.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ArgumentError,
    CorruptionError,
    FormatError,
    StorageError,
    TokenLookupError,
)
from .seeding import rng_for

MAGIC = b"SEMB"
VERSION = 1

RETRIEVAL_SPACE = "retrieval_space"
LM_INPUT_SPACE = "lm_input_space"
_SPACE_CODES = {RETRIEVAL_SPACE: 0, LM_INPUT_SPACE: 1}
_SPACE_NAMES = {v: k for k, v in _SPACE_CODES.items()}

NORMALIZATION_RAW = "raw"
NORMALIZATION_LOWERCASED = "lowercased"

# Word-initial markers used by common subword tokenizers; one leading marker
# is stripped before vocabulary comparison.
_SPACE_MARKERS = ("Ġ", "▁", " ")


def normalize_token(token: str, tag: str = NORMALIZATION_RAW) -> str:
    """Canonical comparison form of a token: strip one leading space marker,
    lowercase only when the tag says so."""
    for marker in _SPACE_MARKERS:
        if token.startswith(marker):
            token = token[len(marker):]
            break
    if tag == NORMALIZATION_LOWERCASED:
        token = token.lower()
    return token


@dataclass(frozen=True)
class TokenVocabulary:
    """Ordered token list; position defines the token index.

    An empty vocabulary is a legal value (it is what an empty intersection
    produces) but is rejected wherever a vocabulary is consumed: store
    construction, index building, serialization.
    """

    tokens: tuple[str, ...]
    normalization_tag: str = NORMALIZATION_RAW

    def __post_init__(self):
        if not isinstance(self.tokens, tuple):
            object.__setattr__(self, "tokens", tuple(self.tokens))
        if self.normalization_tag not in (NORMALIZATION_RAW, NORMALIZATION_LOWERCASED):
            raise ArgumentError(f"unknown normalization_tag {self.normalization_tag!r}")
        normalized = [normalize_token(t, self.normalization_tag) for t in self.tokens]
        if len(set(normalized)) != len(normalized):
            seen, dupes = set(), []
            for n in normalized:
                if n in seen:
                    dupes.append(n)
                seen.add(n)
            raise ArgumentError(f"tokens not unique after normalization: {sorted(set(dupes))}")

    def __len__(self) -> int:
        return len(self.tokens)

    def index_of(self, token: str) -> int:
        if not hasattr(self, "_index"):
            object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.tokens)})
        try:
            return self._index[token]
        except KeyError:
            raise TokenLookupError(f"token {token!r} not in vocabulary") from None

    def __contains__(self, token: str) -> bool:
        try:
            self.index_of(token)
            return True
        except KeyError:
            return False


@dataclass(frozen=True)
class EmbeddingTable:
    """Dense float32 matrix, one row per vocabulary token."""

    matrix: np.ndarray
    space_tag: str

    def __post_init__(self):
        m = np.ascontiguousarray(self.matrix, dtype=np.float32)
        if m.ndim != 2 or m.shape[1] < 1:
            raise ArgumentError(f"embedding matrix must be 2-D with dim > 0, got shape {m.shape}")
        if not np.isfinite(m).all():
            bad = int(np.argwhere(~np.isfinite(m).all(axis=1))[0][0])
            raise ArgumentError(f"embedding matrix contains non-finite entries (first bad row {bad})")
        if self.space_tag not in _SPACE_CODES:
            raise ArgumentError(f"unknown space_tag {self.space_tag!r}")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[1])

    @property
    def rows(self) -> int:
        return int(self.matrix.shape[0])


@dataclass(frozen=True)
class ClusterInfo:
    """One synthetic concept cluster: contiguous token index range [start, stop)."""

    label: str
    center_seed: int
    spread: float
    start: int
    stop: int


@dataclass(frozen=True)
class StoreMetadata:
    provenance: str = ""
    seed: int | None = None
    clusters: tuple[ClusterInfo, ...] | None = None
    extra: dict | None = None  # JSON-serializable passthrough (e.g. index prompts)

    def is_default(self) -> bool:
        return (self.provenance == "" and self.seed is None
                and self.clusters is None and self.extra is None)


@dataclass(frozen=True)
class EmbeddingStore:
    """A vocabulary plus one embedding table per vector space.

    Immutable after construction; safe to share read-only across workers.
    """

    vocabulary: TokenVocabulary
    tables: dict[str, EmbeddingTable]
    metadata: StoreMetadata = field(default_factory=StoreMetadata)

    def __post_init__(self):
        if len(self.vocabulary) == 0:
            raise ArgumentError("store vocabulary must not be empty")
        if not self.tables:
            raise ArgumentError("store must contain at least one embedding table")
        for tag, table in self.tables.items():
            if tag != table.space_tag:
                raise ArgumentError(f"table keyed {tag!r} has space_tag {table.space_tag!r}")
            if table.rows != len(self.vocabulary):
                raise ArgumentError(
                    f"table {tag!r} has {table.rows} rows for a "
                    f"{len(self.vocabulary)}-token vocabulary"
                )

    def table(self, space_tag: str) -> EmbeddingTable:
        try:
            return self.tables[space_tag]
        except KeyError:
            raise ArgumentError(f"store has no {space_tag!r} table (has {sorted(self.tables)})")


def _payload_checksum(payloads: list[bytes]) -> int:
    total = 0
    for p in payloads:
        if p:
            total += int(np.frombuffer(p, dtype=np.uint8).sum(dtype=np.uint64))
    return total & ((1 << 64) - 1)


def _metadata_to_json(store: EmbeddingStore) -> dict:
    meta = store.metadata
    out: dict = {"provenance": meta.provenance, "seed": meta.seed}
    if meta.clusters is not None:
        out["clusters"] = [
            {"label": c.label, "center_seed": c.center_seed, "spread": c.spread,
             "start": c.start, "stop": c.stop}
            for c in meta.clusters
        ]
    if meta.extra is not None:
        out["extra"] = meta.extra
    if store.vocabulary.normalization_tag != NORMALIZATION_RAW:
        out["normalization_tag"] = store.vocabulary.normalization_tag
    return out


def _metadata_from_json(obj: dict) -> tuple[StoreMetadata, str]:
    clusters = None
    if obj.get("clusters") is not None:
        clusters = tuple(
            ClusterInfo(c["label"], int(c["center_seed"]), float(c["spread"]),
                        int(c["start"]), int(c["stop"]))
            for c in obj["clusters"]
        )
    meta = StoreMetadata(
        provenance=obj.get("provenance", ""),
        seed=obj.get("seed"),
        clusters=clusters,
        extra=obj.get("extra"),
    )
    return meta, obj.get("normalization_tag", NORMALIZATION_RAW)


def save_store(store: EmbeddingStore, path: str | Path) -> None:
    """Write the store in SEMB format. Round trips bit-exactly via load_store."""
    path = Path(path)
    if len(store.vocabulary) == 0:
        raise ArgumentError("refusing to write a store with zero tokens")
    chunks = [MAGIC, struct.pack("<HB", VERSION, len(store.tables)),
              struct.pack("<I", len(store.vocabulary))]
    for token in store.vocabulary.tokens:
        raw = token.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise ArgumentError(f"token too long to serialize ({len(raw)} bytes)")
        chunks.append(struct.pack("<H", len(raw)))
        chunks.append(raw)
    payloads = []
    for tag in sorted(store.tables, key=lambda t: _SPACE_CODES[t]):
        table = store.tables[tag]
        chunks.append(struct.pack("<BI", _SPACE_CODES[tag], table.dim))
        payload = np.ascontiguousarray(table.matrix, dtype="<f4").tobytes()
        payloads.append(payload)
        chunks.append(payload)
    chunks.append(struct.pack("<Q", _payload_checksum(payloads)))
    meta_json = _metadata_to_json(store)
    if not (store.metadata.is_default()
            and store.vocabulary.normalization_tag == NORMALIZATION_RAW):
        chunks.append(json.dumps(meta_json, sort_keys=True).encode("utf-8"))
    try:
        with open(path, "wb") as f:
            for chunk in chunks:
                f.write(chunk)
    except OSError as e:
        raise StorageError(f"cannot write store to {path}: {e}") from e


class _Reader:
    def __init__(self, data: bytes, path: Path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise CorruptionError(
                f"{self.path}: truncated while reading {what} "
                f"(need {n} bytes at offset {self.pos}, have {len(self.data) - self.pos})"
            )
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def load_store(path: str | Path) -> EmbeddingStore:
    """Load and validate a SEMB file; rejects NaN/Inf payload entries."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise StorageError(f"cannot read store from {path}: {e}") from e

    r = _Reader(data, path)
    if r.take(4, "magic") != MAGIC:
        raise FormatError(f"{path}: bad magic, not a SEMB file")
    (version,) = r.unpack("<H", "version")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported SEMB version {version} (supported: {VERSION})")
    (table_count,) = r.unpack("<B", "table count")
    (vocab_size,) = r.unpack("<I", "vocab size")
    if table_count == 0 or vocab_size == 0:
        raise FormatError(f"{path}: empty store ({table_count} tables, {vocab_size} tokens)")

    tokens = []
    for i in range(vocab_size):
        (length,) = r.unpack("<H", f"token {i} length")
        raw = r.take(length, f"token {i} bytes")
        try:
            tokens.append(raw.decode("utf-8"))
        except UnicodeDecodeError as e:
            raise CorruptionError(f"{path}: token {i} is not valid UTF-8") from e

    tables: dict[str, EmbeddingTable] = {}
    payloads = []
    for t in range(table_count):
        code, dim = r.unpack("<BI", f"table {t} header")
        if code not in _SPACE_NAMES:
            raise FormatError(f"{path}: table {t} has unknown space tag {code}")
        if dim == 0:
            raise FormatError(f"{path}: table {t} has dim 0")
        payload = r.take(vocab_size * dim * 4, f"table {t} payload")
        payloads.append(payload)
        matrix = np.frombuffer(payload, dtype="<f4").reshape(vocab_size, dim)
        bad = ~np.isfinite(matrix)
        if bad.any():
            row = int(np.argwhere(bad.any(axis=1))[0][0])
            raise CorruptionError(
                f"{path}: table {t} ({_SPACE_NAMES[code]}) has a non-finite entry at row {row}"
            )
        tag = _SPACE_NAMES[code]
        if tag in tables:
            raise FormatError(f"{path}: duplicate table for space {tag}")
        tables[tag] = EmbeddingTable(matrix=matrix.copy(), space_tag=tag)

    (stored_sum,) = r.unpack("<Q", "checksum")
    actual = _payload_checksum(payloads)
    if stored_sum != actual:
        raise CorruptionError(f"{path}: payload checksum mismatch "
                              f"(stored {stored_sum}, computed {actual})")

    metadata = StoreMetadata()
    norm_tag = NORMALIZATION_RAW
    tail = data[r.pos:]
    if tail:
        try:
            metadata, norm_tag = _metadata_from_json(json.loads(tail.decode("utf-8")))
        except (ValueError, KeyError, TypeError) as e:
            raise CorruptionError(f"{path}: malformed metadata tail: {e}") from e

    vocab = TokenVocabulary(tokens=tuple(tokens), normalization_tag=norm_tag)
    return EmbeddingStore(vocabulary=vocab, tables=tables, metadata=metadata)


def intersect_vocabularies(a: TokenVocabulary, b: TokenVocabulary) -> TokenVocabulary:
    """Tokens whose normalized forms appear in both vocabularies.

    The result holds normalized forms in a's order, so the operation is a
    projection: intersecting its output with either input again is a no-op.
    Lowercasing applies when either input is tagged lowercased. An empty
    result is a value, not an error; consumers decide whether it is fatal.
    """
    if len(a) == 0 or len(b) == 0:
        raise ArgumentError("cannot intersect an empty vocabulary")
    tag = (NORMALIZATION_LOWERCASED
           if NORMALIZATION_LOWERCASED in (a.normalization_tag, b.normalization_tag)
           else NORMALIZATION_RAW)
    b_set = {normalize_token(t, tag) for t in b.tokens}
    out, seen = [], set()
    for t in a.tokens:
        n = normalize_token(t, tag)
        if n in b_set and n not in seen:
            out.append(n)
            seen.add(n)
    return TokenVocabulary(tokens=tuple(out), normalization_tag=tag)


def generate_synthetic_store(
    seed: int,
    vocab_size: int,
    dim: int,
    cluster_spec: list[tuple[str, int, float]],
    lm_dim: int | None = None,
) -> EmbeddingStore:
    """Deterministic synthetic store with clustered retrieval embeddings.

    cluster_spec is a list of (concept label, center seed, spread) triples.
    Tokens are split into contiguous per-cluster blocks and named
    "<label>_<i>"; retrieval rows are unit cluster centers plus isotropic
    noise scaled by spread; the lm_input_space table is unstructured
    (its geometry is not meant to align with the retrieval clusters).
    """
    if dim <= 0 or (lm_dim is not None and lm_dim <= 0):
        raise ArgumentError("embedding dims must be positive")
    if not cluster_spec:
        raise ArgumentError("need at least one cluster")
    if vocab_size < len(cluster_spec):
        raise ArgumentError(f"vocab_size {vocab_size} < number of clusters {len(cluster_spec)}")
    labels = [label for label, _, _ in cluster_spec]
    if len(set(labels)) != len(labels):
        raise ArgumentError("cluster labels must be unique")
    for label, _, spread in cluster_spec:
        if spread < 0:
            raise ArgumentError(f"cluster {label!r} has negative spread")
    lm_dim = dim if lm_dim is None else lm_dim

    n_clusters = len(cluster_spec)
    base, extra = divmod(vocab_size, n_clusters)
    sizes = [base + (1 if i < extra else 0) for i in range(n_clusters)]

    noise_rng = rng_for("synthetic-store-noise", seed)
    tokens: list[str] = []
    rows = np.empty((vocab_size, dim), dtype=np.float64)
    clusters: list[ClusterInfo] = []
    start = 0
    for (label, center_seed, spread), size in zip(cluster_spec, sizes):
        center = rng_for("cluster-center", center_seed).standard_normal(dim)
        center /= np.linalg.norm(center)
        for i in range(size):
            tokens.append(f"{label}_{i:03d}")
            rows[start + i] = center + spread * noise_rng.standard_normal(dim)
        clusters.append(ClusterInfo(label=label, center_seed=center_seed,
                                    spread=float(spread), start=start, stop=start + size))
        start += size

    lm_rows = rng_for("synthetic-store-lm", seed).standard_normal((vocab_size, lm_dim))
    lm_rows /= np.sqrt(lm_dim)

    vocab = TokenVocabulary(tokens=tuple(tokens))
    tables = {
        RETRIEVAL_SPACE: EmbeddingTable(rows.astype(np.float32), RETRIEVAL_SPACE),
        LM_INPUT_SPACE: EmbeddingTable(lm_rows.astype(np.float32), LM_INPUT_SPACE),
    }
    meta = StoreMetadata(provenance="synthetic", seed=seed, clusters=tuple(clusters))
    return EmbeddingStore(vocabulary=vocab, tables=tables, metadata=meta)


def cluster_of_token(store: EmbeddingStore, token_index: int) -> ClusterInfo:
    """Cluster owning a token index; requires synthetic cluster metadata."""
    clusters = store.metadata.clusters
    if clusters is None:
        raise ArgumentError("store has no cluster metadata")
    for c in clusters:
        if c.start <= token_index < c.stop:
            return c
    raise ArgumentError(f"token index {token_index} outside all cluster ranges")


def cluster_by_label(store: EmbeddingStore, label: str) -> ClusterInfo:
    clusters = store.metadata.clusters
    if clusters is None:
        raise ArgumentError("store has no cluster metadata")
    for c in clusters:
        if c.label == label:
            return c
    raise ArgumentError(f"no cluster labelled {label!r} "
                        f"(have {[c.label for c in clusters]})")


def cluster_center(cluster: ClusterInfo, dim: int) -> np.ndarray:
    """Regenerate the unit center vector a synthetic cluster was built from."""
    center = rng_for("cluster-center", cluster.center_seed).standard_normal(dim)
    return center / np.linalg.norm(center)


def sample_cluster_observation(
    store: EmbeddingStore, label: str, rng: np.random.Generator
) -> np.ndarray:
    """Fresh noisy sample from a cluster, float32, same law as its members."""
    c = cluster_by_label(store, label)
    dim = store.table(RETRIEVAL_SPACE).dim
    center = cluster_center(c, dim)
    return (center + c.spread * rng.standard_normal(dim)).astype(np.float32)
