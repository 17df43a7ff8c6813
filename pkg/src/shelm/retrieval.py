"""Token retrieval: prompt-ensembled token embeddings, a unit-normalized
index over the vocabulary, and top-k cosine queries.

A token's index vector is the mean of its text encodings under every prompt
in the prompt set ("<prompt> <token>", one space), or its bare encoding when
the prompt set is empty. The built index stores one L2-normalized row per
token; queries return the k highest-cosine tokens with ties broken by
ascending token index so traces are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Protocol

import numpy as np

from .errors import (
    ArgumentError,
    DegenerateInputError,
    MappingError,
    StorageError,
    TokenLookupError,
)
from .seeding import rng_for
from .stores import (
    RETRIEVAL_SPACE,
    EmbeddingStore,
    EmbeddingTable,
    StoreMetadata,
    TokenVocabulary,
    load_store,
    save_store,
)

DEGENERATE_NORM = 1e-8


@dataclass(frozen=True)
class PromptSet:
    """Ordered prompt templates; may be empty (bare single-token mode)."""

    prompts: tuple[str, ...] = ()

    def __post_init__(self):
        if not isinstance(self.prompts, tuple):
            object.__setattr__(self, "prompts", tuple(self.prompts))
        if len(set(self.prompts)) != len(self.prompts):
            raise ArgumentError("duplicate prompts in prompt set")

    def __len__(self) -> int:
        return len(self.prompts)


def load_prompt_set(path: str | Path) -> PromptSet:
    """Prompts from a plain-text file, one per line; empty file = no prompts."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise StorageError(f"cannot read prompt file {path}: {e}") from e
    lines = [line.strip() for line in text.splitlines()]
    return PromptSet(prompts=tuple(line for line in lines if line))


class TextEncoder(Protocol):
    """Deterministic map from (prompt, token) to a fixed-dimension vector."""

    mode: str

    @property
    def dim(self) -> int: ...

    def encode(self, prompt: str, token: str) -> np.ndarray: ...


class StoreLookupEncoder:
    """Encoder backed by a store's retrieval-space table.

    The token's stored row stands in for its bare text embedding; a prompt
    contributes a fixed offset vector derived from the prompt string, so
    prompt averaging has a real effect without an external text model.
    """

    mode = "store_lookup"

    def __init__(self, store: EmbeddingStore, prompt_offset_scale: float = 0.1):
        if prompt_offset_scale < 0:
            raise ArgumentError("prompt_offset_scale must be >= 0")
        self._store = store
        self._table = store.table(RETRIEVAL_SPACE)
        self._scale = float(prompt_offset_scale)
        self._offsets: dict[str, np.ndarray] = {}

    @property
    def dim(self) -> int:
        return self._table.dim

    def _offset(self, prompt: str) -> np.ndarray:
        if prompt not in self._offsets:
            vec = rng_for("prompt-offset", prompt).standard_normal(self.dim)
            self._offsets[prompt] = self._scale * vec
        return self._offsets[prompt]

    def encode(self, prompt: str, token: str) -> np.ndarray:
        idx = self._store.vocabulary.index_of(token)
        row = self._table.matrix[idx].astype(np.float64)
        if prompt:
            row = row + self._offset(prompt)
        return row


class ExternalEncoder:
    """Encoder over precomputed (prompt, token) vectors.

    Key convention: the empty prompt "" keys the bare token encoding;
    non-empty prompts key the encoding of "<prompt> <token>".
    """

    mode = "external"

    def __init__(self, vectors: dict[tuple[str, str], np.ndarray]):
        if not vectors:
            raise ArgumentError("external encoder needs at least one vector")
        dims = {np.asarray(v).shape for v in vectors.values()}
        if len(dims) != 1 or len(next(iter(dims))) != 1:
            raise ArgumentError(f"inconsistent external vector shapes: {dims}")
        self._vectors = {k: np.asarray(v, dtype=np.float64) for k, v in vectors.items()}
        self._dim = next(iter(self._vectors.values())).shape[0]

    @property
    def dim(self) -> int:
        return self._dim

    def encode(self, prompt: str, token: str) -> np.ndarray:
        try:
            return self._vectors[(prompt, token)]
        except KeyError:
            raise TokenLookupError(
                f"no precomputed vector for prompt={prompt!r}, token={token!r}"
            ) from None


def embed_token(token: str, prompts: PromptSet, enc: TextEncoder) -> np.ndarray:
    """Mean encoding of the token over its prompt augmentations (float64)."""
    if len(prompts) == 0:
        return np.asarray(enc.encode("", token), dtype=np.float64)
    acc = np.zeros(enc.dim, dtype=np.float64)
    for p in prompts.prompts:
        acc += enc.encode(p, token)
    return acc / len(prompts)


class RetrievalEntry(NamedTuple):
    token: str
    index: int
    score: float


@dataclass(frozen=True)
class RetrievalResult:
    """Top-k tokens, ordered by (score desc, token index asc)."""

    entries: tuple[RetrievalEntry, ...]

    def __post_init__(self):
        for e in self.entries:
            if not -1.0 <= e.score <= 1.0:
                raise ArgumentError(f"cosine score out of range: {e}")
        for prev, cur in zip(self.entries, self.entries[1:]):
            if cur.score > prev.score or (cur.score == prev.score and cur.index <= prev.index):
                raise ArgumentError(f"entries out of order: {prev} before {cur}")

    def tokens(self) -> list[str]:
        return [e.token for e in self.entries]

    def indices(self) -> list[int]:
        return [e.index for e in self.entries]

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class RetrievalIndex:
    """Unit-normalized token embedding matrix aligned with a vocabulary."""

    vocabulary: TokenVocabulary
    vectors: np.ndarray
    prompt_set: PromptSet

    def __post_init__(self):
        v = np.ascontiguousarray(self.vectors, dtype=np.float32)
        if v.ndim != 2 or v.shape[0] != len(self.vocabulary):
            raise ArgumentError(
                f"index matrix shape {v.shape} does not match vocabulary size "
                f"{len(self.vocabulary)}"
            )
        norms = np.linalg.norm(v.astype(np.float64), axis=1)
        off = np.abs(norms - 1.0)
        if off.size and off.max() > 1e-6:
            raise ArgumentError(
                f"index rows must be unit norm; worst offender row "
                f"{int(off.argmax())} has norm {norms[off.argmax()]:.8f}"
            )
        v.flags.writeable = False
        object.__setattr__(self, "vectors", v)
        # float64 copy used for scoring, cached once
        object.__setattr__(self, "_vectors64", v.astype(np.float64))

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def __len__(self) -> int:
        return len(self.vocabulary)


def build_index(vocab: TokenVocabulary, prompts: PromptSet, enc: TextEncoder) -> RetrievalIndex:
    """One normalized row per vocabulary token; deterministic given inputs."""
    if len(vocab) == 0:
        raise ArgumentError("cannot build an index over an empty vocabulary")
    rows = np.empty((len(vocab), enc.dim), dtype=np.float64)
    for i, token in enumerate(vocab.tokens):
        rows[i] = embed_token(token, prompts, enc)
    norms = np.linalg.norm(rows, axis=1)
    degenerate = np.flatnonzero(norms < DEGENERATE_NORM)
    if degenerate.size:
        offenders = [vocab.tokens[int(i)] for i in degenerate[:10]]
        raise DegenerateInputError(
            f"{degenerate.size} token embedding(s) have near-zero norm "
            f"after prompt averaging: {offenders}"
        )
    rows /= norms[:, None]
    return RetrievalIndex(vocabulary=vocab, vectors=rows.astype(np.float32),
                          prompt_set=prompts)


def retrieve_topk(index: RetrievalIndex, obs_embedding: np.ndarray, k: int) -> RetrievalResult:
    """The k tokens with highest cosine similarity to the query.

    Ties at the selection boundary are resolved exactly like a full sort by
    (score desc, token index asc): every index tied with the k-th score is
    gathered before ranking, so the result never depends on partition order.
    """
    n = len(index)
    if not 1 <= k <= n:
        raise ArgumentError(f"k must be in [1, {n}], got {k}")
    q = np.asarray(obs_embedding, dtype=np.float64).ravel()
    if q.shape[0] != index.dim:
        raise ArgumentError(f"query dim {q.shape[0]} != index dim {index.dim}")
    if not np.isfinite(q).all():
        raise ArgumentError("query embedding has non-finite entries")
    qnorm = np.linalg.norm(q)
    if qnorm < DEGENERATE_NORM:
        raise DegenerateInputError(f"query embedding norm {qnorm:.2e} is degenerate")

    scores = np.clip(index._vectors64 @ (q / qnorm), -1.0, 1.0)
    if k < n:
        cut = np.partition(scores, n - k)[n - k]
        candidates = np.flatnonzero(scores >= cut)
    else:
        candidates = np.arange(n)
    order = np.lexsort((candidates, -scores[candidates]))
    chosen = candidates[order[:k]]

    entries = tuple(
        RetrievalEntry(token=index.vocabulary.tokens[int(i)], index=int(i),
                       score=float(scores[int(i)]))
        for i in chosen
    )
    return RetrievalResult(entries=entries)


def tokens_to_lm_inputs(result: RetrievalResult, lm_table: EmbeddingTable) -> list[np.ndarray]:
    """Language-model input rows for the retrieved tokens, in result order."""
    if lm_table.space_tag != "lm_input_space":
        raise ArgumentError(f"expected an lm_input_space table, got {lm_table.space_tag!r}")
    out = []
    for e in result.entries:
        if e.index >= lm_table.rows:
            raise MappingError(
                f"token {e.token!r} (index {e.index}) not covered by the "
                f"{lm_table.rows}-row lm table"
            )
        out.append(lm_table.matrix[e.index])
    return out


def save_index(index: RetrievalIndex, path: str | Path) -> None:
    """Persist the index as a single-table SEMB file with its prompts."""
    store = EmbeddingStore(
        vocabulary=index.vocabulary,
        tables={RETRIEVAL_SPACE: EmbeddingTable(index.vectors, RETRIEVAL_SPACE)},
        metadata=StoreMetadata(
            provenance="retrieval-index",
            extra={"prompts": list(index.prompt_set.prompts)},
        ),
    )
    save_store(store, path)


def load_index(path: str | Path) -> RetrievalIndex:
    store = load_store(path)
    prompts = ()
    if store.metadata.extra and "prompts" in store.metadata.extra:
        prompts = tuple(store.metadata.extra["prompts"])
    return RetrievalIndex(
        vocabulary=store.vocabulary,
        vectors=store.table(RETRIEVAL_SPACE).matrix,
        prompt_set=PromptSet(prompts=prompts),
    )
