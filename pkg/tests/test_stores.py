import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shelm.errors import ArgumentError, CorruptionError, FormatError
from shelm import stores
from shelm.stores import (
    LM_INPUT_SPACE,
    RETRIEVAL_SPACE,
    EmbeddingStore,
    EmbeddingTable,
    TokenVocabulary,
    generate_synthetic_store,
    intersect_vocabularies,
    load_store,
    normalize_token,
    save_store,
)


def small_store(metadata=None):
    vocab = TokenVocabulary(tokens=("alpha", "beta", "gamma"))
    matrix = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]], dtype=np.float32)
    kwargs = {} if metadata is None else {"metadata": metadata}
    return EmbeddingStore(
        vocabulary=vocab,
        tables={RETRIEVAL_SPACE: EmbeddingTable(matrix, RETRIEVAL_SPACE)},
        **kwargs,
    )


class TestSembRoundTrip:
    def test_three_token_round_trip(self, tmp_path):
        store = small_store()
        path = tmp_path / "s.semb"
        save_store(store, path)
        loaded = load_store(path)
        assert loaded.vocabulary.tokens == store.vocabulary.tokens
        np.testing.assert_array_equal(
            loaded.tables[RETRIEVAL_SPACE].matrix, store.tables[RETRIEVAL_SPACE].matrix
        )

    def test_zero_token_store_rejected_before_write(self, tmp_path):
        vocab = TokenVocabulary(tokens=())
        with pytest.raises(ArgumentError):
            EmbeddingStore(
                vocabulary=vocab,
                tables={RETRIEVAL_SPACE: EmbeddingTable(np.zeros((0, 2), np.float32), RETRIEVAL_SPACE)},
            )
        assert list(tmp_path.iterdir()) == []

    def test_file_size_matches_format_definition(self, tmp_path):
        vocab_size, dim = 10_000, 512
        tokens = tuple(f"tok{i:05d}" for i in range(vocab_size))
        rng = np.random.default_rng(0)
        matrix = rng.standard_normal((vocab_size, dim)).astype(np.float32)
        store = EmbeddingStore(
            vocabulary=TokenVocabulary(tokens=tokens),
            tables={RETRIEVAL_SPACE: EmbeddingTable(matrix, RETRIEVAL_SPACE)},
        )
        path = tmp_path / "big.semb"
        save_store(store, path)
        header = 4 + 2 + 1 + 4
        token_table = sum(2 + len(t.encode("utf-8")) for t in tokens)
        per_table = 1 + 4 + vocab_size * dim * 4
        checksum = 8
        assert path.stat().st_size == header + token_table + per_table + checksum

    def test_metadata_round_trip(self, tmp_path):
        store = generate_synthetic_store(
            seed=7, vocab_size=6, dim=4, cluster_spec=[("red", 1, 0.1), ("blue", 2, 0.1)]
        )
        path = tmp_path / "meta.semb"
        save_store(store, path)
        loaded = load_store(path)
        assert loaded.metadata == store.metadata
        assert loaded.vocabulary == store.vocabulary

    def test_unwritable_path_is_storage_error(self, tmp_path):
        with pytest.raises(stores.StorageError):
            save_store(small_store(), tmp_path / "nope" / "s.semb")


class TestSembValidation:
    def test_bad_version_names_supported(self, tmp_path):
        path = tmp_path / "v99.semb"
        save_store(small_store(), path)
        data = bytearray(path.read_bytes())
        data[4:6] = struct.pack("<H", 99)
        path.write_bytes(bytes(data))
        with pytest.raises(FormatError, match=r"99.*supported.*1"):
            load_store(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "not.semb"
        path.write_bytes(b"XXXX" + b"\x00" * 20)
        with pytest.raises(FormatError, match="magic"):
            load_store(path)

    def test_nan_entry_names_row(self, tmp_path):
        store = small_store()
        path = tmp_path / "nan.semb"
        save_store(store, path)
        data = bytearray(path.read_bytes())
        header = 4 + 2 + 1 + 4
        token_table = sum(2 + len(t.encode("utf-8")) for t in store.vocabulary.tokens)
        # overwrite the first float of row 1 with a NaN
        off = header + token_table + 5 + 1 * 2 * 4
        data[off:off + 4] = struct.pack("<f", float("nan"))
        path.write_bytes(bytes(data))
        with pytest.raises(CorruptionError, match="row 1"):
            load_store(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "trunc.semb"
        save_store(small_store(), path)
        data = path.read_bytes()
        path.write_bytes(data[:-12])
        with pytest.raises(CorruptionError, match="truncated"):
            load_store(path)

    def test_checksum_mismatch(self, tmp_path):
        path = tmp_path / "sum.semb"
        save_store(small_store(), path)
        data = bytearray(path.read_bytes())
        data[-8:] = struct.pack("<Q", 12345)
        path.write_bytes(bytes(data))
        with pytest.raises(CorruptionError, match="checksum"):
            load_store(path)


class TestIntersect:
    def test_basic_overlap(self):
        a = TokenVocabulary(tokens=("a", "b", "c"))
        b = TokenVocabulary(tokens=("b", "c", "d"))
        assert intersect_vocabularies(a, b).tokens == ("b", "c")

    def test_identity(self):
        v = TokenVocabulary(tokens=("x", "y", "z"))
        assert intersect_vocabularies(v, v) == v

    def test_lowercased_normalization(self):
        a = TokenVocabulary(tokens=("Dog", "cat"), normalization_tag="lowercased")
        b = TokenVocabulary(tokens=("dog", "bird"), normalization_tag="lowercased")
        assert intersect_vocabularies(a, b).tokens == ("dog",)

    def test_space_marker_stripping(self):
        a = TokenVocabulary(tokens=("Ġdog", "cat"))
        b = TokenVocabulary(tokens=("dog", "▁cat"))
        assert intersect_vocabularies(a, b).tokens == ("dog", "cat")

    def test_empty_result_is_a_value(self):
        a = TokenVocabulary(tokens=("a",))
        b = TokenVocabulary(tokens=("b",))
        out = intersect_vocabularies(a, b)
        assert out.tokens == ()

    def test_commutative_up_to_order(self):
        a = TokenVocabulary(tokens=("a", "b", "c", "e"))
        b = TokenVocabulary(tokens=("e", "c", "d", "a"))
        ab = intersect_vocabularies(a, b)
        ba = intersect_vocabularies(b, a)
        assert set(ab.tokens) == set(ba.tokens)

    def test_idempotent_on_its_output(self):
        a = TokenVocabulary(tokens=("Ġdog", "Cat"), normalization_tag="lowercased")
        b = TokenVocabulary(tokens=("dog", "cat"))
        once = intersect_vocabularies(a, b)
        again = intersect_vocabularies(once, b)
        assert once == again


class TestSyntheticStore:
    CLUSTERS = [("red", 11, 0.05), ("blue", 22, 0.05)]

    def test_same_seed_bit_identical_on_disk(self, tmp_path):
        p1, p2 = tmp_path / "a.semb", tmp_path / "b.semb"
        save_store(generate_synthetic_store(3, 16, 64, self.CLUSTERS), p1)
        save_store(generate_synthetic_store(3, 16, 64, self.CLUSTERS), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_zero_spread_collapses_cluster(self):
        store = generate_synthetic_store(5, 8, 16, [("one", 1, 0.0), ("two", 2, 0.0)])
        m = store.tables[RETRIEVAL_SPACE].matrix
        np.testing.assert_array_equal(m[0], m[1])
        np.testing.assert_array_equal(m[4], m[7])
        assert not np.array_equal(m[0], m[4])

    def test_within_cluster_cosine_beats_cross(self):
        store = generate_synthetic_store(9, 64, 64, self.CLUSTERS)
        m = store.tables[RETRIEVAL_SPACE].matrix.astype(np.float64)
        unit = m / np.linalg.norm(m, axis=1, keepdims=True)
        sims = unit @ unit.T
        half = 32
        labels = np.array([0] * half + [1] * half)
        same = labels[:, None] == labels[None, :]
        off_diag = ~np.eye(64, dtype=bool)
        within = sims[same & off_diag].mean()
        cross = sims[~same].mean()
        assert within > cross + 0.5

    def test_cluster_metadata_ranges(self):
        store = generate_synthetic_store(1, 10, 8, [("a", 1, 0.1), ("b", 2, 0.1), ("c", 3, 0.1)])
        spans = [(c.start, c.stop) for c in store.metadata.clusters]
        assert spans == [(0, 4), (4, 7), (7, 10)]
        assert store.vocabulary.tokens[0].startswith("a_")
        assert store.vocabulary.tokens[9].startswith("c_")
        assert stores.cluster_of_token(store, 5).label == "b"

    def test_lm_dim_override(self):
        store = generate_synthetic_store(1, 8, 64, self.CLUSTERS, lm_dim=32)
        assert store.tables[RETRIEVAL_SPACE].dim == 64
        assert store.tables[LM_INPUT_SPACE].dim == 32

    def test_invalid_args(self):
        with pytest.raises(ArgumentError):
            generate_synthetic_store(1, 1, 8, self.CLUSTERS)
        with pytest.raises(ArgumentError):
            generate_synthetic_store(1, 8, 0, self.CLUSTERS)
        with pytest.raises(ArgumentError):
            generate_synthetic_store(1, 8, 8, [("a", 1, -0.5)])


def _token_lists():
    token = st.text(
        alphabet=st.characters(min_codepoint=33, max_codepoint=0x2FFF), min_size=1, max_size=8
    )
    return st.lists(token, min_size=1, max_size=12).map(
        lambda ts: tuple(dict.fromkeys(ts))
    ).filter(
        lambda ts: len({normalize_token(t) for t in ts}) == len(ts)
    )


@settings(max_examples=40, deadline=None)
@given(tokens=_token_lists(), seed=st.integers(0, 2**31), dim=st.integers(1, 9))
def test_round_trip_is_bit_exact(tmp_path_factory, tokens, seed, dim):
    rng = np.random.default_rng(seed)
    n = len(tokens)
    store = EmbeddingStore(
        vocabulary=TokenVocabulary(tokens=tokens),
        tables={
            RETRIEVAL_SPACE: EmbeddingTable(
                rng.standard_normal((n, dim)).astype(np.float32), RETRIEVAL_SPACE
            ),
            LM_INPUT_SPACE: EmbeddingTable(
                rng.standard_normal((n, dim + 1)).astype(np.float32), LM_INPUT_SPACE
            ),
        },
    )
    path = tmp_path_factory.mktemp("rt") / "s.semb"
    save_store(store, path)
    loaded = load_store(path)
    assert loaded.vocabulary == store.vocabulary
    for tag in (RETRIEVAL_SPACE, LM_INPUT_SPACE):
        assert loaded.tables[tag].matrix.tobytes() == store.tables[tag].matrix.tobytes()
