"""Embedding containers and the embedding file format."""
import numpy as np
import pytest

from hetembed.embio import EmbeddingFormatError, load_embeddings, save_embeddings
from hetembed.tables import EmbeddingTable, RelationParams

from helpers import build_graph, two_type_graph


def test_table_shapes_and_views():
    g = two_type_graph()
    rng = np.random.default_rng(0)
    t = EmbeddingTable.init_uniform(g, 6, rng)
    assert t.array.shape == (8, 6)
    assert t.width == t.dim == 6
    assert np.all(np.abs(t.array) <= 0.5 / 6)
    np.testing.assert_array_equal(t.for_type(1), t.array[4:8])
    np.testing.assert_array_equal(t.row(3), t.array[3])


def test_complex_table_width_and_view():
    g = two_type_graph()
    t = EmbeddingTable.init_uniform(g, 3, np.random.default_rng(1),
                                    complex_pairs=True)
    assert t.width == 6 and t.dim == 3
    z = t.as_complex()
    assert z.shape == (8, 3)
    np.testing.assert_allclose(z[0].real, t.array[0, 0::2])
    np.testing.assert_allclose(z[0].imag, t.array[0, 1::2])


def test_plain_table_refuses_complex_view():
    g = two_type_graph()
    t = EmbeddingTable.init_uniform(g, 4, np.random.default_rng(0))
    with pytest.raises(ValueError, match="complex"):
        t.as_complex()


def test_table_row_count_checked():
    g = two_type_graph()
    with pytest.raises(ValueError, match="rows"):
        EmbeddingTable(g, np.zeros((5, 4)))


def test_relation_params_lookup():
    r = RelationParams([(0, 1), (1, 0)], np.arange(8.0).reshape(2, 4))
    assert (0, 1) in r and (2, 2) not in r
    assert r.index_of((1, 0)) == 1
    np.testing.assert_array_equal(r.get((1, 0)), [4, 5, 6, 7])
    assert len(r) == 2
    with pytest.raises(ValueError, match="key count"):
        RelationParams(["a"], np.zeros((2, 3)))


def test_save_load_round_trip(tmp_path):
    g = build_graph([2, 2], [(0, 1)], [False], [[(0, 2), (1, 3)]],
                    type_ids=[5, 8], original_ids=[30, 31, 40, 41])
    arr = np.round(np.random.default_rng(2).normal(size=(4, 3)), 6)
    t = EmbeddingTable(g, arr)
    path = save_embeddings(t, tmp_path / "emb.tsv")
    lines = open(path).read().splitlines()
    assert lines[0] == "4 3"
    assert lines[1].startswith("5:30 ")
    assert lines[3].startswith("8:40 ")
    back = load_embeddings(path, g)
    np.testing.assert_allclose(back.array, arr, atol=1e-6)
    assert not back.complex_pairs


def test_save_load_complex_flag(tmp_path):
    g = build_graph([2], [(0, 0)], [False], [[(0, 1)]])
    t = EmbeddingTable(g, np.zeros((2, 4)), complex_pairs=True)
    path = save_embeddings(t, tmp_path / "emb.tsv")
    assert open(path).readline().strip() == "2 4 complex"
    assert load_embeddings(path, g).complex_pairs


def test_load_rejects_missing_and_duplicate_rows(tmp_path):
    g = build_graph([2], [(0, 0)], [False], [[(0, 1)]])
    p = tmp_path / "e.tsv"
    p.write_text("2 2\n0:0 1.0 2.0\n")
    with pytest.raises(EmbeddingFormatError, match="no row for node"):
        load_embeddings(p, g)
    p.write_text("2 2\n0:0 1.0 2.0\n0:0 3.0 4.0\n")
    with pytest.raises(EmbeddingFormatError, match="duplicate"):
        load_embeddings(p, g)
    p.write_text("2 2\n0:0 1.0 2.0\n0:9 3.0 4.0\n")
    with pytest.raises(EmbeddingFormatError, match="not in graph"):
        load_embeddings(p, g)


def test_load_rejects_bad_header_and_width(tmp_path):
    g = build_graph([2], [(0, 0)], [False], [[(0, 1)]])
    p = tmp_path / "e.tsv"
    p.write_text("nope\n")
    with pytest.raises(EmbeddingFormatError, match="bad header"):
        load_embeddings(p, g)
    p.write_text("3 2\n")
    with pytest.raises(EmbeddingFormatError, match="counts 3 nodes"):
        load_embeddings(p, g)
    p.write_text("2 3\n0:0 1.0 2.0\n0:1 1.0 2.0\n")
    with pytest.raises(EmbeddingFormatError, match="bad row"):
        load_embeddings(p, g)
