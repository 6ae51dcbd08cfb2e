import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from baca.graphs import (
    DatasetFormatError,
    Graph,
    GraphDataset,
    adjacency,
    degree_features,
    load_dataset,
    save_dataset,
)


class TestGraph:
    def test_basic_construction(self):
        g = Graph(3, ((0, 1), (1, 2)))
        assert g.num_nodes == 3
        assert g.num_edges == 2

    def test_edges_canonicalized(self):
        g = Graph(3, ((2, 1), (1, 0)))
        assert g.edges == ((0, 1), (1, 2))

    def test_self_loop_rejected(self):
        with pytest.raises(ValueError, match="self-loop"):
            Graph(2, ((0, 0),))

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError, match="out of range"):
            Graph(2, ((0, 2),))

    def test_duplicate_edge_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            Graph(3, ((0, 1), (1, 0)))

    def test_feature_row_mismatch_rejected(self):
        with pytest.raises(ValueError, match="does not match"):
            Graph(3, (), features=np.zeros((2, 4)))

    def test_degrees(self):
        g = Graph(4, ((0, 1), (0, 2), (0, 3)))
        assert g.degrees().tolist() == [3, 1, 1, 1]


class TestAdjacency:
    def test_triangle(self):
        a = adjacency(Graph(3, ((0, 1), (1, 2), (0, 2))))
        assert a.tolist() == [[0, 1, 1], [1, 0, 1], [1, 1, 0]]

    def test_empty_two_nodes(self):
        assert adjacency(Graph(2, ())).tolist() == [[0, 0], [0, 0]]

    def test_path(self):
        a = adjacency(Graph(3, ((0, 1), (1, 2))))
        assert a[0][2] == 0
        assert a[0][1] == 1 and a[1][2] == 1

    @given(st.integers(0, 20), st.randoms(use_true_random=False))
    @settings(max_examples=30, deadline=None)
    def test_symmetry_zero_diagonal(self, n, rnd):
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
        edges = tuple(p for p in pairs if rnd.random() < 0.3)
        a = adjacency(Graph(n, edges))
        assert np.array_equal(a, a.T)
        assert np.all(np.diag(a) == 0)


class TestDegreeFeatures:
    def test_path_graph(self):
        g = Graph(3, ((0, 1), (1, 2)))
        feats = degree_features(g, 4)
        assert feats[0].tolist() == [0, 1, 0, 0]
        assert feats[1].tolist() == [0, 0, 1, 0]
        assert feats[2].tolist() == [0, 1, 0, 0]

    def test_isolated_node(self):
        feats = degree_features(Graph(1, ()), 5)
        assert feats[0].tolist() == [1, 0, 0, 0, 0]

    def test_clamping(self):
        g = Graph(10, tuple((0, i) for i in range(1, 10)))
        feats = degree_features(g, 4)
        assert feats[0].tolist() == [0, 0, 0, 1]

    def test_rows_sum_to_one(self, rng, make_random_graph):
        for _ in range(20):
            g = make_random_graph(rng, int(rng.integers(1, 30)))
            feats = degree_features(g, int(rng.integers(1, 8)))
            assert np.all(feats.sum(axis=1) == 1.0)


class TestDatasetIO:
    def test_load_single_line(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text('{"num_nodes":3,"edges":[[0,1],[1,2]]}\n')
        ds = load_dataset(path)
        assert len(ds) == 1
        assert ds.graphs[0].num_nodes == 3
        assert ds.graphs[0].num_edges == 2

    def test_self_loop_line_rejected(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text('{"num_nodes":2,"edges":[[0,0]]}\n')
        with pytest.raises(DatasetFormatError, match="line 1"):
            load_dataset(path)

    def test_malformed_json_reports_line(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text('{"num_nodes":2,"edges":[]}\n{oops\n')
        with pytest.raises(DatasetFormatError, match="line 2"):
            load_dataset(path)

    def test_order_preserved(self, tmp_path):
        path = tmp_path / "d.jsonl"
        lines = [json.dumps({"num_nodes": k, "edges": []}) for k in range(1, 11)]
        path.write_text("\n".join(lines) + "\n")
        ds = load_dataset(path)
        assert [g.num_nodes for g in ds.graphs] == list(range(1, 11))

    def test_partial_optional_key_rejected(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text(
            '{"num_nodes":2,"edges":[],"label":0}\n{"num_nodes":2,"edges":[]}\n'
        )
        with pytest.raises(DatasetFormatError, match="label"):
            load_dataset(path)

    def test_roundtrip_byte_identical(self, tmp_path, rng, make_random_graph):
        graphs = [make_random_graph(rng, int(rng.integers(2, 15))) for _ in range(8)]
        ds = GraphDataset(
            graphs=tuple(graphs),
            labels=tuple(int(rng.integers(0, 2)) for _ in graphs),
            precomputed_scores=tuple(float(rng.normal()) for _ in graphs),
        )
        p1 = tmp_path / "a.jsonl"
        p2 = tmp_path / "b.jsonl"
        save_dataset(ds, p1)
        save_dataset(load_dataset(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_features_roundtrip(self, tmp_path):
        g = Graph(2, ((0, 1),), features=np.array([[0.5, 1.5], [2.5, -3.5]]))
        path = tmp_path / "d.jsonl"
        save_dataset(GraphDataset(graphs=(g,)), path)
        loaded = load_dataset(path)
        assert np.array_equal(loaded.graphs[0].features, g.features)

    def test_label_length_mismatch_rejected(self):
        with pytest.raises(ValueError, match="labels length"):
            GraphDataset(graphs=(Graph(1, ()),), labels=(0, 1))
