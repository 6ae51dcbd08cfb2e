import json

import numpy as np
import pytest

from baca.encoder import (
    EncoderLayer,
    EncoderWeights,
    embed,
    embed_many,
    load_encoder,
    make_random_encoder,
    pretrain_score,
    save_encoder,
)
from baca.graphs import Graph, GraphDataset, degree_features


def identity_encoder(d, layers=1):
    """MLPs are identity maps with zero bias; eps = 0."""
    layer = EncoderLayer(eps=0.0, w1=np.eye(d), b1=np.zeros(d), w2=np.eye(d), b2=np.zeros(d))
    return EncoderWeights((layer,) * layers)


class TestWeightsIO:
    def test_roundtrip(self, tmp_path, rng):
        w = make_random_encoder(d_in=4, d_hidden=6, num_layers=5, seed=1)
        path = tmp_path / "enc.json"
        save_encoder(w, path)
        loaded = load_encoder(path)
        assert loaded.num_layers == 5
        for a, b in zip(w.layers, loaded.layers):
            assert np.array_equal(a.w1, b.w1)
            assert np.array_equal(a.b2, b.b2)

    def test_single_layer_valid(self, tmp_path):
        w = make_random_encoder(d_in=3, d_hidden=3, num_layers=1, seed=0)
        path = tmp_path / "enc.json"
        save_encoder(w, path)
        assert load_encoder(path).num_layers == 1

    def test_dimension_mismatch_reports_layer(self):
        good = make_random_encoder(d_in=4, d_hidden=4, num_layers=3, seed=0)
        layers = list(good.layers)
        bad = EncoderLayer(eps=0.0, w1=np.zeros((5, 4)), b1=np.zeros(4), w2=np.eye(4), b2=np.zeros(4))
        layers[2] = bad
        with pytest.raises(ValueError, match="layer 3"):
            EncoderWeights(tuple(layers))

    def test_schema_error(self, tmp_path):
        path = tmp_path / "enc.json"
        path.write_text(json.dumps({"layers": [{"eps": 0.0}]}))
        with pytest.raises(ValueError, match="layer 1"):
            load_encoder(path)

    def test_missing_layers_key(self, tmp_path):
        path = tmp_path / "enc.json"
        path.write_text("{}")
        with pytest.raises(ValueError, match="layers"):
            load_encoder(path)


class TestEmbed:
    def test_single_node_identity_forward(self):
        # 1 node, no edges: aggregation is the feature itself; embedding is
        # relu of the (identity) MLP output, i.e. the one-hot feature.
        w = identity_encoder(3)
        g = Graph(1, (), features=np.array([[0.0, 1.0, 0.0]]))
        assert embed(w, g).tolist() == [0.0, 1.0, 0.0]

    def test_no_edges_no_messages(self, rng):
        w = make_random_encoder(d_in=4, d_hidden=5, num_layers=2, seed=2)
        feats = np.abs(rng.normal(size=(3, 4)))
        g = Graph(3, (), features=feats)
        # with no edges the pooled embedding is the sum of per-node forwards
        parts = [embed(w, Graph(1, (), features=feats[i : i + 1])) for i in range(3)]
        assert np.allclose(embed(w, g), np.sum(parts, axis=0), atol=1e-9)

    def test_permutation_invariance(self, rng, make_random_graph):
        w = make_random_encoder(d_in=8, d_hidden=8, num_layers=3, seed=3)
        for _ in range(10):
            g = make_random_graph(rng, 12, p=0.4)
            perm = rng.permutation(12)
            inv = np.argsort(perm)
            edges = tuple((int(perm[u]), int(perm[v])) for u, v in g.edges)
            relabeled = Graph(12, edges)
            assert np.allclose(embed(w, g), embed(w, relabeled), atol=1e-9)

    def test_deterministic(self, rng, make_random_graph):
        w = make_random_encoder(d_in=6, d_hidden=4, num_layers=2, seed=4)
        g = make_random_graph(rng, 10)
        a = embed(w, g)
        b = embed(w, g)
        assert np.array_equal(a, b)

    def test_embedding_dim(self):
        w = make_random_encoder(d_in=4, d_hidden=7, num_layers=5, seed=0)
        assert w.embedding_dim == 35
        g = Graph(2, ((0, 1),))
        with pytest.raises(ValueError, match="dimension"):
            embed(w, Graph(2, ((0, 1),), features=np.zeros((2, 3))))
        assert embed(w, g).shape == (35,)

    def test_isolated_zero_feature_node_contributes_own_path(self):
        # adding an isolated all-zero-feature node shifts the pooled readout
        # only by that node's own MLP path (the bias chain)
        d = 3
        b1 = np.array([1.0, 0.0, 0.0])
        layer = EncoderLayer(eps=0.0, w1=np.eye(d), b1=b1, w2=np.eye(d), b2=np.zeros(d))
        w = EncoderWeights((layer,))
        feats2 = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        g2 = Graph(2, ((0, 1),), features=feats2)
        feats3 = np.vstack([feats2, np.zeros(3)])
        g3 = Graph(3, ((0, 1),), features=feats3)
        own_path = np.maximum(np.zeros(d) @ np.eye(d) + b1, 0.0)
        assert np.allclose(embed(w, g3) - embed(w, g2), own_path, atol=1e-12)


class TestPretrainScore:
    def test_precomputed_passthrough(self):
        graphs = (Graph(2, ()), Graph(3, ()))
        ds = GraphDataset(graphs=graphs, precomputed_scores=(0.3, 0.9))
        w = identity_encoder(2)
        assert pretrain_score(w, list(graphs), ds) == [0.3, 0.9]

    def test_passthrough_subset_batch(self):
        graphs = (Graph(2, ()), Graph(3, ()), Graph(4, ()))
        ds = GraphDataset(graphs=graphs, precomputed_scores=(0.1, 0.2, 0.3))
        w = identity_encoder(2)
        assert pretrain_score(w, [graphs[2], graphs[0]], ds) == [0.3, 0.1]

    def test_two_identical_graphs_closed_form(self, monkeypatch):
        import baca.encoder as encoder_mod

        monkeypatch.setattr(encoder_mod, "EDGE_DROP_RATE", 0.0)
        w = identity_encoder(4)
        g1 = Graph(3, ((0, 1), (1, 2)))
        g2 = Graph(4, ((0, 1), (0, 2), (0, 3)))
        scores = pretrain_score(w, [g1, g2], None, seed=0)
        # with no edge dropping both views coincide; the loss has the closed
        # form -log(e^{1/t} / (e^{1/t} + e^{c/t})) with c the cross cosine
        z1 = embed(w, g1)
        z2 = embed(w, g2)
        c = float(z1 @ z2 / (np.linalg.norm(z1) * np.linalg.norm(z2)))
        t = encoder_mod.SCORE_TEMPERATURE
        expected = -np.log(np.exp(1 / t) / (np.exp(1 / t) + np.exp(c / t)))
        assert scores[0] == pytest.approx(expected, abs=1e-9)

    def test_fallback_batch_of_one_rejected(self):
        w = identity_encoder(2)
        with pytest.raises(ValueError, match="at least 2"):
            pretrain_score(w, [Graph(2, ())], None)

    def test_fallback_scores_finite(self, rng, make_random_graph):
        w = make_random_encoder(d_in=6, d_hidden=4, num_layers=2, seed=6)
        batch = [make_random_graph(rng, int(rng.integers(2, 12))) for _ in range(8)]
        scores = pretrain_score(w, batch, None, seed=1)
        assert all(np.isfinite(s) for s in scores)

    def test_fallback_deterministic_under_seed(self, rng, make_random_graph):
        w = make_random_encoder(d_in=6, d_hidden=4, num_layers=2, seed=6)
        batch = [make_random_graph(rng, 10) for _ in range(4)]
        assert pretrain_score(w, batch, None, seed=9) == pretrain_score(w, batch, None, seed=9)
