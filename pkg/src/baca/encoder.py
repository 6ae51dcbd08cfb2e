"""Frozen GIN encoder: weight loading, graph embedding, and pretrain scores."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .graphs import Graph, GraphDataset, adjacency, degree_features

__all__ = [
    "EncoderLayer",
    "EncoderWeights",
    "load_encoder",
    "save_encoder",
    "make_random_encoder",
    "embed",
    "embed_many",
    "pretrain_score",
    "EDGE_DROP_RATE",
    "SCORE_TEMPERATURE",
]

# InfoNCE proxy constants for datasets without externally computed scores.
EDGE_DROP_RATE = 0.1
SCORE_TEMPERATURE = 0.2


@dataclass(frozen=True)
class EncoderLayer:
    """One GIN layer: two dense maps with a ReLU between, plus the self-weight eps."""

    eps: float
    w1: np.ndarray  # (d_in, d_mid)
    b1: np.ndarray  # (d_mid,)
    w2: np.ndarray  # (d_mid, d_out)
    b2: np.ndarray  # (d_out,)

    @property
    def d_in(self) -> int:
        return self.w1.shape[0]

    @property
    def d_out(self) -> int:
        return self.w2.shape[1]


@dataclass(frozen=True)
class EncoderWeights:
    layers: tuple[EncoderLayer, ...]

    def __post_init__(self):
        if not self.layers:
            raise ValueError("encoder needs at least one layer")
        for i, layer in enumerate(self.layers):
            if layer.w1.shape[1] != layer.b1.shape[0] or layer.w2.shape[1] != layer.b2.shape[0]:
                raise ValueError(f"bias shape mismatch in layer {i + 1}")
            if layer.w1.shape[1] != layer.w2.shape[0]:
                raise ValueError(f"dense maps do not chain inside layer {i + 1}")
        for i in range(1, len(self.layers)):
            if self.layers[i].d_in != self.layers[i - 1].d_out:
                raise ValueError(
                    f"dimension mismatch at layer {i + 1}: expects input "
                    f"{self.layers[i].d_in}, previous layer emits {self.layers[i - 1].d_out}"
                )

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def d_in(self) -> int:
        return self.layers[0].d_in

    @property
    def embedding_dim(self) -> int:
        return sum(layer.d_out for layer in self.layers)


def _layer_from_obj(obj: dict, index: int) -> EncoderLayer:
    try:
        return EncoderLayer(
            eps=float(obj["eps"]),
            w1=np.asarray(obj["w1"], dtype=np.float64),
            b1=np.asarray(obj["b1"], dtype=np.float64),
            w2=np.asarray(obj["w2"], dtype=np.float64),
            b2=np.asarray(obj["b2"], dtype=np.float64),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"layer {index}: {exc}") from exc


def load_encoder(path) -> EncoderWeights:
    """Load weights from the JSON schema {"layers": [{eps, w1, b1, w2, b2}, ...]}."""
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    if "layers" not in obj or not isinstance(obj["layers"], list) or not obj["layers"]:
        raise ValueError("weights file must contain a non-empty 'layers' list")
    layers = tuple(_layer_from_obj(lo, i + 1) for i, lo in enumerate(obj["layers"]))
    return EncoderWeights(layers)


def save_encoder(w: EncoderWeights, path) -> None:
    obj = {
        "layers": [
            {
                "eps": layer.eps,
                "w1": layer.w1.tolist(),
                "b1": layer.b1.tolist(),
                "w2": layer.w2.tolist(),
                "b2": layer.b2.tolist(),
            }
            for layer in w.layers
        ]
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh)


def make_random_encoder(
    d_in: int,
    d_hidden: int,
    num_layers: int,
    seed: int,
    scale: float = 1.0,
) -> EncoderWeights:
    """Random dense weights, He-style scaling; the stand-in for an externally
    trained model when running the pipeline on synthetic data."""
    rng = np.random.default_rng(seed)
    layers = []
    cur = d_in
    for _ in range(num_layers):
        w1 = rng.normal(0.0, scale / np.sqrt(cur), size=(cur, d_hidden))
        b1 = np.zeros(d_hidden)
        w2 = rng.normal(0.0, scale / np.sqrt(d_hidden), size=(d_hidden, d_hidden))
        b2 = np.zeros(d_hidden)
        layers.append(EncoderLayer(eps=0.0, w1=w1, b1=b1, w2=w2, b2=b2))
        cur = d_hidden
    return EncoderWeights(tuple(layers))


def _node_features(w: EncoderWeights, g: Graph) -> np.ndarray:
    if g.features is not None:
        if g.features.shape[1] != w.d_in:
            raise ValueError(
                f"feature dimension {g.features.shape[1]} does not match encoder input {w.d_in}"
            )
        return g.features
    return degree_features(g, w.d_in)


def embed(w: EncoderWeights, g: Graph) -> np.ndarray:
    """Graph embedding: per layer h = relu(mlp((1 + eps) h + A h)), readout is
    the concatenation of sum-pooled node states across layers."""
    h = _node_features(w, g)
    a = adjacency(g)
    pools = []
    for layer in w.layers:
        agg = (1.0 + layer.eps) * h + a @ h
        mid = np.maximum(agg @ layer.w1 + layer.b1, 0.0)
        h = np.maximum(mid @ layer.w2 + layer.b2, 0.0)
        pools.append(h.sum(axis=0))
    out = np.concatenate(pools)
    if not np.all(np.isfinite(out)):
        raise ValueError("non-finite embedding")
    return out


def embed_many(w: EncoderWeights, graphs) -> np.ndarray:
    return np.stack([embed(w, g) for g in graphs])


def _drop_edges(g: Graph, rate: float, rng: np.random.Generator) -> Graph:
    if rate <= 0.0 or not g.edges:
        return g
    keep = rng.random(len(g.edges)) >= rate
    edges = tuple(e for e, k in zip(g.edges, keep) if k)
    return Graph(num_nodes=g.num_nodes, edges=edges, features=g.features)


def _cosine_matrix(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    xn = np.linalg.norm(x, axis=1, keepdims=True)
    yn = np.linalg.norm(y, axis=1, keepdims=True)
    xs = np.where(xn > 0, x / np.where(xn == 0, 1, xn), 0.0)
    ys = np.where(yn > 0, y / np.where(yn == 0, 1, yn), 0.0)
    return xs @ ys.T


def pretrain_score(
    w: EncoderWeights,
    batch,
    ds: GraphDataset | None = None,
    seed: int = 0,
) -> list[float]:
    """Per-graph scores from the frozen encoder; higher means more OOD-like.

    When the dataset carries externally computed scores they are returned
    verbatim for the batch (the authoritative path; batch graphs are matched
    to dataset rows by identity). Otherwise a contrastive proxy is computed
    over the batch: two views per graph via seeded edge dropping, and the
    per-sample loss -log softmax of the matched-view cosine against all
    cross-view cosines at temperature SCORE_TEMPERATURE.
    """
    batch = list(batch)
    if not batch:
        raise ValueError("empty batch")
    if ds is not None and ds.precomputed_scores is not None:
        by_id = {id(g): s for g, s in zip(ds.graphs, ds.precomputed_scores)}
        try:
            return [by_id[id(g)] for g in batch]
        except KeyError:
            raise ValueError("batch graph not found in dataset with precomputed scores")
    if len(batch) < 2:
        raise ValueError("contrastive proxy needs a batch of at least 2 graphs")
    rng = np.random.default_rng(seed)
    v1 = np.stack([embed(w, _drop_edges(g, EDGE_DROP_RATE, rng)) for g in batch])
    v2 = np.stack([embed(w, _drop_edges(g, EDGE_DROP_RATE, rng)) for g in batch])
    logits = _cosine_matrix(v1, v2) / SCORE_TEMPERATURE
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_denom = np.log(np.exp(shifted).sum(axis=1)) + logits.max(axis=1)
    losses = log_denom - np.diag(logits)
    return [float(x) for x in losses]
