"""Graph containers and line-delimited JSON dataset I/O."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Graph",
    "GraphDataset",
    "DatasetFormatError",
    "load_dataset",
    "save_dataset",
    "degree_features",
    "adjacency",
]


class DatasetFormatError(ValueError):
    """Raised for malformed dataset files; message carries the line number."""


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph. Edges are stored canonically (u < v, sorted)."""

    num_nodes: int
    edges: tuple[tuple[int, int], ...]
    features: np.ndarray | None = None

    def __post_init__(self):
        if self.num_nodes < 0:
            raise ValueError(f"num_nodes must be >= 0, got {self.num_nodes}")
        canon = []
        for e in self.edges:
            u, v = int(e[0]), int(e[1])
            if u == v:
                raise ValueError(f"self-loop at node {u}")
            if not (0 <= u < self.num_nodes and 0 <= v < self.num_nodes):
                raise ValueError(f"edge ({u},{v}) out of range for {self.num_nodes} nodes")
            canon.append((min(u, v), max(u, v)))
        canon.sort()
        for a, b in zip(canon, canon[1:]):
            if a == b:
                raise ValueError(f"duplicate edge {a}")
        object.__setattr__(self, "edges", tuple(canon))
        if self.features is not None:
            feats = np.asarray(self.features, dtype=np.float64)
            if feats.ndim != 2 or feats.shape[0] != self.num_nodes:
                raise ValueError(
                    f"features shape {feats.shape} does not match {self.num_nodes} nodes"
                )
            feats.setflags(write=False)
            object.__setattr__(self, "features", feats)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.num_nodes, dtype=np.int64)
        for u, v in self.edges:
            deg[u] += 1
            deg[v] += 1
        return deg


@dataclass(frozen=True)
class GraphDataset:
    """Ordered graph collection with optional evaluation labels and external scores."""

    graphs: tuple[Graph, ...]
    labels: tuple[int, ...] | None = None
    precomputed_scores: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "graphs", tuple(self.graphs))
        if self.labels is not None:
            labels = tuple(int(x) for x in self.labels)
            if len(labels) != len(self.graphs):
                raise ValueError("labels length does not match number of graphs")
            if any(x not in (0, 1) for x in labels):
                raise ValueError("labels must be 0 (ID) or 1 (OOD)")
            object.__setattr__(self, "labels", labels)
        if self.precomputed_scores is not None:
            scores = tuple(float(x) for x in self.precomputed_scores)
            if len(scores) != len(self.graphs):
                raise ValueError("precomputed_scores length does not match number of graphs")
            object.__setattr__(self, "precomputed_scores", scores)

    def __len__(self) -> int:
        return len(self.graphs)


def _parse_line(obj: dict, lineno: int) -> tuple[Graph, int | None, float | None]:
    try:
        num_nodes = int(obj["num_nodes"])
        edges = tuple((int(u), int(v)) for u, v in obj["edges"])
        features = obj.get("features")
        g = Graph(num_nodes, edges, None if features is None else np.asarray(features))
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetFormatError(f"line {lineno}: {exc}") from exc
    label = obj.get("label")
    s_pre = obj.get("s_pre")
    return g, (None if label is None else int(label)), (None if s_pre is None else float(s_pre))


def load_dataset(path) -> GraphDataset:
    """Load a line-delimited JSON dataset, preserving line order.

    Optional keys (features, label, s_pre) must be present on every line or
    on none of them.
    """
    graphs, labels, scores = [], [], []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetFormatError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
            g, label, s_pre = _parse_line(obj, lineno)
            graphs.append(g)
            labels.append(label)
            scores.append(s_pre)
    if not graphs:
        raise DatasetFormatError("empty dataset file")
    for name, column in (("label", labels), ("s_pre", scores)):
        present = [x is not None for x in column]
        if any(present) and not all(present):
            lineno = present.index(False) + 1
            raise DatasetFormatError(f"line {lineno}: key '{name}' missing but present on other lines")
    has_labels = labels[0] is not None
    has_scores = scores[0] is not None
    return GraphDataset(
        graphs=tuple(graphs),
        labels=tuple(labels) if has_labels else None,
        precomputed_scores=tuple(scores) if has_scores else None,
    )


def save_dataset(ds: GraphDataset, path) -> None:
    """Write a dataset in canonical form: fixed key order, edges sorted u < v."""
    with open(path, "w", encoding="utf-8") as fh:
        for i, g in enumerate(ds.graphs):
            obj = {"num_nodes": g.num_nodes, "edges": [list(e) for e in g.edges]}
            if g.features is not None:
                obj["features"] = [[float(x) for x in row] for row in g.features]
            if ds.labels is not None:
                obj["label"] = ds.labels[i]
            if ds.precomputed_scores is not None:
                obj["s_pre"] = ds.precomputed_scores[i]
            fh.write(json.dumps(obj, separators=(",", ":")) + "\n")


def degree_features(g: Graph, d_in: int) -> np.ndarray:
    """One-hot encoding of min(degree, d_in - 1) per node."""
    if d_in < 1:
        raise ValueError("d_in must be >= 1")
    feats = np.zeros((g.num_nodes, d_in), dtype=np.float64)
    deg = np.minimum(g.degrees(), d_in - 1)
    feats[np.arange(g.num_nodes), deg] = 1.0
    return feats


def adjacency(g: Graph) -> np.ndarray:
    """Dense symmetric 0/1 adjacency matrix with zero diagonal."""
    a = np.zeros((g.num_nodes, g.num_nodes), dtype=np.float64)
    for u, v in g.edges:
        a[u, v] = 1.0
        a[v, u] = 1.0
    return a
