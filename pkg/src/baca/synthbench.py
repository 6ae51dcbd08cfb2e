"""Ground-truth synthetic benchmark: labelled ID/OOD streams from known graphons."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .encoder import EncoderLayer, EncoderWeights
from .graphon import Graphon, sample_graph_latent
from .graphs import GraphDataset, adjacency

__all__ = [
    "BenchSpec",
    "default_spec",
    "make_benchmark",
    "reference_scores",
    "make_benchmark_encoder",
    "load_spec",
    "save_spec",
]

# Rank noise applied to the reference scores, as a multiple of their standard
# deviation. Emulates a mediocre pre-trained scorer: enough signal to enrich
# the partitions, enough overlap to leave calibration headroom.
SCORE_NOISE = 2.5


@dataclass(frozen=True)
class BenchSpec:
    w_id: Graphon
    w_ood: Graphon
    n_id: int
    n_ood: int
    size_range: tuple[int, int]
    seed: int

    def __post_init__(self):
        if self.n_id < 1 or self.n_ood < 1:
            raise ValueError("need at least one graph per class")
        lo, hi = self.size_range
        if not 2 <= lo <= hi:
            raise ValueError(f"invalid size range {self.size_range}")
        object.__setattr__(self, "size_range", (int(lo), int(hi)))


def default_spec(seed: int = 7) -> BenchSpec:
    """Assortative vs disassortative two-block pair: equal mean density, so
    separation has to come from topology rather than edge counts."""
    return BenchSpec(
        w_id=Graphon.two_block(0.7, 0.1, 16),
        w_ood=Graphon.two_block(0.1, 0.7, 16),
        n_id=200,
        n_ood=200,
        size_range=(20, 40),
        seed=seed,
    )


def make_benchmark(spec: BenchSpec, attach_scores: bool = True) -> GraphDataset:
    """Sample the labelled dataset: n_id graphs from w_id (label 0) and n_ood
    from w_ood (label 1), sizes uniform over the range, order shuffled
    deterministically by the seed.

    With attach_scores the dataset also carries reference_scores as its
    precomputed score column, standing in for the scores an externally
    pre-trained model would have produced.
    """
    rng = np.random.default_rng(spec.seed)
    lo, hi = spec.size_range
    graphs, labels = [], []
    for count, w, label in ((spec.n_id, spec.w_id, 0), (spec.n_ood, spec.w_ood, 1)):
        for _ in range(count):
            n = int(rng.integers(lo, hi + 1))
            graphs.append(sample_graph_latent(w, n, rng))
            labels.append(label)
    order = rng.permutation(len(graphs))
    graphs = tuple(graphs[i] for i in order)
    labels = tuple(labels[i] for i in order)
    scores = None
    if attach_scores:
        scores = tuple(reference_scores(graphs, spec.w_id, seed=spec.seed))
    return GraphDataset(graphs=graphs, labels=labels, precomputed_scores=scores)


def _cell_log_likelihood(a: np.ndarray, cells: np.ndarray, logp: np.ndarray, log1p: np.ndarray) -> float:
    n = a.shape[0]
    iu, ju = np.triu_indices(n, k=1)
    edge = a[iu, ju]
    lp = logp[cells[iu], cells[ju]]
    l1 = log1p[cells[iu], cells[ju]]
    return float((edge * lp + (1.0 - edge) * l1).mean())


def reference_scores(
    graphs,
    w_id: Graphon,
    seed: int,
    noise: float = SCORE_NOISE,
    passes: int = 2,
) -> list[float]:
    """Scores emulating a model trained on the in-distribution generator.

    Each graph is scored by its per-pair Bernoulli negative log-likelihood
    under the ID graphon, with node-to-cell assignments found greedily from a
    degree-rank initialisation. Graphs from a different generator fit worse
    and score higher. Seeded Gaussian rank noise then blurs the score
    distributions so they overlap like a mediocre detector's.

    Label-free by construction: when ID and OOD share a generator the two
    classes score identically in distribution.
    """
    p = np.clip(w_id.matrix, 1e-6, 1 - 1e-6)
    logp = np.log(p)
    log1p = np.log(1.0 - p)
    n_cells = p.shape[0]
    cell_order = np.argsort(-p.sum(axis=1), kind="stable")
    raw = []
    for g in graphs:
        a = adjacency(g)
        n = g.num_nodes
        if n < 2:
            raw.append(0.0)
            continue
        deg = a.sum(axis=1)
        rank_of = np.empty(n, dtype=int)
        rank_of[np.lexsort((np.arange(n), -deg))] = np.arange(n)
        cells = cell_order[(rank_of * n_cells) // n]
        for _ in range(passes):
            for v in range(n):
                gains = logp[:, cells] @ a[v] + log1p[:, cells] @ (1.0 - a[v])
                gains -= log1p[:, cells[v]]  # drop the self pair
                cells[v] = int(np.argmax(gains))
        raw.append(-_cell_log_likelihood(a, cells, logp, log1p))
    raw = np.asarray(raw)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5C0]))
    return [float(x) for x in raw + rng.normal(0.0, noise * raw.std(), size=len(raw))]


def make_benchmark_encoder(d_in: int = 32) -> EncoderWeights:
    """Deterministic structure-probing encoder for benchmark runs.

    Stands in for an externally trained model. Layer 1 recovers, per node,
    its exact degree one-hot (via a large self-weight that dominates the
    neighbour histogram), the degree, and the neighbour-degree sum. Layer 2
    emits a bank of degree-bucket-gated hinge features over the
    (degree, neighbour-degree-sum) joint, whose pooled values profile the
    degree-association structure of the graph. Layers 3..5 pass through, so
    the concatenated readout is dominated by the layer-1 histogram and the
    layer-2 profile.

    All gates are exact: with one-hot inputs the self term is BIG * x_v and
    every cross-node contribution is bounded by the maximum degree, so a
    threshold at BIG/2 cannot misfire.
    """
    big = 32768.0
    scale_d = 16.0
    scale_s = 256.0
    # Pooled-channel scales, chosen so no single group dominates the cosine
    # geometry of the readout: histogram bins, size markers, and hinge
    # profiles all pool to O(1).
    gate_scale = 1.0 / 16.0
    marker_scale = 1.0 / 16.0
    const_scale = 1.0 / 32.0

    vals = np.arange(d_in, dtype=float)
    # Layer 1: s = big * x_v + hist_v
    w1 = np.zeros((d_in, d_in + 2))
    w1[:, :d_in] = np.eye(d_in)
    w1[:, d_in] = 1.0          # -> big + deg_v
    w1[:, d_in + 1] = vals     # -> big * d_v + S_v
    b1 = np.concatenate([np.full(d_in, -big / 2.0), [0.0, 0.0]])
    # After relu: m_c = x_c * (big/2 + hist_c); m_deg = big + deg; m_val = big*d + S
    w2 = np.zeros((d_in + 2, d_in + 3))
    for c in range(d_in):
        w2[c, c] = gate_scale * 2.0 / big         # gate channel ~ gate_scale * x_c
    w2[d_in, d_in] = marker_scale / scale_d       # degree marker
    w2[d_in + 1, d_in + 1] = marker_scale / scale_s
    w2[d_in, d_in + 1] = -marker_scale * big / scale_s
    b2 = np.zeros(d_in + 3)
    b2[d_in] = -marker_scale * big / scale_d
    b2[d_in + 1] = marker_scale * big * big / scale_s
    b2[d_in + 2] = const_scale                    # constant channel
    layer1 = EncoderLayer(eps=big - 1.0, w1=w1, b1=b1, w2=w2, b2=b2)

    # Layer 2 input: s2 = big * h1_v + sum_u h1_u
    buckets = ((0, 8), (8, 12), (12, 16), (16, d_in))
    slopes = (6.0, 9.0, 12.0, 15.0, 18.0)
    sides = ((1.0, 1.0), (-1.0, 1.0 / 3.0))
    norm = 600.0
    gate_k = 2.0
    n_units = len(buckets) * len(slopes) * len(sides) + 3
    w1h = np.zeros((d_in + 3, n_units))
    b1h = np.zeros(n_units)
    col = 0
    for lo, hi in buckets:
        for u0 in slopes:
            for sign, weight in sides:
                # hinge = sign * (S_v - u0 * d_v) / norm, gated on deg in bucket
                w1h[d_in + 1, col] = sign * weight * scale_s / (marker_scale * norm * big)
                w1h[d_in, col] = -sign * weight * u0 * scale_d / (marker_scale * norm * big)
                for c in range(lo, hi):
                    w1h[c, col] = gate_k / (gate_scale * big)
                b1h[col] = -gate_k
                col += 1
    w1h[d_in, col] = 1.0 / big        # degree marker passthrough
    w1h[d_in + 1, col + 1] = 1.0 / big
    w1h[d_in + 2, col + 2] = 1.0 / big
    layer2 = EncoderLayer(
        eps=big - 1.0, w1=w1h, b1=b1h, w2=np.eye(n_units), b2=np.zeros(n_units)
    )

    passthrough = EncoderLayer(
        eps=big - 1.0,
        w1=np.eye(n_units) / big,
        b1=np.zeros(n_units),
        w2=np.eye(n_units),
        b2=np.zeros(n_units),
    )
    return EncoderWeights((layer1, layer2, passthrough, passthrough, passthrough))


def save_spec(spec: BenchSpec, path) -> None:
    obj = {
        "w_id": spec.w_id.matrix.tolist(),
        "w_ood": spec.w_ood.matrix.tolist(),
        "n_id": spec.n_id,
        "n_ood": spec.n_ood,
        "size_range": list(spec.size_range),
        "seed": spec.seed,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2)


def load_spec(path) -> BenchSpec:
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    return BenchSpec(
        w_id=Graphon(np.asarray(obj["w_id"])),
        w_ood=Graphon(np.asarray(obj["w_ood"])),
        n_id=int(obj["n_id"]),
        n_ood=int(obj["n_ood"]),
        size_range=tuple(obj["size_range"]),
        seed=int(obj["seed"]),
    )
