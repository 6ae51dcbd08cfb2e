"""End-to-end test-time loop: score, partition, augment, maintain dictionaries,
train the calibrator, and emit calibrated scores."""

from __future__ import annotations

import json
from dataclasses import dataclass, fields

import numpy as np

from . import calibration
from .calibration import CalibratorParams, ScoreRecord
from .dictionary import BoundaryDict, DictEntry
from .encoder import EncoderWeights, embed_many, load_encoder, pretrain_score
from .evaluation import EvalReport, export_scores, report_from_records
from .graphon import (
    auto_resolution,
    estimate_graphon,
    mixup,
    random_size,
    sample_graph,
    save_graphon_csv,
)
from .graphs import GraphDataset, load_dataset

__all__ = [
    "PipelineConfig",
    "PipelineResult",
    "partition",
    "augment_subgroup",
    "run_baca",
    "load_config_file",
]


@dataclass(frozen=True)
class PipelineConfig:
    k: int = 5
    beta: float = 0.5
    lr: float = 0.01
    iters: int = 200
    queue_size: int = 64
    bank_size: int = 64
    lambda_lo: float = 0.01
    lambda_hi: float = 1.0
    num_mixups: int = 32
    graphon_resolution: int = 0  # 0 selects the median-size rule
    partition_quantile: float = 0.5
    usvt_c: float = 0.2
    seed: int = 0
    tail_mode: str = "boundary"
    batch_size: int = 0  # 0 processes the whole test set as one batch

    def __post_init__(self):
        if not 0.0 <= self.lambda_lo <= self.lambda_hi <= 1.0:
            raise ValueError("need 0 <= lambda_lo <= lambda_hi <= 1")
        if not 0.0 < self.partition_quantile < 1.0:
            raise ValueError("partition_quantile must lie in (0, 1)")
        if self.tail_mode not in ("boundary", "extreme"):
            raise ValueError(f"unknown tail_mode {self.tail_mode!r}")
        if self.k < 1 or self.queue_size < 1 or self.iters < 1:
            raise ValueError("k, queue_size, and iters must be >= 1")
        if self.beta < 0 or self.lr < 0:
            raise ValueError("beta and lr must be >= 0")


_CONFIG_TYPES = {f.name: f.type for f in fields(PipelineConfig)}


def load_config_file(path) -> dict:
    """Parse a flat key=value config file into PipelineConfig keyword args."""
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in _CONFIG_TYPES:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            kind = _CONFIG_TYPES[key]
            out[key] = value if "str" in kind else (float(value) if "float" in kind else int(value))
    return out


def partition(scores, quantile: float = 0.5) -> tuple[list[int], list[int]]:
    """Split batch indices at the score quantile: at or below the threshold is
    the ID side, above is the OOD side.

    If the threshold split leaves the OOD side empty (ties at the maximum,
    e.g. an all-equal batch), entries tied with the threshold alternate
    between the sides so both stay populated.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise ValueError("empty score batch")
    tau = float(np.quantile(scores, quantile))
    id_idx = [i for i, s in enumerate(scores) if s <= tau]
    ood_idx = [i for i, s in enumerate(scores) if s > tau]
    if not ood_idx:
        tied = [i for i, s in enumerate(scores) if s == tau]
        moved = set(tied[1::2])
        id_idx = [i for i in id_idx if i not in moved]
        ood_idx = sorted(moved)
    return id_idx, ood_idx


def augment_subgroup(
    graphs,
    cfg: PipelineConfig,
    rng: np.random.Generator,
    feature_dim: int | None = None,
):
    """Synthesise num_mixups graphs for one subgroup.

    The subgroup is split into two random shards, one graphon is estimated
    per shard, and each synthetic graph is sampled at a random size from a
    fresh convex combination of the two. A single-graph subgroup mixes the
    one estimate with itself.
    """
    graphs = list(graphs)
    if not graphs:
        raise ValueError("empty subgroup")
    if cfg.num_mixups == 0:
        return []
    resolution = cfg.graphon_resolution or auto_resolution(graphs)
    if len(graphs) == 1:
        shards = [graphs, graphs]
    else:
        order = rng.permutation(len(graphs))
        half = len(graphs) // 2
        shards = [[graphs[i] for i in order[:half]], [graphs[i] for i in order[half:]]]
    w1 = estimate_graphon(shards[0], resolution, cfg.usvt_c)
    w2 = estimate_graphon(shards[1], resolution, cfg.usvt_c)
    synthetic = []
    for _ in range(cfg.num_mixups):
        lam = float(rng.uniform(cfg.lambda_lo, cfg.lambda_hi))
        w_s = mixup(w1, w2, lam)
        r = random_size(resolution, rng)
        synthetic.append(sample_graph(w_s, r, rng, feature_dim=feature_dim))
    return synthetic


@dataclass(frozen=True)
class PipelineResult:
    records: tuple[ScoreRecord, ...]
    report: EvalReport | None
    loss_trajectory: tuple[float, ...]
    id_dict: BoundaryDict
    ood_dict: BoundaryDict
    subgroup_graphons: dict


def _batches(n: int, batch_size: int):
    if batch_size <= 0 or batch_size >= n:
        yield list(range(n))
        return
    for start in range(0, n, batch_size):
        yield list(range(start, min(start + batch_size, n)))


def _unit_rows(x: np.ndarray) -> np.ndarray:
    # Sum-pooled embeddings scale with node count and layer width; the
    # dictionaries and the calibrator see unit vectors so that retrieval and
    # attention logits are size-invariant.
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return x / np.where(norms == 0, 1.0, norms)


def _quantile_match(values, reference) -> list[float]:
    values = np.asarray(values, dtype=np.float64)
    ref = np.sort(np.asarray(reference, dtype=np.float64))
    if values.size == 0:
        return []
    ranks = np.argsort(np.argsort(values, kind="stable"), kind="stable")
    quantiles = (ranks + 0.5) / values.size
    return [float(x) for x in np.quantile(ref, quantiles)]


def run_baca(
    cfg: PipelineConfig,
    encoder: EncoderWeights | str,
    dataset: GraphDataset | str,
    score_path=None,
) -> PipelineResult:
    """Run the full test-time calibration loop.

    Deterministic for a fixed config: all randomness threads through one
    seeded generator. When the dataset carries labels the result includes an
    evaluation report comparing pre and calibrated scores.
    """
    if isinstance(encoder, str):
        encoder = load_encoder(encoder)
    if isinstance(dataset, str):
        dataset = load_dataset(dataset)
    rng = np.random.default_rng(cfg.seed)
    proxy_seed = int(rng.integers(2**31))

    d = encoder.embedding_dim
    id_dict = BoundaryDict("id", cfg.queue_size, cfg.bank_size, cfg.tail_mode)
    ood_dict = BoundaryDict("ood", cfg.queue_size, cfg.bank_size, cfg.tail_mode)
    p_in = CalibratorParams.init(d, rng)
    p_out = CalibratorParams.init(d, rng)

    all_pre: list[float] = [0.0] * len(dataset.graphs)
    all_in: list[float] = [0.0] * len(dataset.graphs)
    all_out: list[float] = [0.0] * len(dataset.graphs)
    trajectory: list[float] = []
    subgroup_graphons: dict = {}

    for batch_no, batch_idx in enumerate(_batches(len(dataset.graphs), cfg.batch_size)):
        batch = [dataset.graphs[i] for i in batch_idx]
        try:
            s_pre = pretrain_score(encoder, batch, dataset, seed=proxy_seed)
        except ValueError as exc:
            raise RuntimeError(f"[scoring] batch {batch_no}: {exc}") from exc
        id_local, ood_local = partition(s_pre, cfg.partition_quantile)

        embeddings = _unit_rows(embed_many(encoder, batch))
        synth_graphs: list = []
        synth_sources: list[str] = []
        for name, local in (("id", id_local), ("ood", ood_local)):
            if not local:
                continue
            subgroup = [batch[i] for i in local]
            try:
                synth = augment_subgroup(subgroup, cfg, rng, feature_dim=encoder.d_in)
            except ValueError as exc:
                raise RuntimeError(f"[augmentation] {name} subgroup: {exc}") from exc
            synth_graphs.extend(synth)
            synth_sources.extend([name] * len(synth))
            if batch_no == 0:
                resolution = cfg.graphon_resolution or auto_resolution(subgroup)
                subgroup_graphons[name] = estimate_graphon(subgroup, resolution, cfg.usvt_c)

        if synth_graphs:
            synth_emb = _unit_rows(embed_many(encoder, synth_graphs))
            if len(synth_graphs) >= 2:
                synth_raw = pretrain_score(encoder, synth_graphs, None, seed=proxy_seed)
                # The proxy scores live on their own scale (the real batch may
                # carry externally computed scores); queue retention compares
                # scores directly, so map synthetic scores onto the real
                # batch's distribution by rank.
                synth_pre = _quantile_match(synth_raw, s_pre)
            else:
                # A lone synthetic graph has no contrastive partners; park it
                # at the batch median so it is offered but never dominates.
                synth_pre = [float(np.median(s_pre))]

        if batch_no == 0:
            for name, local, dct in (("id", id_local, id_dict), ("ood", ood_local, ood_dict)):
                bank = [
                    DictEntry(embeddings[i], s_pre[i], "real")
                    for i in local[: cfg.bank_size]
                ]
                dct.freeze_memory_bank(bank)
                for i in local[cfg.bank_size :]:
                    dct.try_insert(DictEntry(embeddings[i], s_pre[i], "real"))
        else:
            for i in id_local:
                id_dict.try_insert(DictEntry(embeddings[i], s_pre[i], "real"))
            for i in ood_local:
                ood_dict.try_insert(DictEntry(embeddings[i], s_pre[i], "real"))
        for j, source in enumerate(synth_sources):
            dct = id_dict if source == "id" else ood_dict
            dct.try_insert(DictEntry(synth_emb[j], synth_pre[j], "synthetic"))

        if len(id_dict) == 0 or len(ood_dict) == 0:
            raise RuntimeError("[dictionaries] a dictionary is empty; cannot calibrate")
        try:
            trajectory.extend(
                calibration.train(p_in, p_out, id_dict, ood_dict, cfg.iters, cfg.lr, cfg.k)
            )
        except RuntimeError as exc:
            raise RuntimeError(f"[training] batch {batch_no}: {exc}") from exc

        for pos, i in enumerate(batch_idx):
            q = embeddings[pos]
            all_in[i] = calibration.s_in(p_in, q, id_dict, cfg.k)
            all_out[i] = calibration.s_out(p_out, q, ood_dict, cfg.k)
            all_pre[i] = s_pre[pos]

    s_attn = [a + b for a, b in zip(all_in, all_out)]
    s_baca = calibration.fuse(all_pre, s_attn, cfg.beta)
    labels = dataset.labels if dataset.labels is not None else [None] * len(dataset.graphs)
    records = tuple(
        ScoreRecord(
            s_pre=all_pre[i],
            s_in=all_in[i],
            s_out=all_out[i],
            s_attn=s_attn[i],
            s_baca=s_baca[i],
            label=labels[i],
        )
        for i in range(len(dataset.graphs))
    )
    report = report_from_records(records) if dataset.labels is not None else None
    if score_path is not None:
        export_scores(records, score_path)
    return PipelineResult(
        records=records,
        report=report,
        loss_trajectory=tuple(trajectory),
        id_dict=id_dict,
        ood_dict=ood_dict,
        subgroup_graphons=subgroup_graphons,
    )


def export_subgroup_heatmaps(result: PipelineResult, prefix: str) -> list[str]:
    """Write the first-batch subgroup graphon estimates (and their midpoint
    mix when both exist) as CSV heatmap matrices."""
    written = []
    for name, w in result.subgroup_graphons.items():
        path = f"{prefix}_{name}.csv"
        save_graphon_csv(w, path)
        written.append(path)
    if {"id", "ood"} <= set(result.subgroup_graphons):
        w_id = result.subgroup_graphons["id"]
        w_ood = result.subgroup_graphons["ood"]
        if w_id.resolution == w_ood.resolution:
            path = f"{prefix}_mix.csv"
            save_graphon_csv(mixup(w_id, w_ood, 0.5), path)
            written.append(path)
    return written


def dump_dictionaries(result: PipelineResult, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(
            {"id": result.id_dict.snapshot(), "ood": result.ood_dict.snapshot()},
            fh,
        )
