"""Attention-based score calibrator: forward scoring, analytic gradients, training."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dictionary import BoundaryDict, DictEntry

__all__ = [
    "CalibratorParams",
    "CalibratorGrads",
    "ScoreRecord",
    "attn_forward",
    "s_out",
    "s_in",
    "fuse",
    "minmax_normalize",
    "loss_and_grads",
    "train",
]

CLAMP_EPS = 1e-7


@dataclass
class CalibratorParams:
    """Trainable state of one attention head: three d x d maps plus the
    readout vector that reduces the attended output to a scalar logit."""

    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    readout: np.ndarray

    def __post_init__(self):
        d = self.w_q.shape[0]
        for name in ("w_q", "w_k", "w_v"):
            m = np.asarray(getattr(self, name), dtype=np.float64)
            if m.shape != (d, d) or not np.all(np.isfinite(m)):
                raise ValueError(f"{name} must be a finite {d}x{d} matrix")
            setattr(self, name, m)
        r = np.asarray(self.readout, dtype=np.float64)
        if r.shape != (d,) or not np.all(np.isfinite(r)):
            raise ValueError(f"readout must be a finite vector of length {d}")
        self.readout = r

    @property
    def dim(self) -> int:
        return self.w_q.shape[0]

    @staticmethod
    def init(d: int, rng: np.random.Generator, noise: float = 0.01) -> "CalibratorParams":
        """Scaled-identity maps with small uniform noise; zero readout, so
        every attention output starts at sigmoid(0) = 0.5.

        The query/key scale d**(1/4) makes the initial softmax logits equal
        raw key-query cosines (the 1/sqrt(d) damping is cancelled), so
        similar keys get meaningfully larger attention weights from the
        first iteration."""
        qk_scale = d ** 0.25

        def jittered(scale):
            return scale * np.eye(d) + rng.uniform(-noise, noise, size=(d, d))

        return CalibratorParams(
            jittered(qk_scale), jittered(qk_scale), jittered(1.0), np.zeros(d)
        )

    def copy(self) -> "CalibratorParams":
        return CalibratorParams(
            self.w_q.copy(), self.w_k.copy(), self.w_v.copy(), self.readout.copy()
        )

    def step(self, grads: "CalibratorGrads", lr: float) -> None:
        self.w_q -= lr * grads.w_q
        self.w_k -= lr * grads.w_k
        self.w_v -= lr * grads.w_v
        self.readout -= lr * grads.readout


@dataclass
class CalibratorGrads:
    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    readout: np.ndarray

    @staticmethod
    def zeros(d: int) -> "CalibratorGrads":
        return CalibratorGrads(np.zeros((d, d)), np.zeros((d, d)), np.zeros((d, d)), np.zeros(d))

    def add_(self, other: "CalibratorGrads") -> None:
        self.w_q += other.w_q
        self.w_k += other.w_k
        self.w_v += other.w_v
        self.readout += other.readout


@dataclass(frozen=True)
class ScoreRecord:
    """Per-graph score row; the attention correction must equal its two parts."""

    s_pre: float
    s_in: float
    s_out: float
    s_attn: float
    s_baca: float
    label: int | None = None

    def __post_init__(self):
        if abs(self.s_attn - (self.s_in + self.s_out)) > 1e-12:
            raise ValueError("s_attn must equal s_in + s_out")


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _sigmoid(x):
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))


def _batched_forward(p: CalibratorParams, queries: np.ndarray, keys: np.ndarray):
    """Scaled dot-product attention for a batch of single-query problems.

    queries: (n, d); keys: (n, m, d) per-query retrieved key sets.
    Returns the sigmoid scalars (n,) plus the intermediates needed backward.
    """
    d = p.dim
    q_proj = queries @ p.w_q                               # (n, d)
    k_proj = np.einsum("nmd,de->nme", keys, p.w_k)         # (n, m, d)
    v_proj = np.einsum("nmd,de->nme", keys, p.w_v)         # (n, m, d)
    logits = np.einsum("nme,ne->nm", k_proj, q_proj) / np.sqrt(d)
    attn = _softmax(logits)                                # rows sum to 1
    out = np.einsum("nm,nme->ne", attn, v_proj)            # (n, d)
    u = out @ p.readout                                    # (n,)
    sig = _sigmoid(u)
    return sig, (q_proj, k_proj, v_proj, attn, out, u)


def _batched_backward(
    p: CalibratorParams,
    queries: np.ndarray,
    keys: np.ndarray,
    cache,
    d_sig: np.ndarray,
) -> CalibratorGrads:
    d = p.dim
    q_proj, k_proj, v_proj, attn, out, u = cache
    sig = _sigmoid(u)
    du = d_sig * sig * (1.0 - sig)                          # (n,)
    g_readout = out.T @ du                                  # (d,)
    d_out = du[:, None] * p.readout[None, :]                # (n, d)
    d_vproj = attn[:, :, None] * d_out[:, None, :]          # (n, m, d)
    g_wv = np.einsum("nmd,nme->de", keys, d_vproj)
    d_attn = np.einsum("nme,ne->nm", v_proj, d_out)         # (n, m)
    inner = (attn * d_attn).sum(axis=1, keepdims=True)
    d_logits = attn * (d_attn - inner)                      # softmax backward
    d_qproj = np.einsum("nm,nme->ne", d_logits, k_proj) / np.sqrt(d)
    g_wq = queries.T @ d_qproj
    d_kproj = d_logits[:, :, None] * q_proj[:, None, :] / np.sqrt(d)
    g_wk = np.einsum("nmd,nme->de", keys, d_kproj)
    return CalibratorGrads(g_wq, g_wk, g_wv, g_readout)


def attn_forward(p: CalibratorParams, query: np.ndarray, keys: np.ndarray) -> float:
    """Single-query attention score in (0, 1).

    Q = query W_Q, K = keys W_K, V = keys W_V; softmax(Q K^T / sqrt(d)) V is
    reduced by the readout vector and squashed by a sigmoid.
    """
    keys = np.atleast_2d(np.asarray(keys, dtype=np.float64))
    if keys.shape[0] == 0:
        raise ValueError("empty key set")
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (p.dim,) or keys.shape[1] != p.dim:
        raise ValueError(
            f"dimension mismatch: params expect {p.dim}, got query {query.shape} keys {keys.shape}"
        )
    sig, _ = _batched_forward(p, query[None, :], keys[None, :, :])
    return float(sig[0])


def s_out(p: CalibratorParams, query: np.ndarray, ood_dict: BoundaryDict, k: int) -> float:
    """Calibrated OOD-side score: attention over the query's top-k OOD keys."""
    keys = np.stack(ood_dict.topk_by_cosine(query, k))
    return attn_forward(p, query, keys)


def s_in(p: CalibratorParams, query: np.ndarray, id_dict: BoundaryDict, k: int) -> float:
    """Calibrated ID-side score: negated attention over the top-k ID keys."""
    keys = np.stack(id_dict.topk_by_cosine(query, k))
    return -attn_forward(p, query, keys)


def minmax_normalize(values) -> np.ndarray:
    """Rescale to [0, 1] over the batch; a constant batch maps to all 0.5."""
    v = np.asarray(values, dtype=np.float64)
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.full_like(v, 0.5)
    return (v - lo) / (hi - lo)


def fuse(s_pre_batch, s_attn_batch, beta: float) -> list[float]:
    """Final fused scores: minmax-normalised base score plus beta times the
    attention correction."""
    if len(s_pre_batch) != len(s_attn_batch):
        raise ValueError("batch length mismatch")
    if beta < 0:
        raise ValueError("beta must be >= 0")
    base = minmax_normalize(s_pre_batch)
    return [float(b + beta * a) for b, a in zip(base, np.asarray(s_attn_batch, dtype=np.float64))]


def _topk_keys(
    query_idx: int,
    queries: np.ndarray,
    candidates: np.ndarray,
    k: int,
    exclude: int | None,
) -> np.ndarray:
    # Mirrors BoundaryDict.topk_by_cosine: descending cosine, stable ties.
    cand = candidates
    if exclude is not None and cand.shape[0] > 1:
        cand = np.delete(cand, exclude, axis=0)
    q = queries[query_idx]
    qn = np.linalg.norm(q)
    cn = np.linalg.norm(cand, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        sims = np.where((cn > 0) & (qn > 0), cand @ q / (cn * qn), 0.0)
    order = np.argsort(-sims, kind="stable")[: min(k, cand.shape[0])]
    return cand[order]


def _stack_key_sets(queries: np.ndarray, candidates: np.ndarray, k: int, leave_self_out: bool):
    sets = []
    for i in range(queries.shape[0]):
        exclude = i if leave_self_out else None
        sets.append(_topk_keys(i, queries, candidates, k, exclude))
    return np.stack(sets)


def _training_passes(id_entries, ood_entries, k: int):
    # Retrieval depends only on the embeddings, never on the trainable
    # parameters, so the per-pass key sets can be computed once and reused
    # across gradient steps.
    id_keys = np.stack([e.key for e in id_entries])
    ood_keys = np.stack([e.key for e in ood_entries])
    return (
        ("in", id_keys, _stack_key_sets(id_keys, id_keys, k, True), 1.0),
        ("out", id_keys, _stack_key_sets(id_keys, ood_keys, k, False), 0.0),
        ("in", ood_keys, _stack_key_sets(ood_keys, id_keys, k, False), 0.0),
        ("out", ood_keys, _stack_key_sets(ood_keys, ood_keys, k, True), 1.0),
    )


def _loss_and_grads_from_passes(p_in, p_out, passes):
    g_in = CalibratorGrads.zeros(p_in.dim)
    g_out = CalibratorGrads.zeros(p_out.dim)
    loss = 0.0
    for head, queries, key_sets, target in passes:
        params, grads = (p_in, g_in) if head == "in" else (p_out, g_out)
        count = queries.shape[0]
        sig, cache = _batched_forward(params, queries, key_sets)
        clamped = np.clip(sig, CLAMP_EPS, 1.0 - CLAMP_EPS)
        if target == 1.0:
            loss += float(-np.log(clamped).sum()) / count
            d_clamped = -1.0 / clamped / count
        else:
            loss += float(-np.log1p(-clamped).sum()) / count
            d_clamped = 1.0 / (1.0 - clamped) / count
        d_sig = np.where((sig > CLAMP_EPS) & (sig < 1.0 - CLAMP_EPS), d_clamped, 0.0)
        grads.add_(_batched_backward(params, queries, key_sets, cache, d_sig))
    return loss, g_in, g_out


def loss_and_grads(
    p_in: CalibratorParams,
    p_out: CalibratorParams,
    id_entries,
    ood_entries,
    k: int,
) -> tuple[float, CalibratorGrads, CalibratorGrads]:
    """Dual binary cross-entropy over both dictionaries with analytic gradients.

    Every entry's embedding queries both dictionaries (leaving itself out of
    its own); ID entries are pushed toward high in-head and low out-head
    scores, OOD entries the opposite. Attention outputs are clamped to
    [eps, 1 - eps] before the logs.
    """
    id_entries = list(id_entries)
    ood_entries = list(ood_entries)
    if not id_entries or not ood_entries:
        raise ValueError("both entry lists must be non-empty")
    return _loss_and_grads_from_passes(p_in, p_out, _training_passes(id_entries, ood_entries, k))


def train(
    p_in: CalibratorParams,
    p_out: CalibratorParams,
    id_dict: BoundaryDict,
    ood_dict: BoundaryDict,
    iters: int,
    lr: float,
    k: int,
) -> list[float]:
    """Plain gradient descent on the dual BCE loss over current dictionary
    contents; returns the loss value seen at each iteration."""
    if iters < 1:
        raise ValueError("iters must be >= 1")
    if lr < 0:
        raise ValueError("lr must be >= 0")
    id_entries = id_dict.entries()
    ood_entries = ood_dict.entries()
    if not id_entries or not ood_entries:
        raise ValueError("both entry lists must be non-empty")
    passes = _training_passes(id_entries, ood_entries, k)
    trajectory = []
    for step in range(iters):
        loss, g_in, g_out = _loss_and_grads_from_passes(p_in, p_out, passes)
        if not np.isfinite(loss):
            raise RuntimeError(f"non-finite loss at iteration {step}")
        trajectory.append(loss)
        p_in.step(g_in, lr)
        p_out.step(g_out, lr)
    return trajectory
