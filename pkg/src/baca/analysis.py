"""Motif densities, cut norm, and numerical checks of the mixup deviation bounds."""

from __future__ import annotations

from dataclasses import dataclass
from string import ascii_lowercase

import numpy as np

from .graphon import Graphon, mixup

__all__ = [
    "Motif",
    "BoundReport",
    "CutNormResult",
    "EXACT_CUT_NORM_MAX_N",
    "homomorphism_density",
    "cut_norm",
    "cut_norm_result",
    "check_counting_lemma",
    "check_mixup_bounds",
    "run_theorem_trials",
    "run_counting_trials",
    "TheoremTrialSummary",
    "DEFAULT_MOTIF_POOL",
]

# Exact cut norm enumerates one subset side; 2^16 is the largest tolerable.
EXACT_CUT_NORM_MAX_N = 16
# Exact density is O(N^k) in the motif order.
MAX_MOTIF_NODES = 5

BOUND_TOL = 1e-12


@dataclass(frozen=True)
class Motif:
    """Small simple graph used as a structural probe (at most 5 nodes)."""

    num_nodes: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if not 1 <= self.num_nodes <= MAX_MOTIF_NODES:
            raise ValueError(f"motif must have 1..{MAX_MOTIF_NODES} nodes")
        canon = []
        for u, v in self.edges:
            u, v = int(u), int(v)
            if u == v:
                raise ValueError("motif self-loop")
            if not (0 <= u < self.num_nodes and 0 <= v < self.num_nodes):
                raise ValueError(f"motif edge ({u},{v}) out of range")
            canon.append((min(u, v), max(u, v)))
        canon.sort()
        for a, b in zip(canon, canon[1:]):
            if a == b:
                raise ValueError(f"duplicate motif edge {a}")
        object.__setattr__(self, "edges", tuple(canon))

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @staticmethod
    def edge() -> "Motif":
        return Motif(2, ((0, 1),))

    @staticmethod
    def path3() -> "Motif":
        return Motif(3, ((0, 1), (1, 2)))

    @staticmethod
    def triangle() -> "Motif":
        return Motif(3, ((0, 1), (1, 2), (0, 2)))

    @staticmethod
    def cycle4() -> "Motif":
        return Motif(4, ((0, 1), (1, 2), (2, 3), (0, 3)))


@dataclass(frozen=True)
class BoundReport:
    """One side-by-side inequality check: holds iff lhs <= rhs + tolerance."""

    lhs: float
    rhs: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs + BOUND_TOL

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs


@dataclass(frozen=True)
class CutNormResult:
    value: float
    exact: bool


def _as_matrix(w) -> np.ndarray:
    if isinstance(w, Graphon):
        return w.matrix
    m = np.asarray(w, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if not np.allclose(m, m.T, atol=1e-9):
        raise ValueError("matrix must be symmetric")
    return m


def homomorphism_density(motif: Motif, w) -> float:
    """Exact motif density in a step-function graphon.

    Averages the product of matrix entries over all N^k assignments of motif
    nodes to grid cells; contracted as an einsum with one subscript per motif
    node. Isolated motif nodes contribute a factor of 1.
    """
    m = _as_matrix(w)
    n = m.shape[0]
    if not motif.edges:
        return 1.0
    used = sorted({u for e in motif.edges for u in e})
    sub = {node: ascii_lowercase[i] for i, node in enumerate(used)}
    spec = ",".join(sub[u] + sub[v] for u, v in motif.edges) + "->"
    total = np.einsum(spec, *([m] * motif.num_edges), optimize=True)
    return float(total) / n ** len(used)


def _cut_norm_exact(m: np.ndarray) -> float:
    # Enumerate row subsets S; for fixed S the objective is linear in the
    # column indicators, so the best T keeps exactly the columns whose
    # partial sum over S is positive (resp. negative).
    n = m.shape[0]
    shifts = np.arange(n, dtype=np.uint64)
    best = 0.0
    chunk = 1 << 14
    for start in range(0, 1 << n, chunk):
        stop = min(start + chunk, 1 << n)
        codes = np.arange(start, stop, dtype=np.uint64)
        picks = ((codes[:, None] >> shifts) & 1).astype(np.float64)
        sums = picks @ m
        pos = np.maximum(sums, 0.0).sum(axis=1).max()
        neg = -np.minimum(sums, 0.0).sum(axis=1).min()
        best = max(best, pos, neg)
    return best / (n * n)


def _cut_norm_local_search(m: np.ndarray, restarts: int = 20, seed: int = 0) -> float:
    # Alternating greedy maximisation over the two subset indicators from
    # random starts; returns a lower bound on the exact value.
    n = m.shape[0]
    rng = np.random.default_rng(seed)
    best = 0.0
    for sign in (1.0, -1.0):
        target = sign * m
        for _ in range(restarts):
            s = rng.integers(0, 2, size=n).astype(np.float64)
            t = np.zeros(n)
            for _ in range(200):
                t = (s @ target > 0).astype(np.float64)
                s_new = (target @ t > 0).astype(np.float64)
                if np.array_equal(s_new, s):
                    break
                s = s_new
            best = max(best, float(s @ target @ t))
    return best / (n * n)


def cut_norm_result(w) -> CutNormResult:
    """Cut norm of a symmetric matrix with entries in [-1, 1].

    Exact (exhaustive over subset pairs) up to EXACT_CUT_NORM_MAX_N; larger
    inputs fall back to randomized local search, which only lower-bounds the
    true value and is flagged as inexact.
    """
    m = _as_matrix(w)
    if m.shape[0] <= EXACT_CUT_NORM_MAX_N:
        return CutNormResult(_cut_norm_exact(m), exact=True)
    return CutNormResult(_cut_norm_local_search(m), exact=False)


def cut_norm(w) -> float:
    return cut_norm_result(w).value


def check_counting_lemma(motif: Motif, w1: Graphon, w2: Graphon) -> BoundReport:
    """|t(F, W1) - t(F, W2)| <= e(F) * ||W1 - W2||_cut, checked exactly."""
    if w1.resolution != w2.resolution:
        raise ValueError("resolution mismatch")
    if w1.resolution > EXACT_CUT_NORM_MAX_N:
        raise ValueError(f"exact check limited to N <= {EXACT_CUT_NORM_MAX_N}")
    lhs = abs(homomorphism_density(motif, w1) - homomorphism_density(motif, w2))
    rhs = motif.num_edges * cut_norm(w1.matrix - w2.matrix)
    return BoundReport(lhs=lhs, rhs=rhs)


def check_mixup_bounds(
    motif_g: Motif,
    motif_h: Motif,
    w_g: Graphon,
    w_h: Graphon,
    lam: float,
) -> tuple[BoundReport, BoundReport]:
    """Deviation bounds for motif densities under graphon interpolation.

    With W_s = lam * W_g + (1 - lam) * W_h and delta the cut-norm distance
    between the sources, the density of a probe from either source moves by
    at most the opposite mixing weight times delta, scaled by the probe's
    edge count.
    """
    if w_g.resolution != w_h.resolution:
        raise ValueError("resolution mismatch")
    if w_g.resolution > EXACT_CUT_NORM_MAX_N:
        raise ValueError(f"exact check limited to N <= {EXACT_CUT_NORM_MAX_N}")
    w_s = mixup(w_g, w_h, lam)
    delta = cut_norm(w_g.matrix - w_h.matrix)
    lhs_g = abs(homomorphism_density(motif_g, w_s) - homomorphism_density(motif_g, w_g))
    lhs_h = abs(homomorphism_density(motif_h, w_s) - homomorphism_density(motif_h, w_h))
    report_g = BoundReport(lhs=lhs_g, rhs=motif_g.num_edges * (1.0 - lam) * delta)
    report_h = BoundReport(lhs=lhs_h, rhs=motif_h.num_edges * lam * delta)
    return report_g, report_h


@dataclass(frozen=True)
class TheoremTrialSummary:
    name: str
    trials: int
    violations: int
    worst_slack: float

    @property
    def all_hold(self) -> bool:
        return self.violations == 0


DEFAULT_MOTIF_POOL = (Motif.edge(), Motif.path3(), Motif.triangle(), Motif.cycle4())


def _random_step_graphon(rng: np.random.Generator, n: int, blocks: int | None = None) -> Graphon:
    if blocks is None:
        blocks = int(rng.integers(2, max(3, n // 2 + 1)))
    levels = rng.random((blocks, blocks))
    levels = (levels + levels.T) / 2
    assign = np.sort(rng.integers(0, blocks, size=n))
    return Graphon(levels[np.ix_(assign, assign)])


def run_theorem_trials(
    trials: int,
    max_n: int,
    seed: int,
    motif_pool: tuple[Motif, ...] = DEFAULT_MOTIF_POOL,
) -> tuple[TheoremTrialSummary, TheoremTrialSummary]:
    """Randomized verification of both mixup deviation bounds.

    Each trial draws two random step graphons at a common resolution
    <= max_n, a mixing weight, and two probe motifs, then checks both bound
    reports with exact densities and exact cut norm.
    """
    if max_n > EXACT_CUT_NORM_MAX_N:
        raise ValueError(f"exact regime requires max_n <= {EXACT_CUT_NORM_MAX_N}")
    rng = np.random.default_rng(seed)
    violations = [0, 0]
    worst = [float("inf"), float("inf")]
    for _ in range(trials):
        n = int(rng.integers(4, max_n + 1))
        w_g = _random_step_graphon(rng, n)
        w_h = _random_step_graphon(rng, n)
        lam = float(rng.random())
        m_g = motif_pool[rng.integers(len(motif_pool))]
        m_h = motif_pool[rng.integers(len(motif_pool))]
        for side, report in enumerate(check_mixup_bounds(m_g, m_h, w_g, w_h, lam)):
            if not report.holds:
                violations[side] += 1
            worst[side] = min(worst[side], report.slack)
    return (
        TheoremTrialSummary("mixup-bound-source", trials, violations[0], worst[0]),
        TheoremTrialSummary("mixup-bound-target", trials, violations[1], worst[1]),
    )


def run_counting_trials(
    trials: int,
    max_n: int,
    seed: int,
    motif_pool: tuple[Motif, ...] = DEFAULT_MOTIF_POOL,
) -> TheoremTrialSummary:
    """Randomized verification of the density perturbation bound on random
    step-graphon pairs, one motif from the pool per trial."""
    if max_n > EXACT_CUT_NORM_MAX_N:
        raise ValueError(f"exact regime requires max_n <= {EXACT_CUT_NORM_MAX_N}")
    rng = np.random.default_rng(seed)
    violations = 0
    worst = float("inf")
    for _ in range(trials):
        n = int(rng.integers(4, max_n + 1))
        w1 = _random_step_graphon(rng, n)
        w2 = _random_step_graphon(rng, n)
        motif = motif_pool[rng.integers(len(motif_pool))]
        report = check_counting_lemma(motif, w1, w2)
        if not report.holds:
            violations += 1
        worst = min(worst, report.slack)
    return TheoremTrialSummary("counting-lemma", trials, violations, worst)
