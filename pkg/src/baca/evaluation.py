"""Ranking and distribution metrics plus the score-table export."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .calibration import ScoreRecord

__all__ = [
    "EvalReport",
    "auc",
    "kl_divergence",
    "export_scores",
    "read_scores",
    "report_from_records",
]


@dataclass(frozen=True)
class EvalReport:
    auc_pre: float
    auc_baca: float
    kl_pre: float
    kl_baca: float
    n_id: int
    n_ood: int

    def __post_init__(self):
        for name in ("auc_pre", "auc_baca"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        for name in ("kl_pre", "kl_baca"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0")

    def to_json(self) -> str:
        return json.dumps(
            {
                "auc_pre": self.auc_pre,
                "auc_baca": self.auc_baca,
                "kl_pre": self.kl_pre,
                "kl_baca": self.kl_baca,
                "n_id": self.n_id,
                "n_ood": self.n_ood,
            }
        )

    def format_table(self) -> str:
        rows = [
            ("metric", "pre", "calibrated"),
            ("auc", f"{self.auc_pre:.6f}", f"{self.auc_baca:.6f}"),
            ("kl", f"{self.kl_pre:.6f}", f"{self.kl_baca:.6f}"),
            ("n_id/n_ood", str(self.n_id), str(self.n_ood)),
        ]
        widths = [max(len(r[i]) for r in rows) for i in range(3)]
        return "\n".join(
            "  ".join(cell.ljust(w) for cell, w in zip(row, widths)) for row in rows
        )


def _average_ranks(values: np.ndarray) -> np.ndarray:
    # 1-based ranks; tied values share the mean of their rank range.
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j + 2) / 2.0
        i = j + 1
    return ranks


def auc(scores, labels) -> float:
    """Rank-based AUC: P(score_ood > score_id) + 0.5 P(tie).

    Computed from the rank sum of the OOD class with average ranks for ties
    (the normalised Mann-Whitney U statistic).
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be equal-length vectors")
    n_ood = int(labels.sum())
    n_id = len(labels) - n_ood
    if n_id == 0 or n_ood == 0:
        raise ValueError("both classes must be present")
    ranks = _average_ranks(scores)
    u = ranks[labels == 1].sum() - n_ood * (n_ood + 1) / 2.0
    return float(u / (n_id * n_ood))


def kl_divergence(scores_id, scores_ood, bins: int = 50, eps: float = 1e-8) -> float:
    """KL(P_ood || P_id) between histogram estimates on a shared range.

    Both samples are binned over the min/max of their union and smoothed by
    an additive eps per bin, which keeps disjoint supports finite.
    """
    a = np.asarray(scores_id, dtype=np.float64)
    b = np.asarray(scores_ood, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise ValueError("both score lists must be non-empty")
    if bins < 2:
        raise ValueError("bins must be >= 2")
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    if hi <= lo:
        hi = lo + 1.0
    p_id, _ = np.histogram(a, bins=bins, range=(lo, hi))
    p_ood, _ = np.histogram(b, bins=bins, range=(lo, hi))
    q = p_id + eps
    p = p_ood + eps
    q = q / q.sum()
    p = p / p.sum()
    return float(np.sum(p * np.log(p / q)))


def export_scores(records, path) -> None:
    """Write score rows as CSV with full float round-trip precision."""
    records = list(records)
    if not records:
        raise ValueError("no records to export")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["s_pre", "s_in", "s_out", "s_attn", "s_baca", "label"])
        for r in records:
            writer.writerow(
                [
                    repr(r.s_pre),
                    repr(r.s_in),
                    repr(r.s_out),
                    repr(r.s_attn),
                    repr(r.s_baca),
                    "" if r.label is None else r.label,
                ]
            )


def read_scores(path) -> list[ScoreRecord]:
    records = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            records.append(
                ScoreRecord(
                    s_pre=float(row["s_pre"]),
                    s_in=float(row["s_in"]),
                    s_out=float(row["s_out"]),
                    s_attn=float(row["s_attn"]),
                    s_baca=float(row["s_baca"]),
                    label=int(row["label"]) if row["label"] != "" else None,
                )
            )
    if not records:
        raise ValueError(f"no score rows in {path}")
    return records


def report_from_records(records) -> EvalReport:
    """Recompute the evaluation report from labelled score records."""
    records = list(records)
    labels = [r.label for r in records]
    if any(l is None for l in labels):
        raise ValueError("all records need labels to build a report")
    s_pre = [r.s_pre for r in records]
    s_baca = [r.s_baca for r in records]
    id_mask = [l == 0 for l in labels]
    pre_id = [s for s, m in zip(s_pre, id_mask) if m]
    pre_ood = [s for s, m in zip(s_pre, id_mask) if not m]
    baca_id = [s for s, m in zip(s_baca, id_mask) if m]
    baca_ood = [s for s, m in zip(s_baca, id_mask) if not m]
    return EvalReport(
        auc_pre=auc(s_pre, labels),
        auc_baca=auc(s_baca, labels),
        kl_pre=kl_divergence(pre_id, pre_ood),
        kl_baca=kl_divergence(baca_id, baca_ood),
        n_id=len(pre_id),
        n_ood=len(pre_ood),
    )
