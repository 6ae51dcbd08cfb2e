"""Bounded score-ordered dictionaries with frozen memory banks and cosine retrieval."""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

__all__ = ["DictEntry", "BoundaryDict"]


@dataclass(frozen=True)
class DictEntry:
    key: np.ndarray
    score: float
    origin: str = "real"  # "real" or "synthetic"

    def __post_init__(self):
        key = np.asarray(self.key, dtype=np.float64)
        if key.ndim != 1 or not np.all(np.isfinite(key)):
            raise ValueError("entry key must be a finite vector")
        if not np.isfinite(self.score):
            raise ValueError("entry score must be finite")
        if self.origin not in ("real", "synthetic"):
            raise ValueError(f"unknown origin {self.origin!r}")
        key.setflags(write=False)
        object.__setattr__(self, "key", key)
        object.__setattr__(self, "score", float(self.score))


class _HeapItem:
    """Heap node ordered by (sort_key, insertion sequence)."""

    __slots__ = ("sort_key", "seq", "entry")

    def __init__(self, sort_key: float, seq: int, entry: DictEntry):
        self.sort_key = sort_key
        self.seq = seq
        self.entry = entry

    def __lt__(self, other: "_HeapItem") -> bool:
        if self.sort_key != other.sort_key:
            return self.sort_key < other.sort_key
        return self.seq < other.seq


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(a @ b) / (na * nb)


class BoundaryDict:
    """Fixed-capacity priority queue plus a frozen memory bank.

    In "boundary" mode an id-polarity queue retains the l highest-score
    entries ever offered (ID samples nearest the OOD side), and an
    ood-polarity queue retains the l lowest (OOD samples nearest the ID
    side). "extreme" mode inverts both, keeping the most confidently
    ID / OOD entries instead.
    """

    def __init__(
        self,
        polarity: str,
        capacity: int,
        bank_capacity: int = 0,
        tail_mode: str = "boundary",
    ):
        if polarity not in ("id", "ood"):
            raise ValueError(f"unknown polarity {polarity!r}")
        if tail_mode not in ("boundary", "extreme"):
            raise ValueError(f"unknown tail_mode {tail_mode!r}")
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.polarity = polarity
        self.capacity = capacity
        self.bank_capacity = bank_capacity
        self.tail_mode = tail_mode
        self._heap: list[_HeapItem] = []
        self._bank: tuple[DictEntry, ...] | None = None
        self._seq = 0
        # Min-heap on sort_key; the root is the first candidate for eviction.
        # keep-highest polarity evicts the smallest score, so sort_key is the
        # score itself; keep-lowest negates it.
        keep_highest = (polarity == "id") == (tail_mode == "boundary")
        self._sign = 1.0 if keep_highest else -1.0

    def __len__(self) -> int:
        return len(self._heap) + len(self._bank or ())

    @property
    def queue_size(self) -> int:
        return len(self._heap)

    @property
    def bank_frozen(self) -> bool:
        return self._bank is not None

    def try_insert(self, entry: DictEntry) -> bool:
        """Offer an entry to the queue; returns whether it was retained.

        O(log l): a full queue replaces its root only when the offer beats it
        strictly (higher score for keep-highest, lower for keep-lowest).
        """
        item = _HeapItem(self._sign * entry.score, self._seq, entry)
        self._seq += 1
        if len(self._heap) < self.capacity:
            heapq.heappush(self._heap, item)
            return True
        if self._heap[0].sort_key < item.sort_key:
            heapq.heapreplace(self._heap, item)
            return True
        return False

    def freeze_memory_bank(self, entries) -> None:
        entries = tuple(entries)
        if self._bank is not None:
            raise RuntimeError("memory bank already frozen")
        if len(entries) > self.bank_capacity:
            raise ValueError(
                f"{len(entries)} entries exceed bank capacity {self.bank_capacity}"
            )
        self._bank = entries

    def entries(self) -> list[DictEntry]:
        """Bank then queue contents, in insertion order."""
        queued = sorted(self._heap, key=lambda it: it.seq)
        return list(self._bank or ()) + [it.entry for it in queued]

    def queue_scores(self) -> list[float]:
        return [it.entry.score for it in self._heap]

    def topk_by_cosine(self, query: np.ndarray, k: int) -> list[np.ndarray]:
        """Keys of the k entries most cosine-similar to the query, descending.

        Ties resolve to older entries; a zero query or zero key has cosine 0.
        Returns min(k, total) keys.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        candidates = self.entries()
        if not candidates:
            raise ValueError("dictionary is empty")
        query = np.asarray(query, dtype=np.float64)
        sims = np.array([_cosine(e.key, query) for e in candidates])
        order = np.argsort(-sims, kind="stable")[:k]
        return [candidates[i].key for i in order]

    def snapshot(self) -> dict:
        """JSON-ready dump of bank and queue contents."""
        def entry_obj(e: DictEntry) -> dict:
            return {"score": e.score, "origin": e.origin, "key": e.key.tolist()}

        queued = sorted(self._heap, key=lambda it: it.seq)
        return {
            "polarity": self.polarity,
            "tail_mode": self.tail_mode,
            "capacity": self.capacity,
            "memory_bank": [entry_obj(e) for e in (self._bank or ())],
            "queue": [entry_obj(it.entry) for it in queued],
        }
