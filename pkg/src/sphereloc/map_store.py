"""Place map storage and exact nearest-neighbor retrieval over descriptors.

Retrieval uses a hand-built KD-tree with median splits on the widest
dimension and full backtracking, so results are exactly the brute-force
k-nearest set.  Ordering is lexicographic by (distance, id): equal
distances resolve to the lower id deterministically.  The tree counts the
nodes each query touches, which makes the pruning behavior testable.

Descriptors are held in float32; all distance arithmetic runs in float64 on
the same stored values, so the tree and a brute-force scan of the store see
identical numbers.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError, ShapeMismatchError
from .transforms import RigidTransform

LEAF_SIZE = 16


class _Leaf:
    __slots__ = ("idx",)

    def __init__(self, idx: np.ndarray):
        self.idx = idx


class _Split:
    __slots__ = ("dim", "threshold", "left", "right")

    def __init__(self, dim: int, threshold: float, left, right):
        self.dim = dim
        self.threshold = threshold
        self.left = left
        self.right = right


class KDTree:
    """Exact k-nearest-neighbor index over row vectors."""

    def __init__(self, points: np.ndarray, leaf_size: int = LEAF_SIZE):
        self._pts = np.ascontiguousarray(points, dtype=np.float64)
        if self._pts.ndim != 2 or len(self._pts) == 0:
            raise InvalidParameterError("need a non-empty (n, d) point array")
        if leaf_size < 1:
            raise InvalidParameterError(f"leaf_size must be positive, got {leaf_size}")
        self._leaf_size = leaf_size
        self._root = self._build(np.arange(len(self._pts), dtype=np.int64))
        self.last_visited = 0

    def _build(self, idx: np.ndarray):
        if len(idx) <= self._leaf_size:
            return _Leaf(idx)
        sub = self._pts[idx]
        spread = sub.max(axis=0) - sub.min(axis=0)
        dim = int(np.argmax(spread))
        order = idx[np.argsort(sub[:, dim], kind="stable")]
        mid = len(order) // 2
        left, right = order[:mid], order[mid:]
        threshold = 0.5 * (self._pts[left[-1], dim] + self._pts[right[0], dim])
        return _Split(dim, threshold, self._build(left), self._build(right))

    def query(self, x: np.ndarray, k: int = 1) -> tuple[np.ndarray, np.ndarray]:
        """k nearest rows to x, ordered by (distance, index) ascending."""
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        if x.size != self._pts.shape[1]:
            raise ShapeMismatchError(
                f"query has dimension {x.size}, index holds {self._pts.shape[1]}"
            )
        if k < 1:
            raise InvalidParameterError(f"k must be positive, got {k}")
        k = min(k, len(self._pts))
        heap: list[tuple[float, int]] = []  # (-dist_sq, -index), worst on top
        self.last_visited = 0
        self._search(self._root, x, k, heap)
        found = sorted((-d2, -i) for d2, i in heap)
        dists = np.sqrt(np.array([f[0] for f in found]))
        ids = np.array([f[1] for f in found], dtype=np.int64)
        return dists, ids

    def _search(self, node, x: np.ndarray, k: int, heap: list) -> None:
        self.last_visited += 1
        if isinstance(node, _Leaf):
            d2s = np.sum((self._pts[node.idx] - x) ** 2, axis=1)
            for d2, i in zip(d2s, node.idx):
                cand = (float(d2), int(i))
                if len(heap) < k:
                    heapq.heappush(heap, (-cand[0], -cand[1]))
                elif cand < (-heap[0][0], -heap[0][1]):
                    heapq.heapreplace(heap, (-cand[0], -cand[1]))
            return
        gap = x[node.dim] - node.threshold
        near, far = (node.left, node.right) if gap <= 0 else (node.right, node.left)
        self._search(near, x, k, heap)
        # The far side may hold ties at exactly gap^2 with smaller ids, so
        # prune only when it is strictly worse than the current k-th best.
        if len(heap) < k or gap * gap <= -heap[0][0]:
            self._search(far, x, k, heap)


@dataclass
class MapEntry:
    """One mapped place: pose, descriptor, and its grid channels."""

    entry_id: int
    pose: RigidTransform
    descriptor: np.ndarray  # (d,) float32
    channels: np.ndarray    # (3, 2B, 2B) float32

    def __post_init__(self):
        self.descriptor = np.asarray(self.descriptor, dtype=np.float32).reshape(-1)
        self.channels = np.asarray(self.channels, dtype=np.float32)
        if self.channels.ndim != 3 or self.channels.shape[0] != 3:
            raise ShapeMismatchError(
                f"channels must be (3, 2B, 2B), got {self.channels.shape}"
            )
        if self.entry_id < 0 or self.entry_id > 0xFFFFFFFF:
            raise InvalidParameterError(f"entry id out of u32 range: {self.entry_id}")


@dataclass(frozen=True)
class RetrievalHit:
    entry_id: int
    distance: float


class MapStore:
    """Ordered collection of map entries with exact descriptor retrieval."""

    def __init__(self, bandwidth: int):
        if bandwidth < 1:
            raise InvalidParameterError(f"bandwidth must be positive, got {bandwidth}")
        self.bandwidth = int(bandwidth)
        self.entries: list[MapEntry] = []
        self._by_id: dict[int, MapEntry] = {}
        self._tree: KDTree | None = None

    def __len__(self) -> int:
        return len(self.entries)

    def add(self, entry: MapEntry) -> None:
        n = 2 * self.bandwidth
        if entry.channels.shape[1:] != (n, n):
            raise ShapeMismatchError(
                f"entry channels {entry.channels.shape} do not match bandwidth {self.bandwidth}"
            )
        if self.entries and entry.entry_id <= self.entries[-1].entry_id:
            # Row order and id order must agree so the tree's row tie-break
            # implements the (distance, id) rule.
            raise InvalidParameterError(
                f"entry ids must be strictly increasing; got {entry.entry_id} "
                f"after {self.entries[-1].entry_id}"
            )
        if self.entries and entry.descriptor.size != self.entries[0].descriptor.size:
            raise ShapeMismatchError(
                f"descriptor dimension {entry.descriptor.size} does not match store"
            )
        self.entries.append(entry)
        self._by_id[entry.entry_id] = entry
        self._tree = None

    def get(self, entry_id: int) -> MapEntry:
        try:
            return self._by_id[entry_id]
        except KeyError:
            raise InvalidParameterError(f"no entry with id {entry_id}") from None

    def positions(self) -> np.ndarray:
        return np.array([e.pose.translation for e in self.entries])

    def build_index(self) -> KDTree:
        if self._tree is None:
            if not self.entries:
                raise InvalidParameterError("cannot index an empty map")
            descs = np.stack([e.descriptor for e in self.entries]).astype(np.float64)
            self._tree = KDTree(descs)
        return self._tree

    def query(self, descriptor: np.ndarray, k: int = 1) -> list[RetrievalHit]:
        """k nearest entries by descriptor distance, ties to the lower id."""
        if not 1 <= k <= len(self.entries):
            raise InvalidParameterError(
                f"k must be in [1, {len(self.entries)}], got {k}"
            )
        tree = self.build_index()
        desc = np.asarray(descriptor, dtype=np.float32).astype(np.float64)
        dists, rows = tree.query(desc, k=k)
        return [RetrievalHit(self.entries[int(r)].entry_id, float(d))
                for d, r in zip(dists, rows)]
