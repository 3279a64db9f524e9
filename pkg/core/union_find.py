"""Disjoint-set forest over point indices.

The representative of every set is its smallest member, so ``find(p)`` is
directly the cluster id used everywhere else in the engine.
"""
import threading
from typing import Iterable

import numpy as np


class UnionFind:
    """Array-backed union-find with path compression.

    ``find`` only reads the parent array (compression writes are idempotent
    pointer shortcuts), so concurrent finds are safe. ``union`` calls are
    serialized by a lock and only happen in the merge phase of a round.
    """

    def __init__(self, n: int):
        self.parent = np.arange(n, dtype=np.int64)
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self.parent)

    def find(self, a: int) -> int:
        """Return the representative (smallest member) of ``a``'s set."""
        parent = self.parent
        root = a
        while parent[root] != root:
            root = parent[root]
        # Compress path.
        while parent[a] != root:
            parent[a], a = root, parent[a]
        return int(root)

    def find_many(self, items: Iterable[int]) -> np.ndarray:
        """Vectorized find over an index array (no compression)."""
        roots = self.parent[np.asarray(items, dtype=np.int64)]
        while True:
            nxt = self.parent[roots]
            if np.array_equal(nxt, roots):
                return roots
            roots = nxt

    def union(self, a: int, b: int) -> int:
        """Merge the sets of ``a`` and ``b``.

        Returns:
            The representative of the merged set
        """
        with self._lock:
            root_a = self.find(a)
            root_b = self.find(b)
            if root_a == root_b:
                return root_a
            low, high = min(root_a, root_b), max(root_a, root_b)
            self.parent[high] = low
            return low

    def compress(self) -> None:
        """Point every element straight at its root (pointer jumping)."""
        with self._lock:
            parent = self.parent
            while True:
                nxt = parent[parent]
                if np.array_equal(nxt, parent):
                    break
                parent[:] = nxt

    def roots(self) -> np.ndarray:
        """Representative of every element, as a fresh array."""
        self.compress()
        return self.parent.copy()
