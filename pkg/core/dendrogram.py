"""
Dendrogram: the binary merge tree produced by a clustering run.

Leaves are the points ``0..n-1``. Internal nodes are recorded in creation order
and exported as a linkage matrix whose rows are sorted by
``(height, merged cluster id)``, the merged cluster id being the smallest point
index under the node. Export ids are ``n..2n-2`` in row order.
"""
import hashlib
import heapq
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from core.errors import InternalInvariantViolation, InvalidInputError
from core.union_find import UnionFind


@dataclass(frozen=True)
class MergeRecord:
    """One internal node in creation order (children are node ids)."""

    left: int
    right: int
    height: float
    size: int
    cluster_id: int


class Dendrogram:
    """Merge tree over ``n`` leaves."""

    def __init__(self, n: int):
        if n < 1:
            raise InvalidInputError("a dendrogram needs at least one leaf")
        self.n = n
        self._merges: List[MergeRecord] = []

    def __len__(self) -> int:
        return len(self._merges)

    @property
    def merges(self) -> List[MergeRecord]:
        return list(self._merges)

    @property
    def complete(self) -> bool:
        return len(self._merges) == self.n - 1

    def node_size(self, node: int) -> int:
        return 1 if node < self.n else self._merges[node - self.n].size

    def node_cluster_id(self, node: int) -> int:
        return node if node < self.n else self._merges[node - self.n].cluster_id

    def node_height(self, node: int) -> float:
        return 0.0 if node < self.n else self._merges[node - self.n].height

    def add_merge(self, left: int, right: int, height: float) -> int:
        """Record the merge of two existing nodes.

        Returns:
            The new node's id (``n + creation index``)
        """
        next_id = self.n + len(self._merges)
        if not (0 <= left < next_id and 0 <= right < next_id) or left == right:
            raise InternalInvariantViolation(f"bad merge children ({left}, {right}) for node {next_id}")
        if next_id > 2 * self.n - 2:
            raise InternalInvariantViolation("more than n-1 merges recorded")
        size = self.node_size(left) + self.node_size(right)
        cluster_id = min(self.node_cluster_id(left), self.node_cluster_id(right))
        self._merges.append(MergeRecord(left, right, float(height), size, cluster_id))
        return next_id

    def heights(self) -> np.ndarray:
        """Merge heights in creation order."""
        return np.array([m.height for m in self._merges], dtype=np.float64)

    def export_order(self) -> List[int]:
        """Creation indices sorted by ``(height, cluster id)``, children first."""
        n = self.n
        waiting = [0] * len(self._merges)
        parent = [-1] * len(self._merges)
        for idx, merge in enumerate(self._merges):
            for child in (merge.left, merge.right):
                if child >= n:
                    waiting[idx] += 1
                    parent[child - n] = idx
        heap = [(m.height, m.cluster_id, idx) for idx, m in enumerate(self._merges) if waiting[idx] == 0]
        heapq.heapify(heap)
        order: List[int] = []
        while heap:
            _, _, idx = heapq.heappop(heap)
            order.append(idx)
            up = parent[idx]
            if up >= 0:
                waiting[up] -= 1
                if waiting[up] == 0:
                    m = self._merges[up]
                    heapq.heappush(heap, (m.height, m.cluster_id, up))
        return order

    def linkage_matrix(self) -> np.ndarray:
        """Rows ``(left, right, height, size)`` with ``left < right``, export ids."""
        n = self.n
        order = self.export_order()
        relabel = {}
        for pos, idx in enumerate(order):
            relabel[n + idx] = n + pos
        rows = np.zeros((len(order), 4), dtype=np.float64)
        for pos, idx in enumerate(order):
            merge = self._merges[idx]
            left = relabel.get(merge.left, merge.left)
            right = relabel.get(merge.right, merge.right)
            rows[pos] = (min(left, right), max(left, right), merge.height, merge.size)
        return rows

    @classmethod
    def from_linkage_matrix(cls, rows, n: Optional[int] = None) -> "Dendrogram":
        """Rebuild a dendrogram from linkage-matrix rows.

        Raises:
            InvalidInputError: If the rows do not describe a valid tree
        """
        rows = np.asarray(rows, dtype=np.float64).reshape(-1, 4) if len(rows) else np.zeros((0, 4))
        expected = len(rows) + 1
        if n is not None and n != expected:
            raise InvalidInputError(f"linkage has {len(rows)} rows, expected {n - 1}")
        dendrogram = cls(expected)
        used = set()
        for pos, (left, right, height, size) in enumerate(rows):
            if left != int(left) or right != int(right):
                raise InvalidInputError(f"row {pos + 1}: child ids must be integers")
            left, right = int(left), int(right)
            for child in (left, right):
                if child < 0 or child >= expected + pos or child in used:
                    raise InvalidInputError(f"row {pos + 1}: invalid or reused child id {child}")
            if left == right:
                raise InvalidInputError(f"row {pos + 1}: a node cannot merge with itself")
            if not np.isfinite(height) or height < 0:
                raise InvalidInputError(f"row {pos + 1}: height must be finite and >= 0")
            used.update((left, right))
            dendrogram.add_merge(left, right, height)
            if dendrogram.node_size(expected + pos) != int(size):
                raise InvalidInputError(f"row {pos + 1}: size {int(size)} does not match children")
        return dendrogram

    def validate(self, monotone: bool = False) -> None:
        """Check the tree invariants.

        Raises:
            InternalInvariantViolation: On a size, coverage or height violation
        """
        if not self.complete:
            raise InternalInvariantViolation(f"{len(self._merges)} merges for {self.n} leaves")
        seen = np.zeros(2 * self.n - 1, dtype=bool)
        for idx, merge in enumerate(self._merges):
            for child in (merge.left, merge.right):
                if seen[child]:
                    raise InternalInvariantViolation(f"node {child} has two parents")
                seen[child] = True
            if merge.size != self.node_size(merge.left) + self.node_size(merge.right):
                raise InternalInvariantViolation(f"size mismatch at node {self.n + idx}")
            if monotone:
                floor = max(self.node_height(merge.left), self.node_height(merge.right))
                if merge.height < floor:
                    raise InternalInvariantViolation(
                        f"height {merge.height} below child height {floor} at node {self.n + idx}")
        if self.n > 1 and (not seen[:-1].all() or self._merges[-1].size != self.n):
            raise InternalInvariantViolation("root does not cover every point")

    def digest(self) -> str:
        """SHA-256 over the exported rows (structure and exact heights)."""
        rows = self.linkage_matrix()
        payload = "\n".join(f"{int(l)} {int(r)} {float(h)!r} {int(s)}" for l, r, h, s in rows)
        return hashlib.sha256(f"{self.n}\n{payload}".encode("utf-8")).hexdigest()


def cut_dendrogram(dendrogram: Dendrogram,
                   n_clusters: Optional[int] = None,
                   height: Optional[float] = None) -> np.ndarray:
    """Flat clustering from a dendrogram.

    Exactly one selector must be given: ``n_clusters`` applies the first
    ``n - n_clusters`` merges in export order; ``height`` applies every merge
    at or below that height.

    Returns:
        Per-point labels; a label is the smallest point index of its cluster
    """
    if (n_clusters is None) == (height is None):
        raise InvalidInputError("give exactly one of n_clusters or height")
    n = dendrogram.n
    if n_clusters is not None and not 1 <= n_clusters <= n:
        raise InvalidInputError(f"n_clusters must be in [1, {n}], got {n_clusters}")
    uf = UnionFind(n)
    merges = dendrogram.merges
    applied = 0
    for idx in dendrogram.export_order():
        merge = merges[idx]
        if n_clusters is not None and applied >= n - n_clusters:
            break
        if height is not None and merge.height > height:
            continue
        uf.union(dendrogram.node_cluster_id(merge.left), dendrogram.node_cluster_id(merge.right))
        applied += 1
    return uf.roots()


def leaf_members(dendrogram: Dendrogram) -> List[np.ndarray]:
    """Point indices under every node, indexed by node id."""
    members: List[np.ndarray] = [np.array([p], dtype=np.int64) for p in range(dendrogram.n)]
    for merge in dendrogram.merges:
        members.append(np.concatenate([members[merge.left], members[merge.right]]))
    return members


def same_structure(a: Dendrogram, b: Dendrogram, atol: float = 0.0) -> bool:
    """Identical exported structure, heights within ``atol``."""
    ra, rb = a.linkage_matrix(), b.linkage_matrix()
    if a.n != b.n or ra.shape != rb.shape:
        return False
    if not np.array_equal(ra[:, [0, 1, 3]], rb[:, [0, 1, 3]]):
        return False
    return bool(np.all(np.abs(ra[:, 2] - rb[:, 2]) <= atol))
