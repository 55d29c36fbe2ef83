"""Union-find with path compression and union by size."""

from __future__ import annotations

import numpy as np


class DisjointSets:
    def __init__(self, n: int):
        self.parent = np.arange(n, dtype=np.int64)
        self.size = np.ones(n, dtype=np.int64)

    def find(self, x: int) -> int:
        parent = self.parent
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return int(root)

    def union(self, a: int, b: int) -> int:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        return int(ra)

    def connected(self, a: int, b: int) -> bool:
        return self.find(a) == self.find(b)

    def labels(self) -> np.ndarray:
        """Component label per element: the smallest member id (deterministic
        representatives, independent of union order)."""
        n = len(self.parent)
        roots = np.empty(n, dtype=np.int64)
        for i in range(n):
            roots[i] = self.find(i)
        label = np.full(n, -1, dtype=np.int64)
        # first occurrence of each root, scanning upward, is the minimum id
        for i in range(n):
            r = roots[i]
            if label[r] == -1:
                label[r] = i
        return label[roots]
