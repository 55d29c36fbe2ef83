"""Finite graphs with a distinguished sink standing in for infinity.

Generators build exhaustions of infinite graphs: every vertex beyond the
truncation radius is contracted into a single absorbing ``sink`` vertex, so
"resistance to infinity" becomes "resistance from the root to the sink" on a
growing family of balls.  Contraction creates parallel edges; those stay
distinct, and all per-edge data (resistances, flows) is keyed by edge id,
never by vertex pair.

Graphs are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np

# Builders refuse to enumerate more vertices than this; large truncations are
# expected (Z^2 balls of radius several hundred) but not unbounded ones.
MAX_VERTICES = 8_000_000


class CapacityError(ValueError):
    """Requested graph exceeds the documented size bound."""


class ParseError(ValueError):
    """Malformed edge-list input."""


@dataclass(frozen=True)
class FiniteGraph:
    """Undirected multigraph on dense integer vertex ids.

    ``edges[k] = (u, v)`` defines edge id ``k``.  Self-loops are rejected;
    parallel edges are allowed and keep distinct ids.
    """

    n_vertices: int
    edges: np.ndarray  # shape (m, 2), int64
    _csr: tuple | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        edges = np.ascontiguousarray(np.asarray(self.edges, dtype=np.int64))
        if edges.size == 0:
            edges = edges.reshape(0, 2)
        if edges.ndim != 2 or edges.shape[1] != 2:
            raise ValueError("edges must be an (m, 2) array")
        if edges.size and (edges.min() < 0 or edges.max() >= self.n_vertices):
            raise ValueError("edge endpoint out of range")
        if np.any(edges[:, 0] == edges[:, 1]):
            raise ValueError("self-loops are not allowed")
        edges.setflags(write=False)
        object.__setattr__(self, "edges", edges)

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n_vertices, dtype=np.int64)
        np.add.at(deg, self.edges[:, 0], 1)
        np.add.at(deg, self.edges[:, 1], 1)
        return deg

    def incidence(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """CSR incidence: (indptr, incident_edge, incident_other).

        For vertex ``v``, slots ``indptr[v]:indptr[v+1]`` list the incident
        edge ids and the opposite endpoints, ordered by edge id.  This order
        is the canonical partition order for walk kernels.
        """
        if self._csr is None:
            m = self.n_edges
            us, vs = self.edges[:, 0], self.edges[:, 1]
            owner = np.concatenate([us, vs])
            eid = np.tile(np.arange(m, dtype=np.int64), 2)
            other = np.concatenate([vs, us])
            order = np.lexsort((eid, owner))
            eids = np.ascontiguousarray(eid[order])
            others = np.ascontiguousarray(other[order])
            counts = np.bincount(owner, minlength=self.n_vertices)
            indptr = np.zeros(self.n_vertices + 1, dtype=np.int64)
            np.cumsum(counts, out=indptr[1:])
            for arr in (indptr, eids, others):
                arr.setflags(write=False)
            object.__setattr__(self, "_csr", (indptr, eids, others))
        return self._csr


@dataclass(frozen=True)
class GraphWithSink:
    """A finite truncation: root vertex plus a sink absorbing everything
    beyond the truncation radius."""

    graph: FiniteGraph
    root: int
    sink: int
    radius: int
    descriptor: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.root == self.sink:
            raise ValueError("root and sink must differ")
        for v in (self.root, self.sink):
            if not (0 <= v < self.graph.n_vertices):
                raise ValueError("root/sink out of range")

    @property
    def n_vertices(self) -> int:
        return self.graph.n_vertices

    @property
    def n_edges(self) -> int:
        return self.graph.n_edges

    @property
    def edges(self) -> np.ndarray:
        return self.graph.edges

    def incidence(self):
        return self.graph.incidence()

    def degree(self, v: int) -> int:
        indptr, _, _ = self.incidence()
        return int(indptr[v + 1] - indptr[v])


@dataclass(frozen=True)
class DegreeBound:
    """Result of a radius-r degree scan.

    ``reached_boundary`` is set when the scan saw the sink within radius
    r - 1, i.e. when vertices of the untruncated graph would have been in
    range but are hidden behind the truncation; the bound may then
    understate the infinite graph's value.
    """

    value: int
    radius: int
    reached_boundary: bool


def lattice_ball_size(d: int, n: int) -> int:
    """Number of lattice points with l1 norm <= n in Z^d."""
    return sum((2 ** k) * comb(d, k) * comb(n, k) for k in range(min(d, n) + 1))


def _encode(points: np.ndarray, n: int) -> np.ndarray:
    """Radix-encode lattice points (coords in [-n, n]) to sortable int64."""
    d = points.shape[1]
    base = 2 * n + 1
    if base ** d >= 2 ** 62:
        raise CapacityError(f"lattice ball d={d}, n={n} exceeds key space")
    key = np.zeros(len(points), dtype=np.int64)
    for j in range(d):
        key = key * base + (points[:, j] + n)
    return key


def build_lattice_ball(d: int, n: int) -> GraphWithSink:
    """Ball of radius ``n`` in Z^d with everything beyond contracted to a sink.

    Vertices are the lattice points at l1 distance <= n from the origin,
    edges join l1-neighbours, and every lattice edge leaving the ball becomes
    a distinct edge to the sink, so each non-sink vertex keeps degree exactly
    2d.  Construction is deterministic: vertex ids follow lexicographic
    coordinate order and edge ids follow (axis, vertex) order.

    Raises CapacityError beyond MAX_VERTICES (documented memory bound).
    """
    if d < 1 or n < 1:
        raise ValueError("need d >= 1 and n >= 1")
    size = lattice_ball_size(d, n)
    if size + 1 > MAX_VERTICES:
        raise CapacityError(
            f"lattice ball d={d}, n={n} has {size} vertices "
            f"(bound {MAX_VERTICES})"
        )
    axes = [np.arange(-n, n + 1, dtype=np.int64)] * d
    grid = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in grid], axis=1)
    pts = pts[np.abs(pts).sum(axis=1) <= n]
    keys = _encode(pts, n)
    order = np.argsort(keys)
    pts = pts[order]
    keys = keys[order]
    nv = len(pts)
    sink = nv

    chunks = []
    for axis in range(d):
        nbr = pts.copy()
        nbr[:, axis] += 1
        inside_mask = np.abs(nbr).sum(axis=1) <= n
        nbr_keys = _encode(nbr[inside_mask], n)
        nbr_ids = np.searchsorted(keys, nbr_keys)
        src = np.nonzero(inside_mask)[0]
        chunks.append(np.stack([src, nbr_ids], axis=1))
        # positive-direction boundary crossings
        out_src = np.nonzero(~inside_mask)[0]
        chunks.append(
            np.stack([out_src, np.full(len(out_src), sink, dtype=np.int64)], axis=1)
        )
        # negative-direction boundary crossings
        nbr[:, axis] -= 2
        neg_out = np.abs(nbr).sum(axis=1) > n
        out_src = np.nonzero(neg_out)[0]
        chunks.append(
            np.stack([out_src, np.full(len(out_src), sink, dtype=np.int64)], axis=1)
        )
    edges = np.concatenate(chunks, axis=0)
    graph = FiniteGraph(nv + 1, edges)
    root = int(np.searchsorted(keys, _encode(np.zeros((1, d), dtype=np.int64), n)[0]))
    return GraphWithSink(
        graph, root=root, sink=sink, radius=n,
        descriptor={"kind": "lattice", "d": d, "n": n},
    )


def build_tree(b: int, depth: int) -> GraphWithSink:
    """Rooted b-ary tree of the given depth, leaves wired to a sink.

    Each leaf gets one sink edge per child it would have in the infinite
    tree, so cutting at depth ``depth`` exposes b**(depth+1) sink edges and
    every non-root vertex has degree b + 1.
    """
    if b < 1 or depth < 1:
        raise ValueError("need b >= 1 and depth >= 1")
    level_sizes = [b ** i for i in range(depth + 1)]
    nv = sum(level_sizes)
    if nv + 1 > MAX_VERTICES:
        raise CapacityError(f"tree b={b}, depth={depth} has {nv} vertices")
    sink = nv
    starts = np.cumsum([0] + level_sizes)
    chunks = []
    for lev in range(1, depth + 1):
        parents = np.repeat(
            np.arange(starts[lev - 1], starts[lev], dtype=np.int64), b
        )
        children = np.arange(starts[lev], starts[lev + 1], dtype=np.int64)
        chunks.append(np.stack([parents, children], axis=1))
    leaves = np.repeat(np.arange(starts[depth], starts[depth + 1], dtype=np.int64), b)
    chunks.append(
        np.stack([leaves, np.full(len(leaves), sink, dtype=np.int64)], axis=1)
    )
    edges = np.concatenate(chunks, axis=0)
    graph = FiniteGraph(nv + 1, edges)
    return GraphWithSink(
        graph, root=0, sink=sink, radius=depth,
        descriptor={"kind": "tree", "b": b, "depth": depth},
    )


def max_degree_within(g: GraphWithSink, v: int, r: int) -> DegreeBound:
    """Max degree over non-sink vertices within edge-count distance r of v.

    Distances are measured in the truncation without passing through the
    sink (paths through the sink do not exist in the untruncated graph).
    Degrees count all incident edges, including edges to the sink.
    """
    if v == g.sink:
        raise ValueError("v must not be the sink")
    if r < 0:
        raise ValueError("r must be >= 0")
    indptr, eids, other = g.incidence()
    sink = g.sink
    dist = {v: 0}
    frontier = [v]
    best = 0
    reached_boundary = False
    while frontier:
        nxt = []
        for u in frontier:
            du = dist[u]
            deg = int(indptr[u + 1] - indptr[u])
            best = max(best, deg)
            if du >= r:
                continue
            for k in range(indptr[u], indptr[u + 1]):
                w = int(other[k])
                if w == sink:
                    # a real vertex of the infinite graph sits here, within
                    # range but beyond the truncation
                    reached_boundary = True
                    continue
                if w not in dist:
                    dist[w] = du + 1
                    nxt.append(w)
        frontier = nxt
    return DegreeBound(value=best, radius=r, reached_boundary=reached_boundary)


def load_graph(text: str) -> FiniteGraph:
    """Parse an edge-list ("u v" per line); edge id = line index.

    Blank lines and lines starting with '#' are ignored for convenience but
    do not consume edge ids.
    """
    edges = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ParseError(f"line {lineno}: expected 'u v', got {raw!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise ParseError(f"line {lineno}: non-integer vertex id in {raw!r}")
        if u < 0 or v < 0:
            raise ParseError(f"line {lineno}: negative vertex id")
        if u == v:
            raise ParseError(f"line {lineno}: self-loop {u} {v}")
        edges.append((u, v))
    if not edges:
        raise ParseError("empty edge list")
    arr = np.array(edges, dtype=np.int64)
    return FiniteGraph(int(arr.max()) + 1, arr)


def wrap_with_sink(graph: FiniteGraph, root: int, sink: int,
                   descriptor: dict | None = None) -> GraphWithSink:
    """View a loaded graph as a truncation with the given root and sink.

    The recorded radius is the eccentricity of the root among non-sink
    vertices (sink-avoiding edge-count distance).
    """
    indptr, _, other = graph.incidence()
    dist = {root: 0}
    frontier = [root]
    radius = 0
    while frontier:
        nxt = []
        for u in frontier:
            for k in range(indptr[u], indptr[u + 1]):
                w = int(other[k])
                if w == sink or w in dist:
                    continue
                dist[w] = dist[u] + 1
                radius = max(radius, dist[w])
                nxt.append(w)
        frontier = nxt
    return GraphWithSink(graph, root=root, sink=sink, radius=radius,
                         descriptor=descriptor or {"kind": "custom"})
