"""Bond percolation and cluster diagnostics.

Sampling uses the same per-edge uniform slots as environment sampling, so
with a shared seed the open set at parameter p coincides exactly with the
sub-threshold edges of a sampled environment whose distribution puts mass p
below the cutoff; and open sets are monotone in p edge for edge.

The sink takes part like any vertex: at desk scale, "the cluster is
infinite" reads "the cluster touches the sink".
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import rng
from .environment import AtomicDistribution, Environment, sample_environment
from .graphs import GraphWithSink
from .resistance import effective_resistance
from .unionfind import DisjointSets


@dataclass(frozen=True)
class PercolationSample:
    graph: GraphWithSink
    open_mask: np.ndarray  # bool per edge id
    p: float
    seed: int

    def open_edge_ids(self) -> np.ndarray:
        return np.nonzero(self.open_mask)[0]

    def to_csv(self) -> str:
        lines = ["edge_id,open"]
        for k, o in enumerate(self.open_mask):
            lines.append(f"{k},{int(o)}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class Cluster:
    vertices: np.ndarray
    edge_ids: np.ndarray  # open edges induced on the cluster
    contains_root: bool
    touches_sink: bool

    @property
    def size(self) -> int:
        return len(self.vertices)

    @property
    def isolated(self) -> bool:
        return self.size == 1

    def to_json_dict(self) -> dict:
        return {"size": int(self.size), "open_edges": int(len(self.edge_ids)),
                "contains_root": self.contains_root,
                "touches_sink": self.touches_sink}


def percolate(g: GraphWithSink, p: float, seed: int) -> PercolationSample:
    """Each edge open independently with probability p (uniform slot < p)."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must be in [0, 1]")
    u = rng.uniform_array(seed, np.arange(g.n_edges, dtype=np.int64))
    open_mask = u < p
    open_mask.setflags(write=False)
    return PercolationSample(graph=g, open_mask=open_mask, p=p, seed=int(seed))


def _component_labels(sample: PercolationSample) -> np.ndarray:
    g = sample.graph
    ds = DisjointSets(g.n_vertices)
    edges = g.edges
    for k in np.nonzero(sample.open_mask)[0]:
        ds.union(int(edges[k, 0]), int(edges[k, 1]))
    return ds.labels()


def _cluster_from_labels(sample: PercolationSample, labels: np.ndarray,
                         label: int) -> Cluster:
    g = sample.graph
    vertices = np.nonzero(labels == label)[0]
    open_ids = np.nonzero(sample.open_mask)[0]
    in_cluster = labels[g.edges[open_ids, 0]] == label
    return Cluster(
        vertices=vertices,
        edge_ids=open_ids[in_cluster],
        contains_root=bool(labels[g.root] == label),
        touches_sink=bool(labels[g.sink] == label),
    )


def cluster_of(sample: PercolationSample, v: int) -> Cluster:
    """Maximal open component containing v (singleton iff v is isolated)."""
    labels = _component_labels(sample)
    return _cluster_from_labels(sample, labels, int(labels[v]))


def clusters(sample: PercolationSample) -> list[Cluster]:
    """All clusters, ordered by their smallest vertex id."""
    labels = _component_labels(sample)
    return [_cluster_from_labels(sample, labels, int(lab))
            for lab in np.unique(labels)]


def cluster_resistance_to_sink(sample: PercolationSample, v: int) -> float:
    """Effective resistance from v to the sink through unit resistors on the
    open edges of v's cluster; inf when the cluster misses the sink."""
    g = sample.graph
    if v == g.sink:
        raise ValueError("v must not be the sink")
    labels = _component_labels(sample)
    if labels[v] != labels[g.sink]:
        return math.inf
    resist = np.where(sample.open_mask, 1.0, math.inf)
    env = Environment(g, resist, provenance={"dist": {"kind": "percolation",
                                                      "p": sample.p},
                                             "seed": sample.seed})
    return effective_resistance(g, env, source=v, sink=g.sink)


def percolation_environment(g: GraphWithSink, p: float, seed: int,
                            value: float = 1.0) -> Environment:
    """The two-point environment coupled to percolate(g, p, seed): open
    edges carry ``value``, closed edges are infinite."""
    return sample_environment(g, AtomicDistribution.two_point(value, p), seed)


def cluster_report_json(sample: PercolationSample, v: int) -> str:
    cluster = cluster_of(sample, v)
    d = cluster.to_json_dict()
    resistance = cluster_resistance_to_sink(sample, v)
    d["resistance_to_sink"] = "inf" if math.isinf(resistance) else resistance
    return json.dumps(d, sort_keys=True)
