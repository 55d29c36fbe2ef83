"""Effective resistance, harmonic voltages, flows and Dirichlet energy.

Unit current is injected at the source and extracted at the sink; the
reduced weighted Laplacian (sink row/column grounded) is solved directly
for small systems and by Jacobi-preconditioned conjugate gradients above
``DENSE_LIMIT`` vertices.  Edges enter through their conductance 1/R, so
infinite resistances simply vanish from the matrix and need no special
casing downstream.  Connectivity through finite edges is checked first to
avoid singular systems: with no finite source-sink path the effective
resistance is infinite and no voltage vector exists.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .environment import Environment, ResistanceDistribution, dist_mean
from .graphs import GraphWithSink
from .unionfind import DisjointSets

DENSE_LIMIT = 500
DEFAULT_RTOL = 1e-10


class InfiniteResistanceError(RuntimeError):
    """Operation requires a finite effective resistance."""


class NotSeriesParallelError(ValueError):
    """Graph is not reducible to a single edge by series/parallel moves."""


@dataclass(frozen=True)
class VoltageSolution:
    graph: GraphWithSink
    source: int
    sink: int
    potentials: np.ndarray | None  # None when source and sink are disconnected
    effective_resistance: float
    residual: float
    method: str

    @property
    def disconnected(self) -> bool:
        return self.potentials is None


@dataclass(frozen=True)
class Flow:
    """Signed edge flow; positive means lower-id endpoint to higher-id."""

    graph: GraphWithSink
    source: int
    sink: int
    edge_flows: np.ndarray
    strength: float


@dataclass(frozen=True)
class EnergyReport:
    energy: float
    per_edge: np.ndarray
    finite: bool


def _finite_component(g: GraphWithSink, cond: np.ndarray, source: int):
    ds = DisjointSets(g.n_vertices)
    edges = g.edges
    for k in np.nonzero(cond > 0.0)[0]:
        ds.union(int(edges[k, 0]), int(edges[k, 1]))
    root = ds.find(source)
    members = np.array([v for v in range(g.n_vertices) if ds.find(v) == root],
                       dtype=np.int64)
    return members


def solve_voltages(g: GraphWithSink, env: Environment,
                   source: int | None = None, sink: int | None = None,
                   method: str = "auto",
                   rtol: float = DEFAULT_RTOL) -> VoltageSolution:
    """Voltages for unit current from source to sink.

    Potentials are grounded at the sink; vertices with no finite path to the
    source keep potential 0 and carry no current.  Returns effective
    resistance inf (and no potential vector) when every source-sink path is
    blocked by infinite resistances.
    """
    source = g.root if source is None else source
    sink = g.sink if sink is None else sink
    if source == sink:
        raise ValueError("source and sink must differ")
    cond = env.conductances()
    members = _finite_component(g, cond, source)
    if sink not in members:
        return VoltageSolution(g, source, sink, None, math.inf, 0.0,
                               "disconnected")

    index = np.full(g.n_vertices, -1, dtype=np.int64)
    interior = members[members != sink]
    index[interior] = np.arange(len(interior))
    n = len(interior)
    edges = g.edges
    mask = cond > 0.0
    iu = index[edges[mask, 0]]
    iv = index[edges[mask, 1]]
    w = cond[mask]

    rows, cols, vals = [], [], []
    both = (iu >= 0) & (iv >= 0)
    rows.append(iu[both]); cols.append(iv[both]); vals.append(-w[both])
    rows.append(iv[both]); cols.append(iu[both]); vals.append(-w[both])
    for side in (iu, iv):
        keep = side >= 0
        rows.append(side[keep]); cols.append(side[keep]); vals.append(w[keep])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    lap = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()

    b = np.zeros(n)
    b[index[source]] = 1.0

    if method == "auto":
        method = "dense" if n < DENSE_LIMIT else "cg"
    if method == "dense":
        x = np.linalg.solve(lap.toarray(), b)
        used = "dense"
    elif method == "cg":
        diag = lap.diagonal()
        precond = spla.LinearOperator((n, n), matvec=lambda y: y / diag)
        try:
            x, info = spla.cg(lap, b, rtol=rtol, atol=0.0, maxiter=20 * n,
                              M=precond)
        except TypeError:  # scipy < 1.12 spells the tolerance 'tol'
            x, info = spla.cg(lap, b, tol=rtol, atol=0.0, maxiter=20 * n,
                              M=precond)
        used = "cg"
        if info != 0:
            x = spla.spsolve(lap.tocsc(), b)
            used = "cg+spsolve"
    else:
        raise ValueError(f"unknown method {method!r}")

    residual = float(np.linalg.norm(lap @ x - b))
    potentials = np.zeros(g.n_vertices)
    potentials[interior] = x
    r_eff = float(x[index[source]])
    return VoltageSolution(g, source, sink, potentials, r_eff, residual, used)


def effective_resistance(g: GraphWithSink, env: Environment,
                         source: int | None = None,
                         sink: int | None = None,
                         method: str = "auto") -> float:
    return solve_voltages(g, env, source, sink, method).effective_resistance


def unit_current_flow(sol: VoltageSolution, env: Environment) -> Flow:
    """Ohm's law applied to a voltage solution: F(e) = dV / R(e) along the
    canonical low-id to high-id orientation; zero on infinite edges."""
    if sol.disconnected:
        raise InfiniteResistanceError(
            "no unit-current flow exists: effective resistance is infinite")
    g = sol.graph
    v = sol.potentials
    edges = g.edges
    lo = np.minimum(edges[:, 0], edges[:, 1])
    hi = np.maximum(edges[:, 0], edges[:, 1])
    cond = env.conductances()
    flows = (v[lo] - v[hi]) * cond
    div = np.zeros(g.n_vertices)
    np.add.at(div, lo, flows)
    np.add.at(div, hi, -flows)
    return Flow(graph=g, source=sol.source, sink=sol.sink, edge_flows=flows,
                strength=float(div[sol.source]))


def flow_energy(flow: Flow, env: Environment) -> EnergyReport:
    """Dirichlet energy sum F(e)^2 R(e), with the 0 * inf = 0 convention on
    zero-flow infinite edges."""
    f = flow.edge_flows
    r = env.resistances
    with np.errstate(invalid="ignore"):
        per_edge = np.where(f == 0.0, 0.0, f * f * r)
    energy = float(np.sum(per_edge))
    return EnergyReport(energy=energy, per_edge=per_edge,
                        finite=math.isfinite(energy))


def expected_energy_bound(g: GraphWithSink, dist: ResistanceDistribution,
                          flow: Flow) -> float:
    """Expected random-resistance energy of a fixed flow: mean(mu) times the
    flow's unit-resistance energy."""
    mean = dist_mean(dist)
    unit_energy = float(np.sum(flow.edge_flows ** 2))
    if math.isinf(mean):
        return math.inf if unit_energy > 0 else 0.0
    return mean * unit_energy


def series_parallel_reduce(g: GraphWithSink, env: Environment,
                           s: int, t: int) -> float:
    """Effective resistance by repeated series/parallel elimination.

    Independent of the Laplacian path: no linear algebra, exact reduction
    moves only.  Raises NotSeriesParallelError when the graph does not
    reduce to a single s-t edge.
    """
    if s == t:
        raise ValueError("s and t must differ")
    edges = [(int(u), int(v), float(r))
             for (u, v), r in zip(g.edges, env.resistances)]

    def parallel(r1, r2):
        c1 = 0.0 if math.isinf(r1) else 1.0 / r1
        c2 = 0.0 if math.isinf(r2) else 1.0 / r2
        c = c1 + c2
        return math.inf if c == 0.0 else 1.0 / c

    changed = True
    while changed:
        changed = False
        # parallel edges between the same endpoints
        merged: dict[tuple[int, int], float] = {}
        for u, v, r in edges:
            key = (u, v) if u < v else (v, u)
            merged[key] = parallel(merged[key], r) if key in merged else r
        if len(merged) != len(edges):
            changed = True
        edges = [(u, v, r) for (u, v), r in merged.items()]

        # prune dangling vertices (no current can flow through them)
        degree: dict[int, int] = {}
        for u, v, _ in edges:
            degree[u] = degree.get(u, 0) + 1
            degree[v] = degree.get(v, 0) + 1
        dangling = {x for x, d in degree.items() if d <= 1 and x not in (s, t)}
        if dangling:
            edges = [e for e in edges if e[0] not in dangling
                     and e[1] not in dangling]
            changed = True
            continue

        # series elimination at a degree-2 interior vertex
        incident: dict[int, list[int]] = {}
        for i, (u, v, _) in enumerate(edges):
            incident.setdefault(u, []).append(i)
            incident.setdefault(v, []).append(i)
        for x, inc in incident.items():
            if x in (s, t) or len(inc) != 2:
                continue
            i1, i2 = inc
            u1, v1, r1 = edges[i1]
            u2, v2, r2 = edges[i2]
            a = v1 if u1 == x else u1
            b = v2 if u2 == x else u2
            if a == b:
                continue  # becomes parallel after the next merge pass
            edges = [e for i, e in enumerate(edges) if i not in (i1, i2)]
            edges.append((a, b, r1 + r2))
            changed = True
            break

    if not edges:
        return math.inf
    if len(edges) == 1 and {edges[0][0], edges[0][1]} == {s, t}:
        return edges[0][2]
    raise NotSeriesParallelError(
        f"irreducible remainder with {len(edges)} edges")


def voltages_csv(sol: VoltageSolution) -> str:
    if sol.disconnected:
        raise InfiniteResistanceError("no voltages: disconnected terminals")
    lines = ["vertex,potential"]
    for v, phi in enumerate(sol.potentials):
        lines.append(f"{v},{phi!r}")
    return "\n".join(lines) + "\n"


def flow_csv(flow: Flow, env: Environment) -> str:
    report = flow_energy(flow, env)
    lines = ["edge_id,u,v,flow,resistance,energy_contrib"]
    for k, (u, v) in enumerate(flow.graph.edges):
        r = env.resistances[k]
        rs = "inf" if math.isinf(r) else repr(float(r))
        lines.append(
            f"{k},{u},{v},{flow.edge_flows[k]!r},{rs},{report.per_edge[k]!r}")
    return "\n".join(lines) + "\n"
