"""Random walk in a resistance environment, and its truncation couplings.

The chain steps from v across edge e with probability proportional to
1/R(e) among v's incident edges; infinite resistances contribute zero and
the sink is absorbing.  One uniform drives every chain at a given time
index: truncated companions follow the base walk exactly until it first
crosses an edge above their cutoff, then repartition the same uniforms
under their own kernel.  This makes the prefix identity between the base
walk and each truncated walk exact by construction, not a tolerance.

The heavy batched estimators call the jitted kernels in ``_kernels``; the
stepping functions here are their pure-Python mirror (same arithmetic, same
draw order), which the tests pin together bit for bit.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels, rng
from .environment import Environment, ResistanceDistribution, KIND_ARRAY
from .graphs import GraphWithSink
from .stats import wilson_upper


class ContainmentViolationError(RuntimeError):
    """The coupling invariant G in A u B u C failed; implementation bug."""


@dataclass(frozen=True)
class TransitionKernel:
    vertex: int
    neighbors: tuple[int, ...]
    edge_ids: tuple[int, ...]
    probabilities: tuple[float, ...]
    isolated: bool


@dataclass
class WalkTrace:
    start: int
    vertices: list[int]
    edge_ids: list[int]
    seed: int
    absorbed: bool
    isolated: bool

    def n_steps(self) -> int:
        return len(self.vertices) - 1


@dataclass
class CoupledTraces:
    """Base walk plus one truncated companion per cutoff level.

    ``stopping_times[i]`` is the first step t at which the base walk crossed
    an edge with resistance above ``gammas[i]`` (None = never, the infinity
    sentinel).  Isolated companion traces stand for chains that sit at the
    start vertex forever.
    """

    base: WalkTrace
    gammas: tuple[float, ...]
    levels: list[WalkTrace]
    stopping_times: list[int | None]


@dataclass(frozen=True)
class LevelParams:
    """Classification parameters for one truncation level."""

    gamma_k: float
    gamma_next: float
    horizon: int


@dataclass(frozen=True)
class EventClassification:
    isolated: bool
    A: bool
    B: bool
    C: bool
    G: bool
    T_k: int | None
    params: LevelParams
    gap_crossed: bool  # crossing edge fell strictly between gamma_k and gamma_next
    base_absorbed: bool
    trunc_absorbed: bool


@dataclass(frozen=True)
class ReturnFailureEstimate:
    """P(start not isolated and walk fails to return within n_steps)."""

    estimate: float
    upper_bound: float
    failures: int
    trials: int
    n_steps: int
    isolated: int
    absorbed: int
    returned: int
    confidence: float


def _env_view(env: Environment):
    """Kernel argument tuple for a materialized environment."""
    return (KIND_ARRAY, np.empty(0), np.empty(0), 0.0, env.resistances)


def _resistance(view, env_seed: int, e: int) -> float:
    """Python mirror of _kernels._edge_resistance."""
    kind, values, cum, param, resist = view
    if kind == KIND_ARRAY:
        return float(resist[e])
    u = rng.unit_uniform(env_seed, e)
    if kind == _kernels.KIND_EXPONENTIAL:
        return -param * math.log1p(-u)
    for i in range(len(cum)):
        if u < cum[i]:
            return float(values[i])
    return float(values[-1])


def _incident(g: GraphWithSink, view, env_seed: int, v: int):
    """(edge ids, neighbors, resistances, conductances, total) in CSR order."""
    indptr, eids, other = g.incidence()
    lo, hi = int(indptr[v]), int(indptr[v + 1])
    rs, cs = [], []
    total = 0.0
    for k in range(lo, hi):
        r = _resistance(view, env_seed, int(eids[k]))
        c = 0.0 if r == math.inf else 1.0 / r
        rs.append(r)
        cs.append(c)
        total += c
    return eids[lo:hi], other[lo:hi], rs, cs, total


def _pick(cs, x: float) -> int:
    acc = 0.0
    last = -1
    for k, c in enumerate(cs):
        if c > 0.0:
            acc += c
            last = k
            if x < acc:
                return k
    return last


def transition_probabilities(env: Environment, v: int) -> TransitionKernel:
    """Normalized inverse resistances over v's incident edges (Markov kernel
    of the walk); all-infinite incidence yields the isolated marker."""
    g = env.graph
    if v == g.sink:
        raise ValueError("v must not be the sink")
    eids, nbrs, rs, cs, total = _incident(g, _env_view(env), 0, v)
    if total <= 0.0:
        return TransitionKernel(v, tuple(int(w) for w in nbrs),
                                tuple(int(e) for e in eids),
                                tuple(0.0 for _ in cs), isolated=True)
    probs = tuple(c / total for c in cs)
    return TransitionKernel(v, tuple(int(w) for w in nbrs),
                            tuple(int(e) for e in eids), probs, isolated=False)


def run_walk(env: Environment, start: int, max_steps: int, seed: int) -> WalkTrace:
    """Sample the chain until absorption at the sink or ``max_steps``.

    Uniform for step t is slot t of ``seed``.  An isolated start returns a
    one-vertex trace flagged isolated rather than raising.
    """
    g = env.graph
    if start == g.sink:
        raise ValueError("start must not be the sink")
    view = _env_view(env)
    _, _, _, cs0, w0 = _incident(g, view, 0, start)
    if w0 <= 0.0:
        return WalkTrace(start, [start], [], seed, absorbed=False, isolated=True)
    vertices = [start]
    edge_ids: list[int] = []
    cur = start
    absorbed = False
    for t in range(max_steps):
        eids, nbrs, rs, cs, w = _incident(g, view, 0, cur)
        u = rng.unit_uniform(seed, t)
        k = _pick(cs, u * w)
        cur = int(nbrs[k])
        vertices.append(cur)
        edge_ids.append(int(eids[k]))
        if cur == g.sink:
            absorbed = True
            break
    return WalkTrace(start, vertices, edge_ids, seed,
                     absorbed=absorbed, isolated=False)


def first_return_time(trace: WalkTrace, v: int) -> int | None:
    """Least n >= 1 with S_n = v, or None within this trace."""
    if trace.start != v:
        raise ValueError("trace does not start at v")
    for n in range(1, len(trace.vertices)):
        if trace.vertices[n] == v:
            return n
    return None


def run_coupled(env: Environment, gammas, start: int, max_steps: int,
                seed: int) -> CoupledTraces:
    """Base walk plus truncated companions under shared per-step uniforms.

    Level i follows the base walk until the base first crosses an edge with
    resistance above gammas[i] (time T_i); at that step the disallowed
    portion of the uniform is rescaled onto the level's allowed edges, and
    afterwards the level steps its own truncated kernel with the same
    per-step uniforms.  Prefix equality through T_i is exact.
    """
    g = env.graph
    gammas = tuple(float(x) for x in gammas)
    if any(b <= a for a, b in zip(gammas, gammas[1:])):
        raise ValueError("gammas must be strictly increasing")
    if start == g.sink:
        raise ValueError("start must not be the sink")
    view = _env_view(env)
    sink = g.sink

    _, _, rs0, _, w0 = _incident(g, view, 0, start)
    base_isolated = w0 <= 0.0
    nlev = len(gammas)
    level_isolated = [
        all(r > gammas[i] for r in rs0) for i in range(nlev)
    ]

    base = WalkTrace(start, [start], [], seed, absorbed=False,
                     isolated=base_isolated)
    levels = [WalkTrace(start, [start], [], seed, absorbed=False,
                        isolated=level_isolated[i]) for i in range(nlev)]
    stopping = [None] * nlev

    base_alive = not base_isolated
    lev_state = []  # (cur, diverged, alive)
    for i in range(nlev):
        lev_state.append({"cur": start, "diverged": False,
                          "alive": not level_isolated[i]})

    cur = start
    for t in range(max_steps):
        if not base_alive and not any(s["alive"] for s in lev_state):
            break
        u = rng.unit_uniform(seed, t)
        crossed_r = None
        if base_alive:
            eids, nbrs, rs, cs, w = _incident(g, view, 0, cur)
            x = u * w
            j = _pick(cs, x)
            crossed_r = rs[j]
            nxt = int(nbrs[j])
        for i in range(nlev):
            st = lev_state[i]
            if not st["alive"]:
                continue
            gk = gammas[i]
            if not st["diverged"]:
                if not base_alive:
                    raise AssertionError("coupled level outlived base walk")
                if crossed_r <= gk:
                    # mirror the base step
                    st["cur"] = nxt
                    levels[i].vertices.append(nxt)
                    levels[i].edge_ids.append(int(eids[j]))
                    if nxt == sink:
                        levels[i].absorbed = True
                        st["alive"] = False
                else:
                    if stopping[i] is None:
                        stopping[i] = t
                    st["diverged"] = True
                    # rescale the disallowed portion of u onto allowed edges
                    wa = sum(c for r, c in zip(rs, cs) if r <= gk)
                    wd = w - wa
                    y = 0.0
                    for k2, (r2, c2) in enumerate(zip(rs, cs)):
                        if k2 == j:
                            acc_before = sum(cs[:j])
                            y += x - acc_before
                            break
                        if r2 > gk:
                            y += c2
                    x2 = (y / wd) * wa
                    acc2 = 0.0
                    pick2 = -1
                    last2 = -1
                    for k2, (r2, c2) in enumerate(zip(rs, cs)):
                        if c2 > 0.0 and r2 <= gk:
                            acc2 += c2
                            last2 = k2
                            if x2 < acc2:
                                pick2 = k2
                                break
                    if pick2 == -1:
                        pick2 = last2
                    st["cur"] = int(nbrs[pick2])
                    levels[i].vertices.append(st["cur"])
                    levels[i].edge_ids.append(int(eids[pick2]))
                    if st["cur"] == sink:
                        levels[i].absorbed = True
                        st["alive"] = False
            else:
                # independent truncated step with the shared uniform
                eids_i, nbrs_i, rs_i, cs_i, _ = _incident(
                    g, view, 0, st["cur"])
                cs_t = [c if r <= gk else 0.0 for r, c in zip(rs_i, cs_i)]
                wt = sum(c for c in cs_t)
                k3 = _pick(cs_t, u * wt)
                st["cur"] = int(nbrs_i[k3])
                levels[i].vertices.append(st["cur"])
                levels[i].edge_ids.append(int(eids_i[k3]))
                if st["cur"] == sink:
                    levels[i].absorbed = True
                    st["alive"] = False
        # record stopping times for levels whose walks already finished
        if base_alive and crossed_r is not None:
            for i in range(nlev):
                if stopping[i] is None and crossed_r > gammas[i]:
                    stopping[i] = t
        if base_alive:
            cur = nxt
            base.vertices.append(cur)
            base.edge_ids.append(int(eids[j]))
            if cur == sink:
                base.absorbed = True
                base_alive = False
    return CoupledTraces(base=base, gammas=gammas, levels=levels,
                         stopping_times=stopping)


def _no_visit(trace: WalkTrace, v: int, horizon: int) -> bool:
    """True when the chain avoids v at steps 1..horizon.

    Isolated chains sit at their start forever; absorbed chains sit at the
    sink, so steps beyond the recorded trace never visit v.
    """
    if trace.isolated:
        return trace.start != v
    upto = min(horizon, trace.n_steps())
    for n in range(1, upto + 1):
        if trace.vertices[n] == v:
            return False
    return True


def classify_events(run: CoupledTraces, env: Environment, params: LevelParams,
                    v: int) -> EventClassification:
    """Flags A, B, C, G for one coupled trial at one truncation level.

    Containment G in A u B u C is asserted; a violation is an
    implementation bug (on G minus C the stopping time is below the
    horizon) and raises instead of being reported as data.
    """
    try:
        idx = run.gammas.index(params.gamma_k)
    except ValueError:
        raise ValueError("run does not carry the requested truncation level")
    horizon = params.horizon
    base = run.base
    if not (base.isolated or base.absorbed or base.n_steps() >= horizon):
        raise ValueError("trace shorter than the classification horizon")
    trunc = run.levels[idx]
    if not (trunc.isolated or trunc.absorbed or trunc.n_steps() >= horizon):
        raise ValueError("truncated trace shorter than the horizon")

    indptr, eids, _ = env.graph.incidence()
    lo, hi = int(indptr[v]), int(indptr[v + 1])
    incident_r = [float(env.resistances[eids[k]]) for k in range(lo, hi)]
    a_flag = all(r > params.gamma_k for r in incident_r)
    isolated = all(math.isinf(r) for r in incident_r)

    t_k = run.stopping_times[idx]
    b_flag = (t_k is not None) and (t_k < horizon) and not a_flag
    gap = False
    if t_k is not None and t_k < horizon:
        crossing_r = float(env.resistances[base.edge_ids[t_k]])
        gap = params.gamma_k < crossing_r < params.gamma_next

    g_flag = (not isolated) and _no_visit(base, v, horizon)
    c_flag = _no_visit(trunc, v, horizon)

    if g_flag and not (a_flag or b_flag or c_flag):
        raise ContainmentViolationError(
            f"G outside A u B u C at level gamma={params.gamma_k}")
    return EventClassification(
        isolated=isolated, A=a_flag, B=b_flag, C=c_flag, G=g_flag,
        T_k=t_k, params=params, gap_crossed=gap,
        base_absorbed=base.absorbed, trunc_absorbed=trunc.absorbed)


def _dist_kernel_args(dist: ResistanceDistribution):
    kind, values, cum, cond, param = dist.kernel_spec()
    return (kind, np.ascontiguousarray(values, dtype=np.float64),
            np.ascontiguousarray(cum, dtype=np.float64), float(param),
            np.empty(0, dtype=np.float64))


def _csr_args(g: GraphWithSink):
    indptr, eids, other = g.incidence()
    max_deg = int(np.max(np.diff(indptr))) if g.n_vertices else 0
    return indptr, eids, other, max_deg


def _chunks(n: int, parts: int):
    parts = max(1, min(parts, n)) if n else 1
    step = (n + parts - 1) // parts
    return [(lo, min(lo + step, n)) for lo in range(0, n, step)]


def first_return_statuses(g: GraphWithSink, dist: ResistanceDistribution,
                          v: int, n_steps: int, trials: int, base_seed: int,
                          threads: int = 1):
    """Batched (status, step) arrays over fresh-environment trials.

    Trial i derives its environment and walk streams from slot i of
    ``base_seed``; results are independent of chunking and thread count.
    """
    indptr, eids, other, max_deg = _csr_args(g)
    kind, values, cum, param, resist = _dist_kernel_args(dist)
    status = np.empty(trials, dtype=np.int64)
    steps = np.empty(trials, dtype=np.int64)
    seed = np.uint64(base_seed & rng.MASK64)

    def work(lo, hi):
        _kernels.first_return_batch(
            indptr, eids, other, kind, values, cum, param, resist,
            seed, lo, hi, v, g.sink, n_steps, max_deg, status, steps)

    spans = _chunks(trials, threads)
    if len(spans) == 1:
        work(*spans[0])
    else:
        with ThreadPoolExecutor(max_workers=len(spans)) as pool:
            list(pool.map(lambda s: work(*s), spans))
    return status, steps


def estimate_return_failure(g: GraphWithSink, dist: ResistanceDistribution,
                            v: int, n_steps: int, trials: int, base_seed: int,
                            threads: int = 1,
                            confidence: float = 0.99) -> ReturnFailureEstimate:
    """Monte Carlo estimate of P(v not isolated and no return within N).

    Absorption at the sink counts as a failure to return (conservative:
    the finite truncation can only inflate this probability).
    """
    if trials < 100:
        raise ValueError("need at least 100 trials for a meaningful bound")
    status, _ = first_return_statuses(g, dist, v, n_steps, trials, base_seed,
                                      threads)
    isolated = int(np.sum(status == _kernels.ISOLATED))
    returned = int(np.sum(status == _kernels.RETURNED))
    absorbed = int(np.sum(status == _kernels.ABSORBED))
    failures = trials - isolated - returned
    return ReturnFailureEstimate(
        estimate=failures / trials,
        upper_bound=wilson_upper(failures, trials, confidence),
        failures=failures, trials=trials, n_steps=n_steps,
        isolated=isolated, absorbed=absorbed, returned=returned,
        confidence=confidence)
