"""Branching number of trees via max-flow/min-cut, and decay-flow
certificates.

Trees here are level-homogeneous: every vertex at depth i has the same
number of children, given by a branching pattern (constant, periodic, or an
explicit per-level list).  That covers every closed-form oracle this module
is checked against while keeping per-level arithmetic exact: all quantities
are functions of the level only.

The branching number is bracketed by bisection on the capacity exponent:
with edge capacities lambda**(-dist), the root-to-frontier max flow stays
bounded away from zero below the branching number and decays geometrically
above it.  dist of an edge is the depth of its far endpoint minus one (the
root's edges have dist 0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class TreeSpec:
    """Branching counts per level.

    ``pattern`` gives the child counts for levels 1, 2, ...; with
    ``cyclic=True`` it repeats, otherwise the tree is only defined down to
    ``len(pattern)`` levels (explicit per-level counts).
    """

    pattern: tuple[int, ...]
    cyclic: bool = True

    def __post_init__(self):
        if not self.pattern:
            raise ValueError("empty branching pattern")
        if any(int(b) != b or b < 0 for b in self.pattern):
            raise ValueError("child counts must be nonnegative integers")
        object.__setattr__(self, "pattern", tuple(int(b) for b in self.pattern))

    @classmethod
    def constant(cls, b: int) -> "TreeSpec":
        return cls((b,), cyclic=True)

    @classmethod
    def periodic(cls, pattern) -> "TreeSpec":
        return cls(tuple(pattern), cyclic=True)

    @classmethod
    def explicit(cls, counts) -> "TreeSpec":
        return cls(tuple(counts), cyclic=False)

    def branching_at(self, level: int) -> int:
        """Children per vertex at depth level-1 (edges at this level)."""
        if level < 1:
            raise ValueError("levels are 1-based")
        if self.cyclic:
            return self.pattern[(level - 1) % len(self.pattern)]
        if level > len(self.pattern):
            raise ValueError(f"explicit pattern has no level {level}")
        return self.pattern[level - 1]

    def level_edge_counts(self, depth: int) -> list[int]:
        """Number of edges at each level 1..depth."""
        counts = []
        n = 1
        for lev in range(1, depth + 1):
            n *= self.branching_at(lev)
            counts.append(n)
        return counts

    def growth_rate(self) -> float:
        """Geometric mean of one period (the exact branching number for
        cyclic patterns)."""
        logs = sum(math.log(b) for b in self.pattern if b > 0)
        if any(b == 0 for b in self.pattern):
            return 0.0
        return math.exp(logs / len(self.pattern))

    def describe(self) -> str:
        if self.cyclic and len(self.pattern) == 1:
            return f"b={self.pattern[0]}"
        kind = "period" if self.cyclic else "levels"
        return f"{kind}=" + ",".join(str(b) for b in self.pattern)


@dataclass(frozen=True)
class MaxFlowResult:
    flow: float
    cut_value: float
    cut_level: int
    depth: int
    lam: float


def tree_max_flow(spec: TreeSpec, depth: int, lam: float) -> MaxFlowResult:
    """Max flow root -> depth frontier under capacities lam**(-dist(e)).

    Computed twice: bottom-up flow recursion, and the best uniform level
    cut (which is a minimum cut on a level-homogeneous tree).  The two are
    asserted equal, which exercises max-flow/min-cut as an internal check.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if lam <= 0:
        raise ValueError("lambda must be positive")
    # bottom-up: per-edge deliverable flow at each level
    f = lam ** (-(depth - 1))  # level-depth edges feed the frontier directly
    for lev in range(depth - 1, 0, -1):
        children = spec.branching_at(lev + 1)
        f = min(lam ** (-(lev - 1)), children * f)
    flow = spec.branching_at(1) * f

    counts = spec.level_edge_counts(depth)
    cut_value = math.inf
    cut_level = 1
    for lev in range(1, depth + 1):
        val = counts[lev - 1] * lam ** (-(lev - 1))
        if val < cut_value:
            cut_value = val
            cut_level = lev
    if not math.isclose(flow, cut_value, rel_tol=1e-9, abs_tol=1e-12):
        raise AssertionError(
            f"max flow {flow} != min cut {cut_value} (lambda={lam})")
    return MaxFlowResult(flow=flow, cut_value=cut_value, cut_level=cut_level,
                         depth=depth, lam=lam)


@dataclass(frozen=True)
class BranchingEstimate:
    value: float
    lower: float
    upper: float
    depth: int
    tol: float
    warning: str | None = None

    @property
    def dimension(self) -> float:
        return math.log(self.value)


def branching_number(spec: TreeSpec, depth: int, tol: float) -> BranchingEstimate:
    """Bisection estimate of the branching number.

    lambda counts as "bounded away from zero" when the max flows at the two
    largest computed depths (depth//2 and depth) differ by less than tol
    relatively; the bisection bracket is then narrowed to width tol.
    """
    if depth < 2:
        raise ValueError("depth must be >= 2")
    if not 0 < tol < 1:
        raise ValueError("tol must be in (0, 1)")
    d1 = max(1, depth // 2)

    def bounded(lam: float) -> bool:
        f1 = tree_max_flow(spec, d1, lam).flow
        f2 = tree_max_flow(spec, depth, lam).flow
        if f1 <= 0.0:
            return False
        return (f1 - f2) / f1 < tol

    lo = 1.0
    hi = float(max(spec.pattern) + 1)
    warning = None
    if not bounded(lo):
        # degenerate pattern (some level has no children): flow dies at a cut
        return BranchingEstimate(value=0.0, lower=0.0, upper=0.0, depth=depth,
                                 tol=tol, warning="flow vanishes at lambda=1")
    while bounded(hi):
        hi *= 2.0
        if hi > 2.0 ** 30:
            warning = "upper bracket widened without unbounded behaviour"
            break
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if bounded(mid):
            lo = mid
        else:
            hi = mid
    return BranchingEstimate(value=0.5 * (lo + hi), lower=lo, upper=hi,
                             depth=depth, tol=tol, warning=warning)


def critical_probability(dim: float) -> float:
    """Critical bond-percolation parameter from the tree dimension:
    exp(-dim)."""
    if dim < 0:
        raise ValueError("dimension must be >= 0")
    return math.exp(-dim)


@dataclass(frozen=True)
class TreeFlow:
    """Equal-splitting unit flow with its decay certificate.

    ``per_level_flow[i]`` is the flow on each level-(i+1) edge.  The
    certificate passes when the minimal constant C with
    flow <= C * rho**dist stabilizes between the last two depths; on trees
    thinner than 1/rho the constant grows with depth and the result is a
    documented failure certificate, not an exception.
    """

    spec: TreeSpec
    depth: int
    rho: float
    per_level_flow: tuple[float, ...]
    C: float
    C_prev_depth: float
    certified: bool
    root_strength: float = 1.0

    def flow_at_level(self, level: int) -> float:
        return self.per_level_flow[level - 1]

    def to_json_dict(self) -> dict:
        return {
            "spec": self.spec.describe(), "depth": self.depth,
            "rho": self.rho, "C": self.C, "C_prev_depth": self.C_prev_depth,
            "certified": self.certified,
        }


def build_decay_flow(spec: TreeSpec, rho: float, depth: int) -> TreeFlow:
    """Unit flow split equally among children, checked against the decay
    envelope C * rho**dist(e)."""
    if not 0 < rho < 1:
        raise ValueError("rho must be in (0, 1)")
    if depth < 2:
        raise ValueError("depth must be >= 2")
    flows = []
    n = 1
    for lev in range(1, depth + 1):
        b = spec.branching_at(lev)
        if b == 0:
            raise ValueError("equal splitting undefined at a childless level")
        n *= b
        flows.append(1.0 / n)

    def min_c(upto: int) -> float:
        return max(flows[lev - 1] / rho ** (lev - 1)
                   for lev in range(1, upto + 1))

    c_full = min_c(depth)
    c_prev = min_c(depth - 1)
    certified = math.isclose(c_full, c_prev, rel_tol=1e-12, abs_tol=0.0)
    return TreeFlow(spec=spec, depth=depth, rho=rho,
                    per_level_flow=tuple(flows), C=c_full,
                    C_prev_depth=c_prev, certified=certified)


@dataclass(frozen=True)
class TreeEnergyReport:
    partial_sum: float
    depth: int
    tail_bound: float
    total_bound: float
    converges: bool
    decay_ratio: float  # rho^2 * growth rate, from the certificate side

    def to_json_dict(self) -> dict:
        return {
            "partial_sum": self.partial_sum, "depth": self.depth,
            "tail_bound": ("inf" if math.isinf(self.tail_bound)
                           else self.tail_bound),
            "total_bound": ("inf" if math.isinf(self.total_bound)
                            else self.total_bound),
            "converges": self.converges, "decay_ratio": self.decay_ratio,
        }


def flow_energy_on_tree(flow: TreeFlow) -> TreeEnergyReport:
    """Unit-resistance energy of the flow over the truncation, plus a
    geometric bound on the tail if the branching pattern continues.

    For equal splitting the level-i term is (edge count) * flow^2 = 1/N_i,
    so consecutive terms shrink by the next level's branching factor; the
    tail is summed in closed form when that keeps shrinking.
    """
    spec = flow.spec
    depth = flow.depth
    counts = spec.level_edge_counts(depth)
    terms = [counts[i] * flow.per_level_flow[i] ** 2 for i in range(depth)]
    partial = sum(terms)
    if spec.cyclic:
        # tail = last term * sum of products of future 1/b
        period = len(spec.pattern)
        prod = 1.0
        block = 0.0
        for j in range(period):
            b = spec.branching_at(depth + 1 + j)
            if b == 0:
                block = math.inf
                break
            prod /= b
            block += prod
        if math.isinf(block):
            tail = math.inf
        elif prod >= 1.0:
            tail = math.inf  # pattern does not branch on average (e.g. a ray)
        else:
            tail = terms[-1] * block / (1.0 - prod)
    else:
        tail = math.inf  # explicit tree: no continuation to bound
    decay_ratio = flow.rho ** 2 * spec.growth_rate()
    return TreeEnergyReport(
        partial_sum=partial, depth=depth, tail_bound=tail,
        total_bound=partial + tail, converges=math.isfinite(tail),
        decay_ratio=decay_ratio)


def tree_flow_csv(flow: TreeFlow, max_edges: int = 200_000) -> str:
    """Per-edge flow table; rows are (edge_index, level, flow, envelope)."""
    counts = flow.spec.level_edge_counts(flow.depth)
    total = sum(counts)
    if total > max_edges:
        raise ValueError(f"{total} edges exceed the export cap {max_edges}")
    lines = ["edge_index,level,flow,decay_envelope"]
    idx = 0
    for lev in range(1, flow.depth + 1):
        fval = flow.per_level_flow[lev - 1]
        envelope = flow.C * flow.rho ** (lev - 1)
        for _ in range(counts[lev - 1]):
            lines.append(f"{idx},{lev},{fval!r},{envelope!r}")
            idx += 1
    return "\n".join(lines) + "\n"
