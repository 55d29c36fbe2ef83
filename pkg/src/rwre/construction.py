"""Inductive construction of a recurrence-forcing staircase distribution.

Level k wants a step horizon N_k such that a walk in a fresh environment
drawn from the level-k staircase either starts isolated or returns to the
root within N_k steps, except with probability at most 2**-k.  Such an N_k
exists whenever the level's walk is recurrent, but nothing says which one;
here it is found by Monte Carlo search with one-sided Wilson bounds and a
documented safety margin, and the residual statistical risk is carried in
the report rather than hidden.

The next atom is then placed far above 2 * N_k * D_k * gamma_k, where D_k
is the maximal degree within distance N_k of the root.  Two placement
policies are provided:

* ``minimal``: smallest integer above 2 * N * D * gamma (the bare
  sufficient growth for recurrence);
* ``dyadic`` (default): smallest integer above 2**k * N * D * gamma, which
  makes the per-level crossing bound N_k D_k gamma_k / gamma_{k+1} <= 2**-k
  hold level by level so every claimed inequality is testable.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels, rng
from .environment import StaircaseMu
from .graphs import GraphWithSink, max_degree_within
from .stats import wilson_lower, wilson_upper
from .walk import (ContainmentViolationError, _chunks, _csr_args,
                   _dist_kernel_args)


class NSearchExhausted(RuntimeError):
    """The horizon search hit its cap without meeting the target: on this
    graph the level's walk shows no empirical recurrence at the configured
    scale (itself a reportable outcome)."""

    def __init__(self, message, probes=None, max_steps=None):
        super().__init__(message)
        self.probes = probes or []
        self.max_steps = max_steps
        self.level = None


@dataclass(frozen=True)
class SearchConfig:
    """Knobs for the N_k search and the per-level Monte Carlo."""

    trials: int = 2000
    confidence: float = 0.99
    margin: float = 0.8  # search threshold = margin * target
    max_steps: int = 1 << 18
    threads: int = 1


@dataclass(frozen=True)
class ChooseNResult:
    N: int
    target: float
    threshold: float
    estimate: float
    upper_bound: float
    failures: int
    trials: int
    probes: tuple[dict, ...]
    vacuous: bool = False

    def to_json_dict(self) -> dict:
        return {
            "N": self.N, "target": self.target, "threshold": self.threshold,
            "estimate": self.estimate, "upper_bound": self.upper_bound,
            "failures": self.failures, "trials": self.trials,
            "probes": list(self.probes), "vacuous": self.vacuous,
        }


@dataclass(frozen=True)
class ConstructionState:
    """One level of the induction."""

    k: int
    p_k: float
    gamma_k: int
    N_k: int
    D_k: int
    mu_k: StaircaseMu
    degree_scan_hit_boundary: bool = False
    search: ChooseNResult | None = None

    def __post_init__(self):
        if self.k == 1 and self.gamma_k != 1:
            raise ValueError("gamma_1 must be 1")
        if abs(self.mu_k.residual_mass - (1.0 - self.p_k)) > 1e-12:
            raise ValueError("mu_k must leave mass 1 - p_k at infinity")


@dataclass(frozen=True)
class ConstructionReport:
    graph_descriptor: dict
    root: int
    p_sequence: tuple[float, ...]
    gamma_policy: str
    seed: int
    config: SearchConfig
    states: tuple[ConstructionState, ...]
    mu: StaircaseMu

    def state(self, k: int) -> ConstructionState:
        return self.states[k - 1]

    def gamma_next(self, k: int) -> float:
        """gamma_{k+1}, or the infinity sentinel at the top level."""
        if k < len(self.states):
            return float(self.states[k].gamma_k)
        return math.inf

    def to_json_dict(self) -> dict:
        return {
            "graph": self.graph_descriptor,
            "root": self.root,
            "p_sequence": list(self.p_sequence),
            "gamma_policy": self.gamma_policy,
            "seed": self.seed,
            "config": {
                "trials": self.config.trials,
                "confidence": self.config.confidence,
                "margin": self.config.margin,
                "max_steps": self.config.max_steps,
            },
            "levels": [
                {
                    "k": s.k, "p": s.p_k, "gamma": s.gamma_k, "N": s.N_k,
                    "D": s.D_k,
                    "degree_scan_hit_boundary": s.degree_scan_hit_boundary,
                    "search": s.search.to_json_dict() if s.search else None,
                }
                for s in self.states
            ],
            "mu": self.mu.to_json_dict(),
        }


def next_gamma(N: int, D: int, gamma) -> int:
    """Smallest integer strictly above 2 * N * D * gamma."""
    if N <= 0 or D <= 0 or gamma <= 0:
        raise ValueError("all inputs must be positive")
    if float(gamma).is_integer():
        return 2 * N * D * int(gamma) + 1
    return math.floor(2 * N * D * gamma) + 1


def gamma_for_policy(policy: str, k_next: int, N: int, D: int, gamma) -> int:
    """Atom for level ``k_next`` given level k_next - 1 quantities."""
    if policy == "minimal":
        return next_gamma(N, D, gamma)
    if policy == "dyadic":
        factor = 2 ** (k_next - 1)
        if float(gamma).is_integer():
            return factor * N * D * int(gamma) + 1
        return math.floor(factor * N * D * gamma) + 1
    raise ValueError(f"unknown gamma policy: {policy!r}")


def extend_mu(mu_prev: StaircaseMu, gamma_k: float, p_k: float) -> StaircaseMu:
    """Move mass p_k - p_{k-1} from infinity to the new atom gamma_k."""
    if p_k <= mu_prev.levels[-1]:
        raise ValueError("p_k must exceed the previous level")
    if gamma_k <= mu_prev.gammas[-1]:
        raise ValueError("gamma_k must exceed all existing atoms")
    return StaircaseMu(mu_prev.gammas + (float(gamma_k),),
                       mu_prev.levels + (float(p_k),))


def _failures_at(n: int, status: np.ndarray, steps: np.ndarray) -> int:
    """Failures for candidate horizon n from recorded first-return data.

    Absorbed and censored trials never returned; returned trials fail when
    their return time exceeds n.  Isolated trials always succeed.
    """
    returned_late = (status == _kernels.RETURNED) & (steps > n)
    never = (status == _kernels.ABSORBED) | (status == _kernels.CENSORED)
    return int(np.sum(returned_late | never))


def choose_N(g: GraphWithSink, dist, v: int, target: float,
             config: SearchConfig, seed: int) -> ChooseNResult:
    """Smallest horizon whose failure upper bound clears margin * target.

    All trials share one set of per-trial streams; censored trials are
    re-run at doubled horizons (an exact extension of the shorter walk), so
    the recorded return times make the final bisection exact.
    """
    if not 0 < target:
        raise ValueError("target must be positive")
    if target >= 1.0:
        return ChooseNResult(N=0, target=target, threshold=target,
                             estimate=0.0, upper_bound=0.0, failures=0,
                             trials=config.trials, probes=(), vacuous=True)
    threshold = target * config.margin
    trials = config.trials
    indptr, eids, other, max_deg = _csr_args(g)
    kind, values, cum, param, resist = _dist_kernel_args(dist)
    useed = np.uint64(seed & rng.MASK64)
    status = np.empty(trials, dtype=np.int64)
    steps = np.empty(trials, dtype=np.int64)

    def run_all(horizon):
        spans = _chunks(trials, config.threads)

        def work(lo, hi):
            _kernels.first_return_batch(
                indptr, eids, other, kind, values, cum, param, resist,
                useed, lo, hi, v, g.sink, horizon, max_deg, status, steps)

        if len(spans) == 1:
            work(*spans[0])
        else:
            with ThreadPoolExecutor(max_workers=len(spans)) as pool:
                list(pool.map(lambda s: work(*s), spans))

    def rerun_censored(horizon):
        ids = np.nonzero(status == _kernels.CENSORED)[0].astype(np.int64)
        if len(ids) == 0:
            return
        spans = _chunks(len(ids), config.threads)

        def work(lo, hi):
            _kernels.rerun_censored_batch(
                indptr, eids, other, kind, values, cum, param, resist,
                useed, ids[lo:hi], v, g.sink, horizon, max_deg, status, steps)

        if len(spans) == 1:
            work(*spans[0])
        else:
            with ThreadPoolExecutor(max_workers=len(spans)) as pool:
                list(pool.map(lambda s: work(*s), spans))

    probes = []

    def probe(n):
        f = _failures_at(n, status, steps)
        ucb = wilson_upper(f, trials, config.confidence)
        probes.append({"N": n, "failures": f, "estimate": f / trials,
                       "upper_bound": ucb})
        return ucb <= threshold

    run_all(1)
    if probe(0):
        best = 0
    else:
        horizon = 1
        while not probe(horizon):
            if horizon >= config.max_steps:
                exc = NSearchExhausted(
                    f"no horizon up to {config.max_steps} meets "
                    f"threshold {threshold:.4g} (target {target:.4g})",
                    probes=probes, max_steps=config.max_steps)
                raise exc
            horizon = min(2 * horizon, config.max_steps)
            rerun_censored(horizon)
        lo = horizon // 2 if horizon > 1 else 0
        hi = horizon
        # recorded return times make failure counts exact for any n <= hi
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if probe(mid):
                hi = mid
            else:
                lo = mid
        best = hi
    f = _failures_at(best, status, steps)
    return ChooseNResult(
        N=best, target=target, threshold=threshold, estimate=f / trials,
        upper_bound=wilson_upper(f, trials, config.confidence),
        failures=f, trials=trials, probes=tuple(probes))


def build_staircase(g: GraphWithSink, v: int, p_sequence, K: int,
                    config: SearchConfig, seed: int,
                    gamma_policy: str = "dyadic") -> ConstructionReport:
    """Run the induction for K levels and report every intermediate choice."""
    p_sequence = tuple(float(p) for p in p_sequence)
    if K < 1:
        raise ValueError("K must be >= 1")
    if len(p_sequence) < K:
        raise ValueError("p_sequence shorter than K")
    if any(not (0 < p < 1) for p in p_sequence):
        raise ValueError("p values must lie in (0, 1)")
    if any(b <= a for a, b in zip(p_sequence, p_sequence[1:])):
        raise ValueError("p_sequence must be strictly increasing")
    if v == g.sink:
        raise ValueError("v must not be the sink")

    states: list[ConstructionState] = []
    mu = None
    for k in range(1, K + 1):
        p_k = p_sequence[k - 1]
        if k == 1:
            gamma_k = 1
            mu = StaircaseMu((1.0,), (p_k,))
        else:
            prev = states[-1]
            gamma_k = gamma_for_policy(gamma_policy, k, prev.N_k, prev.D_k,
                                       prev.gamma_k)
            mu = extend_mu(mu, gamma_k, p_k)
        level_seed = rng.mix64(seed, k)
        try:
            search = choose_N(g, mu.distribution(), v, 2.0 ** (-k),
                              config, level_seed)
        except NSearchExhausted as exc:
            exc.level = k
            raise
        dbound = max_degree_within(g, v, search.N)
        states.append(ConstructionState(
            k=k, p_k=p_k, gamma_k=gamma_k, N_k=search.N,
            D_k=dbound.value, mu_k=mu,
            degree_scan_hit_boundary=dbound.reached_boundary,
            search=search))
    return ConstructionReport(
        graph_descriptor=dict(g.descriptor), root=v,
        p_sequence=p_sequence[:K], gamma_policy=gamma_policy,
        seed=int(seed), config=config, states=tuple(states), mu=mu)


@dataclass(frozen=True)
class BoundCheck:
    name: str
    bound: float
    count: int
    trials: int
    estimate: float
    lower_bound: float
    upper_bound: float
    passed: bool  # one-sided: lower confidence bound does not exceed bound
    strict: bool  # point estimate does not exceed bound

    def to_json_dict(self) -> dict:
        return {
            "name": self.name, "bound": self.bound, "count": self.count,
            "trials": self.trials, "estimate": self.estimate,
            "lower_bound": self.lower_bound, "upper_bound": self.upper_bound,
            "passed": self.passed, "strict": self.strict,
        }


@dataclass(frozen=True)
class VerifyReport:
    k: int
    N_k: int
    gamma_k: float
    gamma_next: float
    p_k: float
    trials: int
    seed: int
    checks: tuple[BoundCheck, ...]
    passed: bool
    isolated: int
    base_absorbed: int
    trunc_absorbed: int
    gap_crossings: int
    containment_violations: int

    def check(self, name: str) -> BoundCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_json_dict(self) -> dict:
        return {
            "k": self.k, "N_k": self.N_k, "gamma_k": self.gamma_k,
            "gamma_next": ("inf" if math.isinf(self.gamma_next)
                           else self.gamma_next),
            "p_k": self.p_k, "trials": self.trials, "seed": self.seed,
            "checks": [c.to_json_dict() for c in self.checks],
            "passed": self.passed, "isolated": self.isolated,
            "base_absorbed": self.base_absorbed,
            "trunc_absorbed": self.trunc_absorbed,
            "gap_crossings": self.gap_crossings,
            "containment_violations": self.containment_violations,
        }


def _check(name, count, trials, bound, confidence) -> BoundCheck:
    est = count / trials
    lo = wilson_lower(count, trials, confidence)
    hi = wilson_upper(count, trials, confidence)
    return BoundCheck(name=name, bound=bound, count=count, trials=trials,
                      estimate=est, lower_bound=lo, upper_bound=hi,
                      passed=lo <= bound, strict=est <= bound)


def verify_recurrence_bound(g: GraphWithSink, mu: StaircaseMu, k: int,
                            report: ConstructionReport, trials: int,
                            seed: int, threads: int = 1,
                            confidence: float = 0.99) -> VerifyReport:
    """Monte Carlo check of the level-k event bounds.

    Couples the full-environment walk with its level-k truncation on every
    trial, classifies the events, and tests each claimed bound one-sided at
    the given confidence: a component fails when even the lower confidence
    bound of its frequency exceeds the bound.  Containment of the no-return
    event in the union is asserted exactly, not statistically.
    """
    state = report.state(k)
    n_k = state.N_k
    gamma_k = float(state.gamma_k)
    gamma_next = report.gamma_next(k)
    p_k = state.p_k
    if n_k < 1:
        raise ValueError("N_k must be >= 1")

    indptr, eids, other, max_deg = _csr_args(g)
    kind, values, cum, param, resist = _dist_kernel_args(mu.distribution())
    useed = np.uint64(seed & rng.MASK64)
    out = {name: np.zeros(trials, dtype=np.uint8)
           for name in ("iso", "a", "b", "c", "g", "gap")}
    out_t = np.empty(trials, dtype=np.int64)
    out_bret = np.empty(trials, dtype=np.int64)
    out_tret = np.empty(trials, dtype=np.int64)
    out_babs = np.empty(trials, dtype=np.int64)
    out_tabs = np.empty(trials, dtype=np.int64)

    def work(lo, hi):
        _kernels.classify_batch(
            indptr, eids, other, kind, values, cum, param, resist,
            useed, lo, hi, report.root, g.sink, n_k, gamma_k, gamma_next,
            max_deg, out["iso"], out["a"], out["b"], out["c"], out["g"],
            out["gap"], out_t, out_bret, out_tret, out_babs, out_tabs)

    spans = _chunks(trials, threads)
    if len(spans) == 1:
        work(*spans[0])
    else:
        with ThreadPoolExecutor(max_workers=len(spans)) as pool:
            list(pool.map(lambda s: work(*s), spans))

    a = out["a"].astype(bool)
    b = out["b"].astype(bool)
    c = out["c"].astype(bool)
    gg = out["g"].astype(bool)
    violations = int(np.sum(gg & ~(a | b | c)))
    if violations:
        raise ContainmentViolationError(
            f"{violations} trials with G outside A u B u C at level {k}")

    bound_b = 0.0 if math.isinf(gamma_next) else n_k * state.D_k * gamma_k / gamma_next
    checks = (
        _check("G", int(np.sum(gg)), trials, (1.0 - p_k) + 2.0 ** (1 - k),
               confidence),
        _check("A", int(np.sum(a)), trials, 1.0 - p_k, confidence),
        _check("B", int(np.sum(b)), trials, bound_b, confidence),
        _check("C_minus_A", int(np.sum(c & ~a)), trials, 2.0 ** (-k),
               confidence),
    )
    return VerifyReport(
        k=k, N_k=n_k, gamma_k=gamma_k, gamma_next=gamma_next, p_k=p_k,
        trials=trials, seed=int(seed), checks=checks,
        passed=all(ch.passed for ch in checks),
        isolated=int(np.sum(out["iso"])),
        base_absorbed=int(np.sum(out_babs >= 0)),
        trunc_absorbed=int(np.sum(out_tabs >= 0)),
        gap_crossings=int(np.sum(out["gap"])),
        containment_violations=violations)


def g_trend_consistent(reports, confidence: float = 0.99) -> bool:
    """True when empirical P(G_k) is non-increasing in k up to CI slack."""
    gs = [r.check("G") for r in sorted(reports, key=lambda r: r.k)]
    for lower, higher in zip(gs, gs[1:]):
        if higher.lower_bound > lower.upper_bound:
            return False
    return True


def corrupt_level(report: ConstructionReport, k: int,
                  N_k: int) -> ConstructionReport:
    """Negative-control helper: clone the report with level k's horizon
    replaced (e.g. N_k = 1), for demonstrating that verification has power."""
    states = list(report.states)
    states[k - 1] = replace(states[k - 1], N_k=N_k, search=None)
    return replace(report, states=tuple(states))
