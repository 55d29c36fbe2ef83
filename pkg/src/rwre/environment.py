"""Resistance distributions on (0, inf] and i.i.d. environments.

Infinity is a first-class resistance: an edge with resistance inf has
conductance 0 and transition probability 0, but it is never deleted, so edge
ids stay stable across truncation levels and couplings can compare
environments edge by edge.

Sampling is inverse-CDF on per-edge uniforms (see ``rng``), with atoms
ordered by increasing resistance.  Small uniforms therefore map to small
resistances, which yields for free the monotone couplings the truncation
arguments need: an edge open under percolation at p is exactly an edge whose
resistance falls in the lowest p of the distribution.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .graphs import GraphWithSink

MASS_TOL = 1e-12

KIND_ATOMIC = 0
KIND_EXPONENTIAL = 1
KIND_ARRAY = 2  # materialized per-edge resistances (kernel use only)


@dataclass(frozen=True)
class StaircaseMu:
    """Atomic distribution with atoms gamma_1 < gamma_2 < ... carrying masses
    p_1, p_2 - p_1, ... and residual mass 1 - p_K at infinity."""

    gammas: tuple[float, ...]
    levels: tuple[float, ...]

    def __post_init__(self):
        gammas = tuple(float(g) for g in self.gammas)
        levels = tuple(float(p) for p in self.levels)
        object.__setattr__(self, "gammas", gammas)
        object.__setattr__(self, "levels", levels)
        if len(gammas) != len(levels) or not gammas:
            raise ValueError("gammas and levels must be equal-length, nonempty")
        if any(g <= 0 or not math.isfinite(g) for g in gammas):
            raise ValueError("atoms must be finite and positive")
        if any(b <= a for a, b in zip(gammas, gammas[1:])):
            raise ValueError("gammas must be strictly increasing")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ValueError("levels must be strictly increasing")
        if not (0 < levels[0] and levels[-1] < 1):
            raise ValueError("levels must lie in (0, 1)")

    @property
    def k_levels(self) -> int:
        return len(self.gammas)

    @property
    def residual_mass(self) -> float:
        return 1.0 - self.levels[-1]

    def masses(self) -> tuple[float, ...]:
        prev = 0.0
        out = []
        for p in self.levels:
            out.append(p - prev)
            prev = p
        return tuple(out)

    def distribution(self) -> "AtomicDistribution":
        atoms = list(zip(self.gammas, self.masses()))
        atoms.append((math.inf, self.residual_mass))
        return AtomicDistribution(atoms, kind="staircase", source=self)

    def to_json_dict(self) -> dict:
        return {"kind": "staircase", "gammas": list(self.gammas),
                "levels": list(self.levels)}


class ResistanceDistribution:
    """Base class; concrete kinds are atomic lists and the exponential."""

    kind: str

    def mean(self) -> float:
        raise NotImplementedError

    def mass_at_infinity(self) -> float:
        raise NotImplementedError

    def mass_at_or_below(self, q: float) -> float:
        """mu(0, q] for finite q."""
        raise NotImplementedError

    def quantile(self, u):
        """Inverse CDF; vectorized over numpy arrays."""
        raise NotImplementedError

    def to_json_dict(self) -> dict:
        raise NotImplementedError

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)

    def kernel_spec(self):
        """(kind_code, values, cum_masses, conductances, param) for jitted
        walk kernels."""
        raise NotImplementedError


class AtomicDistribution(ResistanceDistribution):
    def __init__(self, atoms, kind: str = "atoms", source: StaircaseMu | None = None):
        pairs = [(float(v), float(m)) for v, m in atoms if m != 0.0]
        if not pairs:
            raise ValueError("no atoms with positive mass")
        if any(m < 0 for _, m in pairs):
            raise ValueError("negative mass")
        if any(v <= 0 for v, _ in pairs):
            raise ValueError("atoms must be positive")
        pairs.sort(key=lambda vm: vm[0])
        values = [v for v, _ in pairs]
        if len(set(values)) != len(values):
            raise ValueError("duplicate atom values")
        total = sum(m for _, m in pairs)
        if abs(total - 1.0) > MASS_TOL:
            raise ValueError(f"masses sum to {total}, not 1")
        self.kind = kind
        self.source = source
        self.values = np.array(values, dtype=np.float64)
        self.masses = np.array([m for _, m in pairs], dtype=np.float64)
        cum = np.cumsum(self.masses)
        cum[-1] = 1.0  # guard against round-off at the top
        self.cum = cum

    @classmethod
    def constant(cls, c: float) -> "AtomicDistribution":
        if not (c > 0):
            raise ValueError("constant resistance must be positive")
        return cls([(c, 1.0)], kind="constant")

    @classmethod
    def two_point(cls, value: float, mass: float) -> "AtomicDistribution":
        """Mass at ``value``, remainder at infinity."""
        if not (0 < mass <= 1):
            raise ValueError("mass must be in (0, 1]")
        atoms = [(value, mass)]
        if mass < 1:
            atoms.append((math.inf, 1.0 - mass))
        return cls(atoms, kind="two_point")

    def mean(self) -> float:
        if self.mass_at_infinity() > 0:
            return math.inf
        return float(np.dot(self.values, self.masses))

    def mass_at_infinity(self) -> float:
        if math.isinf(self.values[-1]):
            return float(self.masses[-1])
        return 0.0

    def mass_at_or_below(self, q: float) -> float:
        idx = np.searchsorted(self.values, q, side="right")
        return float(self.cum[idx - 1]) if idx > 0 else 0.0

    def quantile(self, u):
        idx = np.searchsorted(self.cum, u, side="right")
        idx = np.minimum(idx, len(self.values) - 1)
        return self.values[idx]

    def to_json_dict(self) -> dict:
        if self.kind == "staircase" and self.source is not None:
            return self.source.to_json_dict()
        if self.kind == "constant":
            return {"kind": "constant", "value": float(self.values[0])}
        if self.kind == "two_point":
            return {"kind": "two_point", "value": float(self.values[0]),
                    "mass": float(self.masses[0])}
        return {
            "kind": "atoms",
            "atoms": [["inf" if math.isinf(v) else v, m]
                      for v, m in zip(self.values.tolist(), self.masses.tolist())],
        }

    def kernel_spec(self):
        cond = np.where(np.isinf(self.values), 0.0, 1.0 / self.values)
        return (KIND_ATOMIC, self.values, self.cum, cond, 0.0)


class ExponentialDistribution(ResistanceDistribution):
    kind = "exponential"

    def __init__(self, mean: float):
        if not (mean > 0 and math.isfinite(mean)):
            raise ValueError("mean must be finite and positive")
        self.mean_value = float(mean)

    def mean(self) -> float:
        return self.mean_value

    def mass_at_infinity(self) -> float:
        return 0.0

    def mass_at_or_below(self, q: float) -> float:
        if q <= 0:
            return 0.0
        return float(-math.expm1(-q / self.mean_value))

    def quantile(self, u):
        return -self.mean_value * np.log1p(-np.asarray(u, dtype=np.float64))

    def to_json_dict(self) -> dict:
        return {"kind": "exponential", "mean": self.mean_value}

    def kernel_spec(self):
        empty = np.empty(0, dtype=np.float64)
        return (KIND_EXPONENTIAL, empty, empty, empty, self.mean_value)


def distribution_from_json_dict(d: dict) -> ResistanceDistribution:
    kind = d.get("kind")
    if kind == "constant":
        return AtomicDistribution.constant(d["value"])
    if kind == "two_point":
        return AtomicDistribution.two_point(d["value"], d["mass"])
    if kind == "staircase":
        return StaircaseMu(tuple(d["gammas"]), tuple(d["levels"])).distribution()
    if kind == "exponential":
        return ExponentialDistribution(d["mean"])
    if kind == "atoms":
        atoms = [(math.inf if v == "inf" else float(v), float(m))
                 for v, m in d["atoms"]]
        return AtomicDistribution(atoms)
    raise ValueError(f"unknown distribution kind: {kind!r}")


def distribution_from_json(text: str) -> ResistanceDistribution:
    return distribution_from_json_dict(json.loads(text))


def dist_mean(dist: ResistanceDistribution) -> float:
    """Mean resistance; inf as soon as any mass sits at infinity."""
    return dist.mean()


@dataclass(frozen=True)
class Environment:
    """A resistance per edge id, plus how it was produced."""

    graph: GraphWithSink
    resistances: np.ndarray
    provenance: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        r = np.ascontiguousarray(np.asarray(self.resistances, dtype=np.float64))
        if r.shape != (self.graph.n_edges,):
            raise ValueError("one resistance per edge required")
        finite = r[np.isfinite(r)]
        if finite.size and finite.min() <= 0:
            raise ValueError("finite resistances must be strictly positive")
        if np.any(np.isnan(r)):
            raise ValueError("NaN resistance")
        r.setflags(write=False)
        object.__setattr__(self, "resistances", r)

    def conductances(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            c = 1.0 / self.resistances
        return np.where(np.isinf(self.resistances), 0.0, c)

    def to_csv(self) -> str:
        lines = ["edge_id,u,v,resistance"]
        for k, (u, v) in enumerate(self.graph.edges):
            r = self.resistances[k]
            rs = "inf" if math.isinf(r) else repr(float(r))
            lines.append(f"{k},{u},{v},{rs}")
        return "\n".join(lines) + "\n"


def sample_environment(g: GraphWithSink, dist: ResistanceDistribution,
                       seed: int) -> Environment:
    """Independent draw per edge: edge e uses uniform slot e of ``seed``.

    Deterministic in (seed, edge id); any walk over the same graph and seed,
    in any order or thread layout, sees the same environment.
    """
    u = rng.uniform_array(seed, np.arange(g.n_edges, dtype=np.int64))
    r = np.asarray(dist.quantile(u), dtype=np.float64)
    return Environment(g, r, provenance={"dist": dist.to_json_dict(),
                                         "seed": int(seed)})


def truncate_at(env: Environment, gamma: float) -> Environment:
    """Resistances above gamma become infinite; values at gamma stay finite."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    r = np.where(env.resistances <= gamma, env.resistances, math.inf)
    prov = dict(env.provenance)
    prov["truncated_at"] = None if math.isinf(gamma) else float(gamma)
    return Environment(env.graph, r, provenance=prov)


@dataclass(frozen=True)
class ThresholdSpec:
    """Cutoff Q together with the percolation mass p = mu(0, Q]."""

    Q: float
    p: float

    def __post_init__(self):
        if not (self.Q > 0):
            raise ValueError("Q must be positive")
        if not (0 < self.p <= 1):
            raise ValueError("p must be in (0, 1]")

    @classmethod
    def from_cutoff(cls, dist: ResistanceDistribution, Q: float) -> "ThresholdSpec":
        return cls(Q=Q, p=dist.mass_at_or_below(Q))


def open_subgraph(env: Environment, spec: ThresholdSpec | float) -> np.ndarray:
    """Edge ids with resistance <= Q (the threshold subgraph).

    Accepts a bare cutoff for convenience; a ThresholdSpec additionally
    carries the percolation mass mu(0, Q].
    """
    cutoff = spec.Q if isinstance(spec, ThresholdSpec) else float(spec)
    return np.nonzero(env.resistances <= cutoff)[0]
