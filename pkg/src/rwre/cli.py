"""Seeded, reproducible experiment runner.

Reports are JSON (machine-readable, sorted keys, no timestamps) plus CSV
for bulk numeric series; every report embeds the resolved configuration and
a content hash of it, so a report can be reproduced byte for byte from its
own header.  All randomness flows from --seed; trial i uses slot i of the
seed, so --threads never changes any number.

Flags mirror environment variables with the RWRE_ prefix (RWRE_SEED,
RWRE_TRIALS, RWRE_THREADS, RWRE_OUT, RWRE_MAX_N); an explicit flag wins.

Exit codes: 0 complete/PASS, 2 statistical FAIL, 3 input error,
4 capacity or non-termination.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import rng
from .construction import (ConstructionReport, ConstructionState,
                           NSearchExhausted, SearchConfig, build_staircase,
                           verify_recurrence_bound)
from .environment import (StaircaseMu, distribution_from_json_dict,
                          sample_environment)
from .graphs import (CapacityError, GraphWithSink, ParseError,
                     build_lattice_ball, build_tree, load_graph,
                     wrap_with_sink)
from .percolation import cluster_of, cluster_resistance_to_sink, percolate
from .resistance import flow_energy, solve_voltages, unit_current_flow
from .trees import (TreeSpec, branching_number, build_decay_flow,
                    critical_probability, flow_energy_on_tree, tree_flow_csv)
from .walk import estimate_return_failure, run_walk

EXIT_OK = 0
EXIT_STAT_FAIL = 2
EXIT_INPUT = 3
EXIT_CAPACITY = 4


def _env_default(var, fallback, cast):
    raw = os.environ.get(f"RWRE_{var}")
    if raw is None:
        return fallback
    return cast(raw)


def _config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def _emit(report: dict, args, name: str) -> None:
    report = dict(report)
    report["config_hash"] = _config_hash(report.get("config", {}))
    text = json.dumps(report, sort_keys=True, indent=2) + "\n"
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{name}.json").write_text(text)
    else:
        sys.stdout.write(text)


def _write_csv(text: str, args, name: str) -> None:
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{name}.csv").write_text(text)
    else:
        sys.stdout.write(text)


def parse_graph(spec: str, radius: int | None, root: int | None = None,
                sink: int | None = None) -> GraphWithSink:
    if spec in ("z1", "z2", "z3"):
        if radius is None:
            raise ValueError(f"--radius required for {spec}")
        return build_lattice_ball(int(spec[1]), radius)
    if spec.startswith("tree:"):
        params = dict(part.split("=") for part in spec[5:].split(","))
        return build_tree(int(params["b"]), int(params["depth"]))
    if spec.startswith("file:"):
        path = Path(spec[5:])
        graph = load_graph(path.read_text())
        if root is None or sink is None:
            raise ValueError("--root and --sink required for file graphs")
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        return wrap_with_sink(graph, root, sink,
                              descriptor={"kind": "file", "path": str(path),
                                          "sha256": digest,
                                          "root": root, "sink": sink})
    raise ValueError(f"unknown graph spec {spec!r}")


def graph_from_descriptor(desc: dict) -> GraphWithSink:
    if desc.get("kind") == "lattice":
        return build_lattice_ball(desc["d"], desc["n"])
    if desc.get("kind") == "tree":
        return build_tree(desc["b"], desc["depth"])
    if desc.get("kind") == "file":
        path = Path(desc["path"])
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        if digest != desc.get("sha256"):
            raise ValueError(f"graph file {path} changed since construction")
        graph = load_graph(path.read_text())
        return wrap_with_sink(graph, desc["root"], desc["sink"], desc)
    raise ValueError(f"cannot rebuild graph from descriptor {desc!r}")


def _parse_dist(text: str):
    """Inline JSON descriptor, or a path to one (bare or @-prefixed)."""
    if text.startswith("@"):
        text = Path(text[1:]).read_text()
    elif not text.lstrip().startswith("{"):
        text = Path(text).read_text()
    return distribution_from_json_dict(json.loads(text))


def _parse_radii(text: str) -> list[int]:
    if ":" in text:
        parts = [int(x) for x in text.split(":")]
        lo, hi = parts[0], parts[1]
        step = parts[2] if len(parts) > 2 else 1
        return list(range(lo, hi + 1, step))
    return [int(x) for x in text.split(",")]


def _parse_tree_spec(text: str) -> TreeSpec:
    key, _, val = text.partition("=")
    if key == "b":
        return TreeSpec.constant(int(val))
    if key == "period":
        return TreeSpec.periodic(int(x) for x in val.split(","))
    if key == "levels":
        return TreeSpec.explicit(int(x) for x in val.split(","))
    raise ValueError(f"unknown tree spec {text!r} (use b=, period=, levels=)")


def cmd_resist(args) -> int:
    dist = _parse_dist(args.dist)
    radii = _parse_radii(args.radii)
    rows = []
    for n in radii:
        g = parse_graph(args.graph, n, args.root, args.sink)
        for i in range(args.seeds):
            env_seed = rng.mix64(args.seed, i)
            env = sample_environment(g, dist, env_seed)
            sol = solve_voltages(g, env)
            if sol.disconnected:
                rows.append((n, i, math.inf, math.inf))
                continue
            flow = unit_current_flow(sol, env)
            energy = flow_energy(flow, env).energy
            rows.append((n, i, sol.effective_resistance, energy))
    csv = "radius,seed,r_eff,energy\n" + "".join(
        f"{n},{i},{r!r},{e!r}\n" for n, i, r, e in rows)
    config = {"command": "resist", "graph": args.graph, "radii": radii,
              "dist": dist.to_json_dict(), "seeds": args.seeds,
              "seed": args.seed}
    _write_csv(csv, args, "resist")
    _emit({"config": config,
           "rows": [[n, i, "inf" if math.isinf(r) else r,
                     "inf" if math.isinf(e) else e] for n, i, r, e in rows]},
          args, "resist")
    return EXIT_OK


def cmd_percolate(args) -> int:
    g = parse_graph(args.graph, args.radius, args.root, args.sink)
    rows = []
    open_total = 0
    for i in range(args.trials):
        sample = percolate(g, args.p, rng.mix64(args.seed, i))
        cluster = cluster_of(sample, g.root)
        resistance = (cluster_resistance_to_sink(sample, g.root)
                      if not args.skip_resistance else math.nan)
        open_count = int(np.sum(sample.open_mask))
        open_total += open_count
        rows.append((i, open_count, cluster.size, int(cluster.touches_sink),
                     resistance))
    frac = open_total / (args.trials * g.n_edges)
    csv = "trial,open_edges,root_cluster_size,touches_sink,resistance\n" + \
        "".join(f"{i},{o},{s},{t},{r!r}\n" for i, o, s, t, r in rows)
    config = {"command": "percolate", "graph": args.graph,
              "radius": args.radius, "p": args.p, "trials": args.trials,
              "seed": args.seed}
    _write_csv(csv, args, "percolate")
    _emit({"config": config, "open_fraction": frac,
           "touches_sink_fraction":
               sum(t for _, _, _, t, _ in rows) / args.trials},
          args, "percolate")
    return EXIT_OK


def cmd_walk(args) -> int:
    g = parse_graph(args.graph, args.radius, args.root, args.sink)
    dist = _parse_dist(args.dist)
    est = estimate_return_failure(g, dist, g.root, args.steps, args.trials,
                                  args.seed, threads=args.threads)
    config = {"command": "walk", "graph": args.graph, "radius": args.radius,
              "dist": dist.to_json_dict(), "steps": args.steps,
              "trials": args.trials, "seed": args.seed}
    report = {"config": config,
              "estimate": est.estimate, "upper_bound": est.upper_bound,
              "failures": est.failures, "isolated": est.isolated,
              "absorbed": est.absorbed, "returned": est.returned}
    if args.trace is not None:
        env = sample_environment(
            g, dist, rng.env_seed(rng.trial_seed(args.seed, 0)))
        trace = run_walk(env, g.root, args.steps,
                         rng.walk_seed(rng.trial_seed(args.seed, 0)))
        lines = ["step,vertex,edge_id"]
        lines.append(f"0,{trace.vertices[0]},")
        for t in range(1, len(trace.vertices)):
            lines.append(f"{t},{trace.vertices[t]},{trace.edge_ids[t - 1]}")
        Path(args.trace).write_text("\n".join(lines) + "\n")
    _emit(report, args, "walk")
    return EXIT_OK


def _report_to_mu_json(report: ConstructionReport) -> dict:
    d = report.mu.to_json_dict()
    d["construction"] = report.to_json_dict()
    return d


def report_from_mu_json(d: dict) -> ConstructionReport:
    c = d["construction"]
    mu = StaircaseMu(tuple(d["gammas"]), tuple(d["levels"]))
    config = SearchConfig(trials=c["config"]["trials"],
                          confidence=c["config"]["confidence"],
                          margin=c["config"]["margin"],
                          max_steps=c["config"]["max_steps"])
    states = []
    for lev in range(1, mu.k_levels + 1):
        rec = c["levels"][lev - 1]
        states.append(ConstructionState(
            k=lev, p_k=rec["p"], gamma_k=rec["gamma"], N_k=rec["N"],
            D_k=rec["D"], mu_k=StaircaseMu(mu.gammas[:lev], mu.levels[:lev]),
            degree_scan_hit_boundary=rec["degree_scan_hit_boundary"]))
    return ConstructionReport(
        graph_descriptor=c["graph"], root=c["root"],
        p_sequence=tuple(c["p_sequence"]), gamma_policy=c["gamma_policy"],
        seed=c["seed"], config=config, states=tuple(states), mu=mu)


def _print_verify_table(vr) -> None:
    print(f"level k={vr.k}  N_k={vr.N_k}  gamma_k={vr.gamma_k:g}  "
          f"gamma_next={vr.gamma_next:g}  trials={vr.trials}")
    for c in vr.checks:
        verdict = "PASS" if c.passed else "FAIL"
        print(f"  {c.name:>9}: estimate {c.estimate:.5f}  "
              f"99% CI [{c.lower_bound:.5f}, {c.upper_bound:.5f}]  "
              f"bound {c.bound:.5f}  {verdict}")
    print(f"  overall: {'PASS' if vr.passed else 'FAIL'}")


def cmd_construct_mu(args) -> int:
    g = parse_graph(args.graph, args.radius, args.root, args.sink)
    p_seq = [float(x) for x in args.p_seq.split(",")]
    config = SearchConfig(trials=args.trials, margin=args.margin,
                          max_steps=args.max_n, threads=args.threads)
    report = build_staircase(g, g.root, p_seq, args.levels, config, args.seed,
                             gamma_policy=args.gamma_policy)
    mu_json = _report_to_mu_json(report)
    _emit({"config": {"command": "construct-mu", "graph": args.graph,
                      "radius": args.radius, "levels": args.levels,
                      "p_seq": args.p_seq, "gamma_policy": args.gamma_policy,
                      "trials": args.trials, "max_n": args.max_n,
                      "seed": args.seed},
           "report": report.to_json_dict()}, args, "construct_report")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "mu.json").write_text(
            json.dumps(mu_json, sort_keys=True, indent=2) + "\n")
    failed = False
    if args.verify_trials > 0:
        for k in range(1, args.levels + 1):
            vr = verify_recurrence_bound(
                g, report.mu, k, report, args.verify_trials,
                rng.mix64(args.seed, 10_000 + k), threads=args.threads)
            _print_verify_table(vr)
            failed = failed or not vr.passed
    return EXIT_STAT_FAIL if failed else EXIT_OK


def cmd_verify(args) -> int:
    mu_json = json.loads(Path(args.mu).read_text())
    report = report_from_mu_json(mu_json)
    g = graph_from_descriptor(report.graph_descriptor)
    vr = verify_recurrence_bound(g, report.mu, args.level, report,
                                 args.trials, args.seed,
                                 threads=args.threads)
    _print_verify_table(vr)
    _emit({"config": {"command": "verify", "mu": args.mu,
                      "level": args.level, "trials": args.trials,
                      "seed": args.seed},
           "result": vr.to_json_dict()}, args, "verify")
    return EXIT_OK if vr.passed else EXIT_STAT_FAIL


def cmd_tree_dim(args) -> int:
    spec = _parse_tree_spec(args.spec)
    est = branching_number(spec, args.depth, args.tol)
    dim = math.log(est.value) if est.value > 0 else -math.inf
    report = {
        "config": {"command": "tree-dim", "spec": args.spec,
                   "depth": args.depth, "tol": args.tol},
        "br": est.value, "br_bracket": [est.lower, est.upper],
        "dim": dim,
        "p_c": critical_probability(max(dim, 0.0)),
    }
    if est.warning:
        report["warning"] = est.warning
    _emit(report, args, "tree_dim")
    return EXIT_OK


def cmd_tree_flow(args) -> int:
    spec = _parse_tree_spec(args.spec)
    flow = build_decay_flow(spec, args.rho, args.depth)
    energy = flow_energy_on_tree(flow)
    report = {
        "config": {"command": "tree-flow", "spec": args.spec,
                   "rho": args.rho, "depth": args.depth},
        "certificate": flow.to_json_dict(),
        "energy": energy.to_json_dict(),
    }
    if args.csv:
        Path(args.csv).write_text(tree_flow_csv(flow))
    _emit(report, args, "tree_flow")
    return EXIT_OK


def _add_common(p, *, trials_default=1000):
    p.add_argument("--seed", type=int,
                   default=_env_default("SEED", 1, int))
    p.add_argument("--trials", type=int,
                   default=_env_default("TRIALS", trials_default, int))
    p.add_argument("--threads", type=int,
                   default=_env_default("THREADS", 1, int))
    p.add_argument("--out", default=_env_default("OUT", None, str))


def _add_graph(p):
    p.add_argument("--graph", required=True,
                   help="z1|z2|z3|tree:b=B,depth=D|file:PATH")
    p.add_argument("--radius", type=int, default=None)
    p.add_argument("--root", type=int, default=None)
    p.add_argument("--sink", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="rwre",
        description="Random walks in random resistor environments on finite "
                    "truncations: resistance diagnostics, percolation, and "
                    "the recurrence-forcing staircase construction.")
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("resist", help="effective resistance sweeps")
    _add_graph(p)
    p.add_argument("--radii", required=True, help="lo:hi[:step] or list")
    p.add_argument("--dist", required=True, help="JSON descriptor or @file")
    p.add_argument("--seeds", type=int, default=1)
    _add_common(p)
    p.set_defaults(func=cmd_resist)

    p = sub.add_parser("percolate", help="bond percolation sampling")
    _add_graph(p)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--skip-resistance", action="store_true")
    _add_common(p, trials_default=100)
    p.set_defaults(func=cmd_percolate)

    p = sub.add_parser("walk", help="return-probability estimation")
    _add_graph(p)
    p.add_argument("--dist", required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--trace", default=None, help="write one trace CSV here")
    _add_common(p)
    p.set_defaults(func=cmd_walk)

    p = sub.add_parser("construct-mu", help="build the staircase distribution")
    _add_graph(p)
    p.add_argument("--levels", type=int, required=True)
    p.add_argument("--p-seq", required=True, help="e.g. 0.5,0.75,0.875")
    p.add_argument("--gamma-policy", choices=["dyadic", "minimal"],
                   default="dyadic")
    p.add_argument("--max-n", type=int,
                   default=_env_default("MAX_N", 1 << 18, int))
    p.add_argument("--margin", type=float, default=0.8)
    p.add_argument("--verify-trials", type=int, default=0)
    _add_common(p, trials_default=2000)
    p.set_defaults(func=cmd_construct_mu)

    p = sub.add_parser("verify", help="check the level-k event bounds")
    p.add_argument("--mu", required=True,
                   help="mu.json emitted by construct-mu")
    p.add_argument("--level", type=int, required=True)
    _add_common(p, trials_default=10_000)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("tree-dim", help="branching number and p_c")
    p.add_argument("--spec", required=True, help="b=2 | period=2,3 | levels=...")
    p.add_argument("--depth", type=int, default=14)
    p.add_argument("--tol", type=float, default=0.01)
    _add_common(p)
    p.set_defaults(func=cmd_tree_dim)

    p = sub.add_parser("tree-flow", help="equal-split decay certificate")
    p.add_argument("--spec", required=True)
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--depth", type=int, default=12)
    p.add_argument("--csv", default=None)
    _add_common(p)
    p.set_defaults(func=cmd_tree_flow)
    return top


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NSearchExhausted as exc:
        level = f" at level {exc.level}" if exc.level else ""
        print(f"non-termination{level}: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except CapacityError as exc:
        print(f"capacity error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except (ParseError, ValueError, KeyError, FileNotFoundError,
            json.JSONDecodeError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
