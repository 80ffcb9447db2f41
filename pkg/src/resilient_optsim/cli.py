"""Command-line front end.

Exit codes: 0 success, 1 missing file or malformed input, 2 validation
failure, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import graph as G
from . import scenario as S
from .engine import NumericalAbort, Simulation, write_trace
from .trigger import MEIOverrun

SEED_ENV = "RESILIENT_OPTSIM_SEED"
FINE_DT = 1e-4

EXIT_OK, EXIT_INPUT, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2, 3


def _seed(arg: int | None) -> int | None:
    if arg is not None:
        return arg
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise S.ScenarioFormatError(f"{SEED_ENV}={env!r} is not an integer")
    return None


def _dt(args) -> float | None:
    return FINE_DT if getattr(args, "paper_exact", False) else args.dt


def _summary_lines(m: dict) -> list[str]:
    term = m["terminal"]
    lines = [
        f"scenario {m['scenario']}  dt={m['dt']:g}  horizon={m['horizon']:g}  seed={m['seed']}",
        f"optimum {np.round(m['optimum'], 6).tolist()}",
        f"terminal consensus_norm={term['consensus_norm']:.3e}  kkt_norm={term['kkt_norm']:.3e}  "
        f"max normal |y - y*|={term['max_normal_output_gap']:.3e}",
        f"triggers={sum(m['trigger_counts'].values())}  detections={m['detections']}  "
        f"isolations={m['isolations']}  min honest gap={m['min_honest_gap_overall']}",
    ]
    for agent, b in m["byzantine"].items():
        lines.append(
            f"byzantine {agent}: onset {b['onset']:g}s, first detection {b['first_detection_time']} "
            f"({b['first_clause']}), isolated by all at {b['isolated_by_all_at']}"
        )
    return lines


def _execute(sc: S.Scenario, out: Path) -> dict:
    trace = Simulation(sc).run()
    return write_trace(trace, out)


def _simulate_one(path: str, out: str, dt, seed) -> tuple[int, str]:
    try:
        sc = S.load(path, seed=seed, dt=dt)
        m = _execute(sc, Path(out))
    except FileNotFoundError as exc:
        return EXIT_INPUT, str(exc)
    except S.ScenarioFormatError as exc:
        return EXIT_INPUT, f"malformed scenario: {exc}"
    except S.ValidationError as exc:
        return EXIT_INVALID, f"validation failed: {exc}"
    except (NumericalAbort, MEIOverrun) as exc:
        return EXIT_NUMERIC, f"numerical abort: {exc}"
    return EXIT_OK, "\n".join(_summary_lines(m))


def cmd_simulate(args) -> int:
    seed = _seed(args.seed)
    dt = _dt(args)
    paths = args.scenario
    outs = [args.out] if len(paths) == 1 else [str(Path(args.out) / Path(p).stem) for p in paths]
    jobs = [(p, o, dt, seed) for p, o in zip(paths, outs)]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_simulate_one, *zip(*jobs)))
    else:
        results = [_simulate_one(*j) for j in jobs]
    worst = EXIT_OK
    for (code, msg), p in zip(results, paths):
        print(msg, file=sys.stderr if code else sys.stdout)
        worst = max(worst, code)
    return worst


def cmd_validate(args) -> int:
    try:
        sc = S.load(args.scenario, dt=_dt(args))
    except FileNotFoundError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INPUT
    except S.ScenarioFormatError as exc:
        print(f"malformed scenario: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except S.ValidationError as exc:
        print(f"validation failed: {exc}", file=sys.stderr)
        return EXIT_INVALID
    print(f"ok: {sc.name}, {sc.n_agents} agents, {len(sc.graph.edges())} edges, "
          f"{len(sc.attacks)} attack profiles, T_MEI bound at c0 = {sc.gains.T_hat0(sc.gains.c0 + sc.gains.kappa_step):.6g}s")
    return EXIT_OK


def parse_edges(text: str) -> list[tuple]:
    """Edges from ``"1-2,2-3"``, ``"1 2; 2 3"`` or one ``i j [w]`` per line (1-based)."""
    edges = []
    for chunk in text.replace(";", "\n").replace(",", "\n").splitlines():
        chunk = chunk.split("#", 1)[0].strip()
        if not chunk:
            continue
        parts = chunk.replace("-", " ").split()
        if len(parts) not in (2, 3):
            raise ValueError(f"malformed edge {chunk!r}")
        try:
            i, j = int(parts[0]), int(parts[1])
            edges.append((i, j) if len(parts) == 2 else (i, j, float(parts[2])))
        except ValueError:
            raise ValueError(f"malformed edge {chunk!r}") from None
    if not edges:
        raise ValueError("no edges given")
    return edges


def graph_report(g: G.Graph, r: int, s: int) -> dict:
    summary = G.laplacian(g)
    rs = G.rs_connected(g, r, s) if g.node_count >= 2 else False
    iso_level = r - 1
    iso = G.r_isolatable(g, iso_level) if iso_level < g.node_count else False
    implication = "witnessed" if (rs and iso) else ("vacuous" if not rs else "VIOLATED")
    return {
        "nodes": g.node_count,
        "edges": len(g.edges()),
        "lambda2": summary.lambda2,
        "connected": summary.is_connected,
        "max_degree": summary.max_degree,
        "rs_connected": rs,
        "isolatable_level": iso_level,
        "isolatable": iso,
        "implication": implication,
    }


def cmd_graph_check(args) -> int:
    src = args.edges
    try:
        text = Path(src).read_text() if Path(src).is_file() else src
        g = G.Graph.from_edges(parse_edges(text))
    except (OSError, ValueError) as exc:
        print(f"malformed edges: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if args.r < 1 or args.s < 1:
        print("r and s must be positive", file=sys.stderr)
        return EXIT_INVALID
    rep = graph_report(g, args.r, args.s)
    print(f"nodes={rep['nodes']} edges={rep['edges']} max_degree={rep['max_degree']}")
    print(f"lambda2={rep['lambda2']:.6f} connected={str(rep['connected']).lower()}")
    print(f"({args.r},{args.s})-connected: {str(rep['rs_connected']).lower()}")
    print(f"{rep['isolatable_level']}-isolatable: {str(rep['isolatable']).lower()}")
    print(f"{args.r}-connected implies {rep['isolatable_level']}-isolatable: {rep['implication']}")
    return EXIT_OK


PLOT_SCRIPT = '''"""Render figures from the CSV trace in this directory (needs matplotlib)."""
import csv
import sys
from collections import defaultdict
from pathlib import Path

import matplotlib.pyplot as plt

here = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).parent


def rows(name):
    with open(here / name) as fh:
        return list(csv.DictReader(fh))


states = rows("states.csv")
edges = rows("edges.csv")
events = rows("events.csv")
by_agent = defaultdict(list)
for r in states:
    by_agent[int(r["agent"])].append(r)


def series(agent_rows, col):
    return [float(r["t"]) for r in agent_rows], [float(r[col]) for r in agent_rows]


for prefix, title in (("y", "outputs"), ("delta", "observer states"), ("w", "integral states")):
    fig, axes = plt.subplots(2, 1, sharex=True, figsize=(8, 6))
    for k, ax in enumerate(axes):
        for a, rs in sorted(by_agent.items()):
            t, v = series(rs, f"{prefix}{k + 1}")
            ax.plot(t, v, label=f"agent {a}")
        ax.set_ylabel(f"{prefix}{k + 1}")
    axes[0].legend(ncol=4, fontsize=7)
    axes[-1].set_xlabel("t [s]")
    fig.suptitle(title)
    fig.savefig(here / f"{prefix}.png", dpi=120)

fig, ax = plt.subplots(figsize=(8, 4))
pairs = sorted({(int(e["sender"]), int(e["receiver"])) for e in events if e["kind"] == "trigger"})
for n, p in enumerate(pairs):
    ts = [float(e["t"]) for e in events if e["kind"] == "trigger" and (int(e["sender"]), int(e["receiver"])) == p]
    ax.plot(ts, [n] * len(ts), "|", markersize=4)
for e in events:
    if e["kind"] == "isolation":
        ax.axvline(float(e["t"]), color="r", lw=0.5)
ax.set_yticks(range(len(pairs)), [f"{s}->{r}" for s, r in pairs], fontsize=5)
ax.set_xlabel("t [s]")
ax.set_title("trigger instants (red: isolations)")
fig.savefig(here / "triggers.png", dpi=120)

for col in ("c_hat", "m"):
    fig, ax = plt.subplots(figsize=(8, 4))
    per = defaultdict(list)
    for r in edges:
        per[(r["i"], r["j"])].append((float(r["t"]), float(r[col])))
    for key, pts in sorted(per.items()):
        ax.plot([p[0] for p in pts], [p[1] for p in pts], lw=0.8)
    ax.set_xlabel("t [s]")
    ax.set_ylabel(col)
    fig.savefig(here / f"{col}.png", dpi=120)
'''


def cmd_robot_example(args) -> int:
    out = Path(args.out)
    try:
        doc = S.robot_team_dict(attacks=not args.no_attack, horizon=args.horizon,
                                dt=FINE_DT if args.paper_exact else args.dt)
        seed = _seed(args.seed)
        sc = S.from_dict(doc, seed=seed)
        m = _execute(sc, out)
    except S.ScenarioFormatError as exc:
        print(f"malformed input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except S.ValidationError as exc:
        print(f"validation failed: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (NumericalAbort, MEIOverrun) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    doc["sim"]["seed"] = sc.seed
    (out / "scenario.json").write_text(json.dumps(doc, indent=2) + "\n")
    (out / "plot_figures.py").write_text(PLOT_SCRIPT)
    print("\n".join(_summary_lines(m)))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="resilient-optsim", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="verb", required=True)

    sim = sub.add_parser("simulate", help="run one or more scenario files")
    sim.add_argument("--scenario", nargs="+", required=True)
    sim.add_argument("--out", required=True)
    sim.add_argument("--dt", type=float, default=None)
    sim.add_argument("--seed", type=int, default=None, help=f"defaults to ${SEED_ENV}, then the file")
    sim.add_argument("--paper-exact", action="store_true", help=f"use dt = {FINE_DT:g}")
    sim.add_argument("--jobs", type=int, default=1)
    sim.set_defaults(func=cmd_simulate)

    gc = sub.add_parser("graph-check", help="connectivity and robustness report")
    gc.add_argument("--edges", required=True, help="edge file or inline list such as '1-2,2-3'")
    gc.add_argument("--r", type=int, default=1)
    gc.add_argument("--s", type=int, default=1)
    gc.set_defaults(func=cmd_graph_check)

    pe = sub.add_parser("paper-example", help="run the bundled eight-robot scenario")
    pe.add_argument("--out", required=True)
    pe.add_argument("--no-attack", action="store_true")
    pe.add_argument("--paper-exact", action="store_true", help=f"use dt = {FINE_DT:g}")
    pe.add_argument("--dt", type=float, default=1e-3)
    pe.add_argument("--horizon", type=float, default=80.0)
    pe.add_argument("--seed", type=int, default=None, help=f"defaults to ${SEED_ENV}, then 0")
    pe.set_defaults(func=cmd_robot_example)

    va = sub.add_parser("validate", help="parse and check a scenario without running it")
    va.add_argument("--scenario", required=True)
    va.add_argument("--dt", type=float, default=None)
    va.add_argument("--paper-exact", action="store_true")
    va.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except S.ScenarioFormatError as exc:
        print(f"malformed input: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
