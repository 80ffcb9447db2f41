"""Random-graph sweep: how often (r+1)-connectivity holds, and whether r-isolatability follows.

Usage: python scripts/connectivity_sweep.py [--graphs 500] [--seed 0]
"""
import argparse
from collections import Counter

import numpy as np

from resilient_optsim.graph import Graph, r_isolatable, rs_connected

ap = argparse.ArgumentParser()
ap.add_argument("--graphs", type=int, default=500)
ap.add_argument("--seed", type=int, default=0)
args = ap.parse_args()
rng = np.random.default_rng(args.seed)

tally = Counter()
for _ in range(args.graphs):
    n = int(rng.integers(4, 9))
    r = int(rng.integers(1, 3))
    w = np.triu((rng.random((n, n)) < rng.uniform(0.3, 1.0)).astype(float), 1)
    g = Graph(n, w + w.T)
    conn = rs_connected(g, r + 1, 1)
    iso = r_isolatable(g, r)
    tally[(r, conn, iso)] += 1

print(" r  (r+1)-connected  r-isolatable  count")
for (r, conn, iso), k in sorted(tally.items()):
    print(f" {r}  {str(conn):>15}  {str(iso):>12}  {k:5d}")
bad = sum(k for (r, conn, iso), k in tally.items() if conn and not iso)
print(f"counterexamples: {bad}")
