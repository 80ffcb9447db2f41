"""Acceptance criteria, one test each; every test prints a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v`` (the lines are also
repeated in the terminal summary).
"""

import filecmp
import json

import numpy as np
import pytest
from scipy.optimize import bisect

from resilient_optsim import engine, scenario
from resilient_optsim.cli import main
from resilient_optsim.graph import Graph, r_isolatable, rs_connected
from resilient_optsim.plant import controller, controller_tracking_form, partition, verify_tracking_certificate
from resilient_optsim.scenario import ROBOT_POSITIONS
from resilient_optsim.trigger import T0, GainSchedule, activation_decay, kappa
from resilient_optsim.timefns import ExpDecay

RESULTS = []


def verdict(n, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {n:2d}. {title}: {detail}"
    RESULTS.append((n, line))
    print(line)
    assert ok, line


def test_01_optimum(robot_run):
    trace, seconds = robot_run
    target = np.array([1 / 3, 1 / 4])
    oracle = np.array(ROBOT_POSITIONS[2:]).mean(axis=0)
    y = trace.outputs()[2:]
    err = np.linalg.norm(y - target, axis=1)
    ok = np.allclose(oracle, target, atol=1e-15) and err.max() < 0.02 and seconds < 60
    verdict(1, "optimum reproduction", ok, f"max |y_i(80) - (1/3, 1/4)| = {err.max():.2e} (< 0.02), runtime {seconds:.1f}s (< 60s)")


def test_02_isolation_timeline(robot_metrics):
    b1, b2 = robot_metrics["byzantine"]["1"], robot_metrics["byzantine"]["2"]
    t1, t2 = b1["isolated_by_all_at"], b2["isolated_by_all_at"]
    first = [min(b["isolated_by"].values()) for b in (b1, b2)]
    ok = (
        t1 is not None and t2 is not None
        and 20 <= first[0] and t1 <= 25
        and 50 <= first[1] and t2 <= 60
        and b1["first_clause"] == "TIC"
    )
    verdict(2, "isolation timeline", ok,
            f"agent 1 cut by all in [{first[0]:.3f}, {t1}]s first via {b1['first_clause']}; "
            f"agent 2 cut by all in [{first[1]:.3f}, {t2}]s via {b2['first_clause']}")


def test_03_no_false_positives(quiet_trace):
    n = len(quiet_trace.events_of("isolation")) + len(quiet_trace.events_of("detection"))
    margin = quiet_trace.scenario.thresholds.margin
    verdict(3, "no false positives", n == 0 and margin == 1.05, f"{n} detections/isolations over 80s, margin {margin}")


def test_04_mei_guarantee(robot_trace):
    gaps = engine.trigger_gaps(robot_trace)
    byz = robot_trace.scenario.byzantine
    honest = [min(g) for (s, _), g in gaps.items() if s not in byz and g]
    min_gap = min(honest)
    min_m = float(np.min(robot_trace.min_m))
    ok = min_gap >= 0.10 and min_m > 0
    verdict(4, "MEI guarantee", ok, f"min honest gap {min_gap:.6f}s (>= 0.10), min m {min_m:.4f} (> 0)")


def test_05_T0_conservative():
    rng = np.random.default_rng(2024)
    worst = np.inf
    for _ in range(1000):
        s1, s2, m = rng.uniform(0.01, 20.0, size=3)
        root = bisect(lambda t: activation_decay(m, t, s1, s2), 0.0, 1e4, xtol=1e-14, maxiter=500)
        worst = min(worst, root - T0(s1, s2, m))
    g = GainSchedule(alpha=0.5, beta=0.5, rho=0.1, gamma_delta=ExpDecay(1, 0.2), gamma_w=ExpDecay(1, 0.2),
                     gamma_c=0.1, eta_bar=0.02, m0=1.0, d_max=5, sigma1_per_kappa=3.0, sigma2_per_kappa=0.625)
    slack = np.inf
    for c in rng.uniform(1.0, 2.0, size=1000):
        kap = kappa(c, g.c0, g.kappa_step)
        s1, s2 = g.sigmas(kap)
        slack = min(slack, T0(s1, s2, g.m0 / c) - g.T_hat0(kap))
    ok = worst > 0 and slack >= 0
    verdict(5, "T0 conservativeness", ok, f"min(crossing - T0) = {worst:.3e} > 0; min(T0 - T_hat0) = {slack:.3e} >= 0")


def test_06_connectivity_implies_isolatable():
    rng = np.random.default_rng(7)
    checked = nonvacuous = counter = 0
    while checked < 240:
        n = int(rng.integers(4, 9))
        r = int(rng.integers(1, 3))
        dens = rng.uniform(0.4, 1.0)
        w = np.triu((rng.random((n, n)) < dens).astype(float), 1)
        g = Graph(n, w + w.T)
        checked += 1
        if rs_connected(g, r + 1, 1):
            nonvacuous += 1
            if not r_isolatable(g, r):
                counter += 1
    ok = counter == 0 and nonvacuous > 0
    verdict(6, "connectivity implies isolatable", ok, f"{checked} graphs, {nonvacuous} (r+1)-connected, {counter} counterexamples")


def test_07_kkt(integrator_trace):
    m = engine.metrics(integrator_trace)["terminal"]
    deltas = np.array(integrator_trace.delta[-1])
    ok = m["kkt_norm"] < 1e-4 and m["consensus_norm"] < 1e-4 and np.allclose(deltas, 1.0, atol=1e-4)
    verdict(7, "optimality residuals", ok, f"kkt_norm {m['kkt_norm']:.2e}, consensus_norm {m['consensus_norm']:.2e} (< 1e-4)")


def test_08_conservation(integrator_trace, quiet_trace):
    worst = 0.0
    for tr in (integrator_trace, quiet_trace):
        w0 = [tr.w[0][s] for s in tr.agent_slices()]
        wT = [tr.w[-1][s] for s in tr.agent_slices()]
        drift = np.linalg.norm(sum(wT) - sum(w0))
        worst = max(worst, drift / (1 + sum(np.linalg.norm(v) for v in w0)))
    verdict(8, "w conservation", worst < 1e-6, f"relative drift {worst:.2e} (< 1e-6)")


def test_09_controller_forms():
    rng = np.random.default_rng(99)
    worst = 0.0
    for _ in range(1000):
        n1, p = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        n = n1 + p
        B = np.vstack([np.zeros((n1, p)), rng.normal(size=(p, p)) + 3 * np.eye(p)])
        m = partition(rng.normal(size=(n, n)), B, rng.normal(size=(2, n)), K=rng.normal(size=(p, n1)),
                      mu_bar=float(rng.uniform(0.1, 2)))
        x, d, dd = rng.normal(size=(3, n))
        u1, u2 = controller(m, x, d, dd), controller_tracking_form(m, x, d, dd)
        worst = max(worst, np.linalg.norm(u1 - u2) / max(np.linalg.norm(u1), 1e-300))
    P = 0.25 * np.eye(2)
    good = verify_tracking_certificate(np.eye(2), -np.eye(2), P, 0.5)
    bad = verify_tracking_certificate(np.eye(2), np.eye(2), P, 0.5)
    ok = worst < 1e-10 and good == {"hurwitz": True, "lmi_ok": True} and not bad["hurwitz"]
    verdict(9, "controller-form equivalence", ok, f"max rel. error {worst:.1e}; robot gains {good}; flipped K {bad}")


def test_10_determinism(tmp_path):
    doc = scenario.robot_team_dict(attacks=True, horizon=25.0)
    path = tmp_path / "sc.json"
    path.write_text(json.dumps(doc))
    outs = [tmp_path / "a", tmp_path / "b"]
    codes = [main(["simulate", "--scenario", str(path), "--out", str(o), "--seed", "42"]) for o in outs]
    names = ["states.csv", "edges.csv", "events.csv", "metrics.json"]
    _, mismatch, errors = filecmp.cmpfiles(outs[0], outs[1], names, shallow=False)
    forced = (outs[0] / "events.csv").read_text().count("attack-forced")
    ok = codes == [0, 0] and not mismatch and not errors and forced > 0
    verdict(10, "determinism", ok, f"{len(names)} files byte-identical across two seeded runs ({forced} random attacker triggers)")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v", "-s"]))
