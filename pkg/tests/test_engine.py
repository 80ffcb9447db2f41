import numpy as np
import pytest

from resilient_optsim import engine, scenario
from resilient_optsim.observer import CostFunction


def single_agent_doc():
    return {
        "graph": {"nodes": 1, "edges": []},
        "agents": [{
            "A": [[0, 0, 1, 0], [0, 0, 0, 1], [0, 0, -2, 0], [0, 0, 0, -2]],
            "B": [[0, 0], [0, 0], [2, 0], [0, 2]], "C": [[1, 0, 0, 0], [0, 1, 0, 0]],
            "x0": [0.4, -0.2, 0.0, 0.0],
        }],
        "gains": {"rho": 0.1, "alpha": 0.5, "beta": 0.5, "eta": 0.02,
                  "gamma_delta": {"const": 1.0}, "gamma_w": {"const": 1.0}, "gamma_c": 0.1},
        "trigger": {"m0": 1.0, "v": 0.2, "c0": 1.0, "T_mei": 0.1, "d_max": 1},
        "thresholds": {"F_delta": {"const": 2.0}, "F_w": {"const": 2.0}},
        "sim": {"dt": 1e-3, "horizon": 5.0},
    }


class TestSmallScenarios:
    def test_equilibrium_is_fixed(self):
        tr = engine.run(scenario.from_dict(single_agent_doc()))
        np.testing.assert_allclose(tr.x[-1], tr.x[0], rtol=0, atol=1e-12)
        np.testing.assert_allclose(tr.delta[-1], tr.delta[0], rtol=0, atol=1e-12)
        assert tr.times[-1] == pytest.approx(5.0)

    def test_horizon_zero(self):
        doc = single_agent_doc()
        doc["sim"]["horizon"] = 0.0
        tr = engine.run(scenario.from_dict(doc))
        assert tr.times == [0.0]

    def test_two_integrators_reach_mean(self, integrator_trace):
        y = integrator_trace.outputs()
        np.testing.assert_allclose(y[:, 0], [1.0, 1.0], atol=1e-3)
        np.testing.assert_allclose(integrator_trace.optimum, [1.0])

    def test_general_cost_path_matches_quadratic(self):
        sc = scenario.from_dict(scenario.two_integrators_dict(horizon=3.0))
        fast = engine.run(sc)
        slow_costs = tuple(CostFunction.custom(c.value, c.gradient, c.lipschitz_bound) for c in sc.costs)
        slow = engine.run(scenario.Scenario(**{**sc.__dict__, "costs": slow_costs}))
        assert not engine.Simulation(scenario.Scenario(**{**sc.__dict__, "costs": slow_costs})).linear
        np.testing.assert_allclose(slow.x[-1], fast.x[-1], rtol=0, atol=1e-9)
        assert [e.t for e in slow.events] == [e.t for e in fast.events]
        np.testing.assert_allclose(slow.optimum, fast.optimum, atol=1e-6)

    def test_absurd_gains_abort(self):
        doc = scenario.two_integrators_dict(horizon=1.0)
        doc["gains"]["rho"] = 1e5
        with pytest.raises(engine.NumericalAbort) as err:
            engine.run(scenario.from_dict(doc))
        assert 0 < err.value.t <= 1.0

    def test_step_api(self):
        sim = engine.Simulation(scenario.from_dict(scenario.two_integrators_dict(horizon=0.5)))
        assert sim.t == 0.0
        for _ in range(3):
            sim.step()
        assert sim.n == 3 and sim.t == pytest.approx(3e-3)
        # seed exchange: stored samples equal the initial observer outputs
        np.testing.assert_allclose(sim.recv_yd[:, 0], [0.0, 2.0])


class TestRobotTeam:
    def test_events_well_formed(self, robot_trace):
        times = robot_trace.times
        assert all(b > a for a, b in zip(times, times[1:]))
        seen = set()
        for e in robot_trace.events:
            key = (e.sender, e.receiver)
            if e.kind == "detection":
                seen.add(key)
            if e.kind == "isolation":
                assert key in seen
        assert all(a.t <= b.t for a, b in zip(robot_trace.events, robot_trace.events[1:]))

    def test_isolation_monotone(self, robot_trace):
        cut = set()
        for e in robot_trace.events:
            if e.kind == "isolation":
                assert (e.sender, e.receiver) not in cut
                cut.add((e.sender, e.receiver))
            if e.kind == "trigger":
                assert (e.sender, e.receiver) not in cut

    def test_only_byzantine_isolated(self, robot_trace):
        senders = {e.sender for e in robot_trace.events_of("isolation")}
        assert senders == {0, 1}

    def test_bounded_states(self, robot_metrics):
        assert max(robot_metrics["state_max"].values()) < 1e3

    def test_weights_settle(self, robot_metrics):
        assert robot_metrics["c_hat_variation_last_10s"] < 1e-3

    def test_weights_nondecreasing(self, robot_trace):
        c = np.array(robot_trace.c_hat)
        assert np.all(np.diff(c, axis=0) >= 0)
        assert c.min() >= 1.0

    def test_no_attack_consensus(self, quiet_trace):
        m = engine.metrics(quiet_trace)
        assert m["isolations"] == 0
        assert m["terminal"]["consensus_norm"] < 1e-2
        assert m["terminal"]["max_normal_output_gap"] < 1e-2

    def test_tic_detects_faster_than_tec(self, robot_metrics):
        sc = scenario.robot_team(horizon=35.0)
        no_tic = engine.metrics(engine.run(scenario.Scenario(**{**sc.__dict__, "tic_enabled": False})))
        with_tic = robot_metrics["byzantine"]["1"]
        without = no_tic["byzantine"]["1"]
        assert with_tic["first_clause"] == "TIC"
        assert without["first_clause"].startswith("TEC")
        assert with_tic["detection_latency"] < without["detection_latency"]


class TestMetrics:
    def test_gap_counts(self, robot_trace, robot_metrics):
        gaps = engine.trigger_gaps(robot_trace)
        total = sum(len(v) for v in gaps.values())
        assert total == sum(robot_metrics["trigger_counts"].values()) + robot_metrics["detections"]

    def test_constant_trace_has_zero_gap(self):
        doc = single_agent_doc()
        doc["agents"][0]["cost"] = {"kind": "quadratic", "center": [0.4, -0.2]}
        m = engine.metrics(engine.run(scenario.from_dict(doc)))
        assert m["terminal"]["max_normal_output_gap"] < 1e-12
        assert m["terminal"]["kkt_norm"] < 1e-12 and m["terminal"]["consensus_norm"] == 0.0
