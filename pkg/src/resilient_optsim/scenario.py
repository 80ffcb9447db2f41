"""Scenario description, JSON loading and the bundled scenarios.

A scenario file is a JSON object with the sections ``graph``, ``agents``,
``gains``, ``trigger``, ``thresholds``, ``attacks`` and ``sim``.  Agents and
nodes are numbered from 1 in files and from 0 in code.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import timefns
from .attack import AttackProfile, PowerLaw, Sinusoid, TriggerTamper, robot_team_profiles
from .detect import ThresholdSchedule, validate_thresholds
from .graph import Graph
from .observer import CostFunction
from .plant import AgentModel, ModelError, partition, robot_model
from .trigger import GainSchedule


class ScenarioFormatError(ValueError):
    """The file is missing, not JSON, or lacks required fields."""


class ValidationError(ValueError):
    """The scenario parses but is inconsistent or violates a precondition."""


@dataclass(frozen=True)
class Scenario:
    name: str
    graph: Graph
    models: tuple[AgentModel, ...]
    costs: tuple[CostFunction, ...]
    x0: tuple[np.ndarray, ...]  # partitioned coordinates
    delta0: tuple[np.ndarray, ...]
    w0: tuple[np.ndarray, ...]
    gains: GainSchedule
    eta: np.ndarray  # N x N, eta[i, j] scales c_ij
    thresholds: ThresholdSchedule
    attacks: tuple[AttackProfile, ...] = ()
    dt: float = 1e-3
    horizon: float = 80.0
    seed: int = 0
    record_every: float = 0.05
    state_bound: float = 1e3
    tic_enabled: bool = True

    @property
    def n_agents(self) -> int:
        return self.graph.node_count

    @property
    def byzantine(self) -> frozenset[int]:
        return frozenset(a.agent for a in self.attacks)

    def validate(self) -> None:
        """Raise :class:`ValidationError` on any inconsistency."""
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValidationError(f"dt must be positive, got {self.dt}")
        if not (self.horizon >= 0 and math.isfinite(self.horizon)):
            raise ValidationError(f"horizon must be nonnegative, got {self.horizon}")
        if self.record_every <= 0:
            raise ValidationError("record_every must be positive")
        n = self.n_agents
        for name, seq in (("models", self.models), ("costs", self.costs), ("x0", self.x0),
                          ("delta0", self.delta0), ("w0", self.w0)):
            if len(seq) != n:
                raise ValidationError(f"{name}: expected {n} entries, got {len(seq)}")
        qs = {m.q for m in self.models}
        if len(qs) != 1:
            raise ValidationError("all agents must share the output dimension")
        for i, m in enumerate(self.models):
            for name, v in (("x0", self.x0[i]), ("delta0", self.delta0[i]), ("w0", self.w0[i])):
                if v.shape != (m.n,):
                    raise ValidationError(f"agent {i + 1}: {name} must have length {m.n}")
        if self.eta.shape != (n, n) or np.any(self.eta[self.graph.weights > 0] <= 0):
            raise ValidationError("eta must be positive on every edge")
        for a in self.attacks:
            if not 0 <= a.agent < n:
                raise ValidationError(f"attack on unknown agent {a.agent + 1}")
        check = validate_thresholds(self.thresholds, self.gains, self.horizon)
        if not check:
            raise ValidationError(
                f"threshold F_{check.quantity} below {self.thresholds.margin} * gamma "
                f"at t={check.first_violation:.6g}"
            )


# ---------------------------------------------------------------- parsing


def _req(d: dict, key: str, where: str):
    if not isinstance(d, dict) or key not in d:
        raise ScenarioFormatError(f"{where}: missing field {key!r}")
    return d[key]


def _vec(v, where: str) -> np.ndarray:
    try:
        out = np.asarray(v, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ScenarioFormatError(f"{where}: not numeric") from exc
    if out.ndim != 1:
        raise ScenarioFormatError(f"{where}: expected a vector")
    return out


def _mat(v, where: str) -> np.ndarray:
    try:
        out = np.asarray(v, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ScenarioFormatError(f"{where}: not numeric") from exc
    if out.ndim != 2:
        raise ScenarioFormatError(f"{where}: expected a row-major matrix")
    return out


def _timefn(spec, where: str):
    try:
        return timefns.parse(spec)
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioFormatError(f"{where}: {exc}") from exc


def _parse_attack(d: dict, i: int) -> AttackProfile:
    where = f"attacks[{i}]"
    agent = int(_req(d, "agent", where)) - 1
    devs = []
    for k, s in enumerate(d.get("deviations", [])):
        w2 = f"{where}.deviations[{k}]"
        try:
            devs.append(Sinusoid(
                quantity=_req(s, "quantity", w2),
                start=float(_req(s, "start", w2)),
                end=float(s.get("end", math.inf)),
                amp=PowerLaw.parse(_req(s, "amp", w2)),
                freq=PowerLaw.parse(_req(s, "freq", w2)),
                wave=s.get("wave", "sin"),
                phase=float(s.get("phase", 0.0)),
            ))
        except (TypeError, ValueError) as exc:
            raise ScenarioFormatError(f"{w2}: {exc}") from exc
    tamper = None
    if d.get("random_triggers") is not None:
        r = d["random_triggers"]
        w2 = f"{where}.random_triggers"
        tamper = TriggerTamper(
            start=float(_req(r, "start", w2)),
            min_gap=float(_req(r, "min_gap", w2)),
            max_gap=float(_req(r, "max_gap", w2)),
            end=float(r.get("end", math.inf)),
        )
        if not 0 < tamper.min_gap <= tamper.max_gap:
            raise ValidationError(f"{w2}: need 0 < min_gap <= max_gap")
    return AttackProfile(agent=agent, deviations=tuple(devs), trigger_tamper=tamper)


def from_dict(doc: dict, *, seed: int | None = None, dt: float | None = None) -> Scenario:
    """Build a :class:`Scenario` from a parsed scenario document.

    ``seed`` and ``dt`` override the ``sim`` section when given.
    """
    if not isinstance(doc, dict):
        raise ScenarioFormatError("scenario must be a JSON object")
    g = _req(doc, "graph", "scenario")
    agents = _req(doc, "agents", "scenario")
    gains_d = _req(doc, "gains", "scenario")
    trig = _req(doc, "trigger", "scenario")
    thr = _req(doc, "thresholds", "scenario")
    sim = doc.get("sim", {})
    if not isinstance(agents, list) or not agents:
        raise ScenarioFormatError("agents: expected a nonempty list")

    n_nodes = int(g.get("nodes", len(agents)))
    if n_nodes != len(agents):
        raise ValidationError(f"graph has {n_nodes} nodes but {len(agents)} agents are defined")
    try:
        graph = Graph.from_edges([tuple(e) for e in _req(g, "edges", "graph")], node_count=n_nodes)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"graph: {exc}") from exc

    models, costs, x0, d0, w0 = [], [], [], [], []
    for i, a in enumerate(agents):
        where = f"agents[{i}]"
        A, B, C = (_mat(_req(a, k, where), f"{where}.{k}") for k in ("A", "B", "C"))
        K = a.get("K")
        F = _mat(a["F"], f"{where}.F") if "F" in a else None
        try:
            m = partition(A, B, C, K=K, mu_bar=float(a.get("mu_bar", 1.0)), F=F)
        except (ModelError, np.linalg.LinAlgError) as exc:
            raise ValidationError(f"{where}: {exc}") from exc
        x = _vec(_req(a, "x0", where), f"{where}.x0")
        d = _vec(a.get("delta0", x), f"{where}.delta0")
        w = _vec(a.get("w0", np.zeros(m.n)), f"{where}.w0")
        for name, v in (("x0", x), ("delta0", d), ("w0", w)):
            if v.shape != (m.n,):
                raise ValidationError(f"{where}.{name}: expected length {m.n}")
        cost = a.get("cost", {"kind": "quadratic"})
        if cost.get("kind", "quadratic") != "quadratic":
            raise ScenarioFormatError(f"{where}.cost: only quadratic costs can be declared in files")
        center = _vec(cost["center"], f"{where}.cost.center") if "center" in cost else C @ x
        try:
            costs.append(CostFunction.quadratic(center, float(cost.get("weight", 1.0))))
        except ValueError as exc:
            raise ValidationError(f"{where}.cost: {exc}") from exc
        models.append(m)
        x0.append(m.T @ x)
        d0.append(m.T @ d)
        w0.append(m.T @ w)

    eta_raw = _req(gains_d, "eta", "gains")
    if isinstance(eta_raw, (int, float)):
        eta = float(eta_raw) * (graph.weights > 0)
    else:
        eta = _mat(eta_raw, "gains.eta")
    eta = np.asarray(eta, dtype=float)
    c_norm = max(float(np.linalg.norm(m.C, 2)) for m in models)
    sigma = trig.get("sigma", "derive")
    s1 = s2 = None
    if sigma != "derive":
        s1 = float(_req(sigma, "sigma1_per_kappa", "trigger.sigma"))
        s2 = float(_req(sigma, "sigma2_per_kappa", "trigger.sigma"))
    try:
        gains = GainSchedule(
            alpha=float(_req(gains_d, "alpha", "gains")),
            beta=float(_req(gains_d, "beta", "gains")),
            rho=float(_req(gains_d, "rho", "gains")),
            gamma_delta=_timefn(_req(gains_d, "gamma_delta", "gains"), "gains.gamma_delta"),
            gamma_w=_timefn(_req(gains_d, "gamma_w", "gains"), "gains.gamma_w"),
            gamma_c=float(_req(gains_d, "gamma_c", "gains")),
            eta_bar=float(eta.max()) if eta.size else 0.0,
            m0=float(trig.get("m0", 1.0)),
            d_max=float(trig.get("d_max", graph.weights.astype(bool).sum(axis=1).max())),
            c_norm=c_norm,
            kappa_step=float(trig.get("v", 0.2)),
            c0=float(trig.get("c0", 1.0)),
            phi=None if trig.get("phi") is None else float(trig["phi"]),
            sigma1_per_kappa=s1,
            sigma2_per_kappa=s2,
            T_mei=float(trig.get("T_mei", 0.1)),
        )
    except (TypeError, ValueError) as exc:
        raise ScenarioFormatError(f"gains/trigger: {exc}") from exc
    if min(gains.alpha, gains.beta, gains.rho, gains.m0, gains.T_mei) <= 0:
        raise ValidationError("alpha, beta, rho, m0 and T_mei must be positive")

    thresholds = ThresholdSchedule(
        F_delta=_timefn(_req(thr, "F_delta", "thresholds"), "thresholds.F_delta"),
        F_w=_timefn(_req(thr, "F_w", "thresholds"), "thresholds.F_w"),
        margin=float(thr.get("margin", 1.05)),
    )
    attacks = tuple(_parse_attack(a, i) for i, a in enumerate(doc.get("attacks", [])))
    try:
        sc = Scenario(
            name=str(doc.get("name", "scenario")),
            graph=graph,
            models=tuple(models),
            costs=tuple(costs),
            x0=tuple(x0),
            delta0=tuple(d0),
            w0=tuple(w0),
            gains=gains,
            eta=eta,
            thresholds=thresholds,
            attacks=attacks,
            dt=float(sim.get("dt", 1e-3)) if dt is None else float(dt),
            horizon=float(sim.get("horizon", 10.0)),
            seed=int(sim.get("seed", 0)) if seed is None else int(seed),
            record_every=float(sim.get("record_every", 0.05)),
            state_bound=float(sim.get("state_bound", 1e3)),
            tic_enabled=bool(sim.get("detect_tic", True)),
        )
    except (TypeError, ValueError) as exc:
        raise ScenarioFormatError(f"sim: {exc}") from exc
    sc.validate()
    return sc


def load(path, *, seed: int | None = None, dt: float | None = None) -> Scenario:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"scenario file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioFormatError(f"{path}: invalid JSON ({exc})") from exc
    return from_dict(doc, seed=seed, dt=dt)


# ---------------------------------------------------------------- bundled scenarios

# Chosen 2-isolatable topology; node 3 has the maximum degree 5.
ROBOT_EDGES = (
    (1, 3), (1, 7), (1, 8), (2, 3), (2, 4), (2, 5), (2, 6),
    (3, 4), (3, 5), (3, 6), (4, 7), (5, 8), (6, 8), (7, 8),
)

ROBOT_POSITIONS = (
    (1.0, -0.5), (0.5, 1.0), (1.5, -1.0), (-0.5, 0.5),
    (0.5, -1.0), (1.0, 1.0), (-1.0, 1.5), (0.5, 0.5),
)

ROBOT_W0 = (
    (-0.2, -0.1, 0.0, 0.2), (-0.1, 0.2, 0.1, 0.3), (0.1, 0.2, -0.4, 0.1), (0.4, -0.2, -0.3, 0.1),
    (-0.4, 0.0, 0.2, 0.1), (0.2, 0.1, 0.0, 0.3), (0.1, -0.2, -0.2, 0.3), (0.2, 0.3, -0.1, 0.1),
)


def _profile_to_dict(p: AttackProfile) -> dict:
    out = {
        "agent": p.agent + 1,
        "deviations": [
            {
                "quantity": d.quantity, "start": d.start, "end": d.end,
                "amp": {"coef": d.amp.coef, "power": d.amp.power},
                "freq": {"coef": d.freq.coef, "power": d.freq.power},
                "wave": d.wave, "phase": d.phase,
            }
            for d in p.deviations
        ],
    }
    if p.trigger_tamper is not None:
        t = p.trigger_tamper
        out["random_triggers"] = {"start": t.start, "min_gap": t.min_gap, "max_gap": t.max_gap}
    return out


def robot_team_dict(attacks: bool = True, horizon: float = 80.0, dt: float = 1e-3, robot2_onset: float = 50.0) -> dict:
    """The eight-robot formation-to-optimum experiment as a scenario document."""
    agents = []
    for i in range(1, 9):
        m = robot_model(i)
        p = ROBOT_POSITIONS[i - 1]
        agents.append({
            "A": m.A.tolist(), "B": m.B.tolist(), "C": m.C.tolist(),
            "K": m.K.tolist(), "F": m.F.tolist(), "mu_bar": m.mu_bar,
            "x0": [p[0], p[1], 0.0, 0.0],
            "w0": list(ROBOT_W0[i - 1]),
            "cost": {"kind": "quadratic", "center": list(p), "weight": 1.0},
        })
    gamma = {"exp_decay": {"a": 1.0, "b": 0.2}}
    big_f = {"sum": [{"const": 1e-3}, {"exp_decay": {"a": 1.2, "b": 0.15}}]}
    return {
        "name": "robot_team" if attacks else "robot_team_no_attack",
        "graph": {"nodes": 8, "edges": [list(e) + [1.0] for e in ROBOT_EDGES]},
        "agents": agents,
        "gains": {
            "rho": 0.1, "alpha": 0.5, "beta": 0.5, "eta": 0.02,
            "gamma_delta": gamma, "gamma_w": gamma, "gamma_c": 0.1,
        },
        "trigger": {
            "m0": 1.0, "v": 0.2, "c0": 1.0, "T_mei": 0.1, "d_max": 5,
            "sigma": {"sigma1_per_kappa": 3.0, "sigma2_per_kappa": 0.625},
        },
        "thresholds": {"F_delta": big_f, "F_w": big_f, "margin": 1.05},
        "attacks": [_profile_to_dict(p) for p in robot_team_profiles(robot2_onset=robot2_onset)] if attacks else [],
        "sim": {"dt": dt, "horizon": horizon, "record_every": 0.05, "state_bound": 1e3},
    }


def robot_team(attacks: bool = True, horizon: float = 80.0, dt: float = 1e-3, seed: int = 0) -> Scenario:
    return from_dict(robot_team_dict(attacks=attacks, horizon=horizon, dt=dt), seed=seed)


def two_integrators_dict(horizon: float = 40.0, dt: float = 1e-3) -> dict:
    """Two single-integrator agents with costs centred at 0 and 2."""
    agent = lambda y0: {  # noqa: E731
        "A": [[0.0]], "B": [[1.0]], "C": [[1.0]], "x0": [y0],
        "cost": {"kind": "quadratic", "center": [y0], "weight": 1.0},
    }
    gamma = {"exp_decay": {"a": 1e-2, "b": 0.5}}
    return {
        "name": "two_integrators",
        "graph": {"nodes": 2, "edges": [[1, 2, 1.0]]},
        "agents": [agent(0.0), agent(2.0)],
        "gains": {"rho": 1.0, "alpha": 1.0, "beta": 1.0, "eta": 0.02,
                  "gamma_delta": gamma, "gamma_w": gamma, "gamma_c": 0.1},
        "trigger": {"m0": 1.0, "v": 0.2, "c0": 1.0, "T_mei": 0.01, "sigma": "derive"},
        "thresholds": {"F_delta": {"const": 10.0}, "F_w": {"const": 10.0}, "margin": 1.05},
        "attacks": [],
        "sim": {"dt": dt, "horizon": horizon, "record_every": 0.1},
    }
