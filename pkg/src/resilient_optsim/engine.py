"""Fixed-step simulation of the whole network: plants, observers, triggers,
detection and attacks.

Each step integrates the continuous flow with RK4 while every sampled
quantity is held, then advances the activation variables exactly, then
evaluates triggers and processes receptions in channel order.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import block_diag
from scipy.optimize import minimize

from .attack import injection_map, next_malicious_trigger, tampered_sample
from .detect import Decision, LocalViews, badi_on_receive
from .observer import optimality_residual
from .scenario import Scenario
from .trigger import ChannelState, MEIOverrun, kappa

TRIGGER_CLAUSES = ("f1", "f2", "f3")


class NumericalAbort(RuntimeError):
    def __init__(self, message: str, t: float):
        super().__init__(f"t={t:.6f}: {message}")
        self.t = t


@dataclass(frozen=True)
class Event:
    t: float
    kind: str  # seed | trigger | detection | isolation | mei_clamp
    sender: int
    receiver: int
    clause: str = ""
    value: float | None = None
    threshold: float | None = None


@dataclass
class SimulationTrace:
    scenario: Scenario
    channels: list[tuple[int, int]]
    times: list[float] = field(default_factory=list)
    x: list[np.ndarray] = field(default_factory=list)  # stacked partitioned states
    delta: list[np.ndarray] = field(default_factory=list)
    w: list[np.ndarray] = field(default_factory=list)
    c_hat: list[np.ndarray] = field(default_factory=list)  # receiver's copy per channel
    m: list[np.ndarray] = field(default_factory=list)
    consensus_norm: list[float] = field(default_factory=list)
    kkt_norm: list[float] = field(default_factory=list)
    output_gap: list[np.ndarray] = field(default_factory=list)
    events: list[Event] = field(default_factory=list)
    trigger_count: np.ndarray | None = None
    min_m: np.ndarray | None = None
    optimum: np.ndarray | None = None
    state_max: dict = field(default_factory=dict)

    def agent_slices(self) -> list[slice]:
        out, o = [], 0
        for mdl in self.scenario.models:
            out.append(slice(o, o + mdl.n))
            o += mdl.n
        return out

    def outputs(self, k: int = -1) -> np.ndarray:
        """Physical outputs ``y_i = C_i x_i`` at record ``k``, shape ``(N, q)``."""
        x = self.x[k]
        return np.array([mdl.C @ x[s] for mdl, s in zip(self.scenario.models, self.agent_slices())])

    def events_of(self, kind: str) -> list[Event]:
        return [e for e in self.events if e.kind == kind]


def _optimum(sc: Scenario, normal: list[int]) -> np.ndarray:
    costs = [sc.costs[i] for i in normal]
    if all(c.kind == "quadratic" for c in costs):
        wts = np.array([c.weight for c in costs])
        return (wts[:, None] * np.array([c.center for c in costs])).sum(axis=0) / wts.sum()
    q = sc.models[0].q
    res = minimize(lambda y: sum(c.value(y) for c in costs), np.zeros(q),
                   jac=lambda y: sum(c.gradient(y) for c in costs), method="BFGS", tol=1e-12)
    return res.x


class Simulation:
    """Owns the world state of one run.  Call :meth:`step` or :meth:`run`."""

    def __init__(self, scenario: Scenario):
        sc = scenario
        sc.validate()
        self.sc = sc
        self.dt = sc.dt
        self.g = sc.gains
        N = sc.n_agents
        models = sc.models
        self.q = q = models[0].q
        self.sizes = [m.n for m in models]
        self.slices = []
        o = 0
        for n in self.sizes:
            self.slices.append(slice(o, o + n))
            o += n
        nt = o
        self.nt = nt

        # closed loop: x' = Mx x + Md delta + Mdd delta'
        self.Cblk = block_diag(*[m.C for m in models])
        Mx = block_diag(*[m.A + m.B @ m.B_hat @ m.S for m in models])
        Md = block_diag(*[-m.B @ m.B_hat @ m.D[:, : m.n] for m in models])
        Mdd = block_diag(*[-m.B @ m.B_hat @ m.D[:, m.n:] for m in models])
        self.Mx, self.Md, self.Mdd = Mx, Md, Mdd
        self.linear = all(c.kind == "quadratic" for c in sc.costs)
        rho = self.g.rho
        if self.linear:
            G = block_diag(*[-2 * rho * c.weight * m.C.T @ m.C for m, c in zip(models, sc.costs)])
            self.g0 = np.concatenate([2 * rho * c.weight * m.C.T @ c.center for m, c in zip(models, sc.costs)])
            L = np.block([[Mx, Md + Mdd @ G], [np.zeros((nt, nt)), G]])
            hL = self.dt * L
            eye = np.eye(2 * nt)
            p1 = hL
            p2 = p1 @ hL
            p3 = p2 @ hL
            p4 = p3 @ hL
            # RK4 applied to z' = L z + b with b held over the step
            self.Phi = eye + p1 + p2 / 2 + p3 / 6 + p4 / 24
            self.Psi = self.dt * (eye + p1 / 2 + p2 / 6 + p3 / 24)

        # channels, canonical order (sender, receiver)
        chans = []
        for i, j, _ in sc.graph.edges():
            chans += [(i, j), (j, i)]
        chans.sort()
        self.channels = chans
        K = len(chans)
        index = {c: k for k, c in enumerate(chans)}
        self.snd = np.array([s for s, _ in chans], dtype=int)
        self.rcv = np.array([r for _, r in chans], dtype=int)
        self.rev = np.array([index[(r, s)] for s, r in chans], dtype=int)
        W = sc.graph.weights
        self.a_w = np.array([W[r, s] for s, r in chans])
        self.eta_k = np.array([sc.eta[r, s] for s, r in chans])
        self.R = np.zeros((N, K))
        self.R[self.rcv, np.arange(K)] = 1.0

        self.views = LocalViews(W)
        self.X = np.concatenate(sc.x0).astype(float)
        self.D = np.concatenate(sc.delta0).astype(float)
        self.W = np.concatenate(sc.w0).astype(float)
        self.c_local = np.full(K, self.g.c0)
        self.chat = np.full(K, self.g.c0)
        self.used = np.ones(K, dtype=bool)
        self.sending = np.ones(K, dtype=bool)
        self.last_step = np.zeros(K, dtype=int)
        self.T_mei = np.full(K, self.g.T_mei)
        self.min_steps = np.zeros(K, dtype=int)
        self.m = np.zeros(K)
        self.s1 = np.ones(K)
        self.s2 = np.ones(K)
        self.count = np.zeros(K, dtype=int)
        self.min_m = np.full(K, np.inf)
        self.recv_d = [None] * K
        self.recv_w = [None] * K
        self.recv_yd = np.zeros((K, q))
        self.recv_yw = np.zeros((K, q))
        self.sent_yd = np.zeros((K, q))
        self.sent_yw = np.zeros((K, q))
        self._bound_cache: dict[float, float] = {}

        # attacks
        self.profiles = {a.agent: a for a in sc.attacks}
        self.lifts = {a.agent: injection_map(models[a.agent].C) for a in sc.attacks}
        self.forced_chans = {a.agent: [k for k in range(K) if self.snd[k] == a.agent] for a in sc.attacks}
        self.next_forced = np.full(K, np.nan)
        self.forced_mode = np.zeros(K, dtype=bool)
        self.rng = np.random.default_rng(sc.seed)

        self.n = 0
        self.record_stride = max(1, int(round(sc.record_every / self.dt)))
        self.n_steps = int(round(sc.horizon / self.dt))
        self.normal = [i for i in range(N) if i not in self.profiles]
        self.trace = SimulationTrace(scenario=sc, channels=chans)
        self.trace.optimum = _optimum(sc, self.normal)
        self._state_max = {"x": 0.0, "delta": 0.0, "w": 0.0}
        self._dirty = True

        for k in range(K):
            self._deliver(k, 0, clause="seed")
        self._refresh_coupling()
        self._record()

    # ------------------------------------------------------------ helpers

    @property
    def t(self) -> float:
        return self.n * self.dt

    def _mei_bound(self, c_hat: float) -> float:
        kap = kappa(c_hat, self.g.c0, self.g.kappa_step)
        if kap not in self._bound_cache:
            self._bound_cache[kap] = self.g.T_hat0(kap)
        return self._bound_cache[kap]

    def _wire(self, k: int, t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """True and transmitted samples of the sender of channel ``k``."""
        s, r = self.channels[k]
        d = self.D[self.slices[s]].copy()
        w = self.W[self.slices[s]].copy()
        if s in self.profiles:
            dw, ww = tampered_sample(self.profiles[s], r + 1, t, d, w, self.sc.models[s].C, self.lifts[s])
            return d, w, dw, ww
        return d, w, d, w

    def _deliver(self, k: int, step: int, clause: str) -> None:
        """Accept a sample on channel ``k`` at ``step`` and reset its activation variable."""
        s, r = self.channels[k]
        t = step * self.dt
        d, w, dw, ww = self._wire(k, t)
        C = self.sc.models[s].C
        self.recv_d[k], self.recv_w[k] = dw, ww
        self.recv_yd[k], self.recv_yw[k] = C @ dw, C @ ww
        self.sent_yd[k], self.sent_yw[k] = C @ d, C @ w
        kr = self.rev[k]
        self.chat[k] = self.c_local[k]
        if self.used[kr]:
            self.chat[kr] = self.c_local[kr]
        self.last_step[k] = step
        if clause != "seed":
            self.count[k] += 1
        c_hat = self.chat[k]
        self.m[k] = self.g.m0 / c_hat
        self.s1[k], self.s2[k] = self.g.channel_sigmas(c_hat)
        requested = self.g.T_mei
        bound = self._mei_bound(c_hat)
        if requested > bound:
            self.trace.events.append(Event(t, "mei_clamp", s, r, "", requested, bound))
            requested = bound
        self.T_mei[k] = requested
        self.min_steps[k] = int(math.floor(requested / self.dt + 1e-9)) + 1
        self._dirty = True

    def _refresh_coupling(self) -> None:
        gain = self.used * self.a_w
        diff_d = self.sent_yd[self.rev] - self.recv_yd
        diff_w = self.sent_yw[self.rev] - self.recv_yw
        cd = (self.R @ ((gain * self.chat)[:, None] * diff_d)).ravel()
        cw = (self.R @ (gain[:, None] * diff_w)).ravel()
        a, b = self.g.alpha, self.g.beta
        self.h = a * (self.Cblk.T @ cd)
        self.gc = -self.h - b * (self.Cblk.T @ cw)
        self.crate = self.used * self.eta_k * np.einsum("ij,ij->i", diff_d, diff_d)
        if self.linear:
            u = self.g0 + self.gc
            self.drive = self.Psi @ np.concatenate([self.Mdd @ u, u])
        self._dirty = False

    def _rates(self, X: np.ndarray, D: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        dd = self.gc.copy()
        rho = self.g.rho
        for m, c, s in zip(self.sc.models, self.sc.costs, self.slices):
            dd[s] -= rho * m.C.T @ c.gradient(m.C @ D[s])
        return self.Mx @ X + self.Md @ D + self.Mdd @ dd, dd

    def _integrate(self) -> None:
        dt = self.dt
        if self.linear:
            z = self.Phi @ np.concatenate([self.X, self.D]) + self.drive
            self.X, self.D = z[: self.nt], z[self.nt:]
        else:
            X, D = self.X, self.D
            k1x, k1d = self._rates(X, D)
            k2x, k2d = self._rates(X + dt / 2 * k1x, D + dt / 2 * k1d)
            k3x, k3d = self._rates(X + dt / 2 * k2x, D + dt / 2 * k2d)
            k4x, k4d = self._rates(X + dt * k3x, D + dt * k3d)
            self.X = X + dt / 6 * (k1x + 2 * k2x + 2 * k3x + k4x)
            self.D = D + dt / 6 * (k1d + 2 * k2d + 2 * k3d + k4d)
        self.W = self.W + dt * self.h
        self.c_local = self.c_local + dt * self.crate

    def _advance_activation(self, t_start: float) -> None:
        ends = self.last_step * self.dt + self.T_mei
        span = np.clip(ends - t_start, 0.0, self.dt)
        live = span > 0
        if np.any(live):
            ratio = self.s2[live] / self.s1[live]
            self.m[live] = np.exp(-self.s1[live] * span[live]) * (self.m[live] + ratio) - ratio
        watched = self.sending
        np.minimum(self.min_m, np.where(watched, self.m, np.inf), out=self.min_m)
        bad = watched & (self.m <= 0)
        if np.any(bad):
            k = int(np.flatnonzero(bad)[0])
            s, r = self.channels[k]
            raise MEIOverrun(f"t={t_start + self.dt:.6f}: activation variable of {s + 1}->{r + 1} reached {self.m[k]:g}")

    def _schedule_forced(self, k: int, t_now: float) -> None:
        prof = self.profiles[self.snd[k]]
        honest_next = t_now + prof.trigger_tamper.max_gap
        self.next_forced[k] = next_malicious_trigger(prof, t_now, honest_next, self.rng)

    def _fired_channels(self, step: int) -> list[tuple[int, str, float | None, float | None]]:
        t = step * self.dt
        fired = []
        # attacker channels ignore the trigger law while tampering is active
        self.forced_mode[:] = False
        for agent, ks in self.forced_chans.items():
            tamper = self.profiles[agent].trigger_tamper
            if tamper is None or not tamper.active(t):
                continue
            for k in ks:
                self.forced_mode[k] = True
                if not self.sending[k]:
                    continue
                if np.isnan(self.next_forced[k]):
                    self._schedule_forced(k, t)
                elif t >= self.next_forced[k] - 1e-12:
                    fired.append((k, "attack-forced", None, None))
                    self._schedule_forced(k, t)
        eligible = self.sending & ~self.forced_mode & (step - self.last_step >= self.min_steps)
        if np.any(eligible):
            Yd = (self.Cblk @ self.D).reshape(-1, self.q)
            Yw = (self.Cblk @ self.W).reshape(-1, self.q)
            ed = self.sent_yd - Yd[self.snd]
            ew = self.sent_yw - Yw[self.snd]
            kr = self.rev
            gd = float(self.g.gamma_delta(t))
            gw = float(self.g.gamma_w(t))
            f1 = self.chat[kr] * np.einsum("ij,ij->i", ed, ed) - gd
            f2 = np.einsum("ij,ij->i", ew, ew) - gw
            f3 = self.c_local[kr] - self.chat[kr] - self.g.gamma_c
            hit = eligible & ((f1 > 0) | (f2 > 0) | (f3 > 0))
            for k in np.flatnonzero(hit):
                if f1[k] > 0:
                    fired.append((int(k), "f1", float(f1[k]), gd))
                elif f2[k] > 0:
                    fired.append((int(k), "f2", float(f2[k]), gw))
                else:
                    fired.append((int(k), "f3", float(f3[k]), self.g.gamma_c))
        fired.sort(key=lambda e: e[0])
        return fired

    def _receive(self, k: int, step: int, clause: str, value, level) -> None:
        s, r = self.channels[k]
        t = step * self.dt
        self.trace.events.append(Event(t, "trigger", s, r, clause, value, level))
        _, _, dw, ww = self._wire(k, t)
        view = ChannelState(
            sender=s, receiver=r,
            last_trigger_time=self.last_step[k] * self.dt,
            delta_hat=self.recv_d[k], w_hat=self.recv_w[k],
            c_hat=self.chat[k], T_mei=self.T_mei[k] if self.sc.tic_enabled else -math.inf,
        )
        verdict = badi_on_receive(view, t, dw, ww, self.chat[k], self.sc.thresholds, self.sc.models[s].C)
        if verdict.decision is Decision.ACCEPT:
            self._deliver(k, step, clause)
            return
        self.trace.events.append(
            Event(t, "detection", s, r, verdict.decision.clause, verdict.measured, verdict.threshold)
        )
        self.views.isolate(r, s)
        self.used[k] = False
        self.sending[k] = False
        self.sending[self.rev[k]] = False
        self.trace.events.append(Event(t, "isolation", s, r, verdict.decision.clause))
        self._dirty = True

    def _record(self) -> None:
        tr = self.trace
        tr.times.append(self.t)
        tr.x.append(self.X.copy())
        tr.delta.append(self.D.copy())
        tr.w.append(self.W.copy())
        tr.c_hat.append(self.chat.copy())
        tr.m.append(self.m.copy())
        models, costs = self.sc.models, self.sc.costs
        res = optimality_residual(
            [self.D[self.slices[i]] for i in self.normal],
            [models[i] for i in self.normal],
            [costs[i] for i in self.normal],
        )
        tr.consensus_norm.append(res["consensus_norm"])
        tr.kkt_norm.append(res["kkt_norm"])
        y = np.array([m.C @ self.X[s] for m, s in zip(models, self.slices)])
        tr.output_gap.append(np.linalg.norm(y - tr.optimum, axis=1))

    def _check_state(self) -> None:
        for name, v in (("x", self.X), ("delta", self.D), ("w", self.W)):
            if not np.all(np.isfinite(v)):
                raise NumericalAbort(f"non-finite {name}", self.t)
            top = float(np.max(np.abs(v))) if v.size else 0.0
            if top > self._state_max[name]:
                self._state_max[name] = top
            if top > self.sc.state_bound:
                raise NumericalAbort(f"|{name}| = {top:.3g} exceeds bound {self.sc.state_bound:g}", self.t)

    # ------------------------------------------------------------ public

    def step(self) -> None:
        if self._dirty:
            self._refresh_coupling()
        t_start = self.t
        self._integrate()
        self._advance_activation(t_start)
        self.n += 1
        self._check_state()
        for k, clause, value, level in self._fired_channels(self.n):
            if self.sending[k]:
                self._receive(k, self.n, clause, value, level)
        if self.n % self.record_stride == 0 or self.n == self.n_steps:
            self._record()

    def run(self) -> SimulationTrace:
        while self.n < self.n_steps:
            self.step()
        return self.finish()

    def finish(self) -> SimulationTrace:
        tr = self.trace
        tr.trigger_count = self.count.copy()
        tr.min_m = self.min_m.copy()
        tr.state_max = dict(self._state_max)
        return tr


def run(scenario: Scenario) -> SimulationTrace:
    return Simulation(scenario).run()


# ---------------------------------------------------------------- metrics


def trigger_gaps(trace: SimulationTrace) -> dict[tuple[int, int], list[float]]:
    """Inter-trigger gaps per channel; the seed exchange at t = 0 counts as a trigger."""
    gaps = {c: [] for c in trace.channels}
    last = {c: 0.0 for c in trace.channels}
    for e in trace.events:
        if e.kind == "trigger":
            key = (e.sender, e.receiver)
            gaps[key].append(e.t - last[key])
            last[key] = e.t
    return gaps


def metrics(trace: SimulationTrace) -> dict:
    sc = trace.scenario
    N = sc.n_agents
    byz = sorted(sc.byzantine)
    normal = [i for i in range(N) if i not in sc.byzantine]
    lab = lambda c: f"{c[0] + 1}->{c[1] + 1}"  # noqa: E731

    gaps = trigger_gaps(trace)
    honest = [c for c in trace.channels if c[0] not in sc.byzantine]
    honest_min = {lab(c): min(gaps[c]) for c in honest if gaps[c]}

    by_agent = {}
    for b in byz:
        prof = next(a for a in sc.attacks if a.agent == b)
        onset = prof.active_window[0]
        dets = [e for e in trace.events if e.kind == "detection" and e.sender == b]
        nbrs = set(np.flatnonzero(sc.graph.weights[b] > 0).tolist())
        cut = {}
        for e in trace.events:
            if e.kind == "isolation" and e.sender == b and e.receiver not in cut:
                cut[e.receiver] = e.t
        full = max(cut.values()) if nbrs and set(cut) >= nbrs else None
        by_agent[str(b + 1)] = {
            "onset": onset,
            "first_detection_time": dets[0].t if dets else None,
            "first_clause": dets[0].clause if dets else None,
            "detection_latency": (dets[0].t - onset) if dets else None,
            "isolated_by_all_at": full,
            "isolated_by": {str(r + 1): cut[r] for r in sorted(cut)},
        }

    tv = 0.0
    if trace.times:
        t_end = trace.times[-1]
        idx = next(i for i, t in enumerate(trace.times) if t >= t_end - 10.0 - 1e-9)
        surviving = [k for k, (s, r) in enumerate(trace.channels) if s in normal and r in normal]
        if surviving:
            tv = float(np.max(np.abs(trace.c_hat[-1][surviving] - trace.c_hat[idx][surviving])))

    gap_T = trace.output_gap[-1]
    return {
        "scenario": sc.name,
        "dt": sc.dt,
        "horizon": sc.horizon,
        "seed": sc.seed,
        "optimum": [float(v) for v in trace.optimum],
        "terminal": {
            "t": trace.times[-1],
            "consensus_norm": trace.consensus_norm[-1],
            "kkt_norm": trace.kkt_norm[-1],
            "output_gap": {str(i + 1): float(gap_T[i]) for i in range(N)},
            "max_normal_output_gap": float(max(gap_T[i] for i in normal)) if normal else 0.0,
        },
        "trigger_counts": {lab(c): int(n) for c, n in zip(trace.channels, trace.trigger_count)},
        "min_honest_gap": honest_min,
        "min_honest_gap_overall": min(honest_min.values()) if honest_min else None,
        "min_activation": float(np.min(trace.min_m)) if len(trace.min_m) else None,
        "byzantine": by_agent,
        "detections": len(trace.events_of("detection")),
        "isolations": len(trace.events_of("isolation")),
        "mei_clamps": len(trace.events_of("mei_clamp")),
        "state_max": trace.state_max,
        "c_hat_variation_last_10s": tv,
    }


# ---------------------------------------------------------------- output


def _f(v) -> str:
    if v is None:
        return ""
    return repr(float(v))


def write_trace(trace: SimulationTrace, out_dir) -> dict:
    """Write ``states.csv``, ``edges.csv``, ``events.csv`` and ``metrics.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sc = trace.scenario
    nmax = max(m.n for m in sc.models)
    q = sc.models[0].q
    slices = trace.agent_slices()
    with open(out / "states.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["t", "agent"]
                    + [f"x{k + 1}" for k in range(nmax)] + [f"y{k + 1}" for k in range(q)]
                    + [f"delta{k + 1}" for k in range(nmax)] + [f"w{k + 1}" for k in range(nmax)])
        pad = lambda v: [_f(a) for a in v] + [""] * (nmax - len(v))  # noqa: E731
        for r, t in enumerate(trace.times):
            for i, (m, s) in enumerate(zip(sc.models, slices)):
                x, d, w = trace.x[r][s], trace.delta[r][s], trace.w[r][s]
                # report in the user's coordinates
                wr.writerow([_f(t), i + 1] + pad(m.T.T @ x) + [_f(a) for a in m.C @ x]
                            + pad(m.T.T @ d) + pad(m.T.T @ w))
    with open(out / "edges.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["t", "i", "j", "c_hat", "m"])
        for r, t in enumerate(trace.times):
            for k, (s, rc) in enumerate(trace.channels):
                wr.writerow([_f(t), rc + 1, s + 1, _f(trace.c_hat[r][k]), _f(trace.m[r][k])])
    with open(out / "events.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["t", "kind", "sender", "receiver", "clause", "value", "threshold"])
        for e in trace.events:
            wr.writerow([_f(e.t), e.kind, e.sender + 1, e.receiver + 1, e.clause, _f(e.value), _f(e.threshold)])
    summary = metrics(trace)
    (out / "metrics.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary
