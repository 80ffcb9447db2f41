"""Receiver-side Byzantine detection and private isolation.

A receiver checks every incoming trigger against two conditions: the gap
since the previous accepted trigger must be at least the channel's MEI
(interval check), and the jump between consecutive received samples must
stay under time-varying thresholds (error check).  The interval check runs
first.  Failing either severs the edge in the receiver's own view only.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .trigger import ChannelState, GainSchedule

TIME_TOL = 1e-12


class Decision(str, Enum):
    ACCEPT = "accept"
    ISOLATE_TIC = "isolate_TIC"
    ISOLATE_TEC_DELTA = "isolate_TEC_delta"
    ISOLATE_TEC_W = "isolate_TEC_w"

    @property
    def isolates(self) -> bool:
        return self is not Decision.ACCEPT

    @property
    def clause(self) -> str:
        return {"accept": "", "isolate_TIC": "TIC", "isolate_TEC_delta": "TEC_delta", "isolate_TEC_w": "TEC_w"}[self.value]


@dataclass(frozen=True)
class ThresholdSchedule:
    F_delta: object
    F_w: object
    margin: float = 1.05


@dataclass(frozen=True)
class Verdict:
    decision: Decision
    t: float
    measured: float = 0.0
    threshold: float = 0.0


def badi_on_receive(
    channel: ChannelState,
    t_new: float,
    delta_new,
    w_new,
    c_at_last: float,
    sched: ThresholdSchedule,
    C_sender: np.ndarray,
) -> Verdict:
    """Judge one reception against the previously accepted one on ``channel``."""
    gap = t_new - channel.last_trigger_time
    if gap < channel.T_mei - TIME_TOL:
        return Verdict(Decision.ISOLATE_TIC, t_new, gap, channel.T_mei)
    e_d = C_sender @ (np.asarray(channel.delta_hat) - np.asarray(delta_new))
    err_d = c_at_last * float(e_d @ e_d)
    thr_d = float(sched.F_delta(t_new))
    if err_d > thr_d:
        return Verdict(Decision.ISOLATE_TEC_DELTA, t_new, err_d, thr_d)
    e_w = C_sender @ (np.asarray(channel.w_hat) - np.asarray(w_new))
    err_w = float(e_w @ e_w)
    thr_w = float(sched.F_w(t_new))
    if err_w > thr_w:
        return Verdict(Decision.ISOLATE_TEC_W, t_new, err_w, thr_w)
    return Verdict(Decision.ACCEPT, t_new, err_d, thr_d)


class LocalViews:
    """Each agent's private copy of its adjacency row.

    ``views[i, j]`` is ``a_ij`` as agent ``i`` currently believes it.
    """

    def __init__(self, weights: np.ndarray):
        self.initial = np.array(weights, dtype=float)
        self.views = self.initial.copy()

    def neighbors(self, i: int) -> set[int]:
        return set(np.flatnonzero(self.views[i] > 0).tolist())

    def isolate(self, receiver: int, sender: int) -> bool:
        """Zero ``a_{receiver, sender}`` in the receiver's view.  Returns ``False`` if already zero."""
        if self.initial[receiver, sender] <= 0:
            raise ValueError(f"no edge between {receiver} and {sender}")
        if self.views[receiver, sender] == 0:
            return False
        self.views[receiver, sender] = 0.0
        return True

    def isolated_agents(self) -> set[int]:
        """Agents cut off by every one of their original neighbours."""
        out = set()
        n = self.initial.shape[0]
        for b in range(n):
            nbrs = np.flatnonzero(self.initial[:, b] > 0)
            if len(nbrs) and np.all(self.views[nbrs, b] == 0):
                out.add(b)
        return out

    @property
    def normal_count(self) -> int:
        return self.initial.shape[0] - len(self.isolated_agents())

    @property
    def isolated_count(self) -> int:
        return len(self.isolated_agents())


def isolate(receiver: int, sender: int, topology: LocalViews) -> LocalViews:
    topology.isolate(receiver, sender)
    return topology


@dataclass(frozen=True)
class ThresholdCheck:
    ok: bool
    first_violation: float | None = None
    quantity: str = ""

    def __bool__(self) -> bool:
        return self.ok


def validate_thresholds(sched: ThresholdSchedule, gains: GainSchedule, horizon: float, points: int = 10_000) -> ThresholdCheck:
    """Check ``F >= margin * gamma`` for both quantities on a uniform grid."""
    t = np.linspace(0.0, max(horizon, 0.0), points)
    for name, F, gamma in (("delta", sched.F_delta, gains.gamma_delta), ("w", sched.F_w, gains.gamma_w)):
        bad = np.flatnonzero(np.asarray(F(t)) < sched.margin * np.asarray(gamma(t)))
        if bad.size:
            return ThresholdCheck(False, float(t[bad[0]]), name)
    return ThresholdCheck(True)
