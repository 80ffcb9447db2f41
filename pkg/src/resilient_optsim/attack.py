"""Byzantine behaviour injection.

Deviations are declared in output space, per receiving neighbour ``j``
(1-based label, as the formulas use it), and lifted to state space with an
injection map.  They are applied on the wire only; the Byzantine agent's
own state evolves untouched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class PowerLaw:
    """``coef * j ** power`` in the receiving neighbour's label ``j``."""

    coef: float
    power: float = 0.0

    def __call__(self, j: int) -> float:
        return self.coef * float(j) ** self.power

    @classmethod
    def parse(cls, spec) -> "PowerLaw":
        if isinstance(spec, (int, float)):
            return cls(float(spec), 0.0)
        return cls(float(spec["coef"]), float(spec.get("power", 0.0)))


_WAVES = {"sin": math.sin, "cos": math.cos}


@dataclass(frozen=True)
class Sinusoid:
    """``amp(j) * g(freq(j) * t + phase) * (1, ..., 1)`` on ``[start, end)``."""

    quantity: str  # "delta" or "w"
    start: float
    end: float
    amp: PowerLaw
    freq: PowerLaw
    wave: str = "sin"
    phase: float = 0.0

    def __post_init__(self) -> None:
        if self.quantity not in ("delta", "w"):
            raise ValueError(f"unknown attacked quantity {self.quantity!r}")
        if self.wave not in _WAVES:
            raise ValueError(f"unknown waveform {self.wave!r}")

    def value(self, j: int, t: float) -> float:
        if not (self.start <= t < self.end):
            return 0.0
        return self.amp(j) * _WAVES[self.wave](self.freq(j) * t + self.phase)


@dataclass(frozen=True)
class TriggerTamper:
    """Ignore the trigger law from ``start`` on; draw gaps from ``U[min_gap, max_gap]``."""

    start: float
    min_gap: float
    max_gap: float
    end: float = math.inf

    def active(self, t: float) -> bool:
        return self.start <= t < self.end


@dataclass(frozen=True)
class AttackProfile:
    agent: int  # 0-based
    deviations: tuple[Sinusoid, ...] = ()
    trigger_tamper: TriggerTamper | None = None

    @property
    def active_window(self) -> tuple[float, float]:
        starts = [d.start for d in self.deviations]
        ends = [d.end for d in self.deviations]
        if self.trigger_tamper is not None:
            starts.append(self.trigger_tamper.start)
            ends.append(self.trigger_tamper.end)
        if not starts:
            return (math.inf, math.inf)
        return (min(starts), max(ends))

    def output_deviation(self, quantity: str, j: int, t: float, q: int) -> np.ndarray:
        total = sum(d.value(j, t) for d in self.deviations if d.quantity == quantity)
        return np.full(q, float(total))


def injection_map(C: np.ndarray) -> np.ndarray:
    """Default lift from output to state space (zero padding for selector ``C``)."""
    return np.linalg.pinv(C)


def tampered_sample(
    profile: AttackProfile,
    neighbor_label: int,
    t: float,
    true_delta,
    true_w,
    C: np.ndarray,
    lift: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """What the Byzantine agent puts on the wire towards ``neighbor_label``."""
    lift = injection_map(C) if lift is None else lift
    q = C.shape[0]
    d_out = profile.output_deviation("delta", neighbor_label, t, q)
    w_out = profile.output_deviation("w", neighbor_label, t, q)
    return (
        np.asarray(true_delta, dtype=float) + lift @ d_out,
        np.asarray(true_w, dtype=float) + lift @ w_out,
    )


def next_malicious_trigger(
    profile: AttackProfile,
    t_now: float,
    honest_next: float,
    rng: np.random.Generator,
) -> float:
    """Next forced trigger time, uniform on ``[t_now + min_gap, honest_next]``."""
    tamper = profile.trigger_tamper
    if tamper is None or not tamper.active(t_now):
        return honest_next
    lo = t_now + tamper.min_gap
    hi = max(lo, honest_next)
    return float(rng.uniform(lo, hi))


def robot_team_profiles(robot2_onset: float = 50.0) -> list[AttackProfile]:
    """The two Byzantine robots of the 8-robot experiment (agents 1 and 2).

    Robot 1 fires at random times from 20 s on, with small deviations on
    [20, 30) s and larger ones afterwards.  Robot 2 keeps its gaps above the
    MEI and tampers from ``robot2_onset`` on.
    """
    p = PowerLaw
    robot1 = AttackProfile(
        agent=0,
        deviations=(
            Sinusoid("delta", 20.0, 30.0, p(0.002, 1), p(0.02, 1), "sin"),
            Sinusoid("w", 20.0, 30.0, p(0.002, 1), p(0.02, 1), "cos"),
            Sinusoid("delta", 30.0, 80.0, p(0.02, 1), p(0.2, 1), "sin"),
            Sinusoid("w", 30.0, 80.0, p(0.1, 1), p(0.2, 1), "cos"),
        ),
        trigger_tamper=TriggerTamper(start=20.0, min_gap=0.01, max_gap=0.3),
    )
    robot2 = AttackProfile(
        agent=1,
        deviations=(
            Sinusoid("delta", robot2_onset, 80.0, p(0.05, 1), p(0.2, 0), "cos"),
            Sinusoid("w", robot2_onset, 80.0, p(0.2, 0.5), p(0.2, 1), "sin"),
        ),
        trigger_tamper=TriggerTamper(start=robot2_onset, min_gap=0.12, max_gap=0.5),
    )
    return [robot1, robot2]
