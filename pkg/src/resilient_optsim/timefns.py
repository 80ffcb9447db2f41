"""Scalar functions of time used for trigger levels and detection thresholds.

Scenario files write them as tagged objects::

    {"const": 0.1}
    {"exp_decay": {"a": 1.0, "b": 0.2}}
    {"sinusoid": {"amp": 1.0, "freq": 0.5, "phase": 0.0}}
    {"sum": [{"const": 0.001}, {"exp_decay": {"a": 1.2, "b": 0.15}}]}
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Const:
    value: float

    def __call__(self, t):
        return self.value + 0.0 * np.asarray(t, dtype=float)

    def to_dict(self):
        return {"const": self.value}


@dataclass(frozen=True)
class ExpDecay:
    a: float
    b: float

    def __call__(self, t):
        return self.a * np.exp(-self.b * np.asarray(t, dtype=float))

    def to_dict(self):
        return {"exp_decay": {"a": self.a, "b": self.b}}


@dataclass(frozen=True)
class Sinusoid:
    amp: float
    freq: float
    phase: float = 0.0

    def __call__(self, t):
        return self.amp * np.sin(self.freq * np.asarray(t, dtype=float) + self.phase)

    def to_dict(self):
        return {"sinusoid": {"amp": self.amp, "freq": self.freq, "phase": self.phase}}


@dataclass(frozen=True)
class Sum:
    terms: tuple

    def __call__(self, t):
        return sum(f(t) for f in self.terms)

    def to_dict(self):
        return {"sum": [f.to_dict() for f in self.terms]}


def parse(spec):
    if isinstance(spec, (int, float)):
        return Const(float(spec))
    if not isinstance(spec, dict) or len(spec) != 1:
        raise ValueError(f"time function must be a single-key object, got {spec!r}")
    (tag, body), = spec.items()
    if tag == "const":
        return Const(float(body))
    if tag == "exp_decay":
        return ExpDecay(float(body["a"]), float(body["b"]))
    if tag == "sinusoid":
        return Sinusoid(float(body["amp"]), float(body["freq"]), float(body.get("phase", 0.0)))
    if tag == "sum":
        return Sum(tuple(parse(s) for s in body))
    raise ValueError(f"unknown time function {tag!r}")
