"""Self-triggered communication: activation variable, MEI bounds, trigger test.

Every directed channel carries an activation variable ``m`` that decays as
``m' = -(sigma1 m + sigma2)`` during the dormant window
``[t_k, t_k + T_MEI)`` and is frozen afterwards.  ``T_MEI`` is kept below
a closed-form lower bound on the zero crossing of ``m``, so ``m`` stays
positive.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np


class MEIOverrun(RuntimeError):
    """The activation variable reached zero inside a dormant window."""


@dataclass(frozen=True)
class GainSchedule:
    """Protocol gains plus the constants that size the activation decay.

    ``sigma1_per_kappa`` / ``sigma2_per_kappa`` override the derived decay
    rates (``sigma = coefficient * kappa``); leave them ``None`` to derive
    them from the gain constants.
    """

    alpha: float
    beta: float
    rho: float
    gamma_delta: object
    gamma_w: object
    gamma_c: float
    eta_bar: float
    m0: float
    d_max: float
    c_norm: float = 1.0
    kappa_step: float = 0.2
    c0: float = 1.0
    phi: float | None = None
    phi_factor: float = 1.01
    sigma1_per_kappa: float | None = None
    sigma2_per_kappa: float | None = None
    T_mei: float = 0.1

    @property
    def b1(self) -> float:
        return (
            3 * self.alpha
            + 2.5 * self.beta
            + 2 * self.eta_bar * self.gamma_c / self.d_max
            + self.rho / (2 * self.d_max)
        )

    @property
    def b2(self) -> float:
        return self.alpha + self.beta

    @property
    def b_max(self) -> float:
        return max(self.b1, self.b2)

    @property
    def b3(self) -> float:
        return (2 * self.alpha + 2 * self.eta_bar * self.gamma_c / self.d_max) * self.m0

    @property
    def phi_lower_bound(self) -> float:
        return max(2 * self.b3 / self.alpha, 5 * self.beta / (2 * self.alpha))

    @property
    def phi_value(self) -> float:
        if self.phi is not None:
            return self.phi
        return self.phi_factor * self.phi_lower_bound

    @property
    def overridden(self) -> bool:
        return self.sigma1_per_kappa is not None

    def channel_sigmas(self, c_hat: float) -> tuple[float, float]:
        """Decay rates used on a channel after a trigger with weight ``c_hat``.

        Derived rates follow the weight itself; overridden rates are fixed per
        weight band (evaluated at ``kappa``).
        """
        if self.overridden:
            return self.sigmas(kappa(c_hat, self.c0, self.kappa_step))
        return self.sigmas(c_hat)

    def sigmas(self, c: float) -> tuple[float, float]:
        """Decay rates for a channel whose weight (or kappa) is ``c``."""
        lam2 = self.c_norm**2
        if self.overridden:
            return self.sigma1_per_kappa * c, self.sigma2_per_kappa * c
        return lam2 * c * self.b_max, 0.5 * lam2 * c * self.alpha * self.phi_value

    def T_hat0(self, kappa_value: float) -> float:
        """Fixed MEI bound for the weight band whose upper edge is ``kappa_value``.

        With the decay rates at ``kappa`` this is ``T0`` evaluated at the
        pre-reset level ``m0``, scaled so ``sigma1 = lam^2 b_M kappa`` and
        ``sigma2 = lam^2 alpha phi kappa / 2`` reproduce the textbook formula.
        """
        s1, s2 = self.sigmas(kappa_value)
        # 8 b_M m0 / (alpha phi kappa) == 4 sigma1 m0 / (sigma2 kappa)
        return (1.0 / s1) * math.log(0.5 + 0.5 * math.sqrt(1.0 + 4.0 * s1 * self.m0 / (s2 * kappa_value)))


def T0(sigma1: float, sigma2: float, m_plus: float) -> float:
    """Lower bound on the time for ``m`` to decay from ``m_plus`` to zero."""
    if sigma1 <= 0 or sigma2 <= 0 or m_plus <= 0:
        raise ValueError("sigma1, sigma2 and m_plus must be positive")
    return (1.0 / sigma1) * math.log(0.5 + 0.5 * math.sqrt(1.0 + 4.0 * sigma1 * m_plus / sigma2))


def zero_crossing(sigma1: float, sigma2: float, m_plus: float) -> float:
    """Exact zero crossing of ``m' = -(sigma1 m + sigma2)`` from ``m_plus``."""
    return math.log1p(sigma1 * m_plus / sigma2) / sigma1


def kappa(c_hat: float, c0: float, v: float) -> float:
    """Upper edge ``c0 + v q`` of the half-open weight band containing ``c_hat``."""
    if v <= 0:
        raise ValueError("band width v must be positive")
    if c_hat < c0:
        raise ValueError(f"c_hat={c_hat} below the initial weight {c0}")
    q = math.floor((c_hat - c0) / v) + 1
    k = c0 + v * q
    # guard the floor against rounding on band edges
    while k <= c_hat:
        q += 1
        k = c0 + v * q
    while q > 1 and c0 + v * (q - 1) > c_hat:
        q -= 1
        k = c0 + v * q
    return k


def activation_decay(m: float, dt: float, sigma1: float, sigma2: float) -> float:
    """Exact solution of the active-phase ODE over ``dt``."""
    ratio = sigma2 / sigma1
    return math.exp(-sigma1 * dt) * (m + ratio) - ratio


@dataclass
class ChannelState:
    """Bookkeeping for the directed channel ``sender -> receiver``."""

    sender: int
    receiver: int
    last_trigger_time: float = 0.0
    last_trigger_step: int = 0
    delta_hat: np.ndarray | None = None
    w_hat: np.ndarray | None = None
    c_hat: float = 1.0
    m: float = 1.0
    s_hat: int = 1
    T_mei: float = 0.1
    trigger_count: int = 0
    history: list[float] = field(default_factory=list)


def T_mei_for(channel: ChannelState, gains: GainSchedule, requested: float | None = None) -> float:
    """Reset ``m`` after a trigger and return the MEI to use until the next one.

    The requested MEI (``gains.T_mei`` by default) is clamped to the fixed
    band bound; a clamp emits a ``RuntimeWarning``.
    """
    requested = gains.T_mei if requested is None else requested
    bound = gains.T_hat0(kappa(channel.c_hat, gains.c0, gains.kappa_step))
    channel.m = gains.m0 / channel.c_hat
    channel.s_hat = 1
    if requested > bound:
        warnings.warn(
            f"requested MEI {requested:g}s exceeds bound {bound:g}s on channel "
            f"{channel.sender}->{channel.receiver}; clamped",
            RuntimeWarning,
            stacklevel=2,
        )
        requested = bound
    channel.T_mei = requested
    return requested


def activation_step(channel: ChannelState, dt: float, sigma1: float, sigma2: float) -> float:
    if dt <= 0:
        raise ValueError("dt must be positive")
    if channel.s_hat:
        channel.m = activation_decay(channel.m, dt, sigma1, sigma2)
        if channel.m <= 0:
            raise MEIOverrun(
                f"activation variable of {channel.sender}->{channel.receiver} reached {channel.m:g}"
            )
    return channel.m


def etc_clauses(
    c_hat: float,
    output_err_delta: np.ndarray,
    output_err_w: np.ndarray,
    c_now: float,
    t: float,
    gains: GainSchedule,
) -> tuple[float, float, float]:
    """The three trigger functions; the channel fires when any is positive."""
    f1 = c_hat * float(output_err_delta @ output_err_delta) - float(gains.gamma_delta(t))
    f2 = float(output_err_w @ output_err_w) - float(gains.gamma_w(t))
    f3 = c_now - c_hat - gains.gamma_c
    return f1, f2, f3


def etc_fire(
    channel: ChannelState,
    C_sender: np.ndarray,
    sender_delta,
    sender_w,
    sender_c: float,
    t: float,
    gains: GainSchedule,
    sent_delta=None,
    sent_w=None,
) -> str | None:
    """Return the first firing clause (``"f1"``, ``"f2"``, ``"f3"``) or ``None``.

    The sender compares against the values it last sent; these default to
    the channel's stored samples.
    """
    sent_delta = channel.delta_hat if sent_delta is None else sent_delta
    sent_w = channel.w_hat if sent_w is None else sent_w
    e_d = C_sender @ (np.asarray(sent_delta) - np.asarray(sender_delta))
    e_w = C_sender @ (np.asarray(sent_w) - np.asarray(sender_w))
    for name, f in zip(("f1", "f2", "f3"), etc_clauses(channel.c_hat, e_d, e_w, sender_c, t, gains)):
        if f > 0:
            return name
    return None
