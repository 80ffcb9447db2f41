"""Heterogeneous linear agents, the tracking controller and its checks.

Each agent follows ``x' = A x + B u``, ``y = C x``.  The input map is
brought to the form ``col(0, Bbar)`` with ``Bbar`` square and invertible,
which splits the state into an unactuated block ``x1`` (size ``n1``) and an
actuated block ``x2`` (size ``n2 == p``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import null_space

EIG_MARGIN = 1e-9


class ModelError(ValueError):
    pass


def _mat(a, name: str) -> np.ndarray:
    out = np.atleast_2d(np.asarray(a, dtype=float))
    if out.ndim != 2:
        raise ModelError(f"{name} must be a matrix")
    return out


@dataclass(frozen=True)
class AgentModel:
    """One agent in partitioned coordinates, plus its controller gains.

    ``T`` is the orthogonal change of coordinates applied to the user's
    model (identity when ``B`` already had a zero top block): partitioned
    state = ``T @ original state``.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    n1: int
    K: np.ndarray
    mu_bar: float
    F: np.ndarray
    T: np.ndarray
    # derived
    Bbar: np.ndarray = field(init=False, repr=False)
    B_hat: np.ndarray = field(init=False, repr=False)
    K_bar: np.ndarray = field(init=False, repr=False)
    S: np.ndarray = field(init=False, repr=False)
    D: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        n, p = self.B.shape
        n2 = n - self.n1
        if self.K.shape != (p, self.n1):
            raise ModelError(f"K must be {p}x{self.n1}, got {self.K.shape}")
        if self.F.shape != (n2, n2):
            raise ModelError(f"F must be {n2}x{n2}, got {self.F.shape}")
        bbar = self.B[self.n1:, :]
        b_hat = bbar.T @ np.linalg.inv(bbar @ bbar.T)
        k_bar = np.hstack([self.K, -np.eye(n2)])
        s = k_bar @ self.A + self.F @ k_bar
        d = np.hstack([self.F @ k_bar, k_bar])
        for name, val in (("Bbar", bbar), ("B_hat", b_hat), ("K_bar", k_bar), ("S", s), ("D", d)):
            object.__setattr__(self, name, val)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def p(self) -> int:
        return self.B.shape[1]

    @property
    def q(self) -> int:
        return self.C.shape[0]

    @property
    def A11(self) -> np.ndarray:
        return self.A[: self.n1, : self.n1]

    @property
    def A12(self) -> np.ndarray:
        return self.A[: self.n1, self.n1:]

    @property
    def A21(self) -> np.ndarray:
        return self.A[self.n1:, : self.n1]

    @property
    def A22(self) -> np.ndarray:
        return self.A[self.n1:, self.n1:]


def partition(A, B, C, K=None, mu_bar: float = 1.0, F=None) -> AgentModel:
    """Bring ``(A, B, C)`` to the partitioned form and attach controller gains.

    When ``B`` already has zero leading rows it is used as is.  Otherwise an
    orthogonal ``T`` with ``T B = col(0, Bbar)`` is built from the SVD of
    ``B``.  ``F`` defaults to ``mu_bar I + A12^T A12``; ``K`` (``p x n1``)
    defaults to ``-A12^T``, which makes ``A12 K`` Hurwitz whenever ``A12``
    has full row rank.
    """
    A, B, C = _mat(A, "A"), _mat(B, "B"), _mat(C, "C")
    n = A.shape[0]
    if A.shape != (n, n):
        raise ModelError("A must be square")
    if B.shape[0] != n:
        raise ModelError(f"B must have {n} rows, got {B.shape[0]}")
    if C.shape[1] != n:
        raise ModelError(f"C must have {n} columns, got {C.shape[1]}")
    p = B.shape[1]
    if np.linalg.matrix_rank(B) < p:
        raise ModelError("input map rank-deficient")

    zero_rows = 0
    while zero_rows < n and not np.any(B[zero_rows]):
        zero_rows += 1
    if zero_rows > 0:
        T = np.eye(n)
        n1 = zero_rows
        if n - n1 != p:
            raise ModelError("non-square Bbar unsupported")
    else:
        U, _, _ = np.linalg.svd(B)
        # range of B last so that T B has a zero top block
        T = np.vstack([U[:, p:].T, U[:, :p].T])
        A, B, C = T @ A @ T.T, T @ B, C @ T.T
        B[: n - p] = 0.0
        n1 = n - p

    n2 = n - n1
    a12 = A[:n1, n1:]
    if K is None:
        K = -a12.T.copy()
    elif np.size(K) == 0:
        K = np.zeros((p, n1))
    else:
        K = _mat(K, "K")
    if F is None:
        F = mu_bar * np.eye(n2) + a12.T @ a12
    return AgentModel(A=A, B=B, C=C, n1=n1, K=K, mu_bar=float(mu_bar), F=_mat(F, "F"), T=T)


def controller(m: AgentModel, x, delta, delta_dot) -> np.ndarray:
    """Tracking input ``u = -B_hat (D col(delta, delta_dot) - S x)``."""
    x, delta, delta_dot = (np.asarray(v, dtype=float) for v in (x, delta, delta_dot))
    for name, v in (("x", x), ("delta", delta), ("delta_dot", delta_dot)):
        if v.shape != (m.n,):
            raise ModelError(f"{name} must have shape ({m.n},), got {v.shape}")
    upsilon = np.concatenate([delta, delta_dot])
    return -m.B_hat @ (m.D @ upsilon - m.S @ x)


def controller_tracking_form(m: AgentModel, x, delta, delta_dot) -> np.ndarray:
    """Same input written as ``B_hat F K_bar (x - delta) + B_hat K_bar (A x - delta_dot)``."""
    x, delta, delta_dot = (np.asarray(v, dtype=float) for v in (x, delta, delta_dot))
    return m.B_hat @ m.F @ m.K_bar @ (x - delta) + m.B_hat @ m.K_bar @ (m.A @ x - delta_dot)


@dataclass(frozen=True)
class SteadyStateSet:
    kernel_basis: np.ndarray
    output_basis: np.ndarray


def steady_state_set(m: AgentModel) -> SteadyStateSet:
    top = m.A[: m.n1, :]
    if top.shape[0] == 0:
        basis = np.eye(m.n)
    else:
        basis = null_space(top)
    return SteadyStateSet(kernel_basis=basis, output_basis=m.C @ basis)


@dataclass(frozen=True)
class TrackingError:
    chi1: np.ndarray
    chi2: np.ndarray


def tracking_error(m: AgentModel, x, delta, x1_star) -> TrackingError:
    x, delta = np.asarray(x, dtype=float), np.asarray(delta, dtype=float)
    return TrackingError(
        chi1=x[: m.n1] - np.asarray(x1_star, dtype=float),
        chi2=m.K_bar @ (x - delta),
    )


def verify_tracking_certificate(A12, K, P, mu_bar: float) -> dict[str, bool]:
    """Check the tracking-stability certificate for a given ``(P, K, mu_bar)``.

    ``hurwitz``: every eigenvalue of ``A12 K`` has real part below ``-1e-9``.
    ``lmi_ok``: ``L^T P + P L + 2 P^2 - mu_bar I`` is negative definite with
    the same margin, where ``L = A12 K``.
    """
    A12, K, P = _mat(A12, "A12"), _mat(K, "K"), _mat(P, "P")
    lam = A12 @ K
    if lam.shape[0] != lam.shape[1] or P.shape != lam.shape:
        raise ModelError(f"P must be {lam.shape}, got {P.shape}")
    if not np.allclose(P, P.T, atol=1e-12):
        raise ModelError("P must be symmetric")
    if np.linalg.eigvalsh(P).min() <= EIG_MARGIN:
        raise ModelError("P must be positive definite")
    hurwitz = bool(np.max(np.linalg.eigvals(lam).real) < -EIG_MARGIN)
    q = lam.T @ P + P @ lam + 2.0 * P @ P - mu_bar * np.eye(P.shape[0])
    lmi_ok = bool(np.linalg.eigvalsh(0.5 * (q + q.T)).max() < -EIG_MARGIN)
    return {"hurwitz": hurwitz, "lmi_ok": lmi_ok}


def robot_model(i: int, K=None, F=None, mu_bar: float = 0.5) -> AgentModel:
    """Planar mobile robot ``i`` (1-based) with friction ``1 - 0.1 i`` and mass ``0.2 sin(2 i)``.

    The mass formula is used verbatim; it is negative for several ``i``.
    """
    friction = 1.0 - 0.1 * i
    mass = 0.2 * np.sin(2.0 * i)
    ratio = friction / mass
    I2, Z2 = np.eye(2), np.zeros((2, 2))
    A = np.block([[Z2, I2], [Z2, -ratio * I2]])
    B = np.vstack([Z2, ratio * I2])
    C = np.hstack([I2, Z2])
    if F is None:
        F = 1.5 * I2
    return partition(A, B, C, K=-I2 if K is None else K, mu_bar=mu_bar, F=F)
