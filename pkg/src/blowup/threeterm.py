"""The operators P, Q, R, T and the three-term implicit expansion.

For a positive v:

    P v(u) = int_b^u v,   Q v = P v / v,   R v(u) = int_u^inf dt / v,
    T v = (N-1) P(Q v) + P(v R v).

The indefinite integrals carry an explicit base point b. Products of the form
P(v R v) are evaluated after integrating by parts,

    int_b^u v R v = P v(u) R v(u) + int_b^u P v / v,

which is exact whenever P v(b) R v(b) = 0 and avoids evaluating R v near b,
where it may be infinite (v_0 = sqrt(2F) vanishes at the base point of the
builtin power law).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError, NumericsError
from .criterion import F_DROP
from .expansion import _tail_table, tail_v0
from .nonlinearity import Nonlinearity
from .numerics import RunningIntegral, find_root_monotone, integrate_adaptive, integrate_to_infinity

R2_INNER_READINGS = ("t", "u")


def op_P(v, b: float, u: float, tol: float = 1e-12) -> float:
    return integrate_adaptive(v, b, u, tol=tol).require("P")


def op_Q(v, b: float, u: float, tol: float = 1e-12) -> float:
    return op_P(v, b, u, tol) / float(v(u))


def op_R(v, u: float, tol: float = 1e-12) -> float:
    return integrate_to_infinity(lambda t: 1.0 / np.asarray(v(t)), u, tol=tol).require("R")


def op_T(v, b: float, u: float, N: int, tol: float = 1e-12) -> float:
    """(N-1) P(Qv)(u) + P(v Rv)(u) = N int_b^u Qv + Pv(u) Rv(u)."""
    P = RunningIntegral(v, b, tol=1e-13)
    PQ = integrate_adaptive(lambda t: P(t) / np.asarray(v(t)), b, u, tol=tol).require("P(Qv)")
    return N * PQ + P(u) * op_R(v, u, tol)


@dataclass(frozen=True)
class RemainderTriple:
    U: float
    R0: float
    R1: float
    R2: float
    b: float
    r2_inner: str = "t"

    @property
    def total(self) -> float:
        return self.R0 + self.R1 + self.R2


class _Pieces:
    """Vectorized building blocks for one nonlinearity and base point."""

    def __init__(self, nl: Nonlinearity, b: float, start: float):
        self.nl = nl
        self.b = b
        self.start = start
        with nl._lock:
            key = ("PQ", b)
            PQ = nl._cache.get(key)
            if PQ is None:
                PQ = RunningIntegral(self._p_over_v, b, tol=1e-13)
                nl._cache[key] = PQ
        self.PQ = PQ

    def _p_over_v(self, t):
        return np.asarray(self.nl.G(t, self.b)) / np.asarray(self.nl.v0(t))

    def P(self, t):
        return np.asarray(self.nl.G(t, self.b))

    def twoF(self, t):
        return 2.0 * np.asarray(self.nl.F(t), dtype=float)

    def R0(self, t):
        return np.asarray(_tail_table(self.nl, self.start)(np.asarray(t, dtype=float)))


def _masked(g, nl):
    """Drop the integrand where F is astronomically large (it is bounded by a power of 1/F there)."""

    def h(t):
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape)
        keep = np.asarray(nl.F(t), dtype=float) < F_DROP
        if np.any(keep):
            out[keep] = g(t[keep])
        return out

    return h


def remainder_terms(
    nl: Nonlinearity,
    N: int,
    U: float,
    b: Optional[float] = None,
    r2_inner: str = "t",
    tol: float = 1e-12,
) -> RemainderTriple:
    """R0, R1, R2 at U with indefinite integrals based at b (default: the F base point).

    ``r2_inner`` selects how the innermost tail inside R2 is read: "t" takes
    it at the running variable of the enclosing integral, "u" at the outer one.
    """
    if r2_inner not in R2_INNER_READINGS:
        raise DomainError(f"r2_inner must be one of {R2_INNER_READINGS}")
    b = nl.base if b is None else float(b)
    if not U >= b or not U > nl.a:
        raise DomainError(f"need U >= b and U > a, got U={U!r}, b={b!r}, a={nl.a!r}")
    pc = _Pieces(nl, b, min(nl.default_lo(), U))
    try:
        R0 = tail_v0(nl, U, tol=max(tol, 1e-13))
    except NumericsError as exc:
        raise NumericsError(f"R0 did not converge: {exc}") from exc

    def r1_integrand(t):
        return pc.P(t) / pc.twoF(t) ** 1.5

    res = integrate_to_infinity(_masked(r1_integrand, nl), U, tol=tol)
    if not res.converged:
        raise NumericsError(f"R1 did not converge ({res.status})")
    R1 = (N - 1) * res.value

    def r2_integrand(t):
        t = np.asarray(t, dtype=float)
        P = pc.P(t)
        twoF = pc.twoF(t)
        if r2_inner == "t":
            J = N * pc.PQ(t) + P * pc.R0(t)
        else:
            J = (N - 1) * pc.PQ(t) + P * pc.R0(t)
        bracket = -J + 1.25 * (N - 1) * P**2 / twoF
        return bracket / twoF**1.5

    if N == 1:
        R2 = 0.0
    else:
        res = integrate_to_infinity(_masked(r2_integrand, nl), U, tol=tol)
        if not res.converged:
            raise NumericsError(f"R2 did not converge ({res.status})")
        R2 = (N - 1) * res.value
    return RemainderTriple(float(U), float(R0), float(R1), float(R2), b, r2_inner)


def invert_three_term(
    nl: Nonlinearity,
    N: int,
    d: float,
    b: Optional[float] = None,
    terms: int = 3,
    r2_inner: str = "t",
) -> float:
    """Solve R0(u) + R1(u) + R2(u) = d (keeping the first ``terms`` of them) for u."""
    if terms not in (1, 2, 3):
        raise DomainError("terms must be 1, 2 or 3")
    if not d > 0:
        raise DomainError("need d > 0")

    def S(u):
        if terms == 1:
            return tail_v0(nl, u) - d
        t = remainder_terms(nl, N, u, b, r2_inner)
        return t.R0 + t.R1 + (t.R2 if terms == 3 else 0.0) - d

    lo_limit = max(nl.default_lo(), nl.base if b is None else b)
    if S(lo_limit) <= 0:
        raise DomainError(f"d={d!r} is too large for the asymptotic regime (no root above u={lo_limit:g})")
    # the k = 0 profile anchors the bracket; R1 > 0 pushes the root above it
    u0 = find_root_monotone(lambda u: tail_v0(nl, u) - d, *_bracket(lambda u: tail_v0(nl, u) - d, lo_limit))
    if terms == 1:
        return u0
    lo = max(lo_limit, 0.5 * u0)
    hi = 1.5 * u0
    if S(lo) <= 0:
        lo = lo_limit
    while S(hi) > 0:
        lo, hi = hi, 2 * hi
        if not np.isfinite(hi):
            raise DomainError("could not bracket the three-term root; d may be too large")
    return find_root_monotone(S, lo, hi, tol=1e-13 * hi)


def _bracket(h, lo):
    hi = max(2 * lo, lo + 1.0)
    while h(hi) > 0:
        lo, hi = hi, 2 * hi
    return lo, hi
