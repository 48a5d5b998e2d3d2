"""Radial shooting: an independent check on the expansion.

Integrates u'' + (N-1)/r u' = f(u), u(0) = alpha, u'(0) = 0 outward until u
reaches a cap, then extrapolates the blow-up radius with the energy-type
tail

    R_est = r_stop + int_{u_stop}^inf dt / sqrt(2 (F(t) - g_stop)),

where g = F(u) - v^2/2 (v = du/dr) is frozen at its value at the stop.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .criterion import lambda_at
from .errors import CalibrationError, DomainError, NumericsError
from .expansion import F_CEILING, tail_v0
from .nonlinearity import Nonlinearity
from .numerics import find_root_monotone, integrate_adaptive, integrate_ivp, integrate_to_infinity

log = logging.getLogger(__name__)

R_START = 1e-6
R_MAX = 1e4


def _fast_f(nl: Nonlinearity):
    """A float -> float version of f for the integrator's inner loop."""
    if nl.kind == "power":
        p, c = nl.p, nl.scale
        return lambda u: c * u**p if u > 0 else 0.0
    if nl.kind == "exponential":
        def f(u):
            try:
                return math.exp(u)
            except OverflowError:
                return math.inf
        return f
    return lambda u: float(nl.f(u))


def effective_cap(nl: Nonlinearity, u_cap: float) -> float:
    """u_cap, lowered if needed so that F(u_cap) stays below 1e300."""
    cap = float(u_cap)
    while not nl.F(cap) < F_CEILING:
        cap *= 0.5 if cap > 0 else 2.0
    return cap


@dataclass
class ShootResult:
    nl: Nonlinearity = field(repr=False)
    N: int
    alpha: float
    r: np.ndarray = field(repr=False)
    u: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)
    g_ode: np.ndarray = field(repr=False)
    R_est: float
    u_cap: float
    status: str  # blow-up | no-blow-up | partial
    reason: str
    tol: float
    split: int = 0  # samples from this index on were integrated with u as the variable

    @property
    def g(self) -> np.ndarray:
        """F(u) - v^2/2 at the samples."""
        return np.asarray(self.nl.F(self.u)) - 0.5 * self.v**2

    def state_at(self, r_target: float):
        """(u, v) at r_target, re-integrated from the nearest earlier sample."""
        if r_target < self.r[0]:
            raise DomainError("r_target precedes the first sample")
        if r_target > self.r[-1]:
            raise DomainError(f"r_target={r_target!r} lies beyond the last sample r={self.r[-1]!r}")
        i = int(np.searchsorted(self.r, r_target, side="right") - 1)
        if self.r[i] == r_target:
            return float(self.u[i]), float(self.v[i])
        if i + 1 < self.split or self.split == 0:
            y0 = (self.u[i], self.v[i], self.g_ode[i])
            traj = integrate_ivp(_rhs(self.nl, self.N), y0, self.r[i], r_end=r_target, tol=self.tol)
            return float(traj.y[-1, 0]), float(traj.y[-1, 1])
        # u-phase: march in u until r reaches r_target
        y0 = (self.r[i], self.v[i], self.g_ode[i])
        traj = integrate_ivp(_rhs_u(self.nl, self.N), y0, self.u[i], r_end=self.u[i + 1],
                             cap=lambda u, y: y[0] >= r_target, tol=self.tol)
        return float(traj.r[-1]), float(traj.y[-1, 1])


def _rhs(nl, N):
    f = _fast_f(nl)
    k = N - 1

    def rhs(r, y):
        u, v = y[0], y[1]
        return np.array([v, f(u) - k * v / r, k * v * v / r])

    return rhs


def _rhs_u(nl, N):
    """Same system with u as the independent variable: y = (r, v, g)."""
    f = _fast_f(nl)
    k = N - 1

    def rhs(u, y):
        r, v = y[0], y[1]
        return np.array([1.0 / v, f(u) / v - k / r, k * v / r])

    return rhs


def shoot(
    nl: Nonlinearity,
    N: int,
    alpha: float,
    u_cap: float = 1e6,
    tol: float = 1e-12,
    r_start: float = R_START,
    r_max: float = R_MAX,
) -> ShootResult:
    """Integrate from the center and extrapolate the blow-up radius."""
    if N < 1:
        raise DomainError("need N >= 1")
    if not alpha > nl.a:
        raise DomainError(f"need alpha > a = {nl.a:g}, got {alpha!r}")
    if u_cap < 1e6:
        raise DomainError("need u_cap >= 1e6")
    cap_u = effective_cap(nl, u_cap)
    fa = float(nl.f(alpha))
    r0 = float(r_start)
    u0 = alpha + fa * r0**2 / (2 * N)
    v0 = fa * r0 / N
    g0 = float(nl.F(u0)) - 0.5 * v0**2
    a = nl.a

    # phase 1 in r until the solution is clearly climbing; phase 2 in u, which keeps
    # full relative precision in r close to the blow-up radius
    u_switch = min(cap_u, max(alpha + 1.0, 2.0 * abs(alpha)))

    def cap(r, y):
        return y[0] >= u_switch or (y[0] < a and y[1] < 0)

    traj = integrate_ivp(_rhs(nl, N), (u0, v0, g0), r0, r_end=r_max, cap=cap, tol=tol)
    r = traj.r
    u, v, g = traj.y[:, 0], traj.y[:, 1], traj.y[:, 2]
    split = len(r)
    reason = traj.reason
    if reason == "cap-reached" and u[-1] >= u_switch and u[-1] < cap_u:
        y1 = (r[-1], v[-1], g[-1])
        tr2 = integrate_ivp(_rhs_u(nl, N), y1, u[-1], r_end=cap_u, tol=tol)
        reason = "cap-reached" if tr2.reason == "endpoint" else tr2.reason
        r = np.concatenate([r, tr2.y[1:, 0]])
        u = np.concatenate([u, tr2.r[1:]])
        v = np.concatenate([v, tr2.y[1:, 1]])
        g = np.concatenate([g, tr2.y[1:, 2]])
    if reason == "cap-reached" and u[-1] >= cap_u:
        F_s = float(nl.F(u[-1]))
        g_s = F_s - 0.5 * v[-1] ** 2
        res = integrate_to_infinity(lambda t: 1.0 / np.sqrt(2.0 * (np.asarray(nl.F(t)) - g_s)), u[-1], tol=1e-13)
        R_est = r[-1] + res.require("blow-up extrapolation tail")
        status = "blow-up"
    elif reason in ("cap-reached", "endpoint"):
        R_est = math.inf
        status = "no-blow-up"
    else:
        R_est = math.nan
        status = "partial"
        log.info("shoot(alpha=%g) stopped early: %s", alpha, reason)
    return ShootResult(nl, N, float(alpha), r, u, v, g, float(R_est), cap_u, status, reason, tol, split)


def calibrate_alpha(
    nl: Nonlinearity,
    N: int,
    target: float = 1.0,
    tol: float = 1e-10,
    u_cap: float = 1e6,
    shoot_tol: float = 1e-12,
    max_doublings: int = 60,
) -> float:
    """alpha with |R_est(alpha) - target| < tol, by bracketing then Brent in s = log(alpha - a)."""
    a = nl.a

    def R(s):
        res = shoot(nl, N, a + math.exp(s), u_cap, shoot_tol)
        if res.status == "partial":
            raise CalibrationError(f"shot at alpha={a + math.exp(s):g} stopped early ({res.reason})")
        return res.R_est

    s0 = math.log(max(1.0, abs(a) + 1.0))
    R0 = R(s0)
    lo = hi = s0
    step = math.log(2.0)
    if R0 > target:
        for _ in range(max_doublings):
            hi += step
            if R(hi) <= target:
                break
            lo = hi
        else:
            raise CalibrationError(f"no alpha with R <= {target} found")
    else:
        for _ in range(max_doublings):
            lo -= step
            if R(lo) > target:
                break
            hi = lo
        else:
            raise CalibrationError(f"no alpha with R > {target} found")

    def h(s):
        val = R(s)
        return (val if math.isfinite(val) else 1e300) - target

    s = find_root_monotone(lambda x: -h(x), lo, hi, tol=1e-15, ftol=tol)
    return a + math.exp(s)


@dataclass
class Diagnostics:
    u: np.ndarray
    g: np.ndarray
    ratio: Optional[np.ndarray]  # g / ((N-1) G); None for N = 1
    g_over_F: np.ndarray

    def rows(self):
        if self.ratio is None:
            return list(zip(self.u, self.g, self.g_over_F))
        return list(zip(self.u, self.g, self.ratio, self.g_over_F))


def diagnostics(res: ShootResult, nl: Optional[Nonlinearity] = None, N: Optional[int] = None,
                base: Optional[float] = None) -> Diagnostics:
    """g, g/((N-1)G) with G = int_base^u sqrt(2F), and g/F along the trajectory (u > a only)."""
    nl = nl or res.nl
    N = res.N if N is None else N
    sel = res.u > max(nl.a, nl.base) + 1e-12
    u = res.u[sel]
    g = res.g_ode[sel]
    F = np.asarray(nl.F(u))
    ratio = None
    if N >= 2:
        ratio = g / ((N - 1) * np.asarray(nl.G(u, base)))
    return Diagnostics(u, g, ratio, g / F)


@dataclass
class ShootComparison:
    d: np.ndarray
    u_shoot: np.ndarray
    u_k: np.ndarray  # shape (len(d), number of profiles)
    gaps: np.ndarray
    normalized: np.ndarray  # int between u_shoot and u_k of du/v_0, over int_{u_k}^inf du/v_0
    predicted: np.ndarray
    flagged: np.ndarray
    ks: list

    def rows(self):
        out = []
        for i in range(len(self.d)):
            out.append((self.d[i], self.u_shoot[i], *self.u_k[i], *self.gaps[i], *self.normalized[i],
                        self.predicted[i], bool(self.flagged[i])))
        return out


def shoot_profile(res: ShootResult, d: float):
    """u at r = R_est - d, or None when that radius lies beyond the trajectory."""
    if res.status != "blow-up":
        raise DomainError("shoot_profile needs a blow-up trajectory")
    r_target = res.R_est - d
    if r_target > res.r[-1]:
        return None
    return res.state_at(r_target)[0]


def compare_to_expansion(res: ShootResult, profiles, d_grid, base: Optional[float] = None) -> ShootComparison:
    """Per-d gaps between the shot solution and each expansion profile."""
    nl = res.nl
    inv = lambda t: 1.0 / nl.v0(t)  # noqa: E731
    d = np.asarray(list(d_grid), dtype=float)
    m = len(profiles)
    us = np.full(len(d), np.nan)
    uk = np.full((len(d), m), np.nan)
    gaps = np.full((len(d), m), np.nan)
    norm = np.full((len(d), m), np.nan)
    pred = np.full(len(d), np.nan)
    flagged = np.zeros(len(d), dtype=bool)
    for i, di in enumerate(d):
        u_s = shoot_profile(res, di)
        if u_s is None:
            flagged[i] = True
            continue
        us[i] = u_s
        for j, prof in enumerate(profiles):
            u = prof(di)
            uk[i, j] = u
            gaps[i, j] = u_s - u
            lo, hi = min(u, u_s), max(u, u_s)
            ng = integrate_adaptive(inv, lo, hi, tol=1e-12).require() if hi > lo else 0.0
            norm[i, j] = ng / tail_v0(nl, u)
        u0 = profiles[0](di) if profiles and profiles[0].k == 0 else None
        if u0 is None:
            raise DomainError("the first profile must be k = 0 to form the predicted gap")
        pred[i] = (res.N - 1) * lambda_at(nl, u0, base)
    return ShootComparison(d, us, uk, gaps, norm, pred, flagged, [p.k for p in profiles])


__all__ = [
    "ShootResult",
    "shoot",
    "calibrate_alpha",
    "diagnostics",
    "compare_to_expansion",
    "shoot_profile",
    "effective_cap",
    "NumericsError",
]
