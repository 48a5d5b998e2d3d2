"""Fixed-point iteration for the velocity v(u) = du/dr and the blow-up profiles it induces.

Starting from v_0 = sqrt(2F), each iterate is

    v_k(u)^2 = 2 (F(u) - (N-1) int_{U0}^u v_{k-1}(t) / r(t) dt),
    r(t) = 1 - int_t^inf ds / v_{k-1}(s),

and the profile u_k(d), d = 1 - r, solves int_{u_k}^inf dt / v_k = d.

An iterate is stored as the ratio w = v_k / v_0 on a grid geometric in
u - shift, interpolated linearly in log(u - shift), and continued beyond the
last node as the constant w_M.
"""

from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    BallViolationError,
    ContractionError,
    DomainError,
    NumericsError,
    U0TooSmallError,
)
from .nonlinearity import Nonlinearity
from .numerics import _GL_W, _GL_X, TailIntegral, find_root_monotone, integrate_adaptive, integrate_to_infinity

log = logging.getLogger(__name__)

RHO = 0.25
DEFAULT_M = 512
UMAX_FACTOR = 1e6
F_CEILING = 1e300


def tail_v0(nl: Nonlinearity, u: float, tol: float = 1e-13) -> float:
    """int_u^inf dt / sqrt(2F)."""
    res = integrate_to_infinity(lambda t: 1.0 / nl.v0(t), u, tol=tol)
    return res.require(f"tail of 1/v_0 from u={u:g}")


def _tail_table(nl: Nonlinearity, start: float) -> TailIntegral:
    key = ("tail0-table", float(start))
    with nl._lock:
        tab = nl._cache.get(key)
        if tab is None:
            tab = TailIntegral(lambda t: 1.0 / nl.v0(t), start, tol=1e-13)
            nl._cache[key] = tab
    return tab


def default_umax(nl: Nonlinearity, U0: float) -> float:
    """1e6 * U0, pulled back until F stays below 1e300 (matters for exponential growth)."""
    umax = UMAX_FACTOR * U0 if U0 > 0 else U0 + UMAX_FACTOR
    while not nl.F(umax) < F_CEILING:
        umax = U0 + 0.5 * (umax - U0)
    return umax


@dataclass(frozen=True, eq=False)
class VelocityProfile:
    nl: Nonlinearity
    N: int
    k: int
    U0: float
    Umax: float
    nodes: np.ndarray = field(repr=False)
    w: np.ndarray = field(repr=False)
    shift: float = 0.0
    # tail integrals int_{u_i}^inf dt/v_k at the nodes
    T: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        object.__setattr__(self, "w", w)
        top = _tail_table(self.nl, self.Umax)(self.Umax) / w[-1]
        panels = self._panel_integrals()
        T = np.empty(len(self.nodes))
        T[-1] = top
        T[:-1] = top + np.cumsum(panels[::-1])[::-1]
        object.__setattr__(self, "T", T)

    @property
    def M(self) -> int:
        return len(self.nodes)

    def _s(self, u):
        return np.log(np.asarray(u, dtype=float) - self.shift)

    def ratio(self, u):
        """w(u) = v_k(u) / v_0(u), linear in log(u - shift), constant outside the grid."""
        u = np.asarray(u, dtype=float)
        out = np.interp(self._s(u), self._s(self.nodes), self.w)
        return float(out) if out.ndim == 0 else out

    def v(self, u):
        return self.nl.v0(u) * self.ratio(u)

    def _gl(self, a, b, g):
        """Gauss-Legendre 15 of g over each [a_i, b_i]."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        half = 0.5 * (b - a)
        x = (0.5 * (a + b))[..., None] + half[..., None] * _GL_X
        return half * (g(x) @ _GL_W)

    def _panel_integrals(self):
        return self._gl(self.nodes[:-1], self.nodes[1:], lambda x: 1.0 / self.v(x))

    def tail(self, u):
        """int_u^inf dt / v_k for u >= U0."""
        u = np.asarray(u, dtype=float)
        flat = np.atleast_1d(u).ravel()
        if np.any(flat < self.U0 * (1 - 1e-15) - 1e-300):
            raise DomainError(f"tail of v_{self.k} needs u >= U0 = {self.U0:g}")
        out = np.empty(flat.shape)
        inside = flat < self.Umax
        if np.any(inside):
            ui = flat[inside]
            j = np.clip(np.searchsorted(self.nodes, ui, side="right") - 1, 0, self.M - 2)
            out[inside] = self.T[j + 1] + self._gl(ui, self.nodes[j + 1], lambda x: 1.0 / self.v(x))
        if np.any(~inside):
            out[~inside] = _tail_table(self.nl, self.Umax)(flat[~inside]) / self.w[-1]
        return float(out[0]) if u.ndim == 0 else out.reshape(u.shape)

    def r(self, u):
        return 1.0 - self.tail(u)

    def check(self):
        """Raise when the ball or r-range invariants fail."""
        dev = np.max(np.abs(self.w - 1.0))
        if not dev < RHO:
            raise BallViolationError(f"iterate {self.k} leaves the ball: sup|w-1| = {dev:.3g} >= {RHO}")
        if not self.T[0] <= 0.5:
            raise U0TooSmallError(
                f"r(U0) = {1 - self.T[0]:.3g} < 1/2 for iterate {self.k}; increase U0 (now {self.U0:g})"
            )
        return self


def _grid(nl: Nonlinearity, U0: float, Umax: Optional[float], M: int):
    if not U0 > nl.a:
        raise DomainError(f"need U0 > a = {nl.a:g}, got {U0!r}")
    if not nl.F(U0) > 0:
        raise DomainError(f"need F(U0) > 0 at U0={U0!r}")
    if M < 64:
        raise DomainError(f"need M >= 64 grid nodes, got {M}")
    if Umax is None:
        Umax = default_umax(nl, U0)
    elif not Umax > U0:
        raise DomainError("need Umax > U0")
    shift = min(0.0, U0 - 1.0)
    s = np.linspace(math.log(U0 - shift), math.log(Umax - shift), M)
    nodes = shift + np.exp(s)
    nodes[0], nodes[-1] = U0, Umax
    return nodes, shift, float(Umax)


def make_v0(nl: Nonlinearity, U0: float, Umax: Optional[float] = None, M: int = DEFAULT_M, N: int = 1) -> VelocityProfile:
    """The k = 0 profile v_0 = sqrt(2F) (w identically 1)."""
    nl.require_keller_osserman()
    nodes, shift, Umax = _grid(nl, U0, Umax, M)
    return VelocityProfile(nl, N, 0, float(U0), Umax, nodes, np.ones(M), shift)


def iterate(nl: Nonlinearity, N: int, prev: VelocityProfile) -> VelocityProfile:
    """Apply the fixed-point map once."""
    if N < 1:
        raise DomainError("need N >= 1")
    if N == 1:
        return VelocityProfile(nl, N, prev.k + 1, prev.U0, prev.Umax, prev.nodes, np.ones(prev.M), prev.shift)
    nodes = prev.nodes
    a, b = nodes[:-1], nodes[1:]
    half = 0.5 * (b - a)
    x = (0.5 * (a + b))[:, None] + half[:, None] * _GL_X  # (M-1, 15)
    # r at every quadrature point: tail = T_{j+1} + int_x^{u_{j+1}} 1/v
    inner = prev._gl(x, np.broadcast_to(b[:, None], x.shape), lambda y: 1.0 / prev.v(y))
    r = 1.0 - (prev.T[1:, None] + inner)
    if np.any(r < 0.5):
        raise U0TooSmallError(f"r fell below 1/2 while building iterate {prev.k + 1}; increase U0 (now {prev.U0:g})")
    panels = half * ((prev.v(x) / r) @ _GL_W)
    I = np.concatenate([[0.0], np.cumsum(panels)])
    radicand = 1.0 - (N - 1) * I / nl.F(nodes)
    if np.any(radicand <= 0):
        bad = nodes[np.argmax(radicand <= 0)]
        raise U0TooSmallError(f"radicand <= 0 at u={bad:g} for iterate {prev.k + 1}; increase U0 (now {prev.U0:g})")
    w = np.sqrt(radicand)
    out = VelocityProfile(nl, N, prev.k + 1, prev.U0, prev.Umax, nodes, w, prev.shift)
    return out.check()


def first_iterate_deviation(nl: Nonlinearity, N: int, U0: float, M: int = DEFAULT_M) -> float:
    v1 = iterate(nl, N, make_v0(nl, U0, M=M, N=N))
    return float(np.max(np.abs(v1.w - 1.0)))


def choose_U0(nl: Nonlinearity, N: int = 3, M: int = DEFAULT_M, max_exponent: int = 40) -> float:
    """Smallest U0 in {1, 2, 4, ...} with tail(v_0) <= (1-rho)/2 and sup|w_1 - 1| <= rho/2."""
    nl.require_keller_osserman()
    for j in range(max_exponent + 1):
        U0 = 2.0**j
        if not U0 > nl.a or not nl.F(U0) > 0:
            continue
        if tail_v0(nl, U0) > (1 - RHO) / 2:
            continue
        try:
            dev = first_iterate_deviation(nl, N, U0, M)
        except (U0TooSmallError, BallViolationError):
            continue
        if dev <= RHO / 2:
            log.info("choose_U0(%s, N=%d) -> %g (deviation %.3g)", nl.spec, N, U0, dev)
            return U0
    raise NumericsError(f"no admissible U0 found up to 2^{max_exponent} for {nl.spec}")


@dataclass
class IterationResult:
    profiles: list
    deltas: list  # deltas[k-1] = sup|w_k / w_{k-1} - 1|
    converged: bool
    U0: float
    retried: bool = False

    @property
    def ratios(self) -> list:
        d = self.deltas
        return [d[i + 1] / d[i] if d[i] > 0 else float("nan") for i in range(len(d) - 1)]

    @property
    def geometric(self) -> bool:
        """Whether every available delta ratio is below 0.9 (contraction evidence)."""
        rs = [x for x in self.ratios if math.isfinite(x)]
        return bool(rs) and max(rs) <= 0.9


def _run(nl, N, U0, tol, kmax, M, Umax):
    prof = [make_v0(nl, U0, Umax, M, N)]
    deltas = []
    worse = 0
    for _ in range(kmax):
        nxt = iterate(nl, N, prof[-1])
        delta = float(np.max(np.abs(nxt.w / prof[-1].w - 1.0)))
        prof.append(nxt)
        if deltas and delta >= deltas[-1] and delta > 1e-13:
            worse += 1
            if worse >= 3:
                raise ContractionError(
                    f"updates stopped shrinking at k={nxt.k} (delta={delta:.3g}); try a larger U0"
                )
        else:
            worse = 0
        deltas.append(delta)
        if delta < tol:
            return prof, deltas, True
    return prof, deltas, False


def iterate_to_convergence(
    nl: Nonlinearity,
    N: int,
    U0: Optional[float] = None,
    tol: float = 1e-12,
    kmax: int = 20,
    M: int = DEFAULT_M,
    Umax: Optional[float] = None,
) -> IterationResult:
    """Iterate until sup|w_k/w_{k-1} - 1| < tol or k = kmax.

    A nonpositive radicand triggers one retry with U0 doubled.
    """
    if kmax < 1:
        raise DomainError("need kmax >= 1")
    if U0 is None:
        U0 = choose_U0(nl, N, M)
    try:
        prof, deltas, ok = _run(nl, N, U0, tol, kmax, M, Umax)
        return IterationResult(prof, deltas, ok, U0)
    except U0TooSmallError as exc:
        log.info("retrying with U0 doubled: %s", exc)
        U0 = 2 * U0
        prof, deltas, ok = _run(nl, N, U0, tol, kmax, M, None if Umax is None else 2 * Umax)
        return IterationResult(prof, deltas, ok, U0, retried=True)


def profile_from_velocity(vp: VelocityProfile, d: float) -> float:
    """Solve int_u^inf dt / v_k = d for u >= U0."""
    dmax = float(vp.T[0])
    if not 0 < d <= dmax:
        raise DomainError(f"d must lie in (0, {dmax:.6g}] for this profile (U0={vp.U0:g}), got {d!r}")
    if d >= vp.T[-1]:
        j = int(np.searchsorted(-vp.T, -d, side="left"))
        j = min(max(j, 1), vp.M - 1)
        lo, hi = vp.nodes[j - 1], vp.nodes[j]
        return find_root_monotone(lambda u: vp.tail(u) - d, lo, hi, tol=1e-14 * hi)
    lo = vp.Umax
    hi = 2 * lo
    while vp.tail(hi) > d:
        lo, hi = hi, 2 * hi
        if not math.isfinite(hi):
            raise DomainError(f"d={d!r} is too small to resolve")
    return find_root_monotone(lambda u: vp.tail(u) - d, lo, hi, tol=1e-14 * hi)


class BlowupProfile:
    """d -> u_k(d) backed by a velocity profile, with an insert-only cache."""

    def __init__(self, vp: VelocityProfile):
        self.vp = vp
        self._table = {}
        self._lock = threading.Lock()

    @property
    def k(self):
        return self.vp.k

    @property
    def d_max(self) -> float:
        return float(self.vp.T[0])

    def __call__(self, d):
        if np.ndim(d):
            return np.array([self(float(x)) for x in np.ravel(d)]).reshape(np.shape(d))
        d = float(d)
        with self._lock:
            hit = self._table.get(d)
        if hit is None:
            hit = profile_from_velocity(self.vp, d)
            with self._lock:
                self._table.setdefault(d, hit)
        return hit

    def table(self):
        with self._lock:
            return sorted(self._table.items())


def _one_dim_tail(nl, c, phi):
    res = integrate_to_infinity(lambda s: 1.0 / np.sqrt(2.0 * (nl.F(s) + c)), phi, tol=1e-13)
    return res.require(f"one-dimensional tail from {phi:g}")


def _upper_bracket(h, lo):
    hi = max(2 * lo, lo + 1.0)
    while h(hi) > 0:
        lo, hi = hi, hi + 2 * (hi - lo)
        if not math.isfinite(hi):
            raise DomainError("could not bracket the profile root")
    return lo, hi


def one_dim_profile(nl: Nonlinearity, c: float, d: float, lo: Optional[float] = None) -> float:
    """phi_c(d) solving int_phi^inf ds / sqrt(2(F(s) + c)) = d."""
    if not d > 0:
        raise DomainError("need d > 0")
    lo = nl.default_lo() if lo is None else lo
    if not nl.F(lo) + c > 0:
        raise DomainError(f"F + c must be positive from phi = {lo:g} on")
    h = lambda phi: _one_dim_tail(nl, c, phi) - d  # noqa: E731
    if h(lo) < 0:
        raise DomainError(f"d={d!r} exceeds the largest reachable value {h(lo) + d:.6g}")
    a, b = _upper_bracket(h, lo)
    return find_root_monotone(h, a, b, tol=1e-14 * b)


def one_dim_gap(nl: Nonlinearity, c: float, d: float, lo: Optional[float] = None) -> float:
    """phi_0(d) - phi_c(d), computed without subtracting two large numbers.

    With D(phi) = int_phi^inf (1/sqrt(2F) - 1/sqrt(2(F+c))), the gap g solves
    int_{phi_0 - g}^{phi_0} ds / sqrt(2F) = D(phi_0 - g).
    """
    if c == 0:
        return 0.0
    phi0 = one_dim_profile(nl, 0.0, d, lo)

    def diff(s):
        a = 2.0 * nl.F(s)
        b = a + 2.0 * c
        return 2.0 * c / (np.sqrt(a) * np.sqrt(b) * (np.sqrt(a) + np.sqrt(b)))

    def D(phi):
        return integrate_to_infinity(diff, phi, tol=1e-12).require("one-dimensional gap tail")

    def h(g):
        left = phi0 - g
        head = integrate_adaptive(lambda s: 1.0 / nl.v0(s), left, phi0, tol=1e-13).require() if g else 0.0
        return head - D(left)

    # g has the sign of c; search on |g|
    sgn = 1.0 if c > 0 else -1.0
    floor = nl.default_lo() if lo is None else lo
    lim = phi0 - floor
    hi = 1e-12 * max(1.0, phi0)
    while sgn * h(sgn * hi) < 0:
        hi *= 4
        if hi > lim:
            raise DomainError("gap root lies outside the admissible range")
    return sgn * find_root_monotone(lambda g: sgn * h(sgn * g), 0.0, hi, tol=1e-15 * hi + 1e-300)


@dataclass
class ProfileComparison:
    d: np.ndarray
    u_a: np.ndarray
    u_b: np.ndarray
    gap: np.ndarray
    normalized_gap: np.ndarray
    tail: np.ndarray

    @property
    def relative(self) -> np.ndarray:
        """normalized gap divided by int_{u_a}^inf du / v_0."""
        return self.normalized_gap / self.tail

    def rows(self):
        return list(zip(self.d, self.u_a, self.u_b, self.gap, self.normalized_gap, self.relative))


def compare_profiles(pa: BlowupProfile, pb: BlowupProfile, d_grid) -> ProfileComparison:
    if pa.vp.nl is not pb.vp.nl:
        raise DomainError("profiles must come from the same nonlinearity")
    nl = pa.vp.nl
    inv = lambda t: 1.0 / nl.v0(t)  # noqa: E731
    ds, ua, ub, gap, ngap, tail = [], [], [], [], [], []
    for d in d_grid:
        a, b = pa(d), pb(d)
        lo, hi = min(a, b), max(a, b)
        ng = integrate_adaptive(inv, lo, hi, tol=1e-12).require("normalized gap") if hi > lo else 0.0
        ds.append(d)
        ua.append(a)
        ub.append(b)
        gap.append(b - a)
        ngap.append(ng)
        tail.append(tail_v0(nl, a))
    return ProfileComparison(*(np.array(x, dtype=float) for x in (ds, ua, ub, gap, ngap, tail)))
