"""Quadrature, root finding and ODE integration kernels.

Everything here is deterministic. Integrands are called with numpy arrays
when they accept them; plain scalar callables are vectorized transparently.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import BracketError, NumericsError

EPS = np.finfo(float).eps

# 15-point Kronrod rule with embedded 7-point Gauss rule (QUADPACK qk15).
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])
_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_WK = np.concatenate([_WGK[:-1], _WGK[::-1]])
_WG_FULL = np.zeros(15)
_WG_FULL[[1, 3, 5]] = _WG[:3]
_WG_FULL[[13, 11, 9]] = _WG[:3]
_WG_FULL[7] = _WG[3]

_GL_X, _GL_W = np.polynomial.legendre.leggauss(15)


@dataclass
class QuadratureResult:
    value: float
    error_estimate: float
    converged: bool
    cutoff_used: Optional[float] = None
    status: str = "converged"
    n_intervals: int = 1

    def require(self, what="integral"):
        if not self.converged:
            raise NumericsError(
                f"{what} did not converge ({self.status}): value={self.value!r}, "
                f"error estimate={self.error_estimate!r}"
            )
        return self.value


@dataclass
class Trajectory:
    r: np.ndarray
    y: np.ndarray
    reason: str

    def __len__(self):
        return len(self.r)


def vectorize(g: Callable) -> Callable:
    """Return a version of ``g`` that maps float arrays to float arrays."""
    if getattr(g, "_blowup_vectorized", False):
        return g
    probe = np.array([1.0, 2.0])
    try:
        with np.errstate(all="ignore"):
            out = np.asarray(g(probe), dtype=float)
        ok = out.shape in ((2,), ())
    except Exception:
        ok = False

    if ok:
        def vg(x):
            x = np.asarray(x, dtype=float)
            return np.broadcast_to(np.asarray(g(x), dtype=float), x.shape)
    else:
        def vg(x):
            x = np.asarray(x, dtype=float)
            return np.array([float(g(float(t))) for t in x.ravel()]).reshape(x.shape)
    vg._blowup_vectorized = True
    return vg


def _gk15(vg, a, b):
    """Kronrod estimate, error estimate and |f| integral on each [a_i, b_i]."""
    a = np.atleast_1d(a)
    b = np.atleast_1d(b)
    half = 0.5 * (b - a)
    center = 0.5 * (a + b)
    x = center[:, None] + half[:, None] * _NODES[None, :]
    with np.errstate(all="ignore"):
        fx = vg(x.ravel()).reshape(x.shape)
    if not np.all(np.isfinite(fx)):
        bad = x[~np.isfinite(fx)][0]
        raise NumericsError(f"integrand not finite at t={bad!r}")
    resk = half * (fx @ _WK)
    resg = half * (fx @ _WG_FULL)
    resabs = np.abs(half) * (np.abs(fx) @ _WK)
    mean = resk / (2 * half)
    resasc = np.abs(half) * (np.abs(fx - mean[:, None]) @ _WK)
    err = np.abs(resk - resg)
    with np.errstate(all="ignore"):
        scaled = np.where(
            (resasc != 0) & (err != 0),
            resasc * np.minimum(1.0, (200 * err / np.where(resasc == 0, 1, resasc)) ** 1.5),
            err,
        )
    floor = 50 * EPS * resabs
    scaled = np.maximum(scaled, floor)
    return resk, scaled, resabs


def integrate_adaptive(g, lo, hi, tol=1e-10, abs_tol=0.0, max_intervals=2**20):
    """Globally adaptive Gauss-Kronrod (7, 15) quadrature of ``g`` on [lo, hi].

    The interval with the largest error estimate is bisected until the summed
    estimate drops below ``max(abs_tol, tol * |value|)``. Intervals too narrow
    to split in floating point stop the refinement early.
    """
    lo = float(lo)
    hi = float(hi)
    if lo == hi:
        return QuadratureResult(0.0, 0.0, True)
    if not lo < hi:
        r = integrate_adaptive(g, hi, lo, tol, abs_tol, max_intervals)
        r.value = -r.value
        return r
    vg = vectorize(g)
    tol = max(tol, 100 * EPS)
    A = np.array([lo])
    B = np.array([hi])
    V, E, _ = _gk15(vg, A, B)
    n = 1
    while True:
        total = math.fsum(V)
        total_err = math.fsum(E)
        if total_err <= max(abs_tol, tol * abs(total)):
            return QuadratureResult(total, total_err, True, n_intervals=n)
        if n >= max_intervals:
            return QuadratureResult(total, total_err, False, status="subdivision-limit", n_intervals=n)
        # bisect the worst quarter of the intervals in one vectorized sweep
        k = max(1, min(len(E) // 4, max_intervals - n))
        idx = np.argsort(-E, kind="stable")[:k]
        a, b = A[idx], B[idx]
        m = 0.5 * (a + b)
        ok = (a < m) & (m < b) & ((b - a) > 4 * EPS * np.maximum(abs(a), abs(b)))
        if not ok[0]:
            # intervals cannot shrink further; accept when within modest slack
            close = total_err <= max(abs_tol, tol * max(1.0, abs(total)))
            return QuadratureResult(total, total_err, close, status="roundoff", n_intervals=n)
        idx, a, b, m = idx[ok], a[ok], b[ok], m[ok]
        vals, errs, _ = _gk15(vg, np.concatenate([a, m]), np.concatenate([m, b]))
        keep = np.ones(len(A), dtype=bool)
        keep[idx] = False
        A = np.concatenate([A[keep], a, m])
        B = np.concatenate([B[keep], m, b])
        V = np.concatenate([V[keep], vals])
        E = np.concatenate([E[keep], errs])
        n += len(idx)


def integrate_to_infinity(
    g,
    lo,
    tol=1e-10,
    max_panels=400,
    nondecay_panels=20,
    decay_ratio=0.97,
):
    """Integrate ``g`` over [lo, +inf) by summing doubling panels.

    Panels are [lo*2^j, lo*2^(j+1)] (shifted to lo + 2^j - 1 when lo <= 0).
    Once the last panel-over-panel ratios are all below ``decay_ratio``, the
    remaining tail is extrapolated as a geometric series; convergence is
    declared when that remainder (taken at the worst recent ratio) plus the
    panel errors is below ``tol`` relative. ``nondecay_panels`` consecutive
    panels that fail to shrink by ``decay_ratio`` mean divergence; integrals
    decaying slower than that are reported divergent (a known false-positive
    mode). Contributions of alternating sign never count as converged.
    """
    lo = float(lo)
    vg = vectorize(g)
    tol = max(tol, 500 * EPS)
    if lo > 0:
        def edge(j):
            return lo * 2.0**j
    else:
        def edge(j):
            return lo + (2.0**j - 1.0)

    contribs = []
    errs = []
    nondecay = 0
    for j in range(max_panels):
        a, b = edge(j), edge(j + 1)
        if not math.isfinite(b):
            break
        res = integrate_adaptive(vg, a, b, tol=max(0.05 * tol, 100 * EPS), abs_tol=0.0)
        if not res.converged:
            return QuadratureResult(
                math.fsum(contribs) + res.value, float("inf"), False, b, status="inconclusive"
            )
        contribs.append(res.value)
        errs.append(res.error_estimate)
        total = math.fsum(contribs)
        c = res.value
        if len(contribs) >= 2:
            prev = contribs[-2]
            same_sign = c * prev > 0
            if same_sign and abs(c) >= decay_ratio * abs(prev):
                nondecay += 1
            else:
                nondecay = 0
            if nondecay >= nondecay_panels:
                return QuadratureResult(total, float("inf"), False, b, status="diverged")
        if len(contribs) < 4:
            continue
        last = contribs[-4:]
        if c == 0.0 and total != 0.0 and all(abs(x) <= abs(total) * tol for x in last[1:]):
            return QuadratureResult(total, math.fsum(errs), True, b)
        if total == 0.0 and all(x == 0.0 for x in last):
            return QuadratureResult(0.0, 0.0, True, b)
        if not all(x * total > 0 for x in last):
            continue
        ratios = [last[i + 1] / last[i] for i in range(3)]
        rmax = max(ratios)
        if rmax > decay_ratio:
            continue
        rlast = ratios[-1]
        rem_max = c * rmax / (1 - rmax)
        rem_last = c * rlast / (1 - rlast)
        value = total + rem_last
        panel_err = math.fsum(errs)
        if panel_err + abs(rem_max) <= tol * abs(value):
            return QuadratureResult(value, panel_err + abs(rem_max - rem_last), True, b)
    return QuadratureResult(math.fsum(contribs), float("inf"), False, edge(len(contribs)), status="inconclusive")


def find_root_monotone(h, lo, hi, tol=1e-12, ftol=0.0, maxiter=200):
    """Brent's method on a bracketing interval.

    Stops when the bracket is narrower than ``tol`` (plus a few ulps of the
    root) or ``|h| <= ftol``. Raises BracketError without a sign change.
    """
    a, b = float(lo), float(hi)
    fa, fb = float(h(a)), float(h(b))
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    if fa * fb > 0 or math.isnan(fa) or math.isnan(fb):
        raise BracketError(f"no sign change on [{a!r}, {b!r}]: h={fa!r}, {fb!r}")
    c, fc = a, fa
    d = e = b - a
    for _ in range(maxiter):
        if fb * fc > 0:
            c, fc = a, fa
            d = e = b - a
        if abs(fc) < abs(fb):
            a, b, c = b, c, b
            fa, fb, fc = fb, fc, fb
        tol1 = 2 * EPS * abs(b) + 0.5 * tol
        xm = 0.5 * (c - b)
        if abs(xm) <= tol1 or fb == 0.0 or abs(fb) <= ftol:
            return b
        if abs(e) >= tol1 and abs(fa) > abs(fb):
            s = fb / fa
            if a == c:
                p = 2 * xm * s
                q = 1 - s
            else:
                qq = fa / fc
                r = fb / fc
                p = s * (2 * xm * qq * (qq - r) - (b - a) * (r - 1))
                q = (qq - 1) * (r - 1) * (s - 1)
            if p > 0:
                q = -q
            p = abs(p)
            if 2 * p < min(3 * xm * q - abs(tol1 * q), abs(e * q)):
                e, d = d, p / q
            else:
                d = e = xm
        else:
            d = e = xm
        a, fa = b, fb
        b += d if abs(d) > tol1 else math.copysign(tol1, xm)
        fb = float(h(b))
    raise NumericsError(f"root finding did not converge in {maxiter} iterations")


# Dormand-Prince 5(4) tableau.
_DP_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_B = _DP_A[6]
_DP_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)


def _dp_step(rhs, r, y, h, k1):
    ks = [k1]
    for i in range(1, 7):
        yi = y + h * sum(a * k for a, k in zip(_DP_A[i], ks) if a != 0.0)
        ks.append(np.asarray(rhs(r + _DP_C[i] * h, yi), dtype=float))
    y_new = y + h * sum(b * k for b, k in zip(_DP_B, ks[:6]) if b != 0.0)
    err = h * sum(e * k for e, k in zip(_DP_E, ks) if e != 0.0)
    return y_new, err, ks[6]


def integrate_ivp(
    rhs,
    y0,
    r0,
    r_end=None,
    cap=None,
    tol=1e-10,
    atol=None,
    h0=None,
    max_steps=1_000_000,
    fixed_step=None,
):
    """Dormand-Prince 5(4) integration of y' = rhs(r, y) with PI step control.

    Stops at ``r_end``, when ``cap(r, y)`` first holds (the crossing is
    bisected with single steps until it is located within ``tol`` relative),
    or on step underflow. ``fixed_step`` disables adaptivity.
    """
    if r_end is None and cap is None:
        raise ValueError("need r_end or cap")
    y = np.array(y0, dtype=float)
    r = float(r0)
    atol = tol * 1e-6 if atol is None else atol
    rs = [r]
    ys = [y.copy()]
    k1 = np.asarray(rhs(r, y), dtype=float)

    def norm(err, y_old, y_new):
        sc = atol + tol * np.maximum(np.abs(y_old), np.abs(y_new))
        return float(np.sqrt(np.mean((err / sc) ** 2)))

    if fixed_step is not None:
        h = float(fixed_step)
    elif h0 is not None:
        h = float(h0)
    else:
        sc = atol + tol * np.abs(y)
        d0 = float(np.sqrt(np.mean((y / sc) ** 2)))
        d1 = float(np.sqrt(np.mean((k1 / sc) ** 2)))
        h = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
        if r_end is not None:
            h = min(h, abs(r_end - r))
    err_prev = 1e-4
    reason = "step-limit"
    for _ in range(max_steps):
        if r_end is not None:
            remaining = r_end - r
            if remaining <= 4 * EPS * max(1.0, abs(r_end)):
                reason = "endpoint"
                break
            h = min(h, remaining)
        if h <= 16 * EPS * max(abs(r), 1e-300):
            reason = "step-underflow"
            break
        y_new, err, k7 = _dp_step(rhs, r, y, h, k1)
        if fixed_step is None:
            en = norm(err, y, y_new)
            if not np.all(np.isfinite(y_new)) or not math.isfinite(en):
                h *= 0.2
                continue
            if en > 1.0:
                h *= max(0.2, 0.9 * en ** -0.2)
                continue
        else:
            en = 0.0
        if cap is not None and cap(r + h, y_new):
            lo_t, hi_t = 0.0, h
            y_hi = y_new
            while hi_t - lo_t > tol * max(abs(r), abs(h), 1e-300) * 1e-3 and hi_t - lo_t > 4 * EPS * max(abs(r), 1e-300):
                mid = 0.5 * (lo_t + hi_t)
                y_mid, _, _ = _dp_step(rhs, r, y, mid, k1)
                if cap(r + mid, y_mid):
                    hi_t, y_hi = mid, y_mid
                else:
                    lo_t = mid
            rs.append(r + hi_t)
            ys.append(y_hi)
            reason = "cap-reached"
            break
        r = r + h
        if r_end is not None and abs(r_end - r) <= 4 * EPS * max(1.0, abs(r_end)):
            r = float(r_end)
        y = y_new
        k1 = k7
        rs.append(r)
        ys.append(y.copy())
        if fixed_step is None:
            en = max(en, 1e-10)
            fac = 0.9 * en ** (-0.7 / 5) * err_prev ** (0.4 / 5)
            h *= min(5.0, max(0.2, fac))
            err_prev = en
    return Trajectory(np.array(rs), np.array(ys), reason)


class _PanelTable:
    """Shared machinery: resolved panels on a stretched geometric node set."""

    def __init__(self, g, origin, tol, ratio):
        self.g = vectorize(g)
        self.origin = float(origin)
        self.scale = max(1.0, abs(self.origin))
        self.tol = tol
        self.ratio = ratio
        self.nodes = [self.origin]
        self.panels = []
        self.resolved = []
        self._lock = threading.Lock()

    def _node(self, j):
        return self.origin + self.scale * (self.ratio**j - 1.0)

    def _grow_to(self, t):
        while self.nodes[-1] < t:
            a = self.nodes[-1]
            b = self._node(len(self.nodes))
            res = integrate_adaptive(self.g, a, b, tol=self.tol)
            res.require(f"panel [{a:g}, {b:g}]")
            self.nodes.append(b)
            self.panels.append(res.value)
            self.resolved.append(res.n_intervals <= 2)

    def _partial(self, idx, a, b):
        """Integral over [a_i, b_i] inside panel idx[i] (vectorized when resolved)."""
        out = np.empty(len(a))
        res = np.array([self.resolved[i] for i in idx], dtype=bool)
        if np.any(res):
            aa, bb = a[res], b[res]
            half = 0.5 * (bb - aa)
            x = (0.5 * (aa + bb))[:, None] + half[:, None] * _GL_X[None, :]
            with np.errstate(all="ignore"):
                fx = self.g(x.ravel()).reshape(x.shape)
            out[res] = half * (fx @ _GL_W)
        for i in np.nonzero(~res)[0]:
            out[i] = integrate_adaptive(self.g, a[i], b[i], tol=self.tol).require()
        return out


class RunningIntegral(_PanelTable):
    """t -> integral of g from ``base`` to t, memoized on geometric panels."""

    def __init__(self, g, base, tol=1e-13, ratio=2**0.25):
        super().__init__(g, base, tol, ratio)
        self.cum = [0.0]

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        flat = t.ravel()
        out = np.empty(flat.shape)
        below = flat < self.origin
        above = ~below
        if np.any(above):
            ta = flat[above]
            with self._lock:
                n_old = len(self.panels)
                self._grow_to(float(ta.max()))
                for v in self.panels[n_old:]:
                    self.cum.append(self.cum[-1] + v)
                nodes = np.array(self.nodes)
                cum = np.array(self.cum)
            idx = np.clip(np.searchsorted(nodes, ta, side="right") - 1, 0, len(nodes) - 2) if len(nodes) > 1 else np.zeros(len(ta), int)
            if len(nodes) == 1:
                out[above] = 0.0
            else:
                out[above] = cum[idx] + self._partial(idx, nodes[idx], ta)
        for i in np.nonzero(below)[0]:
            out[i] = -integrate_adaptive(self.g, flat[i], self.origin, tol=self.tol).require()
        return out.reshape(t.shape) if t.ndim else float(out[0])


class TailIntegral(_PanelTable):
    """t -> integral of g from t to +infinity, memoized on geometric panels."""

    def __init__(self, g, start, tol=1e-13, ratio=2**0.25, span=2**10):
        super().__init__(g, start, tol, ratio)
        self.tails = None
        self._extend(self.origin + self.scale * span)

    def _extend(self, t):
        self._grow_to(t)
        top = self.nodes[-1]
        res = integrate_to_infinity(self.g, top, tol=self.tol)
        res.require(f"tail integral from {top:g}")
        panels = np.array(self.panels)
        # tails[i] = sum_{j >= i} panels[j] + tail(top), summed from the small end
        self.tails = np.append(np.cumsum(panels[::-1])[::-1] + res.value, res.value)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        flat = t.ravel()
        out = np.empty(flat.shape)
        below = flat < self.origin
        above = ~below
        if np.any(above):
            ta = flat[above]
            with self._lock:
                if ta.max() > self.nodes[-1]:
                    self._extend(float(ta.max()))
                nodes = np.array(self.nodes)
                tails = self.tails
            idx = np.clip(np.searchsorted(nodes, ta, side="right") - 1, 0, len(nodes) - 2)
            out[above] = tails[idx + 1] + self._partial(idx, ta, nodes[idx + 1])
        for i in np.nonzero(below)[0]:
            out[i] = integrate_adaptive(self.g, flat[i], self.origin, tol=self.tol).require() + self.tails[0]
        return out.reshape(t.shape) if t.ndim else float(out[0])
