"""Explicit expansion coefficients for the pure power nonlinearity.

Everything here works in the normalization F(u) = u^(2q)/2 with 2q - 1 = p,
so v_0 = u^q. With beta = q - 1 the iterates and the blow-up profile take
the forms

    v_n = u^q  sum_k b_k u^(-k beta)
    u_n = d^(-1/beta) sum_k a_k d^k

The solution of the raw problem f(u) = u^p is a constant multiple of the
normalized one: if U solves Delta U = ((p+1)/2) U^p then u = c U with
c^(p-1) = (p+1)/2 solves Delta u = u^p. No conversion helper is provided.

Series arithmetic is coefficient-exact: no quadrature is involved, so the
coefficients are bit-identical between runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ResonanceError

_EXP_TOL = 1e-12


@dataclass(frozen=True)
class TruncatedSeries:
    """sum_k coeffs[k] x^(e0 + k*step) in a small variable x, truncated at len(coeffs)-1.

    ``dropped`` records that some operation discarded terms beyond the
    truncation order (for example the tail of a product).
    """

    coeffs: tuple
    e0: float = 0.0
    step: float = 1.0
    dropped: bool = False

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        if not self.coeffs:
            raise DomainError("a series needs at least one coefficient")
        if not self.step > 0:
            raise DomainError("series step must be positive")

    @classmethod
    def constant(cls, c, order, step=1.0):
        return cls((c,) + (0.0,) * order, 0.0, step)

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    @property
    def exponents(self) -> np.ndarray:
        return self.e0 + self.step * np.arange(len(self.coeffs))

    @property
    def top(self) -> float:
        """Largest exponent still represented."""
        return self.e0 + self.order * self.step

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = sum(c * x ** e for c, e in zip(self.coeffs, self.exponents))
        return float(out) if out.ndim == 0 else out

    def _check_step(self, other):
        if abs(self.step - other.step) > _EXP_TOL * max(1.0, self.step):
            raise DomainError("series steps differ")

    def scale(self, c) -> "TruncatedSeries":
        return TruncatedSeries([c * a for a in self.coeffs], self.e0, self.step, self.dropped)

    def shift(self, de) -> "TruncatedSeries":
        """Multiply by x^de."""
        return TruncatedSeries(self.coeffs, self.e0 + de, self.step, self.dropped)

    def truncate(self, order) -> "TruncatedSeries":
        if order >= self.order:
            return self
        return TruncatedSeries(self.coeffs[: order + 1], self.e0, self.step, True)

    def __add__(self, other):
        self._check_step(other)
        k = (other.e0 - self.e0) / self.step
        if abs(k - round(k)) > 1e-9:
            raise DomainError("cannot add series whose exponents are not aligned")
        lo, hi = (self, other) if k >= 0 else (other, self)
        off = abs(int(round(k)))
        top = min(self.top, other.top)
        n = int(round((top - lo.e0) / self.step))
        out = np.zeros(n + 1)
        m = min(n + 1, len(lo.coeffs))
        out[:m] += lo.coeffs[:m]
        m = max(0, min(n + 1 - off, len(hi.coeffs)))
        out[off:off + m] += hi.coeffs[:m]
        dropped = lo.dropped or hi.dropped or n < max(lo.order, hi.order + off)
        return TruncatedSeries(out, lo.e0, self.step, dropped)

    def __neg__(self):
        return self.scale(-1.0)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if not isinstance(other, TruncatedSeries):
            return self.scale(other)
        self._check_step(other)
        n = min(self.order, other.order)
        a = np.array(self.coeffs[: n + 1])
        b = np.array(other.coeffs[: n + 1])
        out = np.convolve(a, b)[: n + 1]
        dropped = self.dropped or other.dropped or self.order + other.order > n
        return TruncatedSeries(out, self.e0 + other.e0, self.step, dropped)

    __rmul__ = __mul__

    def power(self, alpha) -> "TruncatedSeries":
        """self^alpha via the J.C.P. Miller recurrence (leading coefficient must be positive
        unless alpha is an integer)."""
        c0 = self.coeffs[0]
        if c0 == 0:
            raise DomainError("power of a series needs a nonzero leading coefficient")
        if c0 < 0 and alpha != int(alpha):
            raise DomainError("fractional power of a series with negative leading coefficient")
        g = np.array(self.coeffs) / c0
        n = self.order
        h = np.zeros(n + 1)
        h[0] = 1.0
        for k in range(1, n + 1):
            j = np.arange(1, k + 1)
            h[k] = np.dot((alpha + 1) * j - k, g[j] * h[k - j]) / k
        lead = c0**alpha
        return TruncatedSeries(lead * h, alpha * self.e0, self.step, self.dropped or n > 0)

    def recip(self) -> "TruncatedSeries":
        return self.power(-1)

    def sqrt(self) -> "TruncatedSeries":
        return self.power(0.5)

    def tail_integrate(self) -> "TruncatedSeries":
        """Term-wise u -> int_u^inf t^(-e) dt = u^(1-e)/(e-1), i.e. x^e -> x^(e-1)/(e-1).

        Here x = 1/t; every exponent must exceed 1 (decaying faster than 1/t).
        """
        out = []
        for k, (c, e) in enumerate(zip(self.coeffs, self.exponents)):
            if abs(e - 1.0) < _EXP_TOL:
                raise ResonanceError(f"tail integral of t^-1 at order {k}", order=k)
            if e < 1.0 and c != 0.0:
                raise DomainError(f"tail integral diverges: term of order {k} decays like t^{-e:g}")
            out.append(c / (e - 1.0))
        return TruncatedSeries(out, self.e0 - 1.0, self.step, self.dropped)

    def base_integrate(self) -> "TruncatedSeries":
        """Term-wise antiderivative t^(-e) -> u^(1-e)/(1-e) with no constant of integration."""
        out = []
        for k, (c, e) in enumerate(zip(self.coeffs, self.exponents)):
            if abs(e - 1.0) < _EXP_TOL:
                raise ResonanceError(f"antiderivative of t^-1 at order {k}", order=k)
            out.append(c / (1.0 - e))
        return TruncatedSeries(out, self.e0 - 1.0, self.step, self.dropped)

    def revert(self) -> "TruncatedSeries":
        """Compositional inverse of y = sum_k c_k X^(k+1), X = x^step.

        Returns X as the series sum_k t_k y^(k+1) (e0 = 1, step = 1 in y).
        """
        if abs(self.e0 - self.step) > _EXP_TOL * max(1.0, self.step):
            raise DomainError("reversion needs a series of the form c_0 x^step (1 + ...)")
        c0 = self.coeffs[0]
        if c0 == 0:
            raise DomainError("reversion needs a nonzero leading coefficient")
        n = self.order
        s = np.array(self.coeffs) / c0  # y / c0 = X s(X)
        # X = D t(D) with D = y/c0 and t = 1/s(D t); each pass fixes one more coefficient
        t = TruncatedSeries.constant(1.0, n)
        for _ in range(n + 1):
            inner = np.concatenate([[0.0], t.coeffs[:n]])
            t = _compose(s, inner, n).recip()
        coeffs = np.array(t.coeffs) / c0 ** (1 + np.arange(n + 1))
        return TruncatedSeries(coeffs, 1.0, 1.0, True)


def _compose(outer, inner, n):
    """outer(inner(D)) truncated at order n by Horner's rule; inner has no constant term."""
    result = np.zeros(n + 1)
    for c in reversed(outer[: n + 1]):
        result = np.convolve(result, inner)[: n + 1]
        result[0] += c
    return TruncatedSeries(result, 0.0, 1.0)


def series_mul(a, b):
    return a * b


def series_recip(a):
    return a.recip()


def series_sqrt(a):
    return a.sqrt()


def series_tail_integrate(a):
    return a.tail_integrate()


def series_base_integrate(a):
    return a.base_integrate()


def is_resonant(p: float, tol: float = 1e-9) -> bool:
    r = 2.0 / (p - 1.0)
    return abs(r - round(r)) < tol and round(r) >= 1


@dataclass(frozen=True)
class SeriesExpansion:
    p: float
    N: int
    n: int
    a: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)

    @property
    def q(self) -> float:
        return (self.p + 1) / 2

    @property
    def beta(self) -> float:
        return self.q - 1

    @property
    def singular_index(self) -> int:
        """Upper summation index of the singular part, floor(2/(p-1))."""
        return math.floor(2.0 / (self.p - 1.0))

    @property
    def singular_count(self) -> int:
        return self.singular_index + 1

    @property
    def beyond_singular(self) -> bool:
        """True when terms of order above the singular index were requested (they are o(1))."""
        return self.n >= self.singular_count

    @property
    def remainder_order(self) -> float:
        """Exponent of d in the first omitted term."""
        return -1.0 / self.beta + self.n + 1


def _next_velocity(w: TruncatedSeries, q: float, N: int) -> TruncatedSeries:
    """One step of the fixed-point map on the ratio series w = v / u^q in x = 1/u."""
    n = w.order
    inv_v = w.recip().shift(q)  # 1/v = x^q / w
    tail = inv_v.tail_integrate()  # int_t^inf ds/v, exponents beta*(k+1)
    r = TruncatedSeries.constant(1.0, n + 1, w.step) - tail
    integrand = (w.shift(-q) * r.truncate(n).recip()).truncate(n)  # v / r
    P = integrand.base_integrate()  # int^u v/r, leading u^(q+1)
    corr = P.shift(2 * q) * (-2.0 * (N - 1))  # relative to 2F = u^(2q)
    w2 = TruncatedSeries.constant(1.0, n + 1, w.step) + corr
    return w2.truncate(n).sqrt()


def power_coefficients(p: float, N: int, n: int) -> SeriesExpansion:
    """Coefficients a_0..a_n of u and b_0..b_n of v/u^q for f = u^p (normalized F = u^(2q)/2)."""
    if not p > 1:
        raise DomainError(f"need p > 1, got {p!r}")
    if is_resonant(p):
        raise ResonanceError(f"2/(p-1) = {2 / (p - 1):g} is an integer; p={p:g} is resonant", order=None)
    if n < 0 or N < 1:
        raise DomainError("need n >= 0 and N >= 1")
    q = (p + 1) / 2
    beta = q - 1
    w = TruncatedSeries.constant(1.0, n, beta)
    for _ in range(n):
        w = _next_velocity(w, q, N)
    b = np.array(w.coeffs)
    # d = int_u^inf dt/v = sum_k c_k x^(beta (k+1)) / (beta (k+1)); revert for x^beta
    d_series = w.recip().shift(q).tail_integrate()
    x_of_d = d_series.revert()  # x^beta as a series in d^... with e0 = step = beta
    # u = x^-1 = (x^beta)^(-1/beta); the reverted series is in powers of d
    T = TruncatedSeries(x_of_d.coeffs, 0.0, 1.0)  # x^beta / d as a power series in d
    u_ratio = T.power(-1.0 / beta)
    a = np.array(u_ratio.coeffs)
    return SeriesExpansion(float(p), int(N), int(n), a, b)


def series_profile(se: SeriesExpansion, d: float) -> float:
    """d^(-1/beta) sum_{k<=n} a_k d^k."""
    if not d > 0:
        raise DomainError("need d > 0")
    k = np.arange(se.n + 1)
    return float(d ** (-1.0 / se.beta) * np.sum(se.a * d**k))
