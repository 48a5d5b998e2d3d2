"""Nonlinearities f, their antiderivatives F, and the Keller-Osserman test.

Four kinds are supported:

``power``        f(u) = c u^p, F(t) = c t^(p+1)/(p+1) (base point 0)
``exponential``  f(u) = e^u, F(t) = e^t (the antiderivative vanishing at -inf)
``direct-F``     F given as an expression in t, f = F' by finite differences
``expression``   f given as an expression in u, F(t) = int_a^t f by quadrature

The builtin kinds use base point 0 even though f(0) = 0 for the power law:
additive constants in F do not change the boundary asymptotics, and the
clean closed forms give exact test oracles.
"""

from __future__ import annotations

import math
import re
import threading
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DomainError, EvaluationError, KellerOssermanError, ParseError, ThresholdError
from .expression import Expression, parse_expression
from .numerics import QuadratureResult, RunningIntegral, integrate_to_infinity

THRESHOLD_SCAN_MAX = 10_000


def sample_grid(a: float) -> np.ndarray:
    """The 21 sample points used to check positivity and monotonicity beyond ``a``."""
    j = np.arange(21, dtype=float)
    if a >= 0:
        return (a + 1.0) * 2.0**j
    return a + 2.0**j


@dataclass(frozen=True, eq=False)
class Nonlinearity:
    kind: str
    a: float
    spec: str
    p: Optional[float] = None
    scale: float = 1.0
    expr: Optional[Expression] = None
    _cache: dict = field(default_factory=dict, init=False, repr=False)
    _lock: threading.RLock = field(default_factory=threading.RLock, init=False, repr=False)

    # -- constructors -------------------------------------------------------

    @classmethod
    def power(cls, p: float, scale: float = 1.0, spec: Optional[str] = None):
        if not p > 1:
            raise DomainError(f"power nonlinearity needs p > 1, got p={p!r}")
        if not scale > 0:
            raise DomainError("power scale must be positive")
        if spec is None:
            spec = f"pow:{p:g}" if scale == 1.0 else f"pow:{p:g}*{scale:g}"
        return cls("power", 0.0, spec, p=float(p), scale=float(scale))

    @classmethod
    def normalized_power(cls, p: float):
        """f(u) = ((p+1)/2) u^p, i.e. F = u^(2q)/2 with 2q - 1 = p."""
        return cls.power(p, scale=(p + 1) / 2, spec=f"pow:{p:g};normalized")

    @classmethod
    def exponential(cls):
        return cls("exponential", -1.0, "exp")

    @classmethod
    def from_expression(cls, expr: Expression, a: Optional[float] = None, spec: Optional[str] = None):
        nl_spec = spec or f"expr:{expr}"
        if a is None:
            a = find_threshold(expr.evaluate)
        nl = cls("expression", float(a), nl_spec, expr=expr)
        nl._check_positivity()
        return nl

    @classmethod
    def from_antiderivative(cls, expr: Expression, a: Optional[float] = None, spec: Optional[str] = None):
        nl_spec = spec or f"F:{expr}"
        probe = cls("direct-F", 0.0, nl_spec, expr=expr)
        if a is None:
            a = find_threshold(probe.f)
        nl = cls("direct-F", float(a), nl_spec, expr=expr)
        nl._check_positivity()
        grid = sample_grid(nl.a)
        F = nl.F(grid)
        if np.any(np.diff(F) < 0):
            raise ThresholdError(f"F is not nondecreasing beyond a={nl.a:g}")
        return nl

    # -- evaluation -----------------------------------------------------------

    @property
    def base(self) -> float:
        """Lower limit of the antiderivative: F(base) = 0 (0 for the builtins)."""
        return self.a if self.kind in ("expression", "direct-F") else 0.0

    def f(self, t):
        x = np.asarray(t, dtype=float)
        with np.errstate(over="ignore"):
            if self.kind == "power":
                out = self.scale * np.power(np.maximum(x, 0.0), self.p)
            elif self.kind == "exponential":
                out = np.exp(x)
            elif self.kind == "expression":
                out = self.expr.evaluate(x)
            else:
                out = self._dF(x)
        return float(out) if x.ndim == 0 else out

    def F(self, t):
        x = np.asarray(t, dtype=float)
        with np.errstate(over="ignore"):
            if self.kind == "power":
                out = self.scale * np.power(np.maximum(x, 0.0), self.p + 1) / (self.p + 1)
            elif self.kind == "exponential":
                out = np.exp(x)
            elif self.kind == "direct-F":
                out = self.expr.evaluate(x)
            else:
                out = self._running_F()(x)
        return float(out) if x.ndim == 0 else out

    def v0(self, t):
        """sqrt(2 F(t)), the zeroth velocity profile."""
        F = self.F(t)
        with np.errstate(over="ignore"):
            return np.sqrt(2.0 * np.asarray(F)) if np.ndim(F) else math.sqrt(2.0 * F)

    def G(self, t, base: Optional[float] = None):
        """int_base^t sqrt(2F(s)) ds (default base: the F base point), memoized per base."""
        b = self.base if base is None else float(base)
        key = ("G", b)
        with self._lock:
            R = self._cache.get(key)
            if R is None:
                R = RunningIntegral(self.v0, b, tol=1e-13)
                self._cache[key] = R
        return R(t)

    def _dF(self, x):
        h = 1e-3 * np.maximum(1.0, np.abs(x)) ** 0.2
        F = self.expr.evaluate
        return (8 * (F(x + h) - F(x - h)) - (F(x + 2 * h) - F(x - 2 * h))) / (12 * h)

    def _running_F(self):
        with self._lock:
            R = self._cache.get("F")
            if R is None:
                # memoized checkpoints on geometric panels; every decade is covered
                R = RunningIntegral(self.expr.evaluate, self.a, tol=1e-12)
                self._cache["F"] = R
        return R

    def _check_positivity(self):
        try:
            fa = self.f(self.a)
            fg = self.f(sample_grid(self.a))
        except EvaluationError as exc:
            raise ThresholdError(f"f cannot be evaluated near a={self.a:g}: {exc}") from exc
        if not fa > 0:
            raise ThresholdError(f"f(a) = {fa!r} is not positive at a={self.a:g}")
        if np.any(fg < 0):
            raise ThresholdError(f"f takes negative values beyond a={self.a:g}")

    def validate(self) -> list:
        """Check the sampled invariants; returns a list of violation messages."""
        problems = []
        grid = sample_grid(self.a)
        fa = self.f(self.a)
        if not fa > 0:
            problems.append(f"f(a) = {fa!r} <= 0")
        if np.any(self.f(grid) < 0):
            problems.append("f negative on the sample grid")
        Fg = np.asarray(self.F(grid))
        Fg = Fg[np.isfinite(Fg)]  # exp overflows on the far end of the grid
        if np.any(np.diff(Fg) < 0):
            problems.append("F decreasing on the sample grid")
        if self.kind == "expression":
            pts = grid[:10]
            h = 1e-3 * pts**0.2
            F = self.F
            dF = (8 * (F(pts + h) - F(pts - h)) - (F(pts + 2 * h) - F(pts - 2 * h))) / (12 * h)
            f = self.f(pts)
            rel = np.abs(dF - f) / np.maximum(1.0, np.abs(f))
            if np.any(rel >= 1e-6):
                problems.append(f"F' differs from f by {rel.max():.2e}")
        return problems

    # -- Keller-Osserman ------------------------------------------------------

    def default_lo(self) -> float:
        return self.a + 1.0

    def keller_osserman(self, lo: Optional[float] = None, tol: float = 1e-10) -> "KellerOssermanResult":
        key = ("ko", lo, tol)
        with self._lock:
            hit = self._cache.get(key)
        if hit is None:
            hit = check_keller_osserman(self, self.default_lo() if lo is None else lo, tol)
            with self._lock:
                self._cache[key] = hit
        return hit

    def require_keller_osserman(self):
        """Raise unless the Keller-Osserman integral converges (the standing assumption)."""
        ko = self.keller_osserman()
        if ko.status != "converges":
            raise KellerOssermanError(
                f"Keller-Osserman integral for {self.spec} {ko.status}; no large solution exists"
            )
        return ko

    def __repr__(self):
        return f"Nonlinearity({self.spec!r}, kind={self.kind!r}, a={self.a:g})"


@dataclass(frozen=True)
class KellerOssermanResult:
    status: str  # "converges" | "diverges" | "inconclusive"
    value: float
    error_estimate: float
    lo: float
    cutoff_used: Optional[float] = None


def find_threshold(f, limit: int = THRESHOLD_SCAN_MAX) -> float:
    """First integer t in 0..limit with f(t) > 0 and f >= 0 on the sample grid beyond t."""
    for t in range(limit + 1):
        try:
            if not f(float(t)) > 0:
                continue
            if np.all(np.asarray(f(sample_grid(float(t)))) >= 0):
                return float(t)
        except EvaluationError:
            continue
    raise ThresholdError(f"no positivity threshold a found in 0..{limit}; supply ';a=<real>'")


def eval_F(nl: Nonlinearity, t: float) -> float:
    if t < nl.a:
        raise DomainError(f"F is evaluated for t >= a = {nl.a:g}, got {t!r}")
    return nl.F(float(t))


def check_keller_osserman(nl: Nonlinearity, lo: float, tol: float = 1e-10) -> KellerOssermanResult:
    """Integrate dt / sqrt(F(t)) from ``lo`` to infinity."""
    if not lo > nl.a:
        raise DomainError(f"need lo > a = {nl.a:g}, got lo={lo!r}")
    if not nl.F(lo) > 0:
        raise DomainError(f"need F(lo) > 0, got F({lo!r}) = {nl.F(lo)!r}")

    def integrand(t):
        F = nl.F(t)
        if np.any(np.asarray(F) <= 0):
            raise DomainError(f"F <= 0 on the integration range beyond lo={lo!r}")
        with np.errstate(over="ignore"):
            return 1.0 / np.sqrt(F)

    res: QuadratureResult = integrate_to_infinity(integrand, lo, tol=tol)
    status = {"converged": "converges", "diverged": "diverges"}.get(res.status, "inconclusive")
    return KellerOssermanResult(status, res.value, res.error_estimate, float(lo), res.cutoff_used)


_SPEC = re.compile(r"^\s*(?P<kind>pow|exp|F|expr)\s*(?::(?P<body>.*))?$", re.S)


def parse_nonlinearity(spec: str) -> Nonlinearity:
    """Build a Nonlinearity from ``pow:<p>``, ``exp``, ``F:<expr in t>`` or ``expr:<expr in u>[;a=<a>]``."""
    m = _SPEC.match(spec or "")
    if m is None:
        raise ParseError("expected one of 'pow:<p>', 'exp', 'F:<expr>', 'expr:<expr>'", 0, spec)
    kind = m.group("kind")
    body = m.group("body")
    offset = m.start("body") if body is not None else len(spec)
    if kind == "exp":
        if body is not None:
            raise ParseError("'exp' takes no argument", offset, spec)
        return Nonlinearity.exponential()
    if body is None or not body.strip():
        raise ParseError(f"'{kind}:' needs an argument", offset, spec)
    if kind == "pow":
        try:
            p = float(body)
        except ValueError:
            raise ParseError(f"invalid exponent {body.strip()!r}", offset, spec) from None
        if not math.isfinite(p):
            raise ParseError("exponent must be finite", offset, spec)
        return Nonlinearity.power(p, spec=spec.strip())

    a = None
    text = body
    if ";" in body:
        text, _, rest = body.partition(";")
        rest_offset = offset + len(text) + 1
        am = re.fullmatch(r"\s*a\s*=\s*(\S+)\s*", rest)
        if am is None:
            raise ParseError("expected ';a=<real>'", rest_offset, spec)
        try:
            a = float(am.group(1))
        except ValueError:
            raise ParseError(f"invalid threshold {am.group(1)!r}", rest_offset + am.start(1), spec) from None
    var = "t" if kind == "F" else "u"
    try:
        expr = parse_expression(text, var=var)
    except ParseError as exc:
        pos = exc.position if exc.position is not None else 0
        raise ParseError(str(exc).split(" at position")[0], offset + pos, spec) from None
    if kind == "F":
        return Nonlinearity.from_antiderivative(expr, a, spec=spec.strip())
    return Nonlinearity.from_expression(expr, a, spec=spec.strip())
