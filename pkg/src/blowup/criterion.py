"""The universal blow-up rate functional and a finite-sample classifier.

    Lambda(u) = sqrt(2F(u)) * int_u^inf G(t) / (2F(t))^(3/2) dt,  G(t) = int_base^t sqrt(2F)

Lambda -> 0 means every large solution shares the leading profile u_0(d);
a positive plateau means the first correction does not vanish.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import BlowupError, DomainError
from .nonlinearity import Nonlinearity
from .numerics import integrate_to_infinity

log = logging.getLogger(__name__)

SLOPE_BAND = 0.05
PLATEAU_FLOOR = 1e-3
# beyond this F the integrand G/(2F)^(3/2) <= t/(2F) is negligible and is dropped
F_DROP = 1e200


def criterion_integrand(nl: Nonlinearity, base: Optional[float] = None):
    """t -> G(t) / (2F(t))^(3/2), zero where F is astronomically large."""

    def g(t):
        t = np.asarray(t, dtype=float)
        F = np.asarray(nl.F(t), dtype=float)
        out = np.zeros(t.shape)
        keep = F < F_DROP
        if np.any(keep):
            tk = t[keep]
            out[keep] = np.asarray(nl.G(tk, base)) / (2.0 * F[keep]) ** 1.5
        return out

    return g


def criterion_tail(nl: Nonlinearity, u: float, base: Optional[float] = None, tol: float = 1e-11) -> float:
    """int_u^inf G(t)/(2F(t))^(3/2) dt; raises NumericsError when the tail does not settle."""
    res = integrate_to_infinity(criterion_integrand(nl, base), u, tol=tol)
    return res.require(f"criterion tail from u={u:g}")


def lambda_at(nl: Nonlinearity, u: float, base: Optional[float] = None, tol: float = 1e-11) -> float:
    if not u > nl.a:
        raise DomainError(f"need u > a = {nl.a:g}, got {u!r}")
    if not nl.F(u) > 0:
        raise DomainError(f"need F(u) > 0 at u={u!r}")
    return float(nl.v0(u)) * criterion_tail(nl, u, base, tol)


@dataclass
class CriterionReport:
    spec: str
    u: np.ndarray
    lam: np.ndarray
    slope: float
    intercept: float
    classification: str  # universal | non-universal | inconclusive
    base: float
    thresholds: dict = field(default_factory=dict)
    failed_u: Optional[float] = None
    reason: str = ""

    def rows(self):
        return list(zip(self.u, self.lam))


def fit_top_decade(u, lam):
    """Least-squares slope and intercept of log(lam) against log(u) for u >= u_max/10."""
    u = np.asarray(u, dtype=float)
    lam = np.asarray(lam, dtype=float)
    sel = u >= u[-1] / 10 * (1 - 1e-12)
    slope, intercept = np.polyfit(np.log(u[sel]), np.log(lam[sel]), 1)
    return float(slope), float(intercept)


def classify(
    nl: Nonlinearity,
    u_lo: float,
    u_hi: float,
    M: int = 32,
    base: Optional[float] = None,
    slope_band: float = SLOPE_BAND,
    plateau_floor: float = PLATEAU_FLOOR,
) -> CriterionReport:
    if not u_hi >= 100 * u_lo:
        raise DomainError("need u_hi >= 100 u_lo")
    if M < 16:
        raise DomainError("need M >= 16 samples")
    b = nl.base if base is None else float(base)
    thresholds = {"slope_band": slope_band, "plateau_floor": plateau_floor, "halving": 0.5}
    u = np.geomspace(u_lo, u_hi, M)
    lam = np.full(M, np.nan)
    for i, ui in enumerate(u):
        try:
            lam[i] = lambda_at(nl, float(ui), b)
        except BlowupError as exc:
            log.info("criterion sample failed at u=%g: %s", ui, exc)
            return CriterionReport(nl.spec, u, lam, math.nan, math.nan, "inconclusive", b, thresholds, float(ui), str(exc))
    if not np.all(lam > 0):
        i = int(np.argmax(~(lam > 0)))
        return CriterionReport(nl.spec, u, lam, math.nan, math.nan, "inconclusive", b, thresholds, float(u[i]),
                               "nonpositive sample")
    slope, intercept = fit_top_decade(u, lam)
    if slope < -slope_band and lam[-1] < lam[0] / 2:
        cls = "universal"
    elif abs(slope) <= slope_band and lam[-1] >= plateau_floor:
        cls = "non-universal"
    else:
        cls = "inconclusive"
    return CriterionReport(nl.spec, u, lam, slope, intercept, cls, b, thresholds)


@dataclass
class ProfileCriterion:
    d: np.ndarray
    u0: np.ndarray
    lam: np.ndarray

    def rows(self):
        return list(zip(self.d, self.u0, self.lam))


def lambda_along_profile(nl: Nonlinearity, N: int, profile, d_grid, base: Optional[float] = None) -> ProfileCriterion:
    """The weakened criterion: Lambda evaluated along the k = 0 profile u_0(d)."""
    if profile.k != 0:
        raise DomainError("lambda_along_profile needs a k = 0 profile")
    d = np.asarray(list(d_grid), dtype=float)
    u0 = np.array([profile(x) for x in d])
    lam = np.array([lambda_at(nl, float(x), base) for x in u0])
    return ProfileCriterion(d, u0, lam)
