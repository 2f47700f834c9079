"""Characteristics engine for meromorphic functions in the expression grammar.

Covers zero isolation (via :mod:`nevlab.zeros`), the counting functions
n / n_k / N / N_k with the unit-disk base point convention (integrals start
at radius 1), proximity integrals, the Nevanlinna and spherical order
functions, Jensen residuals, logarithmic-derivative and growth-lemma
checks, and the order/defect regressions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import exprjet as ej
from . import quadrature as quad
from .zeros import (BoundaryZero, NonConvergence, ZeroLedger, ZeroRecord,
                    find_zeros_raw)

__all__ = [
    "ZeroLedger", "ZeroRecord", "BoundaryZero", "NonConvergence",
    "RadiusExceedsLedger", "OriginOnDivisor", "DegenerateWindow",
    "RegressionSummary", "CharacteristicRow", "CharacteristicTable",
    "BorelReport", "find_zeros", "counting_n", "counting_N", "jensen_sum",
    "proximity_m", "nevanlinna_T", "spherical_T", "jensen_residual",
    "logderiv_m", "borel_check", "order_estimate", "fit_linear", "power_fit",
    "as_fraction",
]


class RadiusExceedsLedger(ValueError):
    pass


class OriginOnDivisor(ArithmeticError):
    pass


class DegenerateWindow(ValueError):
    pass


class NotMeromorphic(ValueError):
    """exp of a genuinely rational argument: poles are not isolable."""


# ---------------------------------------------------------------------------
# zero ledgers and counting functions
# ---------------------------------------------------------------------------

def find_zeros(h, R: float, tol: float = 1e-9) -> ZeroLedger:
    """Zeros of ``h`` (expression or compatible evaluator) in ``|z| <= R``.

    Boxes are quadrisected on winding numbers of the boundary, candidates
    refined by Newton on h/h', and every record is certified by the winding
    number of an isolating circle, which also fixes the multiplicity.
    """
    return find_zeros_raw(h, R, tol=tol)


def counting_n(ledger: ZeroLedger, t: float, k: int | None = None) -> int:
    """n_k(t): multiplicities (truncated at k) of zeros with ``|z| <= t``."""
    total = 0
    for r in ledger.records:
        if r.modulus <= t:
            total += r.multiplicity if k is None else min(r.multiplicity, k)
    return total


def counting_N(ledger: ZeroLedger, r: float, k: int | None = None) -> float:
    """N_k(r) = int_1^r n_k(t)/t dt, in closed form from the ledger.

    Records inside the unit disk contribute n_k(1) * log r; the rest
    contribute min(mult, k) * log(r / |z|).
    """
    if r < 1.0:
        raise ValueError("counting functions integrate from radius 1")
    if r > ledger.radius * (1 + 1e-12) + 1e-12:
        raise RadiusExceedsLedger(
            f"r = {r} beyond ledger radius {ledger.radius}")
    total = 0.0
    for rec in ledger.records:
        mult = rec.multiplicity if k is None else min(rec.multiplicity, k)
        if rec.modulus <= 1.0:
            total += mult * math.log(r)
        elif rec.modulus <= r:
            total += mult * math.log(r / rec.modulus)
    return total


def jensen_sum(ledger: ZeroLedger, r: float) -> float:
    """Sum of mult * log(r/|z|) over all records with |z| <= r (no base cut)."""
    total = 0.0
    for rec in ledger.records:
        if rec.modulus <= r:
            if rec.modulus == 0.0:
                raise OriginOnDivisor("zero at the origin")
            total += rec.multiplicity * math.log(r / rec.modulus)
    return total


# ---------------------------------------------------------------------------
# structural numerator/denominator split
# ---------------------------------------------------------------------------

def as_fraction(e: ej.Expression):
    """Structural split of ``e`` into (numerator, denominator) expressions.

    No cancellation is attempted; quotients inside exp arguments with a
    non-constant denominator are rejected (not meromorphic).
    """
    k = e.kind
    if k in ("const", "z"):
        return e, ej.const(1)
    if k == "exp":
        gn, gd = as_fraction(e.children[0])
        if ej.polynomial_degree(gd) not in (0, ej.NEG_INFINITY_DEGREE) \
                and gd.kind != "const":
            raise NotMeromorphic("exp of a rational argument with poles")
        return e, ej.const(1)
    if k == "sum":
        n, d = as_fraction(e.children[0])
        for c in e.children[1:]:
            cn, cd = as_fraction(c)
            n = ej.add(ej.mul(n, cd), ej.mul(cn, d))
            d = ej.mul(d, cd)
        return n, d
    if k == "prod":
        n, d = ej.const(1), ej.const(1)
        for c in e.children:
            cn, cd = as_fraction(c)
            n = ej.mul(n, cn)
            d = ej.mul(d, cd)
        return n, d
    if k == "pow":
        n, d = as_fraction(e.children[0])
        return ej.pow_(n, e.power), ej.pow_(d, e.power)
    if k == "quot":
        n1, d1 = as_fraction(e.children[0])
        n2, d2 = as_fraction(e.children[1])
        return ej.mul(n1, d2), ej.mul(d1, n2)
    raise ej.InvalidExpression(f"unknown node kind {k!r}")


def _is_const_one(e: ej.Expression) -> bool:
    return e.kind == "const" and e.value == 1


# ---------------------------------------------------------------------------
# proximity integrals
# ---------------------------------------------------------------------------

def _circle(r: float):
    def pts(th: np.ndarray) -> np.ndarray:
        return r * np.exp(1j * th)
    return pts


def _log_abs(e: ej.Expression, z: np.ndarray) -> np.ndarray:
    m, s = e.scaled_values(z)
    return np.where(m == 0, -np.inf, s)


def proximity_m(h: ej.Expression, r: float, mode: str = "log_plus",
                weights=None, abs_tol: float = 1e-6,
                singular_angles=()) -> float:
    """Circle proximity integral of ``h`` at radius ``r``.

    ``log_plus`` gives the classical m(r, h) = mean of log+|h|.
    ``log_reciprocal_norm`` gives the mean of -log||h|| where the metric
    weight is supplied as ``weights = [(d_j, w_j), ...]`` with u_j = exp(w_j)
    the multiplicative coordinates along the curve: the integrand is
    sum_j (d_j/2) log(1 + |u_j|^2) - log|h|.  Singular angles (pullback
    zeros near the circle) become forced panel boundaries.
    """
    zs = _circle(r)
    if mode == "log_plus":
        def fn(th):
            return np.maximum(_log_abs(h, zs(th)), 0.0)
    elif mode == "log_reciprocal_norm":
        if weights is None:
            raise ValueError("log_reciprocal_norm mode needs weight data")

        def fn(th):
            z = zs(th)
            total = -_log_abs(h, z)
            for d, w in weights:
                lj = ej.values(w, z).real        # log|u_j|
                total = total + d * (np.maximum(lj, 0.0)
                                     + 0.5 * np.log1p(np.exp(-2.0 * np.abs(lj))))
            return total
    else:
        raise ValueError(f"unknown proximity mode {mode!r}")
    res = quad.circle_mean(fn, abs_tol=abs_tol, forced_angles=singular_angles)
    if res.estimate > 10.0 * abs_tol:
        raise quad.QuadratureFailure(
            f"proximity estimate {res.estimate:.3g} above {abs_tol:.3g}",
            res.value, res.estimate)
    return res.value


def nevanlinna_T(F: ej.Expression, r: float, den_ledger: ZeroLedger | None = None,
                 abs_tol: float = 1e-6) -> float:
    """T(r, F) = m(r, F) + N(r; poles).  Poles come from the denominator
    ledger (computed here if not supplied).  Quotients are assumed reduced:
    common zeros of numerator and denominator are not cancelled.
    """
    num, den = as_fraction(F)
    m = proximity_m(F, r, "log_plus", abs_tol=abs_tol)
    if _is_const_one(den) or ej.polynomial_degree(den) == 0:
        return m
    if den_ledger is None:
        den_ledger = find_zeros(den, r)
    return m + counting_N(den_ledger, r)


def spherical_T(F: ej.Expression, r: float, abs_tol: float = 1e-6) -> float:
    """Order function for the Fubini-Study form via the exact circle mean of
    (1/2) log(|num|^2 + |den|^2), normalised at the origin.

    This is the Ahlfors-Shimizu form of the spherical characteristic; it is
    preferred here over a Cartan average of counting functions because it
    needs one quadrature instead of a family of zero ledgers, and agrees
    with T(r, F) up to a bounded term.
    """
    num, den = as_fraction(F)

    def half_log_sq(z):
        sn = _log_abs(num, z)
        sd = _log_abs(den, z)
        m = np.maximum(sn, sd)
        return m + 0.5 * np.log(np.exp(2.0 * (sn - m)) + np.exp(2.0 * (sd - m)))

    at0 = float(half_log_sq(np.array([0j]))[0])
    if not math.isfinite(at0):
        raise OriginOnDivisor("numerator and denominator both vanish at 0")
    res = quad.circle_mean(lambda th: half_log_sq(r * np.exp(1j * th)),
                           abs_tol=abs_tol)
    return res.value - at0


def jensen_residual(F: ej.Expression, r: float,
                    num_ledger: ZeroLedger | None = None,
                    den_ledger: ZeroLedger | None = None,
                    abs_tol: float = 1e-7) -> float:
    """Jensen identity defect: circle mean of log|F| minus log|F(0)| minus
    (zeros - poles) log sums.  Should vanish for every grammar function."""
    m0, s0 = F.scaled_values(np.array([0j]))
    if complex(m0[0]) == 0 or not np.isfinite(complex(m0[0]).real):
        raise OriginOnDivisor("F(0) is zero or infinite")
    log_f0 = float(s0[0])
    num, den = as_fraction(F)
    if num_ledger is None:
        num_ledger = find_zeros(num, r)
    mean = quad.circle_mean(lambda th: _log_abs(F, r * np.exp(1j * th)),
                            abs_tol=abs_tol).value
    n_zero = jensen_sum(num_ledger, r)
    if _is_const_one(den) or ej.polynomial_degree(den) == 0:
        n_pole = 0.0
    else:
        if den_ledger is None:
            den_ledger = find_zeros(den, r)
        n_pole = jensen_sum(den_ledger, r)
    return mean - log_f0 - n_zero + n_pole


def logderiv_m(F: ej.Expression, k: int, r: float,
               abs_tol: float = 1e-6) -> float:
    """m(r, F^(k) / F) by proximity on the symbolic quotient."""
    if k < 1:
        raise ValueError("derivative order must be >= 1")
    ratio = ej.quot(ej.differentiate_n(F, k), F)
    return proximity_m(ratio, r, "log_plus", abs_tol=abs_tol)


# ---------------------------------------------------------------------------
# growth-lemma check and regressions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BorelReport:
    violating_r: tuple
    violation_measure: float
    checked_measure: float


def borel_check(phi: np.ndarray, r_grid: np.ndarray) -> BorelReport:
    """Sampled check of phi(r + 1/phi(r)) < 2 phi(r) for an increasing
    tabulated phi; returns the violating sample points and a measure
    estimate of the violating set."""
    phi = np.asarray(phi, dtype=float)
    r = np.asarray(r_grid, dtype=float)
    if phi.shape != r.shape or phi.ndim != 1:
        raise ValueError("phi and r_grid must be aligned 1-d arrays")
    if np.any(phi <= 0):
        raise ValueError("phi must be positive on the grid")
    if np.any(np.diff(phi) < 0):
        raise ValueError("phi must be non-decreasing")
    target = r + 1.0 / phi
    inside = target <= r[-1]
    shifted = np.interp(target[inside], r, phi)
    bad = shifted >= 2.0 * phi[inside]
    widths = np.gradient(r)[inside]
    return BorelReport(
        violating_r=tuple(float(x) for x in r[inside][bad]),
        violation_measure=float(widths[bad].sum()),
        checked_measure=float(widths.sum()))


@dataclass(frozen=True)
class RegressionSummary:
    model: str
    slope: float
    intercept: float
    residual_norm: float
    window: tuple


def fit_linear(x, y, model: str = "slope-vs-r") -> RegressionSummary:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2 or x.max() <= x.min():
        raise DegenerateWindow("need at least two distinct abscissae")
    A = np.vstack([x, np.ones_like(x)]).T
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    rms = float(np.sqrt(np.mean((A @ [slope, intercept] - y) ** 2)))
    return RegressionSummary(model=model, slope=float(slope),
                             intercept=float(intercept), residual_norm=rms,
                             window=(float(x.min()), float(x.max())))


def power_fit(rs, ys, rho: float) -> RegressionSummary:
    """Least squares of y against r**rho (dominant-term regression)."""
    rs = np.asarray(rs, dtype=float)
    return fit_linear(rs**rho, ys, model=f"slope-vs-r^{rho:g}")


def order_estimate(samples) -> RegressionSummary:
    """Order from the log-log fit of T against r over the top half of the
    window (logarithmic split).  Needs >= 8 samples spanning a decade."""
    pts = sorted((float(r), float(t)) for r, t in samples)
    if len(pts) < 8:
        raise DegenerateWindow("need at least 8 (r, T) samples")
    rmin, rmax = pts[0][0], pts[-1][0]
    if rmin <= 0 or rmax / rmin < 10.0 * (1 - 1e-9):
        raise DegenerateWindow("samples must span at least one decade")
    cut = math.sqrt(rmin * rmax)
    top = [(r, t) for r, t in pts if r >= cut and t > 0]
    if len(top) < 4:
        raise DegenerateWindow("top half of the window is too thin")
    lx = np.log([r for r, _ in top])
    ly = np.log([t for _, t in top])
    fit = fit_linear(lx, ly, model="loglog-order")
    return RegressionSummary(model=fit.model, slope=fit.slope,
                             intercept=fit.intercept,
                             residual_norm=fit.residual_norm,
                             window=(rmin, rmax))


# ---------------------------------------------------------------------------
# characteristic tables
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CharacteristicRow:
    r: float
    T: float
    m: float
    N: float
    N_trunc: dict
    residual: float


@dataclass
class CharacteristicTable:
    rows: list
    curve_fingerprint: str
    divisor_fingerprint: str
    settings: dict

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(row, name) for row in self.rows])

    def validate_monotone(self) -> None:
        N = self.column("N")
        if np.any(np.diff(N) < -1e-9):
            raise ValueError("N column must be non-decreasing in r")
        for row in self.rows:
            for k, v in row.N_trunc.items():
                if v > row.N + 1e-9:
                    raise ValueError("N_k must not exceed N")
