"""Semi-torus curves, compactified divisors and their value distribution.

A curve into a rank-(p, m) semi-torus is stored through its lifted
components: expressions F_1..F_p with multiplicative components
u_j = exp(2 pi i F_j), and torus components G_1..G_m.  Divisor sections are
multihomogeneous coefficient tables with constant coefficients; the section
norm on the product-of-projective-lines compactification is

    log ||sigma(u)|| = log|sigma(u)| - sum_j (d_j / 2) log(1 + |u_j|^2),

which is invariant under the chart inversions u_j -> 1/u_j paired with the
reciprocal coefficient table.  Order functions split into the
multiplicative part (a sum of single-component characteristics) and an
exact circle-mean formula for the torus part.
"""

from __future__ import annotations

import cmath
import hashlib
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import exprjet as ej
from . import nevanlinna as nv
from . import quadrature as quad

TWO_PI_I = 2j * math.pi


class ConstructionError(ValueError):
    pass


class OnDivisor(ArithmeticError):
    pass


class CurveInsideDivisor(ArithmeticError):
    pass


class InvalidExponents(ValueError):
    pass


# ---------------------------------------------------------------------------
# presentation and curves
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Presentation:
    """Multiplicative rank p, torus rank m, and the lattice generator block
    in normal form (identity block over the multiplicative factor).  Divisor
    operations require m = 0; the torus rank only enters through the order
    function and the finite-order classification."""

    p: int
    m: int = 0
    lattice_block: tuple = ()

    def __post_init__(self):
        if self.p < 0 or self.m < 0 or self.p + self.m == 0:
            raise ConstructionError("need p >= 0, m >= 0, p + m >= 1")
        if self.lattice_block:
            rows = [tuple(r) for r in self.lattice_block]
            if len(rows) != self.p + self.m:
                raise ConstructionError("lattice block needs p + m rows")
            for i in range(self.p):
                for j in range(self.p):
                    want = 1.0 if i == j else 0.0
                    if abs(complex(rows[i][j]) - want) > 1e-12:
                        raise ConstructionError(
                            "first p columns must be the standard basis")
            object.__setattr__(self, "lattice_block", tuple(rows))


@dataclass(frozen=True)
class SemiTorusCurve:
    """Holomorphic curve given by lifted components.

    ``F[j]`` is the lifted exponent (component u_j = exp(2 pi i F_j)); when
    built from plain exponent expressions E_j = 2 pi i F_j those are kept
    verbatim in ``exp_args`` to avoid constant-folding noise.
    """

    presentation: Presentation
    F: tuple
    G: tuple = ()
    exp_args: tuple = ()
    notes: tuple = ()

    def __post_init__(self):
        if len(self.F) != self.presentation.p or len(self.G) != self.presentation.m:
            raise ConstructionError("component count does not match the presentation")
        if not self.exp_args:
            args = tuple(ej.mul(ej.const(TWO_PI_I), f) for f in self.F)
            object.__setattr__(self, "exp_args", args)

    @classmethod
    def from_exponents(cls, exponents, G=(), notes=()):
        """Curve with components exp(E_j) for given exponent expressions."""
        exps = tuple(ej._as_expr(e) for e in exponents)
        F = tuple(ej.mul(ej.const(1.0 / TWO_PI_I), e) for e in exps)
        G = tuple(ej._as_expr(g) for g in G)
        pres = Presentation(p=len(exps), m=len(G))
        return cls(presentation=pres, F=F, G=G, exp_args=exps, notes=tuple(notes))

    def exp_arg(self, j: int) -> ej.Expression:
        return self.exp_args[j]

    def component(self, j: int) -> ej.Expression:
        return ej.exp_(self.exp_args[j])

    def is_finite_order(self) -> bool:
        return self.order() != math.inf

    def order(self):
        """Finite order from component degrees: max(deg F_j, 2 deg G_k);
        infinite when any component fails to be polynomial."""
        degs = []
        for f in self.F:
            d = ej.polynomial_degree(f)
            if d is None:
                return math.inf
            degs.append(0 if d == ej.NEG_INFINITY_DEGREE else int(d))
        for g in self.G:
            d = ej.polynomial_degree(g)
            if d is None:
                return math.inf
            degs.append(0 if d == ej.NEG_INFINITY_DEGREE else 2 * int(d))
        return max(degs) if degs else 0

    def fingerprint(self) -> str:
        key = "curve:" + ";".join(ej.canonical_key(e) for e in self.exp_args)
        key += "|" + ";".join(ej.canonical_key(g) for g in self.G)
        return hashlib.sha256(key.encode()).hexdigest()[:16]


def classify_finite_order(curve: SemiTorusCurve):
    """Order of the curve, or math.inf for non-polynomial components."""
    return curve.order()


# ---------------------------------------------------------------------------
# compactified divisors
# ---------------------------------------------------------------------------

@dataclass
class CompactifiedDivisor:
    """Multihomogeneous section of multidegree (d_1..d_p) with constant
    coefficients, stored as an exponent -> coefficient table.

    Construction enforces the saturation invariant: along every axis the
    support must touch both exponent 0 and exponent d_j, i.e. the section is
    divisible neither by u_j nor by its chart-inverted counterpart.
    Coefficients equal to 0 count as absent (zero must be declared by
    omission, so float fuzz cannot flip combinatorial verdicts).
    """

    p: int
    multidegree: tuple
    terms: dict

    def __post_init__(self):
        if self.p < 1:
            raise ConstructionError("need p >= 1")
        self.multidegree = tuple(int(d) for d in self.multidegree)
        if len(self.multidegree) != self.p or any(d < 0 for d in self.multidegree):
            raise ConstructionError("multidegree must be p non-negative ints")
        clean = {}
        for expo, coeff in self.terms.items():
            expo = tuple(int(l) for l in expo)
            coeff = complex(coeff)
            if coeff == 0:
                continue
            if len(expo) != self.p or any(l < 0 for l in expo):
                raise ConstructionError(f"bad exponent vector {expo}")
            if any(l > d for l, d in zip(expo, self.multidegree)):
                raise ConstructionError(f"exponent {expo} above multidegree")
            clean[expo] = clean.get(expo, 0j) + coeff
        if not clean:
            raise ConstructionError("a section needs at least one term")
        for j in range(self.p):
            lows = min(e[j] for e in clean)
            highs = max(e[j] for e in clean)
            if lows != 0:
                raise ConstructionError(
                    f"section divisible by coordinate {j}: no term with l_{j} = 0")
            if highs != self.multidegree[j]:
                raise ConstructionError(
                    f"no term reaches multidegree in coordinate {j}")
        self.terms = clean

    def support(self):
        return set(self.terms)

    def coefficient(self, expo) -> complex:
        return self.terms.get(tuple(expo), 0j)

    def invert_chart(self, axes) -> "CompactifiedDivisor":
        """Reciprocal-homogenised table for u_j -> 1/u_j on the given axes."""
        axes = set(axes)
        new = {}
        for expo, coeff in self.terms.items():
            e = tuple(d - l if j in axes else l
                      for j, (l, d) in enumerate(zip(expo, self.multidegree)))
            new[e] = coeff
        return CompactifiedDivisor(self.p, self.multidegree, new)

    def fingerprint(self) -> str:
        items = sorted((e, (c.real, c.imag)) for e, c in self.terms.items())
        key = f"divisor:{self.multidegree}:{items}"
        return hashlib.sha256(key.encode()).hexdigest()[:16]


def section_value(D: CompactifiedDivisor, u) -> complex:
    """Plain section value at a point of the multiplicative torus."""
    u = [complex(x) for x in u]
    total = 0j
    for expo, coeff in D.terms.items():
        t = coeff
        for x, l in zip(u, expo):
            t *= x**l
        total += t
    return total


def section_log_norm(D: CompactifiedDivisor, u) -> float:
    """log of the metrised section norm at u in the multiplicative torus.

    Computed scale-safely from the logs of the coordinates, so points deep
    into a chart corner are fine.
    """
    u = [complex(x) for x in u]
    if any(x == 0 for x in u):
        raise ConstructionError("u must lie in the open torus (no zero entries)")
    logs = [cmath.log(x) for x in u]
    amps = []
    phases = []
    for expo, coeff in D.terms.items():
        a = math.log(abs(coeff)) + sum(l * lg.real for l, lg in zip(expo, logs))
        ph = cmath.phase(coeff) + sum(l * lg.imag for l, lg in zip(expo, logs))
        amps.append(a)
        phases.append(ph)
    top = max(amps)
    acc = sum(cmath.exp(1j * ph) * math.exp(a - top)
              for a, ph in zip(amps, phases))
    if acc == 0:
        raise OnDivisor(f"section vanishes at {u}")
    log_sigma = top + math.log(abs(acc))
    weight = sum(0.5 * d * _log1p_sq_exp(lg.real)
                 for d, lg in zip(D.multidegree, logs))
    return log_sigma - weight


def _log1p_sq_exp(l: float) -> float:
    # log(1 + exp(2 l)) computed stably: 2 max(l, 0) + log1p(exp(-2|l|))
    return 2.0 * max(l, 0.0) + math.log1p(math.exp(-2.0 * abs(l)))


# ---------------------------------------------------------------------------
# pullbacks and characteristics
# ---------------------------------------------------------------------------

def pullback_expression(curve: SemiTorusCurve, D: CompactifiedDivisor) -> ej.Expression:
    """The entire function sigma(exp(E_1(z)), ..., exp(E_p(z)))."""
    if curve.presentation.m != 0:
        raise ConstructionError("divisor pullbacks require torus rank m = 0")
    if curve.presentation.p != D.p:
        raise ConstructionError("curve and divisor rank mismatch")
    terms = []
    for expo, coeff in sorted(D.terms.items()):
        parts = [ej.mul(ej.const(l), curve.exp_arg(j))
                 for j, l in enumerate(expo) if l != 0]
        if not parts:
            terms.append(ej.const(coeff))
        else:
            terms.append(ej.mul(ej.const(coeff), ej.exp_(ej.add(*parts))))
    return ej.add(*terms)


def check_not_inside(curve: SemiTorusCurve, D: CompactifiedDivisor,
                     h: ej.Expression | None = None) -> ej.Expression:
    """Certify sigma o f != 0: jet to order 8 at a fixed generic point must
    have a nonzero coefficient, confirmed by a nonzero evaluation."""
    if h is None:
        h = pullback_expression(curve, D)
    a0 = 0.7391856 + 0.3112997j
    c, _ = ej.scaled_jet(h, a0, 8)
    if np.max(np.abs(c)) > 1e-200:
        return h
    for k in range(20):
        m, _ = h.scaled_values(np.array([0.31 * k + 0.17j * k - 1.2 + 0.4j]))
        if m[0] != 0:
            return h
    raise CurveInsideDivisor("pullback section vanishes identically")


def pullback_ledger(curve: SemiTorusCurve, D: CompactifiedDivisor, R: float,
                    tol: float = 1e-9) -> nv.ZeroLedger:
    h = check_not_inside(curve, D)
    return nv.find_zeros(h, R, tol=tol)


def unit_component_T(curve: SemiTorusCurve, j: int, r: float,
                     abs_tol: float = 1e-7) -> float:
    """T(r, exp(E_j)) for the entire unit component: equals the proximity
    mean of max(Re E_j, 0) on the circle."""
    e = curve.exp_arg(j)

    def fn(th):
        return np.maximum(ej.values(e, r * np.exp(1j * th)).real, 0.0)

    return quad.circle_mean(fn, abs_tol=abs_tol).value


def order_function_T(curve: SemiTorusCurve, r: float,
                     abs_tol: float = 1e-7):
    """(T1, T2, T): multiplicative part as a sum of component
    characteristics, torus part by the exact circle-mean formula
    (1/4 pi) int sum |G_j|^2 d theta - (1/2) sum |G_j(0)|^2."""
    T1 = sum(unit_component_T(curve, j, r, abs_tol=abs_tol)
             for j in range(curve.presentation.p))
    T2 = 0.0
    if curve.G:
        def fn(th):
            z = r * np.exp(1j * th)
            tot = np.zeros(z.shape, dtype=float)
            for g in curve.G:
                tot += np.abs(ej.values(g, z)) ** 2
            return tot

        mean = quad.circle_mean(fn, abs_tol=abs_tol).value
        at0 = sum(abs(ej.evaluate(g, 0j)) ** 2 for g in curve.G)
        T2 = 0.5 * mean - 0.5 * at0
    return T1, T2, T1 + T2


def weighted_T(curve: SemiTorusCurve, D: CompactifiedDivisor, r: float,
               abs_tol: float = 1e-7) -> float:
    """T_f(r) against the divisor class, via the multidegree pairing
    sum_j d_j T(r, exp(E_j)); the torus weight vanishes under m = 0."""
    if curve.presentation.m != 0:
        raise ConstructionError("weighted order function requires m = 0")
    return sum(d * unit_component_T(curve, j, r, abs_tol=abs_tol)
               for j, d in enumerate(D.multidegree) if d != 0)


def _near_circle_angles(ledger: nv.ZeroLedger, r: float, width: float = 0.6):
    return tuple(math.atan2(rec.location.imag, rec.location.real)
                 for rec in ledger.records if abs(rec.modulus - r) <= width)


def proximity_mf(curve: SemiTorusCurve, D: CompactifiedDivisor, r: float,
                 ledger: nv.ZeroLedger | None = None,
                 h: ej.Expression | None = None,
                 abs_tol: float = 1e-6) -> float:
    """m_f(r; D): circle mean of -log||sigma(f(z))||.

    Integrable log singularities at pullback zeros near the circle are
    handled by forcing quadrature panel boundaries at their angles (taken
    from the ledger when one is supplied).
    """
    h = check_not_inside(curve, D, h)
    weights = [(d, curve.exp_arg(j)) for j, d in enumerate(D.multidegree)
               if d != 0]
    angles = _near_circle_angles(ledger, r) if ledger is not None else ()
    return nv.proximity_m(h, r, mode="log_reciprocal_norm", weights=weights,
                          abs_tol=abs_tol, singular_angles=angles)


def fmt_residual(curve: SemiTorusCurve, D: CompactifiedDivisor, r: float,
                 ledger: nv.ZeroLedger, abs_tol: float = 1e-6) -> float:
    """T - N - m at one radius; bounded in r when the main identity holds."""
    T = weighted_T(curve, D, r)
    N = nv.counting_N(ledger, r)
    m = proximity_mf(curve, D, r, ledger=ledger, abs_tol=abs_tol)
    return T - N - m


def characteristic_table(curve: SemiTorusCurve, D: CompactifiedDivisor,
                         grid, k_list=(1, 2), tol: float = 1e-9,
                         abs_tol: float = 1e-6) -> nv.CharacteristicTable:
    """Per-radius rows (r, T, m, N, N_k, residual) sharing one ledger
    computed at the largest radius."""
    grid = sorted(float(r) for r in grid)
    rmax = grid[-1]
    h = pullback_expression(curve, D)
    check_not_inside(curve, D, h)
    ledger = nv.find_zeros(h, rmax, tol=tol)
    rows = []
    for r in grid:
        T = weighted_T(curve, D, r)
        m = proximity_mf(curve, D, r, ledger=ledger, h=h, abs_tol=abs_tol)
        N = nv.counting_N(ledger, r)
        trunc = {int(k): nv.counting_N(ledger, r, int(k)) for k in k_list}
        rows.append(nv.CharacteristicRow(r=r, T=T, m=m, N=N, N_trunc=trunc,
                                         residual=T - N - m))
    return nv.CharacteristicTable(rows=rows,
                                  curve_fingerprint=curve.fingerprint(),
                                  divisor_fingerprint=D.fingerprint(),
                                  settings={"k_list": [int(k) for k in k_list],
                                            "tol": tol, "abs_tol": abs_tol})


# ---------------------------------------------------------------------------
# defects
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DefectEstimate:
    k: int | None
    value: float
    window: tuple
    t_fit: nv.RegressionSummary
    n_fit: nv.RegressionSummary


def _matched_order(curve: SemiTorusCurve, samples) -> float:
    """Regression power for the dominant-term fits: the exact component
    order when available, otherwise a log-log estimate rounded to the
    nearest half-integer."""
    rho = classify_finite_order(curve)
    if rho != math.inf:
        return float(max(rho, 1))
    est = nv.order_estimate(samples)
    return max(0.5, round(2.0 * est.slope) / 2.0)


def defect(curve: SemiTorusCurve, D: CompactifiedDivisor, k: int | None,
           grid, table: nv.CharacteristicTable | None = None,
           tol: float = 1e-9, abs_tol: float = 1e-6) -> DefectEstimate:
    """1 - slope(N_k)/slope(T) with both slopes from the dominant-term
    regression matched to the curve order."""
    grid = sorted(float(r) for r in grid)
    if len(grid) < 2 or grid[-1] <= grid[0]:
        raise nv.DegenerateWindow("defect needs a non-degenerate radius window")
    if table is None:
        table = characteristic_table(curve, D, grid,
                                     k_list=(k,) if k else (1,),
                                     tol=tol, abs_tol=abs_tol)
    rs = table.column("r")
    Ts = table.column("T")
    if k is None:
        Ns = table.column("N")
    else:
        Ns = np.array([row.N_trunc[int(k)] for row in table.rows])
    rho = _matched_order(curve, list(zip(rs, Ts)))
    t_fit = nv.power_fit(rs, Ts, rho)
    n_fit = nv.power_fit(rs, Ns, rho)
    value = 1.0 - n_fit.slope / t_fit.slope
    return DefectEstimate(k=k, value=float(value),
                          window=(grid[0], grid[-1]), t_fit=t_fit, n_fit=n_fit)


# ---------------------------------------------------------------------------
# the positive-defect construction
# ---------------------------------------------------------------------------

def looks_rational(x: float, max_den: int = 10**6, rel: float = 1e-13) -> bool:
    """Continued-fraction test: is x within float resolution of a rational
    with denominator below max_den?  (A soft check: exact irrationality is
    not decidable in floats.)"""
    f = Fraction(x).limit_denominator(max_den)
    return abs(x - float(f)) <= rel * max(1.0, abs(x))


def construct_positive_defect(p: int, rho: int, c, L=None) -> SemiTorusCurve:
    """Curve z -> (exp(c_1 z^rho), ..., exp(c_p z^rho)) used to produce a
    positive defect against a divisor whose closure contains the all-infinity
    corner.  Exponent coefficients must be strictly increasing positive with
    pairwise irrational ratios (soft continued-fraction validation).  The
    torus factor is dropped: this artifact works with m = 0."""
    c = [float(x) for x in c]
    if len(c) != p or p < 1:
        raise InvalidExponents("need p positive coefficients")
    if int(rho) != rho or rho < 1:
        raise InvalidExponents("order must be a positive integer (m = 0 case)")
    if any(x <= 0 for x in c) or any(b <= a for a, b in zip(c, c[1:])):
        raise InvalidExponents("coefficients must be strictly increasing positive")
    for i in range(p):
        for j in range(i + 1, p):
            if looks_rational(c[j] / c[i]):
                raise InvalidExponents(
                    f"ratio c[{j}]/c[{i}] is rational within tolerance; "
                    "the curve would not be Zariski dense")
    notes = []
    if L is not None:
        notes.append("torus factor dropped: construction restricted to m = 0")
    exponents = [ej.mul(ej.const(x), ej.pow_(ej.Z, int(rho))) for x in c]
    return SemiTorusCurve.from_exponents(exponents, notes=tuple(notes))
