"""Theta divisors on elliptic products: evaluation, pullback counting along
one-parameter subgroups, and the quadratic counting law.

The section of the principal polarization on C/(Z + tau Z) is the odd theta
series, which vanishes exactly on the lattice, so lattice enumeration is an
independent oracle for every ledger produced here.  Arguments are reduced
modulo the lattice with the quasi-periodicity factor tracked in log scale;
the metrised norm is

    log ||theta||(w) = log |theta(w)| - (pi / Im tau) (Im w)^2,

the unique Gaussian correction making the norm invariant under both lattice
translations (checked by the periodicity tests).
"""

from __future__ import annotations

import cmath
import hashlib
import math
from dataclasses import dataclass

import numpy as np

from . import nevanlinna as nv
from . import quadrature as quad
from .zeros import ZeroLedger, find_zeros_raw


class TruncationInsufficient(ArithmeticError):
    pass


class CurveInsideDivisor(ArithmeticError):
    pass


@dataclass(frozen=True)
class EllipticLattice:
    """Lattice Z + tau Z with Im tau > 0; covolume = Im tau."""

    tau: complex

    def __post_init__(self):
        if not (self.tau.imag > 0):
            raise ValueError("tau must lie in the upper half-plane")

    @property
    def covolume(self) -> float:
        return self.tau.imag


@dataclass(frozen=True)
class ThetaDivisorSpec:
    """Product of odd-characteristic theta divisors, one per factor."""

    factors: tuple
    combination: str = "product"

    def __post_init__(self):
        for lat, char in self.factors:
            if not isinstance(lat, EllipticLattice):
                raise TypeError("factors must be (EllipticLattice, 'odd') pairs")
            if char != "odd":
                raise ValueError("only the odd characteristic is supported: "
                                 "its zero set is exactly the lattice")
        if self.combination != "product":
            raise ValueError("factors combine as a product section")


@dataclass(frozen=True)
class SubgroupCurve:
    """f(z) = a z + b in the universal cover (one complex slot per factor)."""

    a: tuple
    b: tuple

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(complex(x) for x in self.a))
        object.__setattr__(self, "b", tuple(complex(x) for x in self.b))
        if len(self.a) != len(self.b):
            raise ValueError("direction and base point need equal length")
        if all(x == 0 for x in self.a):
            raise ValueError("constant curves are rejected: a must not vanish")


# ---------------------------------------------------------------------------
# odd theta series with lattice reduction
# ---------------------------------------------------------------------------

def _term_count(im_tau: float) -> int:
    n = int(math.ceil(math.sqrt(42.0 / (math.pi * im_tau)))) + 3
    if n > 600:
        raise TruncationInsufficient(f"Im tau = {im_tau} too small")
    return n


def _reduce(tau: complex, w: np.ndarray):
    a = np.round(w.imag / tau.imag)
    w1 = w - a * tau
    b = np.round(w1.real)
    return w1 - b, a, b


def theta_scaled(lat: EllipticLattice, w: np.ndarray):
    """Odd theta at the points ``w`` in split form (unit mantissa, log scale).

    The reduction w = z0 + b + a tau contributes the quasi-periodicity
    factor (-1)^(a+b) q^(-a^2) exp(-2 pi i a z0) whose modulus goes to the
    scale and whose phase stays on the mantissa, so phases remain exact for
    winding-number work.
    """
    tau = lat.tau
    w = np.asarray(w, dtype=complex)
    z0, a, b = _reduce(tau, w)
    N = _term_count(tau.imag)
    ns = np.arange(-N, N)
    half = ns + 0.5
    # series sum_n (-1)^n q^{(n+1/2)^2} e^{(2n+1) pi i z0}, q = e^{i pi tau}
    expo = (1j * math.pi * tau) * half[None, :]**2 \
        + (1j * math.pi) * (2.0 * half[None, :]) * z0[..., None]
    signs = np.where(ns % 2 == 0, 1.0, -1.0)
    series = (-1j) * np.sum(signs[None, :] * np.exp(expo), axis=-1)
    mag = np.abs(series)
    zero = mag < 1e-290
    mantissa = np.where(zero, 0j, series / np.where(zero, 1.0, mag))
    scale = math.pi * tau.imag * a**2 + 2.0 * math.pi * a * z0.imag \
        + np.where(zero, 0.0, np.log(np.where(zero, 1.0, mag)))
    phase = (math.pi * (a + b)
             - math.pi * tau.real * a**2
             - 2.0 * math.pi * a * z0.real)
    mantissa = mantissa * np.exp(1j * phase)
    return mantissa, scale


def theta_eval(lat: EllipticLattice, z: complex) -> complex:
    """Plain odd theta value; vanishes exactly on the lattice."""
    m, s = theta_scaled(lat, np.array([z], dtype=complex))
    if m[0] == 0:
        return 0j
    if s[0] > 700.0:
        raise OverflowError("theta value beyond double range")
    return complex(m[0]) * math.exp(float(s[0]))


def theta_log_norm(lat: EllipticLattice, w: np.ndarray) -> np.ndarray:
    """Lattice-periodic log ||theta||: log|theta(w)| - (pi/Im tau) (Im w)^2."""
    m, s = theta_scaled(lat, w)
    s = np.where(m == 0, -np.inf, s)
    return s - (math.pi / lat.tau.imag) * np.imag(w) ** 2


def _theta_jet(lat: EllipticLattice, w: complex, k: int):
    """Taylor coefficients of theta at w, split form (coeffs, log scale)."""
    tau = lat.tau
    z0, a, b = _reduce(tau, np.array([w], dtype=complex))
    z0, a, b = complex(z0[0]), float(a[0]), float(b[0])
    N = _term_count(tau.imag)
    ns = np.arange(-N, N)
    half = ns + 0.5
    base = np.exp((1j * math.pi * tau) * half**2
                  + (1j * math.pi) * (2.0 * half) * z0)
    signs = np.where(ns % 2 == 0, 1.0, -1.0)
    freq = 1j * math.pi * (2.0 * half)
    derivs = np.empty(k + 1, dtype=complex)
    for j in range(k + 1):
        derivs[j] = (-1j) * np.sum(signs * freq**j * base)
    coeffs = derivs / np.array([math.factorial(j) for j in range(k + 1)])
    # transform factor C exp(-2 pi i a (z0 + eps)) as a jet in eps
    scale = math.pi * tau.imag * a * a + 2.0 * math.pi * a * z0.imag
    phase = (math.pi * (a + b) - math.pi * tau.real * a * a
             - 2.0 * math.pi * a * z0.real)
    tr = np.array([cmath.exp(1j * phase) * (-2j * math.pi * a) ** j
                   / math.factorial(j) for j in range(k + 1)])
    out = np.convolve(coeffs, tr)[:k + 1]
    top = float(np.max(np.abs(out)))
    if top == 0.0:
        return out, 0.0
    return out / top, scale + math.log(top)


class TorusPullback:
    """Evaluator for z -> prod_i theta(a_i z + b_i) satisfying the zero
    finder's protocol (scaled values, scaled jets, fingerprint)."""

    def __init__(self, curve: SubgroupCurve, spec: ThetaDivisorSpec):
        if len(curve.a) != len(spec.factors):
            raise ValueError("curve slots must match divisor factors")
        self.curve = curve
        self.spec = spec
        for ai, bi, (lat, _) in zip(curve.a, curve.b, spec.factors):
            if ai == 0 and theta_eval(lat, bi) == 0:
                raise CurveInsideDivisor(
                    "a constant slot sits on its factor divisor")

    def scaled_values(self, z: np.ndarray):
        z = np.asarray(z, dtype=complex)
        m = np.ones(z.shape, dtype=complex)
        s = np.zeros(z.shape, dtype=float)
        for ai, bi, (lat, _) in zip(self.curve.a, self.curve.b,
                                    self.spec.factors):
            mi, si = theta_scaled(lat, ai * z + bi)
            m = m * mi
            s = s + si
        return m, np.where(m == 0, 0.0, s)

    def scaled_taylor(self, z: complex, k: int):
        acc = np.zeros(k + 1, dtype=complex)
        acc[0] = 1.0
        scale = 0.0
        for ai, bi, (lat, _) in zip(self.curve.a, self.curve.b,
                                    self.spec.factors):
            cj, sj = _theta_jet(lat, ai * z + bi, k)
            cj = cj * ai ** np.arange(k + 1)
            acc = np.convolve(acc, cj)[:k + 1]
            scale += sj
            top = float(np.max(np.abs(acc)))
            if top > 0:
                acc /= top
                scale += math.log(top)
        return acc, scale

    def log_norm(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        total = np.zeros(z.shape, dtype=float)
        for ai, bi, (lat, _) in zip(self.curve.a, self.curve.b,
                                    self.spec.factors):
            total = total + theta_log_norm(lat, ai * z + bi)
        return total

    def phase_rate_bound(self, center: complex, radius: float) -> float:
        # quasi-periodicity factor exp(-2 pi i a z) dominates: its rate is
        # 2 pi |a_i| Im(w) / Im tau with w = a_i z + b_i; series part ~ 3 pi
        rate = 0.0
        R = abs(center) + radius
        for ai, bi, (lat, _) in zip(self.curve.a, self.curve.b,
                                    self.spec.factors):
            wmax = abs(ai) * R + abs(bi)
            rate += abs(ai) * 2.0 * math.pi * (wmax / lat.tau.imag + 2.0)
        return rate

    def fingerprint(self) -> str:
        key = f"torus:{self.curve.a}:{self.curve.b}:" \
              f"{[(f[0].tau, f[1]) for f in self.spec.factors]}"
        return hashlib.sha256(key.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# counting, proximity, the quadratic law
# ---------------------------------------------------------------------------

def torus_counting(curve: SubgroupCurve, spec: ThetaDivisorSpec, R: float,
                   tol: float = 1e-9) -> ZeroLedger:
    """Ledger of the pullback divisor in |z| <= R via the shared zero
    finder; the evaluator wraps the theta product."""
    return find_zeros_raw(TorusPullback(curve, spec), R, tol=tol)


def lattice_zero_moduli(curve: SubgroupCurve, spec: ThetaDivisorSpec,
                        R: float):
    """Exact pullback zero moduli by lattice enumeration (the analytic zero
    set of each factor is (Lambda_i - b_i) / a_i)."""
    mods = []
    for ai, bi, (lat, _) in zip(curve.a, curve.b, spec.factors):
        if ai == 0:
            continue
        tau = lat.tau
        bound = abs(ai) * R + abs(bi) + 1.0
        qmax = int(math.ceil(bound / tau.imag)) + 1
        pmax = int(math.ceil(bound * (1.0 + abs(tau.real) / tau.imag))) + qmax + 1
        for qq in range(-qmax, qmax + 1):
            for pp in range(-pmax, pmax + 1):
                z = (pp + qq * tau - bi) / ai
                if abs(z) <= R:
                    mods.append(abs(z))
    return sorted(mods)


def torus_proximity(curve: SubgroupCurve, spec: ThetaDivisorSpec, r: float,
                    ledger: ZeroLedger | None = None,
                    abs_tol: float = 1e-6) -> float:
    """m_f(r; D): circle mean of -log||theta||(f(z)) for the product norm."""
    pb = TorusPullback(curve, spec)

    def fn(th):
        return -pb.log_norm(r * np.exp(1j * th))

    angles = ()
    if ledger is not None:
        angles = tuple(math.atan2(rec.location.imag, rec.location.real)
                       for rec in ledger.records
                       if abs(rec.modulus - r) <= 0.6)
    res = quad.circle_mean(fn, abs_tol=abs_tol, forced_angles=angles)
    return res.value


def quadratic_law(ledger: ZeroLedger, grid) -> nv.RegressionSummary:
    """Fit of N(r) against r^2 over the grid; the leading coefficient is
    reported, not compared to any normalisation convention."""
    rs = np.array(sorted(float(r) for r in grid))
    if rs[-1] / rs[0] < 2.0:
        raise nv.DegenerateWindow("quadratic fit needs a wide window")
    Ns = np.array([nv.counting_N(ledger, r) for r in rs])
    return nv.power_fit(rs, Ns, 2.0)


def counting_band(ledger: ZeroLedger, window, samples: int = 64):
    """(min, max) of n(t)/t^2 over a t grid in the window."""
    lo, hi = float(window[0]), float(window[1])
    ts = np.linspace(lo, hi, samples)
    vals = [nv.counting_n(ledger, t) / t**2 for t in ts]
    return float(min(vals)), float(max(vals))
