"""Expression trees for the entire and meromorphic functions used throughout
the package: polynomials, exponentials of subexpressions, sums, products,
integer powers and quotients.

The grammar is deliberately closed: every finite-order curve component is
exp of a polynomial, so nothing more general is needed.  Three evaluation
modes are provided, and all heavy numerics route through the scaled one:

* ``scaled_values``: vectorised evaluation returning a unit mantissa and a
  real log-scale, exact in the scale even when ``|value|`` is far outside
  double range (``e^z`` at ``|z| = 1000`` is fine),
* ``differentiate``: exact symbolic derivative,
* ``scaled_jet`` / ``jet``: truncated Taylor arithmetic over the tree.
"""

from __future__ import annotations

import cmath
import hashlib
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Union

import numpy as np

MAX_JET_ORDER = 64      # jet truncation cap; useful truncation levels are small
_LOG_HUGE = 709.0       # exp() overflows double precision beyond this
_MAX_POLY_LEN = 4097    # safety cap on tracked polynomial degree

NEG_INFINITY_DEGREE = float("-inf")   # degree sentinel of the zero polynomial


class PoleAtPoint(ArithmeticError):
    """A quotient denominator vanishes at the evaluation point."""


class ZeroAtPoint(ArithmeticError):
    """log-modulus requested at a zero of the expression."""


class Overflow(OverflowError):
    """Result (or an exponent value) exceeds double-precision range."""


class InvalidExpression(ValueError):
    """Construction would violate a grammar invariant."""


def _fold_complex(x) -> complex:
    return complex(x)


@dataclass(frozen=True)
class Expression:
    """Immutable expression tree node.

    ``kind`` is one of ``const, z, sum, prod, pow, exp, quot``.  The
    polynomial annotation ``poly`` (coefficients, low order first) is present
    exactly when the subtree contains no ``exp`` node and no quotient with
    non-constant denominator; ``polymag`` accumulates coefficient magnitudes
    through the same operations so that float cancellation can be told apart
    from genuinely small coefficients.
    """

    kind: str
    children: tuple = ()
    value: complex = 0j
    power: int = 1
    poly: Optional[tuple] = field(default=None, compare=False)
    polymag: Optional[tuple] = field(default=None, compare=False)

    # -- sugar -------------------------------------------------------------
    def __add__(self, other):
        return add(self, _as_expr(other))

    def __radd__(self, other):
        return add(_as_expr(other), self)

    def __sub__(self, other):
        return add(self, mul(const(-1), _as_expr(other)))

    def __rsub__(self, other):
        return add(_as_expr(other), mul(const(-1), self))

    def __mul__(self, other):
        return mul(self, _as_expr(other))

    def __rmul__(self, other):
        return mul(_as_expr(other), self)

    def __truediv__(self, other):
        return quot(self, _as_expr(other))

    def __rtruediv__(self, other):
        return quot(_as_expr(other), self)

    def __pow__(self, k: int):
        return pow_(self, k)

    def __neg__(self):
        return mul(const(-1), self)

    # -- evaluation protocol (shared with the theta evaluators) -------------
    def scaled_values(self, z: np.ndarray):
        return scaled_values(self, z)

    def scaled_taylor(self, a: complex, k: int):
        return scaled_jet(self, a, k)

    def phase_rate_bound(self, center: complex, radius: float) -> float:
        """Bound on |d arg(e)/dz| along paths in the disk about ``center``,
        ignoring the local spikes at zeros (the winding refinement handles
        those).  Needed so that path sampling cannot alias the fast linear
        phases of exponential factors."""
        return _phase_rate(self, abs(center) + radius)

    def fingerprint(self) -> str:
        return hashlib.sha256(canonical_key(self).encode()).hexdigest()[:16]

    def __repr__(self):
        return f"Expression<{canonical_key(self)}>"


def _as_expr(x) -> Expression:
    if isinstance(x, Expression):
        return x
    return const(x)


# ---------------------------------------------------------------------------
# constructors (canonical flattening happens here)
# ---------------------------------------------------------------------------

def const(c) -> Expression:
    c = _fold_complex(c)
    return Expression("const", value=c, poly=(c,), polymag=(abs(c),))


Z = Expression("z", poly=(0j, 1 + 0j), polymag=(0.0, 1.0))


def _poly_add(p1, m1, p2, m2):
    n = max(len(p1), len(p2))
    p = [0j] * n
    m = [0.0] * n
    for i, (c, g) in enumerate(zip(p1, m1)):
        p[i] += c
        m[i] += g
    for i, (c, g) in enumerate(zip(p2, m2)):
        p[i] += c
        m[i] += g
    return tuple(p), tuple(m)


def _poly_mul(p1, m1, p2, m2):
    if len(p1) + len(p2) - 1 > _MAX_POLY_LEN:
        raise InvalidExpression("tracked polynomial degree beyond cap")
    p = [0j] * (len(p1) + len(p2) - 1)
    m = [0.0] * len(p)
    for i, (c1, g1) in enumerate(zip(p1, m1)):
        for j, (c2, g2) in enumerate(zip(p2, m2)):
            p[i + j] += c1 * c2
            m[i + j] += g1 * g2
    return tuple(p), tuple(m)


def _poly_is_zero(p, m) -> bool:
    return all(abs(c) <= 1e-12 * g + 0.0 for c, g in zip(p, m))


def add(*terms) -> Expression:
    """Sum with flattening of nested sums and folding of constant terms."""
    flat = []
    cval = 0j
    for t in terms:
        t = _as_expr(t)
        if t.kind == "sum":
            flat.extend(t.children)
        elif t.kind == "const":
            cval += t.value
        else:
            flat.append(t)
    if cval != 0 or not flat:
        flat = [const(cval)] + flat
    if len(flat) == 1:
        return flat[0]
    poly = mag = None
    if all(c.poly is not None for c in flat):
        poly, mag = flat[0].poly, flat[0].polymag
        for c in flat[1:]:
            poly, mag = _poly_add(poly, mag, c.poly, c.polymag)
    return Expression("sum", children=tuple(flat), poly=poly, polymag=mag)


def mul(*factors) -> Expression:
    """Product with flattening and constant folding; zero annihilates."""
    flat = []
    cval = 1 + 0j
    for f in factors:
        f = _as_expr(f)
        if f.kind == "prod":
            for g in f.children:
                if g.kind == "const":
                    cval *= g.value
                else:
                    flat.append(g)
        elif f.kind == "const":
            cval *= f.value
        else:
            flat.append(f)
    if cval == 0:
        return const(0)
    if cval != 1 or not flat:
        flat = [const(cval)] + flat
    if len(flat) == 1:
        return flat[0]
    poly = mag = None
    if all(c.poly is not None for c in flat):
        poly, mag = flat[0].poly, flat[0].polymag
        for c in flat[1:]:
            poly, mag = _poly_mul(poly, mag, c.poly, c.polymag)
    return Expression("prod", children=tuple(flat), poly=poly, polymag=mag)


def pow_(e: Expression, k: int) -> Expression:
    e = _as_expr(e)
    if k != int(k):
        raise InvalidExpression("only integer powers are in the grammar")
    k = int(k)
    if k < 0:
        return quot(const(1), pow_(e, -k))
    if k == 0:
        return const(1)
    if k == 1:
        return e
    if e.kind == "const":
        return const(e.value**k)
    if e.kind == "pow":
        return pow_(e.children[0], e.power * k)
    poly = mag = None
    if e.poly is not None:
        poly, mag = e.poly, e.polymag
        for _ in range(k - 1):
            poly, mag = _poly_mul(poly, mag, e.poly, e.polymag)
    return Expression("pow", children=(e,), power=k, poly=poly, polymag=mag)


def exp_(g: Expression) -> Expression:
    g = _as_expr(g)
    if g.kind == "const" and g.value == 0:
        return const(1)
    return Expression("exp", children=(g,))


def quot(n: Expression, d: Expression) -> Expression:
    n, d = _as_expr(n), _as_expr(d)
    if d.poly is not None and _poly_is_zero(d.poly, d.polymag):
        raise InvalidExpression("quotient by the identically-zero expression")
    if d.kind == "const":
        return mul(const(1 / d.value), n)
    if n.kind == "const" and n.value == 0:
        return const(0)
    # constant (degree-0) polynomial denominators keep the poly annotation
    poly = mag = None
    if d.poly is not None and polynomial_degree(d) == 0 and n.poly is not None:
        c = _nonzero_leading(d)
        poly = tuple(x / c for x in n.poly)
        mag = tuple(x / abs(c) for x in n.polymag)
    return Expression("quot", children=(n, d), poly=poly, polymag=mag)


def poly(coeffs: Iterable) -> Expression:
    """Polynomial sum(coeffs[j] * z**j)."""
    cs = [_fold_complex(c) for c in coeffs]
    terms = []
    for j, c in enumerate(cs):
        if c == 0:
            continue
        terms.append(mul(const(c), pow_(Z, j)) if j else const(c))
    if not terms:
        return const(0)
    return add(*terms)


def _nonzero_leading(e: Expression) -> complex:
    for c, g in zip(e.poly, e.polymag):
        if abs(c) > 1e-12 * g:
            return c
    raise InvalidExpression("zero polynomial has no leading coefficient")


# ---------------------------------------------------------------------------
# canonical key and degree
# ---------------------------------------------------------------------------

def canonical_key(e: Expression) -> str:
    if e.kind == "const":
        return f"c({e.value.real!r},{e.value.imag!r})"
    if e.kind == "z":
        return "z"
    if e.kind == "pow":
        return f"pow({canonical_key(e.children[0])},{e.power})"
    inner = ",".join(canonical_key(c) for c in e.children)
    return f"{e.kind}({inner})"


def polynomial_degree(e: Expression) -> Union[int, float, None]:
    """Exact degree when the subtree normalises to a polynomial in z.

    Returns ``None`` when no polynomial annotation exists (any exp node, or a
    quotient with non-constant denominator), and the ``-inf`` sentinel for the
    identically-zero polynomial.
    """
    if e.poly is None:
        return None
    deg = NEG_INFINITY_DEGREE
    for j, (c, g) in enumerate(zip(e.poly, e.polymag)):
        if abs(c) > 1e-12 * g:
            deg = j
    return deg


# ---------------------------------------------------------------------------
# scaled evaluation
# ---------------------------------------------------------------------------

def scaled_values(e: Expression, z: np.ndarray):
    """Evaluate ``e`` on an array of points in split form ``m * exp(s)``.

    ``m`` is a unit-modulus complex mantissa (0 where the value is zero,
    nan where a pole was hit, in which case ``s`` is ``+inf``) and ``s`` is
    the real log-modulus.  The split keeps phases exact for winding-number
    work and never overflows for exponentials of representable arguments.
    """
    z = np.asarray(z, dtype=complex)
    with np.errstate(all="ignore"):
        return _scaled(e, z)


def _renorm(acc: np.ndarray):
    a = np.abs(acc)
    zero = a == 0
    bad = ~np.isfinite(a)
    safe = np.where(zero | bad, 1.0, a)
    m = acc / safe
    s = np.where(zero, 0.0, np.log(safe))
    m = np.where(zero, 0j, m)
    if np.any(bad):
        m = np.where(bad, np.nan + 0j, m)
        s = np.where(bad, np.inf, s)
    return m, s


def _scaled(e: Expression, z: np.ndarray):
    if e.kind == "const":
        c = e.value
        if c == 0:
            return np.zeros_like(z), np.zeros(z.shape, dtype=float)
        m = np.full(z.shape, c / abs(c), dtype=complex)
        s = np.full(z.shape, math.log(abs(c)))
        return m, s
    if e.kind == "z":
        return _renorm(z.copy())
    if e.kind == "sum":
        parts = [_scaled(c, z) for c in e.children]
        smax = np.full(z.shape, -np.inf)
        for m, s in parts:
            smax = np.maximum(smax, np.where(m == 0, -np.inf, s))
        acc = np.zeros_like(z)
        for m, s in parts:
            w = np.where(m == 0, 0.0, np.exp(np.minimum(s - smax, 0.0)))
            acc = acc + m * w
        m, s = _renorm(acc)
        anchored = np.isfinite(smax) & (m != 0)
        return m, np.where(anchored, s + smax, s)
    if e.kind == "prod":
        m = np.ones_like(z)
        s = np.zeros(z.shape, dtype=float)
        for c in e.children:
            mc, sc = _scaled(c, z)
            m = m * mc
            s = s + sc
        zero = m == 0
        return m, np.where(zero, 0.0, s)
    if e.kind == "pow":
        m, s = _scaled(e.children[0], z)
        return m**e.power, np.where(m == 0, 0.0, s * e.power)
    if e.kind == "exp":
        mg, sg = _scaled(e.children[0], z)
        live = mg != 0
        if np.any(sg[live] > _LOG_HUGE):
            raise Overflow("exponent magnitude beyond double range")
        v = np.where(live, mg * np.exp(np.where(live, sg, 0.0)), 0j)
        return np.exp(1j * v.imag), v.real
    if e.kind == "quot":
        mn, sn = _scaled(e.children[0], z)
        md, sd = _scaled(e.children[1], z)
        pole = md == 0
        m = np.where(pole, np.nan + 0j, mn / np.where(pole, 1.0, md))
        s = np.where(pole, np.inf, sn - sd)
        s = np.where((mn == 0) & ~pole, 0.0, s)
        return m, s
    raise InvalidExpression(f"unknown node kind {e.kind!r}")


def evaluate(e: Expression, z: complex) -> complex:
    """Plain value of ``e`` at a single point.

    Raises ``PoleAtPoint`` when a denominator vanishes at ``z`` and
    ``Overflow`` when the value leaves double range (callers fall back to
    ``log_modulus``).
    """
    m, s = scaled_values(e, np.array([z], dtype=complex))
    mv, sv = complex(m[0]), float(s[0])
    if not np.isfinite(mv.real) or not np.isfinite(mv.imag):
        raise PoleAtPoint(f"denominator vanishes at {z}")
    if mv == 0:
        return 0j
    if sv > _LOG_HUGE:
        raise Overflow(f"|value| ~ exp({sv:.3g}) at {z}")
    return mv * math.exp(sv)


def values(e: Expression, z: np.ndarray) -> np.ndarray:
    """Vectorised plain values; raises Overflow if any point leaves range."""
    m, s = scaled_values(e, z)
    if np.any(~np.isfinite(m.real)):
        raise PoleAtPoint("denominator vanishes on the evaluation set")
    live = m != 0
    if np.any(s[live] > _LOG_HUGE):
        raise Overflow("values beyond double range")
    return np.where(live, m * np.exp(np.where(live, s, 0.0)), 0j)


def log_modulus(e: Expression, z: complex) -> float:
    """Overflow-safe ``log|e(z)|``; exp factors contribute Re of the exponent."""
    m, s = scaled_values(e, np.array([z], dtype=complex))
    mv, sv = complex(m[0]), float(s[0])
    if not np.isfinite(mv.real) or not np.isfinite(mv.imag):
        raise PoleAtPoint(f"denominator vanishes at {z}")
    if mv == 0:
        raise ZeroAtPoint(f"expression vanishes at {z}")
    return sv


# ---------------------------------------------------------------------------
# symbolic differentiation
# ---------------------------------------------------------------------------

def differentiate(e: Expression) -> Expression:
    if e.kind == "const":
        return const(0)
    if e.kind == "z":
        return const(1)
    if e.kind == "sum":
        return add(*[differentiate(c) for c in e.children])
    if e.kind == "prod":
        terms = []
        cs = e.children
        for i in range(len(cs)):
            terms.append(mul(*cs[:i], differentiate(cs[i]), *cs[i + 1:]))
        return add(*terms)
    if e.kind == "pow":
        base = e.children[0]
        return mul(const(e.power), pow_(base, e.power - 1), differentiate(base))
    if e.kind == "exp":
        return mul(differentiate(e.children[0]), e)
    if e.kind == "quot":
        n, d = e.children
        num = add(mul(differentiate(n), d), mul(const(-1), n, differentiate(d)))
        return quot(num, pow_(d, 2))
    raise InvalidExpression(f"unknown node kind {e.kind!r}")


def differentiate_n(e: Expression, k: int) -> Expression:
    for _ in range(k):
        e = differentiate(e)
    return e


# ---------------------------------------------------------------------------
# jets (truncated Taylor arithmetic)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class JetSeries:
    """Taylor coefficients c_0..c_k of an expression at a base point."""

    base: complex
    order: int
    coeffs: tuple

    def derivative(self, j: int) -> complex:
        return self.coeffs[j] * math.factorial(j)


def _jet_renorm(c: np.ndarray, s: float):
    t = float(np.max(np.abs(c)))
    if t == 0.0 or not math.isfinite(t):
        if t == 0.0:
            return c, 0.0
        raise Overflow("non-finite jet coefficients")
    return c / t, s + math.log(t)


def scaled_jet(e: Expression, a: complex, k: int):
    """Taylor coefficients at ``a`` in split form ``(c, s)``, value c*exp(s).

    Computed by truncated series arithmetic over the tree, not by repeated
    symbolic differentiation.
    """
    if k < 0:
        raise ValueError("jet order must be non-negative")
    if k > MAX_JET_ORDER:
        raise ValueError(f"jet order capped at {MAX_JET_ORDER}")
    a = complex(a)
    return _sjet(e, a, k)


def _sjet(e: Expression, a: complex, k: int):
    n = k + 1
    if e.kind == "const":
        c = np.zeros(n, dtype=complex)
        c[0] = e.value
        return _jet_renorm(c, 0.0)
    if e.kind == "z":
        c = np.zeros(n, dtype=complex)
        c[0] = a
        if k >= 1:
            c[1] = 1.0
        return _jet_renorm(c, 0.0)
    if e.kind == "sum":
        parts = [_sjet(c, a, k) for c in e.children]
        smax = max((s for c, s in parts if np.any(c != 0)), default=0.0)
        acc = np.zeros(n, dtype=complex)
        for c, s in parts:
            if np.any(c != 0):
                acc += c * math.exp(min(s - smax, 0.0))
        return _jet_renorm(acc, smax)
    if e.kind == "prod":
        acc, s = _sjet(e.children[0], a, k)
        for child in e.children[1:]:
            c2, s2 = _sjet(child, a, k)
            acc = np.convolve(acc, c2)[:n]
            s += s2
            acc, ds = _jet_renorm(acc, 0.0)
            s += ds
        return acc, s
    if e.kind == "pow":
        base, sb = _sjet(e.children[0], a, k)
        acc = np.zeros(n, dtype=complex)
        acc[0] = 1.0
        s = 0.0
        for _ in range(e.power):
            acc = np.convolve(acc, base)[:n]
            s += sb
            acc, ds = _jet_renorm(acc, 0.0)
            s += ds
        return acc, s
    if e.kind == "exp":
        cg, sg = _sjet(e.children[0], a, k)
        if np.all(cg == 0):
            g = np.zeros(n, dtype=complex)
        else:
            if sg + math.log(max(np.max(np.abs(cg)), 1e-300)) > _LOG_HUGE:
                raise Overflow("exp argument jet beyond double range")
            g = cg * math.exp(sg)
        # h = exp(g):  h_0 carried in the scale, recurrence in mantissa units
        h = np.zeros(n, dtype=complex)
        h[0] = cmath.exp(1j * g[0].imag)
        for m in range(1, n):
            acc = 0j
            for j in range(1, m + 1):
                acc += j * g[j] * h[m - j]
            h[m] = acc / m
        return _jet_renorm(h, g[0].real)
    if e.kind == "quot":
        cn, sn = _sjet(e.children[0], a, k)
        cd, sd = _sjet(e.children[1], a, k)
        if cd[0] == 0:
            raise PoleAtPoint(f"denominator vanishes at {a}")
        h = np.zeros(n, dtype=complex)
        for m in range(n):
            acc = cn[m]
            for j in range(1, m + 1):
                acc -= cd[j] * h[m - j]
            h[m] = acc / cd[0]
        return _jet_renorm(h, sn - sd)
    raise InvalidExpression(f"unknown node kind {e.kind!r}")


def jet(e: Expression, a: complex, k: int) -> JetSeries:
    c, s = scaled_jet(e, a, k)
    top = float(np.max(np.abs(c)))
    if top > 0 and s + math.log(top) > _LOG_HUGE:
        raise Overflow(f"jet coefficients ~ exp({s:.3g}) at {a}")
    return JetSeries(base=complex(a), order=k, coeffs=tuple(c * math.exp(s)))


def _deriv_magnitude_bound(g: Expression, R: float) -> float:
    """Coarse bound on max |g'(z)| over |z| <= R."""
    if g.poly is not None:
        return sum(k * m * R ** (k - 1)
                   for k, m in enumerate(g.polymag) if k >= 1)
    # non-polynomial exponent: probe the derivative on the circle
    dg = differentiate(g)
    th = np.linspace(0.0, 2 * math.pi, 33)
    try:
        m, s = scaled_values(dg, R * np.exp(1j * th))
        s = np.where(m == 0, -np.inf, s)
        top = float(np.max(s))
        return math.exp(min(top, 60.0))
    except (PoleAtPoint, Overflow):
        return 1e26


def _phase_rate(e: Expression, R: float) -> float:
    if e.kind in ("const", "z"):
        return 0.0
    if e.kind == "sum":
        return max(_phase_rate(c, R) for c in e.children)
    if e.kind == "prod":
        return sum(_phase_rate(c, R) for c in e.children)
    if e.kind == "pow":
        return e.power * _phase_rate(e.children[0], R)
    if e.kind == "exp":
        return _deriv_magnitude_bound(e.children[0], R)
    if e.kind == "quot":
        return _phase_rate(e.children[0], R) + _phase_rate(e.children[1], R)
    raise InvalidExpression(f"unknown node kind {e.kind!r}")


def wronskian(es, z: complex) -> complex:
    """Determinant of the derivative matrix (rows: orders 0..l-1) at ``z``."""
    es = list(es)
    if not es:
        raise ValueError("wronskian of an empty tuple")
    l = len(es)
    cols = []
    total_scale = 0.0
    for e in es:
        c, s = scaled_jet(_as_expr(e), z, l - 1)
        cols.append([c[j] * math.factorial(j) for j in range(l)])
        total_scale += s
    mat = np.array(cols, dtype=complex).T
    det = complex(np.linalg.det(mat))
    if det == 0:
        return 0j
    if total_scale + math.log(abs(det)) > _LOG_HUGE:
        raise Overflow("wronskian beyond double range")
    return det * math.exp(total_scale)
