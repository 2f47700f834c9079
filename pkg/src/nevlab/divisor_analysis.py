"""Combinatorial divisor tests: Newton support, stabilizer directions, and
the boundary corner condition.

All verdicts run in exact arithmetic on the coefficient table: a
coefficient is zero only when it is absent from the table.  The stabilizer
of a constant-coefficient section intersected with the multiplicative
factor is read off the Newton polytope: a one-parameter direction n fixes
the divisor exactly when the pairing <n, alpha - beta> vanishes for all
support pairs, so its Lie algebra is the rational null space of the
difference lattice.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .semitorus import CompactifiedDivisor, ConstructionError, section_value


class DegenerateHyperplane(ValueError):
    pass


@dataclass(frozen=True)
class NewtonAnalysis:
    """Support set, difference-lattice rank, stabilizer basis (integer rows
    in Hermite normal form), the 2^p corner coefficient report, and the
    boundary-condition verdict (all corner coefficients nonzero)."""

    support: frozenset
    difference_rank: int
    stabilizer_basis: tuple
    corner_report: dict
    condition_4_11: bool

    @property
    def stabilizer_dimension(self) -> int:
        return len(self.stabilizer_basis)

    def failing_corners(self):
        return tuple(sorted(c for c, v in self.corner_report.items() if v == 0))


def newton_support(D: CompactifiedDivisor) -> frozenset:
    """Exponent vectors with (declared) nonzero coefficient."""
    return frozenset(D.terms)


# ---------------------------------------------------------------------------
# exact linear algebra over Q
# ---------------------------------------------------------------------------

def _nullspace_rational(rows, width):
    """Basis of {n in Q^width : <n, row> = 0 for all rows}; returns
    (rank, basis as Fraction tuples)."""
    mat = [[Fraction(x) for x in row] for row in rows]
    pivots = []
    r = 0
    for col in range(width):
        piv = next((i for i in range(r, len(mat)) if mat[i][col] != 0), None)
        if piv is None:
            continue
        mat[r], mat[piv] = mat[piv], mat[r]
        inv = mat[r][col]
        mat[r] = [x / inv for x in mat[r]]
        for i in range(len(mat)):
            if i != r and mat[i][col] != 0:
                f = mat[i][col]
                mat[i] = [a - f * b for a, b in zip(mat[i], mat[r])]
        pivots.append(col)
        r += 1
        if r == len(mat):
            break
    free = [c for c in range(width) if c not in pivots]
    basis = []
    for fc in free:
        v = [Fraction(0)] * width
        v[fc] = Fraction(1)
        for i, pc in enumerate(pivots):
            v[pc] = -mat[i][fc]
        basis.append(tuple(v))
    return len(pivots), basis


def _primitive_integer(vec):
    den = 1
    for x in vec:
        den = den * x.denominator // math.gcd(den, x.denominator)
    ints = [int(x * den) for x in vec]
    g = 0
    for x in ints:
        g = math.gcd(g, abs(x))
    if g > 1:
        ints = [x // g for x in ints]
    return ints


def hermite_normal_form(rows):
    """Row-style HNF of an integer matrix: positive pivots, entries above a
    pivot reduced into [0, pivot).  Zero rows are dropped."""
    M = [list(r) for r in rows if any(r)]
    if not M:
        return ()
    n = len(M[0])
    out = []
    col = 0
    while M and col < n:
        cand = [r for r in M if r[col] != 0]
        if not cand:
            col += 1
            continue
        while True:
            cand.sort(key=lambda r: abs(r[col]))
            pivot = cand[0]
            rest = cand[1:]
            done = True
            for r in rest:
                q = r[col] // pivot[col]
                for j in range(n):
                    r[j] -= q * pivot[j]
                if r[col] != 0:
                    done = False
            cand = [pivot] + [r for r in rest if any(r)]
            if done:
                break
        if pivot[col] < 0:
            for j in range(n):
                pivot[j] = -pivot[j]
        for r in out:
            q = r[col] // pivot[col]
            if q:
                for j in range(n):
                    r[j] -= q * pivot[j]
        out.append(pivot)
        M = [r for r in cand[1:] if any(r)] + [r for r in M if r[col] == 0 and any(r)]
        M = [r for r in M if r is not pivot]
        col += 1
    return tuple(tuple(r) for r in out)


# ---------------------------------------------------------------------------
# stabilizer and boundary condition
# ---------------------------------------------------------------------------

def _difference_rows(support):
    pts = sorted(support)
    base = pts[0]
    return [tuple(a - b for a, b in zip(e, base)) for e in pts[1:]]


def stabilizer(D: CompactifiedDivisor) -> NewtonAnalysis:
    """Newton analysis with the stabilizer part filled in.

    The basis spans the orthogonal complement of the support differences;
    its dimension plus the difference-lattice rank equals p exactly.
    """
    support = newton_support(D)
    rows = _difference_rows(support)
    if rows:
        rank, basis = _nullspace_rational(rows, D.p)
    else:
        rank, basis = 0, [tuple(Fraction(int(i == j)) for j in range(D.p))
                          for i in range(D.p)]
    ints = [_primitive_integer(v) for v in basis]
    hnf = hermite_normal_form(ints)
    corners = _corner_report(D)
    return NewtonAnalysis(
        support=support,
        difference_rank=rank,
        stabilizer_basis=hnf,
        corner_report=corners,
        condition_4_11=all(v != 0 for v in corners.values()))


def _corner_report(D: CompactifiedDivisor) -> dict:
    report = {}
    for ends in itertools.product(("0", "inf"), repeat=D.p):
        expo = tuple(d if e == "inf" else 0
                     for e, d in zip(ends, D.multidegree))
        report[ends] = D.coefficient(expo)
    return report


def boundary_condition(D: CompactifiedDivisor) -> NewtonAnalysis:
    """Corner test for the boundary condition: the compactified divisor
    misses every minimal boundary stratum iff all 2^p corner monomial
    coefficients are nonzero."""
    return stabilizer(D)


def boundary_restriction(D: CompactifiedDivisor, axis: int, end: str) -> dict:
    """Coefficient table of the section restricted to one boundary face."""
    want = D.multidegree[axis] if end == "inf" else 0
    out = {}
    for expo, coeff in D.terms.items():
        if expo[axis] == want:
            out[expo[:axis] + expo[axis + 1:]] = coeff
    return out


def verify_stabilizer_numeric(D: CompactifiedDivisor, basis,
                              rng: np.random.Generator, trials: int = 20) -> float:
    """Max relative defect of sigma(t^n u) sigma(u') - sigma(t^n u') sigma(u)
    over random (t, u, u'); should vanish for true stabilizer directions."""
    worst = 0.0
    for n in basis:
        for _ in range(trials):
            t = complex(rng.uniform(0.5, 2.0), rng.uniform(-0.5, 0.5))
            u = rng.uniform(0.5, 1.5, D.p) * np.exp(1j * rng.uniform(0, 2 * np.pi, D.p))
            v = rng.uniform(0.5, 1.5, D.p) * np.exp(1j * rng.uniform(0, 2 * np.pi, D.p))
            tu = [t**k * x for k, x in zip(n, u)]
            tv = [t**k * x for k, x in zip(n, v)]
            lhs = section_value(D, tu) * section_value(D, v)
            rhs = section_value(D, tv) * section_value(D, u)
            scale = max(abs(lhs), abs(rhs), 1e-30)
            worst = max(worst, abs(lhs - rhs) / scale)
    return worst


# ---------------------------------------------------------------------------
# hyperplane arrangements (projective-space scenario)
# ---------------------------------------------------------------------------

def hyperplane_scenario(coeffs) -> CompactifiedDivisor:
    """Divisor induced on the torus complement of the coordinate simplex by
    the extra hyperplane sum(a_j w_j): the affine-linear section
    a_0 + sum a_j u_j in the chart u_j = w_j / w_0."""
    a = [complex(x) for x in coeffs]
    if len(a) < 2:
        raise DegenerateHyperplane("need coefficients in at least P^1")
    nonzero = [j for j, x in enumerate(a) if x != 0]
    if not nonzero:
        raise DegenerateHyperplane("zero hyperplane")
    if len(nonzero) == 1:
        raise DegenerateHyperplane("coincides with a coordinate hyperplane")
    n = len(a) - 1
    terms = {}
    if a[0] != 0:
        terms[(0,) * n] = a[0]
    for j in range(1, n + 1):
        if a[j] != 0:
            terms[tuple(int(i == j - 1) for i in range(n))] = a[j]
    degree = tuple(1 if a[j + 1] != 0 else 0 for j in range(n))
    return CompactifiedDivisor(p=n, multidegree=degree, terms=terms)


@dataclass(frozen=True)
class HyperplaneReport:
    divisor: CompactifiedDivisor
    vertex_coefficients: tuple
    in_general_position: bool


def hyperplane_report(coeffs) -> HyperplaneReport:
    """Boundary verdict for the arrangement scenario.

    The minimal boundary strata of the simplex compactification are its
    n + 1 vertices, and the section value at vertex j is the coefficient
    a_j; the extra hyperplane misses every vertex exactly when the full
    arrangement is in general position.  (The 2^p corner test of the
    product compactification is strictly stronger for n >= 2: an
    affine-linear section never carries the mixed corner monomials.)
    """
    a = [complex(x) for x in coeffs]
    divisor = hyperplane_scenario(a)
    return HyperplaneReport(
        divisor=divisor,
        vertex_coefficients=tuple(a),
        in_general_position=all(x != 0 for x in a))


def general_position_oracle(coeffs, tol: float = 1e-12) -> bool:
    """Determinant test: the n + 2 hyperplanes (coordinate ones plus the
    given one) are in general position iff every (n+1)-subset of their
    normal vectors is linearly independent."""
    a = np.asarray([complex(x) for x in coeffs])
    n1 = a.size
    normals = np.vstack([np.eye(n1, dtype=complex), a])
    scale = max(1.0, float(np.max(np.abs(a))))
    for subset in itertools.combinations(range(n1 + 1), n1):
        det = np.linalg.det(normals[list(subset)])
        if abs(det) <= tol * scale:
            return False
    return True
