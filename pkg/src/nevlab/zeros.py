"""Zero isolation on disks by the argument principle.

The engine works with any *evaluator*: an object exposing

* ``scaled_values(z: ndarray) -> (mantissa, logscale)`` with unit-modulus
  mantissas (zero where the function vanishes), and
* ``scaled_taylor(a: complex, k: int) -> (coeffs, logscale)``,
* ``fingerprint() -> str``.

Expression trees satisfy the protocol, and so does the theta pullback in
:mod:`nevlab.abelian`.  Winding numbers come from tracking the mantissa
phase along a polyline, refining any segment whose phase step is too large;
the phase of the mantissa equals the phase of the function, so the tracking
is immune to the enormous dynamic range of exponential sums.

Zeros are isolated by recursive quadrisection of boxes (split points are
deterministically jittered so zeros never sit on a subdivision line),
refined by a Newton iteration on h/h' (which has simple zeros regardless of
multiplicity), and certified by the winding number on a small isolating
circle, which is also how multiplicities are read off.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class BoundaryZero(ArithmeticError):
    """A zero sits within tolerance of the target circle even after the
    radius was nudged outward; the caller must move the radius."""


class NonConvergence(ArithmeticError):
    """Subdivision or refinement gave up; carries the offending region."""


class _SingularPath(Exception):
    # internal: the function vanishes (or cannot be resolved) on a path
    pass


@dataclass(frozen=True)
class ZeroRecord:
    location: complex
    multiplicity: int
    modulus: float
    certified: bool
    cert_radius: float = 0.0


@dataclass
class ZeroLedger:
    """Zeros of one function on a closed disk, sorted by modulus."""

    radius: float
    records: list
    fingerprint: str
    boundary_winding: int
    requested_radius: float
    perturbed: bool = False

    def multiplicity_sum(self) -> int:
        return sum(r.multiplicity for r in self.records)


# ---------------------------------------------------------------------------
# phase tracking
# ---------------------------------------------------------------------------

_PHASE_STEP = 1.2          # max accepted phase increment per segment (rad)
_MID_PHASE_TOL = 0.6       # midpoint phase must match the linear prediction
_MID_DIP_TOL = 0.5         # midpoint log-modulus must not dip below the chord
_MAX_PATH_POINTS = 400_000
_MAX_REFINE_ROUNDS = 64


def _eval_path(evaluator, pts):
    m, s = evaluator.scaled_values(pts)
    if np.any(m == 0) or not np.all(np.isfinite(m)):
        raise _SingularPath()
    return np.angle(m), np.asarray(s, dtype=float)


def winding_number(evaluator, pts: np.ndarray) -> int:
    """Winding of evaluator along the closed polyline ``pts`` (last == first).

    Every segment must pass a midpoint verification before it counts: the
    midpoint phase has to match the linear prediction and the midpoint
    log-modulus must not dip below the endpoint chord.  This rules out the
    aliasing trap where a zero of multiplicity >= 2 close to a segment hides
    a full revolution inside one innocent-looking wrapped step.  Verified
    midpoints are reused, so the path roughly doubles in size once.
    """
    pts = np.asarray(pts, dtype=complex)
    ph, sc = _eval_path(evaluator, pts)
    ok = np.zeros(pts.size - 1, dtype=bool)
    for _ in range(_MAX_REFINE_ROUNDS):
        d = np.mod(np.diff(ph) + math.pi, 2 * math.pi) - math.pi
        idx = np.flatnonzero(~ok)
        if idx.size == 0:
            total = float(d.sum()) / (2 * math.pi)
            w = round(total)
            if abs(total - w) > 0.25:
                raise _SingularPath()
            return int(w)
        if pts.size + idx.size > _MAX_PATH_POINTS:
            raise _SingularPath()
        mid = 0.5 * (pts[idx] + pts[idx + 1])
        phm, scm = _eval_path(evaluator, mid)
        pred = ph[idx] + 0.5 * d[idx]
        offs = np.mod(phm - pred + math.pi, 2 * math.pi) - math.pi
        dip = scm - 0.5 * (sc[idx] + sc[idx + 1])
        bad = ((np.abs(d[idx]) > _PHASE_STEP)
               | (np.abs(offs) > _MID_PHASE_TOL)
               | (np.abs(dip) > _MID_DIP_TOL))
        ok[idx[~bad]] = True
        ins = idx[bad]
        if ins.size == 0:
            continue
        pts = np.insert(pts, ins + 1, mid[bad])
        ph = np.insert(ph, ins + 1, phm[bad])
        sc = np.insert(sc, ins + 1, scm[bad])
        ok = np.insert(ok, ins + 1, False)
        ok[ins + np.arange(ins.size)] = False
    raise _SingularPath()


def _rate_hint(evaluator, center: complex, radius: float) -> float:
    fn = getattr(evaluator, "phase_rate_bound", None)
    if fn is None:
        return 0.0
    return float(fn(center, radius))


def circle_winding(evaluator, center: complex, radius: float,
                   initial: int = 64) -> int:
    # sampling must outrun the fastest linear phase or aliasing by even
    # multiples of 2 pi slips through every verification
    rate = _rate_hint(evaluator, center, radius)
    # hidden phase wraps need >= ~3.6 pi per segment once midpoints are
    # verified, so rate/4 sampling keeps a two-fold safety margin
    n = max(8, initial, int(2 * math.pi * radius * rate / 4.0) + 8)
    n = min(n, 200_000)
    th = np.linspace(0.0, 2 * math.pi, n + 1)
    pts = center + radius * np.exp(1j * th)
    pts[-1] = pts[0]
    return winding_number(evaluator, pts)


def _box_path(x0, y0, x1, y1, per_edge):
    xs = np.linspace(x0, x1, per_edge + 1)
    ys = np.linspace(y0, y1, per_edge + 1)
    bottom = xs + 1j * y0
    right = x1 + 1j * ys[1:]
    top = xs[::-1][1:] + 1j * y1
    left = x0 + 1j * ys[::-1][1:]
    return np.concatenate([bottom, right, top, left])


# ---------------------------------------------------------------------------
# quadrisection
# ---------------------------------------------------------------------------

def _jitter(x: float, y: float, salt: int = 0) -> float:
    # deterministic pseudo-jitter in (0,1) from box coordinates
    t = math.sin(12.9898 * x + 78.233 * y + 37.719 * salt + 0.5291) * 43758.5453
    return t - math.floor(t)


@dataclass
class _Box:
    x0: float
    y0: float
    x1: float
    y1: float
    depth: int

    @property
    def size(self) -> float:
        return max(self.x1 - self.x0, self.y1 - self.y0)

    def center(self) -> complex:
        return complex(0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))

    def min_modulus(self) -> float:
        dx = 0.0 if self.x0 <= 0.0 <= self.x1 else min(abs(self.x0), abs(self.x1))
        dy = 0.0 if self.y0 <= 0.0 <= self.y1 else min(abs(self.y0), abs(self.y1))
        return math.hypot(dx, dy)

    def split(self, salt: int = 0):
        tx = 0.42 + 0.16 * _jitter(self.x0 + self.x1, self.y1, salt)
        ty = 0.42 + 0.16 * _jitter(self.y0 + self.y1, self.x1, salt)
        xm = self.x0 + tx * (self.x1 - self.x0)
        ym = self.y0 + ty * (self.y1 - self.y0)
        d = self.depth + 1
        return [_Box(self.x0, self.y0, xm, ym, d),
                _Box(xm, self.y0, self.x1, ym, d),
                _Box(self.x0, ym, xm, self.y1, d),
                _Box(xm, ym, self.x1, self.y1, d)]


def _box_winding(evaluator, box: _Box):
    rate = _rate_hint(evaluator, box.center(), 0.75 * box.size)
    per_edge = max(8, int(2.0 * box.size) + 8, int(box.size * rate / 4.0) + 8)
    per_edge = min(per_edge, 50_000)
    pts = _box_path(box.x0, box.y0, box.x1, box.y1, per_edge)
    return winding_number(evaluator, pts)


@dataclass
class _Candidate:
    location: complex
    multiplicity: int
    box_size: float
    certified: bool = False
    cert_radius: float = 0.0


def _newton_refine(evaluator, z0: complex, box_size: float, max_iter: int = 80):
    """Newton on u = h/h', which has simple zeros whatever the multiplicity
    of h.  Returns the final iterate, or None when it wanders off."""
    z = z0
    best = None
    best_step = math.inf
    for _ in range(max_iter):
        c, _s = evaluator.scaled_taylor(z, 2)
        h0, h1, h2 = c[0], c[1], 2.0 * c[2]
        if h0 == 0:
            return z
        if h1 == 0:
            z = z + box_size * (1.3e-3 + 0.7e-3j)
            continue
        u = h0 / h1
        den = 1.0 - h0 * h2 / (h1 * h1)
        step = -u if den == 0 else -u / den
        z = z + step
        if abs(z - z0) > 8.0 * box_size + 1e-9:
            return None
        if abs(step) < best_step:
            best, best_step = z, abs(step)
        if abs(step) <= 5e-14 * max(1.0, abs(z)):
            return z
    # stagnation near the float noise floor of a multiple zero is fine
    return best if best_step < 1e-5 * max(1.0, abs(best or 1.0)) else None


class _Resolver:
    """Recursive quadrisection with re-jittered splits and child-sum checks."""

    def __init__(self, evaluator, R: float, tol: float, max_depth: int):
        self.ev = evaluator
        self.R = R
        self.tol = tol
        self.max_depth = max_depth
        self.multi_floor = max(1e-6 * max(1.0, R), 40.0 * tol)
        self.candidates: list[_Candidate] = []

    def _try_newton(self, box: _Box, w: int) -> bool:
        # the winding number guarantees the zeros are strictly inside, so
        # accept only float fuzz beyond the edges: anything else is an
        # escape to a neighbouring basin
        z = _newton_refine(self.ev, box.center(), box.size)
        if z is None or not _inside(box, z, slack=1e-9):
            return False
        self.candidates.append(_Candidate(z, w, box.size))
        return True

    def _dip_descent(self, box: _Box, w: int) -> bool:
        """Isolate the single zero of a winding-1 box without paying for
        child windings: Newton's basin shrinks like 1/|log-derivative| when
        an exponential trend dominates, so walk toward the modulus dip on
        interior grids until Newton converges, then certify on the spot."""
        b = box
        for _ in range(60):
            z = _newton_refine(self.ev, b.center(), b.size)
            if (z is not None and _inside(b, z, slack=0.02)
                    and _inside(box, z, slack=1e-9)):
                cand = _Candidate(z, w, b.size)
                if self._certify_now(cand, box):
                    self.candidates.append(cand)
                    return True
                return False
            xs = np.linspace(b.x0, b.x1, 9)[1:-1]
            ys = np.linspace(b.y0, b.y1, 9)[1:-1]
            gx, gy = np.meshgrid(xs, ys)
            grid = (gx + 1j * gy).ravel()
            m, s = self.ev.scaled_values(grid)
            s = np.where(m == 0, -np.inf, s)
            i = int(np.argmin(s))
            c = grid[i]
            half = 0.5 * b.size / 2.4
            nb = _Box(max(b.x0, c.real - half), max(b.y0, c.imag - half),
                      min(b.x1, c.real + half), min(b.y1, c.imag + half),
                      b.depth)
            if nb.size < 1e-12 * max(1.0, self.R):
                return False
            b = nb
        return False

    def _certify_now(self, cand: _Candidate, box: _Box) -> bool:
        eps = max(0.35 * box.size, 1e-10 * max(1.0, abs(cand.location)))
        for _ in range(6):
            try:
                w = circle_winding(self.ev, cand.location, eps, initial=24)
            except _SingularPath:
                eps *= 0.31
                continue
            if w == cand.multiplicity:
                cand.certified = True
                cand.cert_radius = eps
                return True
            eps *= 0.31
        return False

    def resolve(self, box: _Box, w: int) -> None:
        if w == 0:
            return
        if w < 0:
            raise NonConvergence(
                f"negative winding near {box.center():.6g}: pole in region")
        if w == 1 and self._dip_descent(box, w):
            return
        if w > 1 and box.size <= self.multi_floor and self._try_newton(box, w):
            return
        if box.depth >= self.max_depth:
            raise NonConvergence(
                f"depth limit in box around {box.center():.6g}")
        for salt in range(4):
            children = box.split(salt)
            kept = []
            pruned = False
            try:
                for child in children:
                    if child.min_modulus() > self.R:
                        pruned = True
                        continue
                    kept.append((child, _box_winding(self.ev, child)))
            except _SingularPath:
                continue
            total = sum(cw for _, cw in kept)
            if not pruned and total != w:
                continue
            if pruned and total > w:
                continue
            for child, cw in kept:
                self.resolve(child, cw)
            return
        # children unresolvable at every jitter: the box is noise-dominated
        # around a multiple zero; take the Newton result for the whole box
        if self._try_newton(box, w):
            return
        raise NonConvergence(
            f"cannot resolve box of size {box.size:.3g} "
            f"around {box.center():.6g}")


def find_zeros_raw(evaluator, R: float, tol: float = 1e-9,
                   max_depth: int = 60):
    """All zeros of ``evaluator`` in the closed disk of radius R.

    Returns a :class:`ZeroLedger`.  Raises :class:`BoundaryZero` when a zero
    obstructs the circle even after the radius is nudged outward by
    ``10 * tol``, and :class:`NonConvergence` when a box cannot be resolved.
    """
    requested = R
    perturbed = False
    boundary_w = None
    for attempt in range(4):
        try:
            boundary_w = circle_winding(evaluator, 0.0, R,
                                        initial=max(64, int(8 * R)))
            break
        except _SingularPath:
            R = R + 10.0 * tol
            perturbed = True
    if boundary_w is None:
        raise BoundaryZero(f"cannot resolve the circle |z| = {R}")

    margin = max(1e-6 * R, 20.0 * tol)
    half = R + margin
    root = _Box(-half * 1.0000173, -half * 0.9999641,
                half * 1.0000092, half * 1.0000217, 0)
    res = _Resolver(evaluator, R, tol, max_depth)
    try:
        w_root = _box_winding(evaluator, root)
    except _SingularPath:
        raise NonConvergence("cannot resolve the root box")
    res.resolve(root, w_root)

    candidates = _merge_clusters(res.candidates)
    _certify(evaluator, candidates)

    records = []
    for c in candidates:
        mod = abs(c.location)
        if mod > R:
            continue
        if abs(mod - R) < tol:
            raise BoundaryZero(
                f"zero at {c.location:.9g} within tol of |z| = {R}")
        records.append(ZeroRecord(location=complex(c.location),
                                  multiplicity=c.multiplicity,
                                  modulus=mod,
                                  certified=c.certified,
                                  cert_radius=c.cert_radius))
    records.sort(key=lambda r: (r.modulus, r.location.real, r.location.imag))
    ledger = ZeroLedger(radius=R, records=records,
                        fingerprint=evaluator.fingerprint(),
                        boundary_winding=boundary_w,
                        requested_radius=requested,
                        perturbed=perturbed)
    if ledger.multiplicity_sum() != boundary_w:
        raise NonConvergence(
            f"ledger multiplicity sum {ledger.multiplicity_sum()} != "
            f"boundary winding {boundary_w}")
    return ledger


def _inside(box: _Box, z: complex, slack: float) -> bool:
    sx = slack * (box.x1 - box.x0) + 1e-12
    sy = slack * (box.y1 - box.y0) + 1e-12
    return (box.x0 - sx <= z.real <= box.x1 + sx
            and box.y0 - sy <= z.imag <= box.y1 + sy)


def _merge_clusters(candidates):
    """Merge candidates separated by less than the double-precision blur of
    a multiple zero (~1e-7 relative); they are numerically one zero."""
    merged: list[_Candidate] = []
    for c in sorted(candidates, key=lambda c: (c.location.real, c.location.imag)):
        for m in merged:
            if abs(m.location - c.location) < 1e-7 * max(1.0, abs(m.location)):
                w = m.multiplicity + c.multiplicity
                m.location = (m.location * m.multiplicity
                              + c.location * c.multiplicity) / w
                m.multiplicity = w
                m.box_size = max(m.box_size, c.box_size)
                break
        else:
            merged.append(c)
    return merged


def _certify(evaluator, candidates) -> None:
    n = len(candidates)
    locs = np.array([c.location for c in candidates], dtype=complex)
    for i, c in enumerate(candidates):
        if c.certified:
            continue
        if n > 1:
            d = np.abs(locs - locs[i])
            d[i] = np.inf
            nearest = float(d.min())
        else:
            nearest = math.inf
        scale = max(1.0, abs(c.location))
        floor = (1e-8 if c.multiplicity > 1 else 1e-10) * scale
        eps = max(0.45 * min(nearest, max(c.box_size, 1e-6)), floor)
        for _ in range(5):
            try:
                w = circle_winding(evaluator, c.location, eps, initial=32)
            except _SingularPath:
                eps *= 1.9
                if eps > 0.45 * nearest:
                    break
                continue
            if w == c.multiplicity:
                c.certified = True
                c.cert_radius = eps
                break
            eps *= 0.43
            if eps < floor:
                break
