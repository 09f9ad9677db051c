"""Curved domains, boundary data and normal distances to the true boundary.

A domain is a closed counter-clockwise chain of parametric arcs. The
distance ``delta(x)`` from a point ``x`` of the polygonal boundary to the
curved one is measured along the outward normal of the straight edge that
carries ``x``: ``x + delta(x) * nu_h`` lies on the curve.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.spatial import ConvexHull, cKDTree

from .exceptions import InvariantViolation, NoIntersection, NonConvergence

_LOGGER = logging.getLogger(__name__)

ScalarField = Callable[[np.ndarray, np.ndarray], np.ndarray]
VectorField = Callable[[np.ndarray, np.ndarray], tuple]


@dataclass(frozen=True)
class NormalRay:
    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        o = np.asarray(self.origin, dtype=float).reshape(2)
        d = np.asarray(self.direction, dtype=float).reshape(2)
        if not np.all(np.isfinite(o)):
            raise ValueError("ray origin must be finite")
        if abs(np.hypot(d[0], d[1]) - 1.0) > 1e-14:
            raise ValueError(f"ray direction must be a unit vector, |d| = {np.hypot(*d)!r}")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "direction", d)


@dataclass(frozen=True)
class ParametricCurve:
    """Smooth arc ``t -> (x(t), y(t))`` on ``[t0, t1]``.

    ``position`` and ``derivative`` take an array of parameters and return
    arrays of shape ``(n, 2)``.
    """

    position: Callable[[np.ndarray], np.ndarray]
    derivative: Callable[[np.ndarray], np.ndarray]
    t0: float
    t1: float
    closed: bool = False
    name: str = ""

    def __call__(self, t) -> np.ndarray:
        return self.position(np.atleast_1d(np.asarray(t, dtype=float)))

    def tangent(self, t) -> np.ndarray:
        return self.derivative(np.atleast_1d(np.asarray(t, dtype=float)))

    def check(self, n_samples: int = 97, rtol: float = 1e-6) -> None:
        """Verify regularity and derivative consistency by central differences."""
        t = np.linspace(self.t0, self.t1, n_samples)
        d = self.tangent(t)
        speed = np.hypot(d[:, 0], d[:, 1])
        if np.any(speed <= 0.0):
            raise InvariantViolation(f"curve {self.name!r} is not regular")
        eps = 1e-6 * (self.t1 - self.t0)
        ti = np.clip(t, self.t0 + eps, self.t1 - eps)
        fd = (self(ti + eps) - self(ti - eps)) / (2 * eps)
        err = np.hypot(*(fd - self.tangent(ti)).T) / np.maximum(speed, 1e-300)
        if np.max(err) > rtol:
            raise InvariantViolation(
                f"curve {self.name!r}: derivative disagrees with finite differences "
                f"(max relative error {np.max(err):.2e})"
            )


def circle(radius: float = 1.0, center=(0.0, 0.0)) -> ParametricCurve:
    cx, cy = map(float, center)

    def pos(t):
        return np.column_stack([cx + radius * np.cos(t), cy + radius * np.sin(t)])

    def der(t):
        return np.column_stack([-radius * np.sin(t), radius * np.cos(t)])

    return ParametricCurve(pos, der, 0.0, 2 * np.pi, closed=True, name="circle")


def segment(p0, p1) -> ParametricCurve:
    a = np.asarray(p0, dtype=float)
    b = np.asarray(p1, dtype=float)
    d = b - a

    def pos(t):
        return a[None, :] + t[:, None] * d[None, :]

    def der(t):
        return np.broadcast_to(d, (len(t), 2)).copy()

    return ParametricCurve(pos, der, 0.0, 1.0, name="segment")


def polar_curve(r, dr, theta0: float, theta1: float, name: str = "polar") -> ParametricCurve:
    """Curve ``theta -> r(theta) (cos theta, sin theta)`` with ``dr = r'``."""

    def pos(t):
        rt = r(t)
        return np.column_stack([rt * np.cos(t), rt * np.sin(t)])

    def der(t):
        rt, drt = r(t), dr(t)
        c, s = np.cos(t), np.sin(t)
        return np.column_stack([drt * c - rt * s, drt * s + rt * c])

    closed = np.isclose(theta1 - theta0, 2 * np.pi)
    return ParametricCurve(pos, der, float(theta0), float(theta1), closed=bool(closed), name=name)


def reversed_curve(curve: ParametricCurve) -> ParametricCurve:
    """The same arc traversed from ``t1`` back to ``t0``."""
    t0, t1 = curve.t0, curve.t1

    def pos(t):
        return curve.position(t0 + t1 - t)

    def der(t):
        return -curve.derivative(t0 + t1 - t)

    return ParametricCurve(pos, der, t0, t1, closed=curve.closed, name=curve.name + "_reversed")


def polar_series(a0: float, cos_coeffs=(), sin_coeffs=()) -> ParametricCurve:
    """Closed polar curve ``r = a0 + sum a_k cos(k t) + b_k sin(k t)``."""
    a = np.asarray(cos_coeffs, dtype=float)
    b = np.asarray(sin_coeffs, dtype=float)
    ka = np.arange(1, len(a) + 1)
    kb = np.arange(1, len(b) + 1)

    def r(t):
        out = np.full_like(t, a0, dtype=float)
        if len(a):
            out = out + np.cos(np.outer(t, ka)) @ a
        if len(b):
            out = out + np.sin(np.outer(t, kb)) @ b
        return out

    def dr(t):
        out = np.zeros_like(t, dtype=float)
        if len(a):
            out = out - np.sin(np.outer(t, ka)) @ (ka * a)
        if len(b):
            out = out + np.cos(np.outer(t, kb)) @ (kb * b)
        return out

    return polar_curve(r, dr, 0.0, 2 * np.pi, name="polar_series")


class BoundarySampler:
    """Dense samples of a chain of arcs, with a KD-tree over them.

    Used to bracket ray crossings and closest points. Each arc gets at least
    64 samples and enough to keep the spacing below ``spacing`` (default
    ``2.5e-4`` times the diameter).
    """

    def __init__(self, arcs: Sequence[ParametricCurve], spacing: Optional[float] = None):
        coarse = [a(np.linspace(a.t0, a.t1, 257)) for a in arcs]
        lengths = [np.sum(np.hypot(*np.diff(c, axis=0).T)) for c in coarse]
        allpts = np.vstack(coarse)
        hull = allpts[ConvexHull(allpts).vertices]
        diam = float(np.max(np.hypot(*(hull[:, None, :] - hull[None, :, :]).transpose(2, 0, 1))))
        if spacing is None:
            spacing = 2.5e-4 * diam
        self.arcs = list(arcs)
        self.diam = diam
        self.lengths = np.array(lengths)
        self.t = []
        self.points = []
        for arc, L in zip(arcs, lengths):
            n = max(64, int(np.ceil(L / spacing)) + 1)
            t = np.linspace(arc.t0, arc.t1, n)
            self.t.append(t)
            self.points.append(arc(t))
        self.offsets = np.concatenate([[0], np.cumsum([len(t) for t in self.t])])
        flat = np.vstack(self.points)
        self.arc_id = np.repeat(np.arange(len(arcs)), [len(t) for t in self.t])
        self.local_id = np.concatenate([np.arange(len(t)) for t in self.t])
        self.tree = cKDTree(flat)
        self.flat = flat
        self.max_spacing = max(float(np.max(np.hypot(*np.diff(p, axis=0).T))) for p in self.points)


@dataclass
class DomainSpec:
    """A curved domain with its Poisson data.

    ``f`` and ``g`` take ``(x, y)`` arrays; ``u`` and ``grad_u`` (exact
    solution, optional) are used for error measurement only.
    """

    boundary: Sequence[ParametricCurve]
    f: ScalarField
    g: ScalarField
    u: Optional[ScalarField] = None
    grad_u: Optional[VectorField] = None
    convex: bool = False
    name: str = "domain"
    _sampler: Optional[BoundarySampler] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.boundary = list(self.boundary)
        if not self.boundary:
            raise InvariantViolation("domain boundary is empty")

    @property
    def sampler(self) -> BoundarySampler:
        if self._sampler is None:
            self._sampler = BoundarySampler(self.boundary)
        return self._sampler

    @property
    def diameter(self) -> float:
        return self.sampler.diam

    def check(self) -> None:
        """Closed loop, counter-clockwise, regular arcs."""
        for arc in self.boundary:
            arc.check()
        tol = 1e-12 * self.diameter
        n = len(self.boundary)
        for i, arc in enumerate(self.boundary):
            nxt = self.boundary[(i + 1) % n]
            gap = np.hypot(*(arc(arc.t1)[0] - nxt(nxt.t0)[0]))
            if gap > tol:
                raise InvariantViolation(f"arcs {i} and {(i + 1) % n} leave a gap of {gap:.3e}")
        if self.signed_area() <= 0.0:
            raise InvariantViolation("boundary is not counter-clockwise")

    def polyline(self, spacing: Optional[float] = None, min_points: int = 0) -> tuple[np.ndarray, np.ndarray]:
        """Closed polyline through points of the boundary, arc ends included.

        Returns ``(points, is_corner)``: points uniformly spaced in arc length
        per arc (no repeated closing point) and a flag marking arc junctions
        where the tangent jumps.
        """
        s = self.sampler
        total = float(s.lengths.sum())
        if spacing is None:
            spacing = total / max(min_points, 64)
        if min_points:
            spacing = min(spacing, total / min_points)
        pts, corner, starts = [], [], []
        for arc, t, p, L in zip(self.boundary, s.t, s.points, s.lengths):
            cum = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(p, axis=0).T))])
            n = max(2, int(np.ceil(L / spacing)))
            tq = np.interp(np.linspace(0.0, cum[-1], n + 1), cum, t)
            tq[0], tq[-1] = arc.t0, arc.t1
            starts.append(sum(len(q) for q in pts))
            pts.append(arc(tq[:-1]))
        pts = np.vstack(pts)
        corner = np.zeros(len(pts), dtype=bool)
        n_arcs = len(self.boundary)
        for i, k in enumerate(starts):
            prev = self.boundary[(i - 1) % n_arcs]
            cur = self.boundary[i]
            d0 = prev.tangent(prev.t1)[0]
            d1 = cur.tangent(cur.t0)[0]
            cosang = np.dot(d0, d1) / (np.hypot(*d0) * np.hypot(*d1))
            corner[k] = cosang < np.cos(1e-3)
        return pts, corner

    def signed_area(self) -> float:
        pts = np.vstack(self.sampler.points)
        x, y = pts[:, 0], pts[:, 1]
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))

    def closest_points(self, points: np.ndarray) -> np.ndarray:
        """Project points onto the boundary (closest point on the curve)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        s = self.sampler
        _, idx = s.tree.query(points)
        out = np.empty_like(points)
        arc_ids = s.arc_id[idx]
        for a in np.unique(arc_ids):
            sel = np.nonzero(arc_ids == a)[0]
            arc = self.boundary[a]
            t = s.t[a]
            j = s.local_id[idx[sel]]
            p = points[sel]
            lo = t[np.maximum(j - 1, 0)]
            hi = t[np.minimum(j + 1, len(t) - 1)]

            def stationarity(tt, p=p, arc=arc):
                return np.sum(arc.tangent(tt) * (arc(tt) - p), axis=1)

            flo, fhi = stationarity(lo), stationarity(hi)
            ts = t[j].astype(float)
            ok = flo * fhi < 0
            if ok.any():
                sub = np.nonzero(ok)[0]
                ts[sub] = _refine(lambda tt: stationarity(tt, p[sub]), lo[sub], hi[sub], flo[sub], fhi[sub],
                                  1e-15 * s.diam ** 2)
            # no sign change: minimum at an arc end (corner) or on the sample itself
            rest = np.nonzero(~ok)[0]
            if len(rest):
                cand = np.stack([lo[rest], t[j[rest]], hi[rest]], axis=1)
                dist = np.stack([np.sum((arc(cand[:, k]) - p[rest]) ** 2, axis=1) for k in range(3)], axis=1)
                ts[rest] = cand[np.arange(len(rest)), np.argmin(dist, axis=1)]
            out[sel] = arc(ts)
        return out

    def boundary_distance(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        return np.hypot(*(self.closest_points(points) - points).T)


# ---------------------------------------------------------------------------
# ray / arc crossings

def _cross_residual(arc: ParametricCurve, t: np.ndarray, o: np.ndarray, d: np.ndarray):
    """Signed distance of ``arc(t)`` from the line ``o + s d`` and the ray coordinate."""
    p = arc(t) - o
    return d[..., 0] * p[:, 1] - d[..., 1] * p[:, 0], d[..., 0] * p[:, 0] + d[..., 1] * p[:, 1]


def _refine(fun, ta, tb, fa, fb, ftol, max_iter: int = 200):
    """Illinois-safeguarded secant/bisection on many brackets at once.

    ``fun(t)`` evaluates the residual of every bracket at the parameters
    ``t`` (one per bracket); ``fa`` and ``fb`` must have opposite signs.
    """
    ta, tb, fa, fb = (np.array(v, dtype=float) for v in (ta, tb, fa, fb))
    t = np.where(np.abs(fa) <= np.abs(fb), ta, tb)
    done = (fa == 0.0) | (fb == 0.0)
    t = np.where(fa == 0.0, ta, np.where(fb == 0.0, tb, t))
    side = np.zeros(len(ta), dtype=int)
    scale = np.maximum(np.abs(ta), np.abs(tb)) + 1.0
    for it in range(max_iter):
        act = ~done
        if not act.any():
            break
        with np.errstate(divide="ignore", invalid="ignore"):
            tc = tb - fb * (tb - ta) / (fb - fa)
        bad = ~np.isfinite(tc) | (tc <= np.minimum(ta, tb)) | (tc >= np.maximum(ta, tb))
        # every fourth step is a plain bisection to guarantee progress
        if it % 4 == 3:
            bad[:] = True
        tc = np.where(bad, 0.5 * (ta + tb), tc)
        fc = fun(tc)
        same_a = np.sign(fc) == np.sign(fa)
        # Illinois: halve the stale endpoint value when it is kept twice
        new_ta = np.where(same_a, tc, ta)
        new_fa = np.where(same_a, fc, np.where(side == -1, fa * 0.5, fa))
        new_tb = np.where(same_a, tb, tc)
        new_fb = np.where(same_a, np.where(side == 1, fb * 0.5, fb), fc)
        ta = np.where(act, new_ta, ta)
        fa = np.where(act, new_fa, fa)
        tb = np.where(act, new_tb, tb)
        fb = np.where(act, new_fb, fb)
        side = np.where(act, np.where(same_a, 1, -1), side)
        t = np.where(act, tc, t)
        conv = (np.abs(fc) <= ftol) | (np.abs(tb - ta) <= 4e-16 * scale)
        done |= act & conv
    else:
        if not done.all():
            raise NonConvergence("bracketed root refinement did not converge")
    return t


def _refine_crossings(arc, ta, tb, fa, fb, o, d, ftol):
    o = np.broadcast_to(o, (len(ta), 2))
    d = np.broadcast_to(d, (len(ta), 2))
    return _refine(lambda t: _cross_residual(arc, t, o, d)[0], ta, tb, fa, fb, ftol)


def _scan_crossings(domain: DomainSpec, o: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Ray coordinates ``s`` of every crossing of the line ``o + s d`` with the boundary."""
    s = domain.sampler
    ftol = 1e-13 * s.diam
    found = []
    for arc, t in zip(domain.boundary, s.t):
        F, _ = _cross_residual(arc, t, o, d)
        sgn = np.sign(F)
        idx = np.nonzero(sgn[:-1] * sgn[1:] < 0)[0]
        zeros = np.nonzero(F == 0.0)[0]
        if len(idx):
            tc = _refine_crossings(arc, t[idx], t[idx + 1], F[idx], F[idx + 1], o, d, ftol)
            found.append(_cross_residual(arc, tc, o, d)[1])
        if len(zeros):
            found.append(_cross_residual(arc, t[zeros], o, d)[1])
    return np.concatenate(found) if found else np.empty(0)


def _pick(svals: np.ndarray, signed: bool, tol: float, limit: float) -> Optional[float]:
    if signed:
        svals = svals[np.abs(svals) <= limit]
        if not len(svals):
            return None
        best = svals[np.argmin(np.abs(svals))]
    else:
        svals = svals[(svals >= -tol) & (svals <= limit)]
        if not len(svals):
            return None
        best = svals.min()
    return 0.0 if abs(best) <= tol else float(best)


def delta_at(ray: NormalRay, domain: DomainSpec, signed: bool = False) -> float:
    """Distance along ``ray.direction`` from ``ray.origin`` to the boundary.

    With ``signed=False`` the smallest non-negative crossing is returned (the
    origin is assumed to lie in the closed domain). With ``signed=True`` the
    crossing of smallest magnitude on the whole normal line is returned, so
    points slightly outside a non-convex domain get a negative value.

    Raises:
        NoIntersection: if no admissible crossing lies within two diameters.
    """
    diam = domain.diameter
    svals = _scan_crossings(domain, ray.origin, ray.direction)
    best = _pick(svals, signed, 1e-10 * diam, 2.0 * diam)
    if best is None:
        raise NoIntersection(f"no boundary crossing from {ray.origin} along {ray.direction}")
    return best


def deltas(points: np.ndarray, normals: np.ndarray, domain: DomainSpec, signed: bool = True,
           fallback: bool = True) -> tuple[np.ndarray, int]:
    """Batched :func:`delta_at` for many boundary points.

    Crossings are first searched among boundary samples close to each point;
    points without a local crossing get the full scan. When ``fallback`` is
    set, points with no crossing at all get ``delta = 0`` and are counted in
    the returned number of fallbacks instead of raising.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    normals = np.atleast_2d(np.asarray(normals, dtype=float))
    s = domain.sampler
    diam = s.diam
    tol = 1e-10 * diam
    ftol = 1e-13 * diam
    dist, near = s.tree.query(points)
    radius = 2.0 * dist + 2.0 * s.max_spacing
    brackets = {}  # arc -> list of (point index, ta, tb, fa, fb)
    for i, (p, n) in enumerate(zip(points, normals)):
        cand = np.asarray(s.tree.query_ball_point(p, radius[i]), dtype=np.intp)
        if not len(cand):
            continue
        arcs = s.arc_id[cand]
        for a in np.unique(arcs):
            loc = s.local_id[cand[arcs == a]]
            lo = max(int(loc.min()) - 1, 0)
            hi = min(int(loc.max()) + 1, len(s.t[a]) - 1)
            tt = s.t[a][lo:hi + 1]
            F, _ = _cross_residual(domain.boundary[a], tt, p, n)
            sgn = np.sign(F)
            for j in np.nonzero(sgn[:-1] * sgn[1:] < 0)[0]:
                brackets.setdefault(a, []).append((i, tt[j], tt[j + 1], F[j], F[j + 1]))
            for j in np.nonzero(F == 0.0)[0]:
                brackets.setdefault(a, []).append((i, tt[j], tt[j], 0.0, 0.0))
    local = [[] for _ in range(len(points))]
    for a, rows in brackets.items():
        rows = np.array(rows)
        idx = rows[:, 0].astype(np.intp)
        arc = domain.boundary[a]
        tc = _refine_crossings(arc, rows[:, 1], rows[:, 2], rows[:, 3], rows[:, 4], points[idx], normals[idx], ftol)
        _, sv = _cross_residual(arc, tc, points[idx], normals[idx])
        for k, sval in zip(idx, sv):
            local[k].append(sval)
    out = np.zeros(len(points))
    n_fallback = 0
    for i in range(len(points)):
        best = _pick(np.asarray(local[i]), signed, tol, 2.0 * diam) if local[i] else None
        if best is None:
            best = _pick(_scan_crossings(domain, points[i], normals[i]), signed, tol, 2.0 * diam)
        if best is None:
            if not fallback:
                raise NoIntersection(f"no boundary crossing from {points[i]} along {normals[i]}")
            n_fallback += 1
            best = 0.0
        out[i] = best
    if n_fallback:
        _LOGGER.warning("delta: %d point(s) without boundary crossing, delta set to 0", n_fallback)
    return out, n_fallback


def g_star(ray: NormalRay, domain: DomainSpec, signed: bool = False) -> float:
    """Boundary datum transported from the curved boundary: ``g(x + delta nu_h)``."""
    dlt = delta_at(ray, domain, signed=signed)
    q = ray.origin + dlt * ray.direction
    return float(np.asarray(domain.g(np.array([q[0]]), np.array([q[1]])))[0])


def max_delta(points: np.ndarray, normals: np.ndarray, domain: DomainSpec, signed: bool = False) -> float:
    """Largest normal distance over a sample of boundary points."""
    points = np.atleast_2d(points)
    if not len(points):
        raise ValueError("max_delta needs a non-empty sample")
    vals, _ = deltas(points, normals, domain, signed=signed, fallback=False)
    return float(np.max(np.abs(vals)))
