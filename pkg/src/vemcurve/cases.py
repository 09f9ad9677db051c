"""Benchmark domains with manufactured solutions.

``disk``, ``flower`` and ``spiral`` are the three curved benchmarks;
``square`` is a straight-sided sanity case. Every case carries ``f = -Lap u``
and ``g = u`` in closed form.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .geometry import DomainSpec, circle, polar_curve, polar_series, reversed_curve, segment

CASE_NAMES = ("disk", "flower", "spiral", "square")


@dataclass
class BenchmarkCase:
    """A domain with exact solution plus default mesh-sweep settings.

    Attributes:
        name: catalog key.
        domain: boundary and data; ``domain.u``/``domain.grad_u`` are exact.
        base_seeds: Voronoi seed count of the coarsest mesh.
        lloyd_iters: Lloyd relaxation steps used by the sweeps.
    """

    name: str
    domain: DomainSpec
    base_seeds: int
    lloyd_iters: int = 20

    @property
    def u(self) -> Callable:
        return self.domain.u

    @property
    def grad_u(self) -> Callable:
        return self.domain.grad_u

    @property
    def f(self) -> Callable:
        return self.domain.f


# ---------------------------------------------------------------------------
# radial solutions u(r): -Lap u = -(u'' + u'/r)

class RadialSolution:
    """Radial function given ``u(r)``, ``u'(r)``, ``u''(r)`` and ``u'(r)/r``.

    ``u'(r)/r`` is supplied separately so that the origin is handled by the
    caller's series expansion instead of a 0/0.
    """

    def __init__(self, u, du, d2u, du_over_r):
        self._u, self._du, self._d2u, self._dur = u, du, d2u, du_over_r

    def u(self, x, y):
        return self._u(np.hypot(x, y))

    def grad(self, x, y):
        r = np.hypot(x, y)
        q = self._dur(r)
        return np.column_stack([q * x, q * y])

    def laplacian(self, x, y):
        r = np.hypot(x, y)
        return self._d2u(r) + self._dur(r)

    def f(self, x, y):
        return -self.laplacian(x, y)


def cos_radial(k: float) -> RadialSolution:
    """``u = cos(k r)``."""

    def dur(r):
        # sin(k r) / r = k sinc(k r / pi) with numpy's normalized sinc
        return -k * k * np.sinc(k * r / np.pi)

    return RadialSolution(
        lambda r: np.cos(k * r),
        lambda r: -k * np.sin(k * r),
        lambda r: -k * k * np.cos(k * r),
        dur,
    )


def _sinc_parts(a: float, r: np.ndarray):
    """``A = sin(s)/s`` with ``s = a r`` and ``A'``, ``A''``, ``A'/r`` (series near 0)."""
    s = a * np.asarray(r, dtype=float)
    small = np.abs(s) < 1e-3
    ss = np.where(small, 1.0, s)
    sn, cs = np.sin(ss), np.cos(ss)
    s2 = s * s
    A = np.where(small, 1 - s2 / 6 + s2 * s2 / 120, sn / ss)
    dA = np.where(small, a * (-s / 3 + s * s2 / 30), a * (ss * cs - sn) / ss**2)
    d2A = np.where(small, a * a * (-1.0 / 3 + s2 / 10), a * a * (-ss * ss * sn - 2 * ss * cs + 2 * sn) / ss**3)
    dA_r = np.where(small, a * a * (-1.0 / 3 + s2 / 30), a * a * (ss * cs - sn) / ss**3)
    return A, dA, d2A, dA_r


def sinc_cos_radial(a: float, b: float) -> RadialSolution:
    """``u = sinc(a r / pi) cos(b r)``, i.e. ``sin(a r)/(a r) * cos(b r)``."""

    def parts(r):
        A, dA, d2A, dA_r = _sinc_parts(a, r)
        B = np.cos(b * r)
        dB = -b * np.sin(b * r)
        d2B = -b * b * B
        dB_r = -b * b * np.sinc(b * r / np.pi)
        return A, dA, d2A, dA_r, B, dB, d2B, dB_r

    def u(r):
        A, *_ = parts(r)
        return A * np.cos(b * r)

    def du(r):
        A, dA, _, _, B, dB, _, _ = parts(r)
        return dA * B + A * dB

    def d2u(r):
        A, dA, d2A, _, B, dB, d2B, _ = parts(r)
        return d2A * B + 2 * dA * dB + A * d2B

    def dur(r):
        A, _, _, dA_r, B, _, _, dB_r = parts(r)
        return dA_r * B + A * dB_r

    return RadialSolution(u, du, d2u, dur)


# ---------------------------------------------------------------------------
# angular solution u = F(theta) / r with F = sin(32 t) cos(96 t)

SPIRAL_THETA = (0.5 * np.pi, 8.0 * np.pi)
SPIRAL_INNER = 0.9


def spiral_angle(x, y) -> np.ndarray:
    """Continuous spiral angle of points in the spiral strip.

    The strip between ``0.9 sqrt(theta)`` and ``sqrt(theta)`` meets each ray
    once per winding, so ``theta`` is the ``atan2`` angle shifted by the
    multiple of ``2 pi`` that puts ``r^2`` in ``[0.81 theta, theta]``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    base = np.mod(np.arctan2(y, x), 2 * np.pi)
    r2 = x * x + y * y
    # theta in [r2, r2 / 0.81]; take the candidate closest to the band centre
    mid = 0.5 * (r2 + r2 / SPIRAL_INNER**2)
    k = np.round((mid - base) / (2 * np.pi))
    return base + 2 * np.pi * k


def principal_angle(x, y) -> np.ndarray:
    """``atan(y / x)`` in ``(-pi/2, pi/2]``, with ``x = 0`` mapped to ``pi/2``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.arctan(y / x)
    return np.where(x == 0, 0.5 * np.pi, t)


class AngularSolution:
    """``u = sin(32 t) cos(96 t) / r`` for a choice of angle function ``t``.

    Since ``sin(32 t) cos(96 t) = (sin(128 t) - sin(64 t)) / 2`` has period
    ``pi`` in ``t``, the principal ``atan(y/x)`` and the unwrapped spiral
    angle give the same function.
    """

    def __init__(self, angle: str = "principal"):
        if angle not in ("principal", "unwrapped"):
            raise ValueError(f"angle must be 'principal' or 'unwrapped', got {angle!r}")
        self.angle = angle
        self._theta = principal_angle if angle == "principal" else spiral_angle

    @staticmethod
    def _F(t):
        return 0.5 * (np.sin(128 * t) - np.sin(64 * t))

    @staticmethod
    def _dF(t):
        return 0.5 * (128 * np.cos(128 * t) - 64 * np.cos(64 * t))

    @staticmethod
    def _F_plus_d2F(t):
        return 0.5 * ((1 - 128**2) * np.sin(128 * t) - (1 - 64**2) * np.sin(64 * t))

    def u(self, x, y):
        return self._F(self._theta(x, y)) / np.hypot(x, y)

    def grad(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        t = self._theta(x, y)
        r = np.hypot(x, y)
        ur = -self._F(t) / r**2
        ut = self._dF(t) / r**2
        c, s = x / r, y / r
        return np.column_stack([ur * c - ut * s, ur * s + ut * c])

    def f(self, x, y):
        t = self._theta(x, y)
        return -self._F_plus_d2F(t) / np.hypot(x, y) ** 3


# ---------------------------------------------------------------------------
# domains

def disk_domain(sol=None) -> DomainSpec:
    sol = cos_radial(4 * np.pi) if sol is None else sol
    return DomainSpec([circle(1.0)], f=sol.f, g=sol.u, u=sol.u, grad_u=sol.grad, convex=True, name="disk")


def flower_domain(sol=None) -> DomainSpec:
    sol = sinc_cos_radial(2.25 * np.pi, 6.75 * np.pi) if sol is None else sol
    curve = polar_series(2.0, sin_coeffs=[0.0] * 8 + [1.0])
    return DomainSpec([curve], f=sol.f, g=sol.u, u=sol.u, grad_u=sol.grad, name="flower")


def spiral_boundary() -> list:
    t0, t1 = SPIRAL_THETA
    outer = polar_curve(np.sqrt, lambda t: 0.5 / np.sqrt(t), t0, t1, name="outer_spiral")
    inner = polar_curve(
        lambda t: SPIRAL_INNER * np.sqrt(t), lambda t: 0.5 * SPIRAL_INNER / np.sqrt(t), t0, t1, name="inner_spiral"
    )
    end_out = outer(t1)[0]
    end_in = inner(t1)[0]
    start_in = inner(t0)[0]
    start_out = outer(t0)[0]
    # snap the radial cuts onto the coordinate axes
    end_out[1] = end_in[1] = 0.0
    start_in[0] = start_out[0] = 0.0
    return [outer, segment(end_out, end_in), reversed_curve(inner), segment(start_in, start_out)]


def spiral_domain(sol=None, angle: str = "principal") -> DomainSpec:
    sol = AngularSolution(angle) if sol is None else sol
    return DomainSpec(spiral_boundary(), f=sol.f, g=sol.u, u=sol.u, grad_u=sol.grad, name="spiral")


class SineSolution:
    """``u = sin(pi x) sin(pi y)``."""

    def u(self, x, y):
        return np.sin(np.pi * x) * np.sin(np.pi * y)

    def grad(self, x, y):
        return np.column_stack([
            np.pi * np.cos(np.pi * x) * np.sin(np.pi * y),
            np.pi * np.sin(np.pi * x) * np.cos(np.pi * y),
        ])

    def f(self, x, y):
        return 2 * np.pi**2 * self.u(x, y)


def rectangle_boundary(lower=(0.0, 0.0), upper=(1.0, 1.0)) -> list:
    (x0, y0), (x1, y1) = lower, upper
    c = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
    return [segment(c[i], c[(i + 1) % 4]) for i in range(4)]


def square_domain(sol=None) -> DomainSpec:
    sol = SineSolution() if sol is None else sol
    return DomainSpec(rectangle_boundary(), f=sol.f, g=sol.u, u=sol.u, grad_u=sol.grad, convex=True, name="square")


class PolynomialSolution:
    """``u = sum c_ab x^a y^b`` with exact gradient and Laplacian.

    Args:
        coeffs: mapping ``(a, b) -> c``.
    """

    def __init__(self, coeffs: dict):
        self.coeffs = {tuple(map(int, k)): float(v) for k, v in coeffs.items()}

    @classmethod
    def random(cls, degree: int, rng: Optional[np.random.Generator] = None) -> "PolynomialSolution":
        rng = np.random.default_rng() if rng is None else rng
        return cls({(d - b, b): rng.uniform(-1, 1) for d in range(degree + 1) for b in range(d + 1)})

    def _eval(self, x, y, terms):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = np.zeros(np.broadcast(x, y).shape)
        for (a, b), c in terms:
            if c != 0.0 and a >= 0 and b >= 0:
                out = out + c * x**a * y**b
        return out

    def u(self, x, y):
        return self._eval(x, y, self.coeffs.items())

    def grad(self, x, y):
        gx = self._eval(x, y, [((a - 1, b), a * c) for (a, b), c in self.coeffs.items()])
        gy = self._eval(x, y, [((a, b - 1), b * c) for (a, b), c in self.coeffs.items()])
        return np.column_stack([np.atleast_1d(gx), np.atleast_1d(gy)])

    def laplacian(self, x, y):
        t = [((a - 2, b), a * (a - 1) * c) for (a, b), c in self.coeffs.items()]
        t += [((a, b - 2), b * (b - 1) * c) for (a, b), c in self.coeffs.items()]
        return self._eval(x, y, t)

    def f(self, x, y):
        return -self.laplacian(x, y)


def get_case(name: str, angle: str = "principal") -> BenchmarkCase:
    """Catalog lookup.

    Args:
        name: one of ``disk``, ``flower``, ``spiral``, ``square``.
        angle: angle convention of the spiral solution.
    """
    if name == "disk":
        return BenchmarkCase("disk", disk_domain(), base_seeds=125)
    if name == "flower":
        return BenchmarkCase("flower", flower_domain(), base_seeds=2000)
    if name == "spiral":
        return BenchmarkCase("spiral", spiral_domain(angle=angle), base_seeds=4000)
    if name == "square":
        return BenchmarkCase("square", square_domain(), base_seeds=64)
    raise KeyError(f"unknown case {name!r}; choose from {', '.join(CASE_NAMES)}")
