"""Smooth closed planar curves and star-shaped domains.

Shapes are parameterized radially by a truncated Fourier series

    r(t) = a0 + sum_k (a_k cos(k t) + b_k sin(k t)),   t = angle - rotation,

about a center point.  Curves carry everything a Nystrom discretization
needs: nodes, unit tangents/normals, signed curvature and arclength
quadrature weights on an equispaced parameter grid.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError, NoEquivalentEllipseError

# Grid used for positivity checks and Fourier projections of radial profiles.
_FINE_GRID = 2048


@dataclass(frozen=True)
class StarShape:
    """Star-shaped domain with a radial Fourier parameterization."""

    center: tuple[float, float] = (0.0, 0.0)
    a0: float = 1.0
    ak: np.ndarray = field(default_factory=lambda: np.zeros(0))
    bk: np.ndarray = field(default_factory=lambda: np.zeros(0))
    rotation: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "ak", np.atleast_1d(np.asarray(self.ak, dtype=float)))
        object.__setattr__(self, "bk", np.atleast_1d(np.asarray(self.bk, dtype=float)))
        if len(self.bk) != len(self.ak):
            k = max(len(self.ak), len(self.bk))
            object.__setattr__(self, "ak", np.pad(self.ak, (0, k - len(self.ak))))
            object.__setattr__(self, "bk", np.pad(self.bk, (0, k - len(self.bk))))
        if self.a0 <= 0:
            raise GeometryError(f"mean radius a0 must be positive, got {self.a0}")
        t = np.linspace(0.0, 2 * np.pi, _FINE_GRID, endpoint=False)
        rmin = self.radius(t).min()
        if rmin <= 0:
            raise GeometryError(f"radial profile not positive (min r = {rmin:.3e})")

    @property
    def n_harmonics(self) -> int:
        return len(self.ak)

    def radius(self, angle):
        """r evaluated at absolute polar angle(s) about the center."""
        t = np.asarray(angle, dtype=float) - self.rotation
        r = np.full_like(t, self.a0, dtype=float)
        for k in range(1, self.n_harmonics + 1):
            r += self.ak[k - 1] * np.cos(k * t) + self.bk[k - 1] * np.sin(k * t)
        return r

    def radius_derivatives(self, angle):
        """(r, r', r'') at absolute polar angle(s)."""
        t = np.asarray(angle, dtype=float) - self.rotation
        r = np.full_like(t, self.a0, dtype=float)
        r1 = np.zeros_like(t)
        r2 = np.zeros_like(t)
        for k in range(1, self.n_harmonics + 1):
            c, s = np.cos(k * t), np.sin(k * t)
            ak, bk = self.ak[k - 1], self.bk[k - 1]
            r += ak * c + bk * s
            r1 += k * (-ak * s + bk * c)
            r2 += k * k * (-ak * c - bk * s)
        return r, r1, r2

    def boundary_points(self, angle):
        """Boundary points at absolute polar angle(s) about the center."""
        t = np.asarray(angle, dtype=float)
        r = self.radius(t)
        return np.stack([self.center[0] + r * np.cos(t), self.center[1] + r * np.sin(t)], axis=-1)

    def to_dict(self) -> dict:
        return {
            "center": [float(self.center[0]), float(self.center[1])],
            "a0": float(self.a0),
            "ak": [float(v) for v in self.ak],
            "bk": [float(v) for v in self.bk],
            "rotation": float(self.rotation),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StarShape":
        return cls(
            center=(float(d["center"][0]), float(d["center"][1])),
            a0=float(d["a0"]),
            ak=np.asarray(d.get("ak", []), dtype=float),
            bk=np.asarray(d.get("bk", []), dtype=float),
            rotation=float(d.get("rotation", 0.0)),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, s: str) -> "StarShape":
        return cls.from_dict(json.loads(s))


def flower(mean_radius: float, petals: int = 5, amplitude: float = 0.3) -> StarShape:
    """Flower-shaped domain r(t) = r0 (1 + amplitude cos(petals t))."""
    ak = np.zeros(petals)
    ak[petals - 1] = amplitude * mean_radius
    return StarShape(a0=mean_radius, ak=ak, bk=np.zeros(petals))


def ellipse(semi_a: float, semi_b: float, n_harmonics: int = 32,
            angle: float = 0.0, center=(0.0, 0.0)) -> StarShape:
    """Ellipse as a truncated radial Fourier series.

    The radial profile of an ellipse is not a finite series; coefficients
    decay geometrically, so n_harmonics = 32 is near machine accuracy for
    mild aspect ratios.
    """
    if semi_a <= 0 or semi_b <= 0:
        raise GeometryError("semi-axes must be positive")
    t = np.linspace(0.0, 2 * np.pi, _FINE_GRID, endpoint=False)
    r = semi_a * semi_b / np.sqrt((semi_b * np.cos(t)) ** 2 + (semi_a * np.sin(t)) ** 2)
    coeff = np.fft.rfft(r) / _FINE_GRID
    a0 = coeff[0].real
    ak = 2 * coeff[1:n_harmonics + 1].real
    bk = -2 * coeff[1:n_harmonics + 1].imag
    return StarShape(center=center, a0=a0, ak=ak, bk=bk, rotation=angle)


@dataclass(frozen=True)
class BoundaryCurve:
    """Quadrature-ready discretization of a smooth closed curve.

    Nodes are equispaced in the 2*pi-periodic parameter t; `speed` is
    |dz/dt| so that `weights = (2 pi / N) * speed` are arclength weights.
    Orientation is counterclockwise with outward normals.
    """

    nodes: np.ndarray      # (N, 2)
    tangents: np.ndarray   # (N, 2) unit
    normals: np.ndarray    # (N, 2) unit, outward
    curvature: np.ndarray  # (N,)
    weights: np.ndarray    # (N,) arclength quadrature weights
    speed: np.ndarray      # (N,) |dz/dt|

    @property
    def n(self) -> int:
        return len(self.weights)

    @property
    def z(self) -> np.ndarray:
        """Nodes as complex numbers."""
        return self.nodes[:, 0] + 1j * self.nodes[:, 1]

    @property
    def param(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.n) / self.n

    @property
    def perimeter(self) -> float:
        return float(self.weights.sum())

    def centroid(self) -> np.ndarray:
        """Area centroid, spectrally accurate for closed curves."""
        z, zp = self.z, self._zprime()
        dt = 2 * np.pi / self.n
        area = 0.5 * np.sum(np.imag(np.conj(z) * zp)) * dt
        cx = np.sum(self.nodes[:, 0] ** 2 * zp.imag) * dt / (2 * area)
        cy = -np.sum(self.nodes[:, 1] ** 2 * zp.real) * dt / (2 * area)
        return np.array([cx, cy])

    def area(self) -> float:
        z, zp = self.z, self._zprime()
        return float(0.5 * np.sum(np.imag(np.conj(z) * zp)) * 2 * np.pi / self.n)

    def _zprime(self) -> np.ndarray:
        tz = self.tangents[:, 0] + 1j * self.tangents[:, 1]
        return tz * self.speed

    @classmethod
    def from_complex_nodes(cls, z: np.ndarray) -> "BoundaryCurve":
        """Rebuild geometry from equispaced-in-parameter complex nodes via FFT."""
        z = np.asarray(z, dtype=complex)
        n = len(z)
        if n % 2 != 0:
            raise GeometryError("node count must be even")
        k = np.fft.fftfreq(n, 1.0 / n)
        zhat = np.fft.fft(z)
        zp = np.fft.ifft(1j * k * zhat)
        zpp = np.fft.ifft(-(k ** 2) * zhat)
        speed = np.abs(zp)
        if speed.min() <= 0:
            raise GeometryError("degenerate parameterization (zero speed)")
        tan_c = zp / speed
        nor_c = -1j * tan_c
        curvature = np.imag(np.conj(zp) * zpp) / speed ** 3
        weights = (2 * np.pi / n) * speed
        return cls(
            nodes=np.stack([z.real, z.imag], axis=1),
            tangents=np.stack([tan_c.real, tan_c.imag], axis=1),
            normals=np.stack([nor_c.real, nor_c.imag], axis=1),
            curvature=curvature,
            weights=weights,
            speed=speed,
        )


def sample_curve(shape: StarShape, n: int) -> BoundaryCurve:
    """Discretize a star shape at n equispaced-in-angle nodes.

    Tangents, normals, curvature and weights come from the analytic
    derivatives of the radial Fourier series.
    """
    if n % 2 != 0 or n < 16:
        raise GeometryError(f"node count must be even and >= 16, got {n}")
    t = 2 * np.pi * np.arange(n) / n
    r, r1, _r2 = shape.radius_derivatives(t)
    if r.min() <= 0:
        raise GeometryError("radial profile not positive on the sample grid")
    eit = np.exp(1j * t)
    z = (shape.center[0] + 1j * shape.center[1]) + r * eit
    zp = (r1 + 1j * r) * eit
    zpp = (_r2 + 2j * r1 - r) * eit
    speed = np.abs(zp)
    tan_c = zp / speed
    nor_c = -1j * tan_c
    curvature = np.imag(np.conj(zp) * zpp) / speed ** 3
    weights = (2 * np.pi / n) * speed
    return BoundaryCurve(
        nodes=np.stack([z.real, z.imag], axis=1),
        tangents=np.stack([tan_c.real, tan_c.imag], axis=1),
        normals=np.stack([nor_c.real, nor_c.imag], axis=1),
        curvature=curvature,
        weights=weights,
        speed=speed,
    )


def rotate(shape: StarShape, theta: float) -> StarShape:
    """Rotate a shape about the origin (its center rotates too)."""
    c, s = np.cos(theta), np.sin(theta)
    cx, cy = shape.center
    return StarShape(
        center=(c * cx - s * cy, s * cx + c * cy),
        a0=shape.a0,
        ak=shape.ak.copy(),
        bk=shape.bk.copy(),
        rotation=shape.rotation + theta,
    )


def ellipse_axes_from_pt(m: np.ndarray, lam: float) -> tuple[float, float, float]:
    """Invert the closed-form ellipse polarization tensor.

    Returns (semi_a, semi_b, angle) of the ellipse whose first-order
    polarization tensor at contrast `lam` equals the symmetric 2x2 matrix
    `m`.  Uses |E| (kappa - 1) (a + b) / (a + kappa b) for the entry along
    the major axis, with kappa = (2 lam + 1) / (2 lam - 1).
    """
    m = np.asarray(m, dtype=float)
    if m.shape != (2, 2):
        raise NoEquivalentEllipseError("expected a 2x2 matrix")
    if abs(m[0, 1] - m[1, 0]) > 1e-6 * (np.abs(m).max() + 1e-300):
        raise NoEquivalentEllipseError("matrix is not symmetric")
    if abs(lam) <= 0.5:
        raise NoEquivalentEllipseError("|lambda| must exceed 1/2")
    msym = 0.5 * (m + m.T)
    mu, vecs = np.linalg.eigh(msym)
    # order eigenvalues by magnitude descending; mu[0] pairs with the long axis
    order = np.argsort(-np.abs(mu))
    mu = mu[order]
    vecs = vecs[:, order]
    kappa = (2 * lam + 1) / (2 * lam - 1)
    if mu[0] == 0 or mu[1] == 0:
        raise NoEquivalentEllipseError("degenerate polarization tensor")
    if np.sign(mu[0]) != np.sign(mu[1]) or np.sign(mu[0]) != np.sign(kappa - 1):
        raise NoEquivalentEllipseError("eigenvalue signs inconsistent with the contrast")
    rho = mu[0] / mu[1]
    t = (kappa - rho) / (rho * kappa - 1)
    if t <= 0:
        raise NoEquivalentEllipseError(
            f"eigenvalue ratio {rho:.6g} exceeds the ellipse bound {kappa:.6g}")
    semi_a = np.sqrt(mu[0] * (1 + kappa * t) / (np.pi * t * (kappa - 1) * (1 + t)))
    semi_b = t * semi_a
    angle = float(np.arctan2(vecs[1, 0], vecs[0, 0]))
    return float(semi_a), float(semi_b), angle


def equivalent_ellipse(m: np.ndarray, lam: float, n_harmonics: int = 32) -> StarShape:
    """Ellipse (as a StarShape) matching a first-order polarization tensor."""
    semi_a, semi_b, angle = ellipse_axes_from_pt(m, lam)
    return ellipse(semi_a, semi_b, n_harmonics=n_harmonics, angle=angle)


def min_enclosing_circle(points: np.ndarray) -> tuple[np.ndarray, float]:
    """Smallest enclosing circle of a point set (Welzl, deterministic order).

    Returns (center, radius).
    """
    pts = [np.asarray(p, dtype=float) for p in points]

    def circle_two(p, q):
        c = 0.5 * (p + q)
        return c, np.linalg.norm(p - c)

    def circle_three(p, q, r):
        ax, ay = p
        bx, by = q
        cx, cy = r
        d = 2 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
        if abs(d) < 1e-30:
            return None
        ux = ((ax ** 2 + ay ** 2) * (by - cy) + (bx ** 2 + by ** 2) * (cy - ay)
              + (cx ** 2 + cy ** 2) * (ay - by)) / d
        uy = ((ax ** 2 + ay ** 2) * (cx - bx) + (bx ** 2 + by ** 2) * (ax - cx)
              + (cx ** 2 + cy ** 2) * (bx - ax)) / d
        c = np.array([ux, uy])
        return c, np.linalg.norm(p - c)

    def contains(circ, p, eps=1e-12):
        c, r = circ
        return np.linalg.norm(p - c) <= r * (1 + eps) + eps

    circ = (pts[0].copy(), 0.0)
    for i, p in enumerate(pts):
        if contains(circ, p):
            continue
        circ = (p.copy(), 0.0)
        for j in range(i):
            q = pts[j]
            if contains(circ, q):
                continue
            circ = circle_two(p, q)
            for k in range(j):
                s = pts[k]
                if contains(circ, s):
                    continue
                c3 = circle_three(p, q, s)
                if c3 is not None:
                    circ = c3
    return circ[0], float(circ[1])
