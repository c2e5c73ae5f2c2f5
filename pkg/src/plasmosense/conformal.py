"""Mobius transform of the two-disk configuration to a shell-core geometry.

Given disjoint disks B1 (radius r1, enclosing the target) and B2 (the
plasmonic disk, radius r2) with gap d, the frame is fixed so the combined
reflection fixed points sit at (-a, 0) and (a, 0).  The map

    zeta = (z + a) / (z - a)

sends B1 to the disk |zeta| < r1t, B2 to the exterior |zeta| > r2t, and
the gap region to the annulus in between.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError, MapSingularityError
from .geometry import BoundaryCurve

POLE_TOL = 1e-12


@dataclass(frozen=True)
class DiskPair:
    """Two-disk configuration in the canonical frame."""

    r1: float
    r2: float
    d: float
    a: float
    c1: tuple[float, float]
    c2: tuple[float, float]

    def to_dict(self) -> dict:
        return {
            "r1": self.r1, "r2": self.r2, "d": self.d, "a": self.a,
            "c1": list(self.c1), "c2": list(self.c2),
        }

    @classmethod
    def from_dict(cls, dd: dict) -> "DiskPair":
        return cls(dd["r1"], dd["r2"], dd["d"], dd["a"],
                   tuple(dd["c1"]), tuple(dd["c2"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, s: str) -> "DiskPair":
        return cls.from_dict(json.loads(s))


@dataclass(frozen=True)
class MobiusMap:
    """The transform zeta = (z + a)/(z - a) and its inverse."""

    a: float

    def forward(self, z):
        z = np.asarray(z, dtype=complex)
        denom = z - self.a
        if np.min(np.abs(denom)) < POLE_TOL * max(self.a, 1.0):
            raise MapSingularityError("point at the pole z = a of the forward map")
        return (z + self.a) / denom

    def inverse(self, zeta):
        zeta = np.asarray(zeta, dtype=complex)
        denom = zeta - 1.0
        if np.min(np.abs(denom)) < POLE_TOL:
            raise MapSingularityError("point at the pole zeta = 1 of the inverse map")
        return self.a * (zeta + 1.0) / denom

    def derivative(self, z):
        z = np.asarray(z, dtype=complex)
        return -2.0 * self.a / (z - self.a) ** 2


def build_pair(r1: float, r2: float, d: float) -> DiskPair:
    """Canonical two-disk configuration with gap exactly d.

    a = sqrt(d) sqrt((2 r1 + d)(2 r2 + d)(2 r1 + 2 r2 + d)) / (2 (r1 + r2 + d)),
    centers at -/+ sqrt(r_i^2 + a^2) on the x-axis.
    """
    if r1 <= 0 or r2 <= 0 or d <= 0:
        raise GeometryError("disk radii and gap must be positive")
    a = np.sqrt(d) * np.sqrt((2 * r1 + d) * (2 * r2 + d) * (2 * r1 + 2 * r2 + d)) \
        / (2 * (r1 + r2 + d))
    c1 = (-np.sqrt(r1 ** 2 + a ** 2), 0.0)
    c2 = (np.sqrt(r2 ** 2 + a ** 2), 0.0)
    return DiskPair(float(r1), float(r2), float(d), float(a), c1, c2)


def transformed_radii(pair: DiskPair) -> tuple[float, float]:
    """Radii (r1t, r2t) of the image disks, r1t < 1 < r2t."""
    r1t = np.exp(-np.arcsinh(pair.a / pair.r1))
    r2t = np.exp(np.arcsinh(pair.a / pair.r2))
    return float(r1t), float(r2t)


def mobius_map(pair: DiskPair) -> MobiusMap:
    return MobiusMap(pair.a)


def forward_map(m: MobiusMap, points: np.ndarray) -> np.ndarray:
    """Map physical points (N, 2) to the transformed plane."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    w = m.forward(pts[:, 0] + 1j * pts[:, 1])
    return np.stack([w.real, w.imag], axis=1)


def inverse_map(m: MobiusMap, points: np.ndarray) -> np.ndarray:
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    z = m.inverse(pts[:, 0] + 1j * pts[:, 1])
    return np.stack([z.real, z.imag], axis=1)


def _rebuild(w: np.ndarray) -> BoundaryCurve:
    """Curve from mapped nodes, normalized to counterclockwise orientation."""
    n = len(w)
    area2 = np.sum(w.real * np.roll(w.imag, -1) - np.roll(w.real, -1) * w.imag)
    if area2 < 0:
        w = np.concatenate([w[:1], w[1:][::-1]])
    return BoundaryCurve.from_complex_nodes(w)


def transform_curve(m: MobiusMap, curve: BoundaryCurve) -> BoundaryCurve:
    """Image of a curve under the forward map, geometry rebuilt spectrally."""
    return _rebuild(m.forward(curve.z))


def inverse_transform_curve(m: MobiusMap, curve: BoundaryCurve) -> BoundaryCurve:
    """Image of a curve under the inverse map (pull-back to the physical plane)."""
    return _rebuild(m.inverse(curve.z))


def reflect_in_circle(center: complex, radius: float, z):
    """Inversion of points in the circle |z - center| = radius."""
    z = np.asarray(z, dtype=complex)
    return center + radius ** 2 / np.conj(z - center)
