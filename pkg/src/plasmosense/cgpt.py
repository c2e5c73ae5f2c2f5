"""Contracted generalized polarization tensors and their rotation law.

A table of order K holds the 2x2 blocks

    M[m, n] = [[M^cc_mn, M^cs_mn], [M^sc_mn, M^ss_mn]],   1 <= m, n <= K,

where M^HF_mn pairs the resolvent applied to the normal derivative of the
degree-m harmonic of channel H (c: Re(x1+ix2)^m, s: Im) against the
degree-n harmonic of channel F.  All harmonics are evaluated about the
table's declared origin; rotating a table is only meaningful about that
origin.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .geometry import BoundaryCurve
from .potentials import ResolventSolver


def harmonic_values(curve: BoundaryCurve, order: int, origin=(0.0, 0.0)):
    """Boundary values of (Re P_m, Im P_m) about the origin."""
    z = curve.z - complex(origin[0], origin[1])
    p = z ** order
    return p.real, p.imag


def harmonic_normal_derivatives(curve: BoundaryCurve, order: int, origin=(0.0, 0.0)):
    """Normal derivatives of (Re P_m, Im P_m) on the curve."""
    z = curve.z - complex(origin[0], origin[1])
    nu = curve.normals[:, 0] + 1j * curve.normals[:, 1]
    w = order * nu * z ** (order - 1)
    return w.real, w.imag


@dataclass(frozen=True)
class CgptTable:
    """Block table of contracted polarization tensors up to a given order."""

    order: int
    lam: complex
    blocks: np.ndarray  # (order, order, 2, 2); [m-1, n-1] = M_{m,n}
    origin: tuple[float, float] = (0.0, 0.0)
    descriptor: str = ""

    def block(self, m: int, n: int) -> np.ndarray:
        return self.blocks[m - 1, n - 1]

    def first_order(self) -> np.ndarray:
        return self.blocks[0, 0]

    def symmetry_defect(self) -> float:
        """Max relative violation of M_mn = M_nm^T."""
        scale = np.abs(self.blocks).max() + 1e-300
        d = 0.0
        for m in range(self.order):
            for n in range(self.order):
                bs = max(np.abs(self.blocks[m, n]).max(), np.abs(self.blocks[n, m]).max())
                if bs == 0:
                    continue
                d = max(d, np.abs(self.blocks[m, n] - self.blocks[n, m].T).max() / bs)
        return d

    def truncated(self, max_index_sum: int) -> "CgptTable":
        """Copy with blocks m + n > max_index_sum zeroed."""
        blocks = self.blocks.copy()
        for m in range(1, self.order + 1):
            for n in range(1, self.order + 1):
                if m + n > max_index_sum:
                    blocks[m - 1, n - 1] = 0.0
        return CgptTable(self.order, self.lam, blocks, self.origin, self.descriptor)

    def to_dict(self) -> dict:
        lam = complex(self.lam)
        blocks = {}
        for m in range(1, self.order + 1):
            for n in range(1, self.order + 1):
                b = self.blocks[m - 1, n - 1]
                if np.iscomplexobj(b):
                    blocks[f"{m},{n}"] = [[[float(b[i, j].real), float(b[i, j].imag)]
                                           for j in range(2)] for i in range(2)]
                else:
                    blocks[f"{m},{n}"] = [[float(b[i, j]) for j in range(2)] for i in range(2)]
        return {
            "lambda": [lam.real, lam.imag],
            "order": self.order,
            "origin": [float(self.origin[0]), float(self.origin[1])],
            "blocks": blocks,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CgptTable":
        order = int(d["order"])
        lam = complex(d["lambda"][0], d["lambda"][1])
        if lam.imag == 0:
            lam = lam.real
        sample = d["blocks"]["1,1"][0][0]
        is_complex = isinstance(sample, list)
        blocks = np.zeros((order, order, 2, 2), dtype=complex if is_complex else float)
        for key, b in d["blocks"].items():
            m, n = (int(v) for v in key.split(","))
            if is_complex:
                blocks[m - 1, n - 1] = [[complex(b[i][j][0], b[i][j][1])
                                         for j in range(2)] for i in range(2)]
            else:
                blocks[m - 1, n - 1] = b
        return cls(order, lam, blocks, tuple(d.get("origin", (0.0, 0.0))))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, s: str) -> "CgptTable":
        return cls.from_dict(json.loads(s))


def compute_cgpt(curve: BoundaryCurve, lam: complex, order: int,
                 origin=(0.0, 0.0), descriptor: str = "") -> CgptTable:
    """Assemble the CGPT table of a curve at contrast lam up to `order`.

    One resolvent factorization serves all 2*order right-hand sides.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    solver = ResolventSolver(lam, curve)
    w = curve.weights
    is_complex = np.iscomplexobj(np.asarray(lam))
    blocks = np.zeros((order, order, 2, 2), dtype=complex if is_complex else float)
    tests = [harmonic_values(curve, n, origin) for n in range(1, order + 1)]
    for m in range(1, order + 1):
        dvc, dvs = harmonic_normal_derivatives(curve, m, origin)
        phi_c = solver.solve(dvc.astype(complex) if is_complex else dvc)
        phi_s = solver.solve(dvs.astype(complex) if is_complex else dvs)
        for n in range(1, order + 1):
            re_p, im_p = tests[n - 1]
            blocks[m - 1, n - 1, 0, 0] = np.sum(re_p * phi_c * w)
            blocks[m - 1, n - 1, 0, 1] = np.sum(im_p * phi_c * w)
            blocks[m - 1, n - 1, 1, 0] = np.sum(re_p * phi_s * w)
            blocks[m - 1, n - 1, 1, 1] = np.sum(im_p * phi_s * w)
    return CgptTable(order, lam, blocks, tuple(origin), descriptor)


def first_order_pt(curve: BoundaryCurve, lam: complex, origin=(0.0, 0.0)) -> np.ndarray:
    """First-order polarization tensor M_{1,1}."""
    return compute_cgpt(curve, lam, 1, origin).first_order()


@dataclass(frozen=True)
class NTable:
    """Complex combinations diagonalizing the rotation action.

    n1[m-1, n-1] picks up the phase e^{i (n + m) theta} under rotation,
    n2[m-1, n-1] the phase e^{i (n - m) theta} (m is the first index).
    """

    order: int
    n1: np.ndarray
    n2: np.ndarray

    @classmethod
    def from_cgpt(cls, table: CgptTable) -> "NTable":
        b = table.blocks
        cc, cs, sc, ss = b[..., 0, 0], b[..., 0, 1], b[..., 1, 0], b[..., 1, 1]
        return cls(table.order, (cc - ss) + 1j * (cs + sc), (cc + ss) + 1j * (cs - sc))

    def to_cgpt(self, lam: complex, origin=(0.0, 0.0), real: bool = True) -> CgptTable:
        cc = 0.5 * (self.n1 + self.n2).real
        ss = 0.5 * (self.n2 - self.n1).real
        cs = 0.5 * (self.n1 + self.n2).imag
        sc = 0.5 * (self.n1 - self.n2).imag
        blocks = np.stack(
            [np.stack([cc, cs], axis=-1), np.stack([sc, ss], axis=-1)], axis=-2)
        return CgptTable(self.order, lam, blocks, tuple(origin))


def rotate_cgpt(table: CgptTable, theta: float) -> CgptTable:
    """Table of the rotated domain via the exact phase law.

    Valid only when the table's origin is the rotation center.
    """
    if np.iscomplexobj(table.blocks):
        # rotate real and imaginary parts separately; the law is R-linear
        re = rotate_cgpt(CgptTable(table.order, table.lam, table.blocks.real,
                                   table.origin), theta)
        im = rotate_cgpt(CgptTable(table.order, table.lam, table.blocks.imag,
                                   table.origin), theta)
        return CgptTable(table.order, table.lam, re.blocks + 1j * im.blocks,
                         table.origin, table.descriptor)
    nt = NTable.from_cgpt(table)
    m = np.arange(1, table.order + 1)
    phase_sum = np.exp(1j * np.add.outer(m, m) * theta)           # e^{i (m + n) theta}
    phase_diff = np.exp(-1j * np.subtract.outer(m, m) * theta)    # e^{i (n - m) theta}
    rotated = NTable(table.order, nt.n1 * phase_sum, nt.n2 * phase_diff)
    out = rotated.to_cgpt(table.lam, table.origin)
    return CgptTable(table.order, table.lam, out.blocks, table.origin, table.descriptor)


def _conjugated_rotation_coeffs(theta: float, order: int) -> np.ndarray:
    """Power-series mixing of P_m under the conjugated rotation.

    A physical rotation by theta about the preimage of the origin maps,
    in the transformed plane, to the Mobius transform

        M_theta(zeta) = e^{i theta} zeta / (1 + (e^{i theta} - 1) zeta),

    independent of the two-disk geometry.  Expanding (M_theta zeta)^m in
    powers of zeta gives c[m-1, k-1] with

        P_m o M_theta = sum_{k >= m} c_{mk} zeta^k.
    """
    from math import comb

    x = 1.0 - np.exp(1j * theta)
    c = np.zeros((order, order), dtype=complex)
    for m in range(1, order + 1):
        phase = np.exp(1j * m * theta)
        for k in range(m, order + 1):
            j = k - m
            c[m - 1, k - 1] = phase * comb(m + j - 1, j) * x ** j
    return c


def transport_cgpt_rotation(table: CgptTable, theta: float) -> CgptTable:
    """Table of the target physically rotated about the origin's preimage.

    Exact up to the table's truncation order: picks up the triangular
    power-series mixing of the conjugated rotation on top of the pure
    phase law (which is its leading term).
    """
    if np.iscomplexobj(table.blocks):
        re = transport_cgpt_rotation(
            CgptTable(table.order, table.lam, table.blocks.real, table.origin), theta)
        im = transport_cgpt_rotation(
            CgptTable(table.order, table.lam, table.blocks.imag, table.origin), theta)
        return CgptTable(table.order, table.lam, re.blocks + 1j * im.blocks,
                         table.origin, table.descriptor)
    nt = NTable.from_cgpt(table)
    c = _conjugated_rotation_coeffs(theta, table.order)
    n1 = c @ nt.n1 @ c.T
    n2 = np.conj(c) @ nt.n2 @ c.T
    out = NTable(table.order, n1, n2).to_cgpt(table.lam, table.origin)
    return CgptTable(table.order, table.lam, out.blocks, table.origin, table.descriptor)


def disk_cgpt(radius: float, lam: complex, order: int) -> CgptTable:
    """Analytic CGPT table of an origin-centered disk."""
    is_complex = np.iscomplexobj(np.asarray(lam))
    blocks = np.zeros((order, order, 2, 2), dtype=complex if is_complex else float)
    for n in range(1, order + 1):
        val = np.pi * n * radius ** (2 * n) / lam
        blocks[n - 1, n - 1, 0, 0] = val
        blocks[n - 1, n - 1, 1, 1] = val
    return CgptTable(order, lam, blocks, (0.0, 0.0), f"disk r={radius}")


def ellipse_pt(semi_a: float, semi_b: float, lam: float) -> np.ndarray:
    """Closed-form first-order PT of an axis-aligned ellipse."""
    kappa = (2 * lam + 1) / (2 * lam - 1)
    area = np.pi * semi_a * semi_b
    m1 = area * (kappa - 1) * (semi_a + semi_b) / (semi_a + kappa * semi_b)
    m2 = area * (kappa - 1) * (semi_a + semi_b) / (semi_b + kappa * semi_a)
    return np.diag([m1, m2])
