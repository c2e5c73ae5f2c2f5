"""Interaction operator of the shell-core geometry.

On the transformed outer circle the two-body operator acts on the Fourier
basis cos(n theta), sin(n theta) through the CGPT table of the inner
domain: the (output m, input n) block is

    - r2t^{-(n+m)} / (4 pi n) * M(n, m)^T,

a matrix self-adjoint in the circle dual product with mode weights
w_n = pi r2t^2 / (2 n).  Its eigenvalues are the measurable resonance
positions; they decay like (r1t/r2t)^2 and faster down the spectrum.

`direct_operator` discretizes the same object in the physical plane
without the conformal map; agreement of the two spectra is the central
consistency check of the whole construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .cgpt import CgptTable
from .conformal import DiskPair, transformed_radii
from .geometry import BoundaryCurve, StarShape, sample_curve
from .potentials import ResolventSolver, hstar_eigenpairs, np_star


@dataclass(frozen=True)
class InteractionOperator:
    """Truncated Fourier-block interaction matrix with its mode weights."""

    n_tr: int
    matrix: np.ndarray      # (2 n_tr, 2 n_tr); basis (cos1, sin1, cos2, sin2, ...)
    r2t: float
    weights: np.ndarray     # (n_tr,) dual-product weights per mode

    def block(self, m: int, n: int) -> np.ndarray:
        return self.matrix[2 * (m - 1): 2 * m, 2 * (n - 1): 2 * n]

    @property
    def weight_diagonal(self) -> np.ndarray:
        return np.repeat(self.weights, 2)

    def symmetry_defect(self) -> float:
        """Relative asymmetry of W A in the weighted pairing."""
        wa = self.weight_diagonal[:, None] * self.matrix
        return float(np.abs(wa - wa.T).max() / (np.abs(wa).max() + 1e-300))


def hstar_circle_weights(n_tr: int, r2t: float) -> np.ndarray:
    """Dual-product norms of cos/sin modes on the circle of radius r2t."""
    n = np.arange(1, n_tr + 1)
    return np.pi * r2t ** 2 / (2 * n)


def assemble(table: CgptTable, r2t: float, n_tr: int) -> InteractionOperator:
    """Build the truncated block matrix from a CGPT table.

    The table must be computed about the annulus center and have order at
    least n_tr.
    """
    if table.order < n_tr:
        raise ValueError(f"table order {table.order} < truncation {n_tr}")
    dtype = complex if np.iscomplexobj(table.blocks) else float
    mat = np.zeros((2 * n_tr, 2 * n_tr), dtype=dtype)
    for m in range(1, n_tr + 1):          # output mode
        for n in range(1, n_tr + 1):      # input mode
            scale = -r2t ** (-(n + m)) / (4 * np.pi * n)
            mat[2 * (m - 1): 2 * m, 2 * (n - 1): 2 * n] = scale * table.block(n, m).T
    return InteractionOperator(n_tr, mat, float(r2t), hstar_circle_weights(n_tr, r2t))


def eigenpairs(op: InteractionOperator, count: int):
    """Leading eigenpairs sorted by decreasing |lambda|.

    Real operators use the symmetric generalized solver; complex ones
    (lossy target contrast) fall back to a plain eigensolve with
    weighted-symmetric normalization v^T W v = 1.
    """
    if count > 2 * op.n_tr:
        raise ValueError("requested more eigenpairs than the truncation holds")
    w = op.weight_diagonal
    if not np.iscomplexobj(op.matrix):
        wa = w[:, None] * op.matrix
        vals, vecs = sla.eigh(0.5 * (wa + wa.T), np.diag(w))
    else:
        vals, vecs = np.linalg.eig(op.matrix)
        norm = np.sum(vecs * (w[:, None] * vecs), axis=0)
        norm = np.where(np.abs(norm) < 1e-300, 1.0, norm)
        vecs = vecs / np.sqrt(norm)[None, :]
    order = np.argsort(-np.abs(vals))[:count]
    return vals[order], vecs[:, order]


def eigenvalues(op: InteractionOperator, count: int) -> np.ndarray:
    return eigenpairs(op, count)[0]


def _coupling_blocks(d1_curve: BoundaryCurve, b2_curve: BoundaryCurve):
    """Smooth cross-curve kernels: normal derivative of each single layer.

    p1 maps densities on B2 to d(S_B2)/dnu1 on D1; p2 maps densities on D1
    to d(S_D1)/dnu2 on B2.
    """
    def normal_deriv_matrix(src: BoundaryCurve, tgt: BoundaryCurve) -> np.ndarray:
        d = tgt.nodes[:, None, :] - src.nodes[None, :, :]
        r2 = np.einsum("ijk,ijk->ij", d, d)
        num = np.einsum("ijk,ik->ij", d, tgt.normals)
        return num / (2 * np.pi * r2) * src.weights[None, :]

    p1 = normal_deriv_matrix(b2_curve, d1_curve)
    p2 = normal_deriv_matrix(d1_curve, b2_curve)
    return p1, p2


def direct_operator(d1_curve: BoundaryCurve, b2_curve: BoundaryCurve,
                    lam1: complex) -> np.ndarray:
    """Dense physical-plane two-body operator on the plasmonic boundary.

    A = K*_2 - (d/dnu2) S_D1 (lam1 I - K*_D1)^{-1} (d S_B2 / dnu1).
    """
    p1, p2 = _coupling_blocks(d1_curve, b2_curve)
    solver = ResolventSolver(lam1, d1_curve)
    return np_star(b2_curve).matrix - p2 @ solver.solve(p1)


def direct_hstar_eigenvalues(amatrix: np.ndarray, b2_curve: BoundaryCurve,
                             count: int) -> np.ndarray:
    """Symmetrized spectrum of a dense operator on mean-zero densities."""
    vals, _ = hstar_eigenpairs(amatrix, b2_curve, count)
    return vals


def direct_eigenvalues(d1_curve: BoundaryCurve, pair: DiskPair, lam1: complex,
                       count: int, n2: int | None = None) -> np.ndarray:
    """Leading spectrum of the physical two-body operator, fast path.

    On the mean-zero subspace the disk's own NP operator vanishes
    identically, so the operator has rank at most the target's node count
    and its nonzero spectrum equals that of an N1 x N1 matrix.  n2 only
    controls quadrature of the cross-curve kernels (cheap rectangular
    assembly), so it can be large enough to resolve the gap scale, which
    is what the default does.
    """
    if n2 is None:
        target = 8 * np.pi * pair.r2 / pair.d
        n2 = int(min(max(4096, 2 ** int(np.ceil(np.log2(target)))), 32768))
    b2 = sample_curve(StarShape(center=pair.c2, a0=pair.r2), n2)
    p1, p2 = _coupling_blocks(d1_curve, b2)
    w = b2.weights
    # oblique projector onto mean-zero along constants: drop weighted mean
    p1p2 = p1 @ p2 - np.outer(p1 @ np.ones(n2), w @ p2) / w.sum()
    solver = ResolventSolver(lam1, d1_curve)
    small = -solver.solve(p1p2)
    vals = np.linalg.eig(small)[0]
    vals = vals[np.argsort(-np.abs(vals))][:count]
    if not np.iscomplexobj(np.asarray(lam1)):
        vals = vals.real
    return vals


def spectrum_json(op: InteractionOperator, count: int | None = None) -> dict:
    vals = eigenvalues(op, count if count is not None else 2 * op.n_tr)
    if np.iscomplexobj(vals):
        return {"eigs": [[v.real, v.imag] for v in vals]}
    return {"eigs": [float(v) for v in vals]}
