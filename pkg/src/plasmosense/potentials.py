"""Layer potentials and the Neumann-Poincare operator on a single curve.

All operators are dense Nystrom matrices acting on node values.  The
single layer uses the Kussmaul-Martensen log-split, which is spectrally
accurate on analytic curves; the NP kernels are smooth with diagonal
limit kappa/(4 pi).

The dual-space inner product used throughout is

    (phi, psi)_X = - integral phi S[psi] dsigma,

positive definite on mean-zero densities; the NP operator is self-adjoint
with respect to it, which turns spectral computations into generalized
symmetric eigenproblems with the Gram matrix of this product.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import ResonanceProximityError
from .geometry import BoundaryCurve

SPECTRUM_TOL = 1e-8       # minimum admissible distance of lambda to the spectrum
CONDITION_LIMIT = 1e12    # resolvent condition-number threshold


@dataclass(frozen=True)
class Density:
    """Node values of a surface density on a boundary curve."""

    values: np.ndarray
    curve: BoundaryCurve

    def __post_init__(self):
        if len(self.values) != self.curve.n:
            raise ValueError("density length does not match curve node count")

    @property
    def mean(self) -> complex:
        return complex(np.sum(self.values * self.curve.weights))

    def is_mean_zero(self, tol: float = 1e-10) -> bool:
        scale = np.max(np.abs(self.values)) * self.curve.perimeter + 1e-300
        return abs(self.mean) <= tol * scale


@dataclass(frozen=True)
class BoundaryOperator:
    """Dense operator on node values of a fixed curve."""

    matrix: np.ndarray
    curve: BoundaryCurve
    kind: str

    def apply(self, density: Density) -> Density:
        if density.curve is not self.curve and density.curve.n != self.curve.n:
            raise ValueError("density curve does not match operator curve")
        return Density(self.matrix @ density.values, self.curve)


def _kress_weights(n: int) -> np.ndarray:
    """Quadrature weights R(k) for the 2*pi-periodic kernel log(4 sin^2((t-s)/2))."""
    k = np.arange(n)
    m = np.arange(1, n // 2)
    r = -(4 * np.pi / n) * (np.cos(2 * np.pi * np.outer(k, m) / n) / m).sum(axis=1)
    r -= (4 * np.pi / n ** 2) * np.cos(np.pi * k)
    return r


def single_layer(curve: BoundaryCurve) -> BoundaryOperator:
    """Single-layer potential restricted to the boundary.

    Matrix maps node values of phi to values of the logarithmic potential
    (1/2 pi) \\int log|x - y| phi(y) dsigma(y) at the nodes.
    """
    n = curve.n
    t = curve.param
    z = curve.z
    rbig = _kress_weights(n)
    idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    dz2 = np.abs(z[:, None] - z[None, :]) ** 2
    sin2 = 4.0 * np.sin(0.5 * (t[:, None] - t[None, :])) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        smooth = np.log(dz2 / sin2)
    np.fill_diagonal(smooth, 2.0 * np.log(curve.speed))
    mat = (rbig[idx] / (4 * np.pi) + (0.5 / n) * smooth) * curve.speed[None, :]
    return BoundaryOperator(mat, curve, "single-layer")


def np_star(curve: BoundaryCurve) -> BoundaryOperator:
    """Neumann-Poincare operator K* with kernel dG/dnu(x)."""
    n = curve.n
    dx = curve.nodes[:, None, :] - curve.nodes[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", dx, dx)
    np.fill_diagonal(r2, 1.0)
    num = np.einsum("ijk,ik->ij", dx, curve.normals)
    kern = num / (2 * np.pi * r2)
    np.fill_diagonal(kern, curve.curvature / (4 * np.pi))
    mat = kern * curve.weights[None, :]
    return BoundaryOperator(mat, curve, "np-star")


def double_layer_k(curve: BoundaryCurve) -> BoundaryOperator:
    """Adjoint NP operator K (double-layer trace kernel dG/dnu(y))."""
    n = curve.n
    dx = curve.nodes[:, None, :] - curve.nodes[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", dx, dx)
    np.fill_diagonal(r2, 1.0)
    num = -np.einsum("ijk,jk->ij", dx, curve.normals)
    kern = num / (2 * np.pi * r2)
    np.fill_diagonal(kern, curve.curvature / (4 * np.pi))
    mat = kern * curve.weights[None, :]
    return BoundaryOperator(mat, curve, "double-layer-k")


def gram_matrix(curve: BoundaryCurve, slp: BoundaryOperator | None = None) -> np.ndarray:
    """Gram matrix G of the dual inner product: (phi,psi) = phi^T G psi."""
    s = slp if slp is not None else single_layer(curve)
    g = -curve.weights[:, None] * s.matrix
    return 0.5 * (g + g.T)


def hstar_inner(phi: Density, psi: Density, gram: np.ndarray | None = None) -> complex:
    """Dual-space inner product of two mean-zero densities on one curve."""
    if phi.curve is not psi.curve:
        raise ValueError("densities live on different curves")
    g = gram if gram is not None else gram_matrix(phi.curve)
    val = phi.values @ g @ psi.values
    return val if np.iscomplexobj(val) else float(val)


class ResolventSolver:
    """LU-backed solver for (lambda I - K*) on a fixed curve.

    Factorizes once; `solve` handles many right-hand sides.  Raises
    ResonanceProximityError when the system is numerically singular,
    reporting the nearest NP eigenvalue.
    """

    def __init__(self, lam: complex, curve: BoundaryCurve, kstar: np.ndarray | None = None):
        self.lam = lam
        self.curve = curve
        k = kstar if kstar is not None else np_star(curve).matrix
        a = lam * np.eye(curve.n) - k
        if np.iscomplexobj(a):
            a = a.astype(complex)
        self._lu, self._piv = sla.lu_factor(a)
        anorm = np.linalg.norm(a, 1)
        gecon = sla.get_lapack_funcs(("gecon",), (a,))[0]
        rcond = gecon(self._lu, anorm, norm="1")[0]
        if rcond <= 0 or 1.0 / rcond > CONDITION_LIMIT:
            eigs = np.linalg.eigvals(k)
            nearest = eigs[np.argmin(np.abs(eigs - lam))]
            raise ResonanceProximityError(
                f"contrast {lam} is within resolution of an NP eigenvalue "
                f"(nearest: {nearest})",
                contrast=lam,
                nearest_eigenvalue=complex(nearest),
            )

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return sla.lu_solve((self._lu, self._piv), rhs)


def resolvent_apply(lam: complex, curve: BoundaryCurve, rhs: Density) -> Density:
    """Solve (lambda I - K*)[phi] = rhs on the curve."""
    solver = ResolventSolver(lam, curve)
    return Density(solver.solve(np.asarray(rhs.values)), curve)


def _mean_zero_basis(curve: BoundaryCurve) -> np.ndarray:
    """Orthonormal basis (columns) of the discrete mean-zero subspace.

    Columns of the Householder reflection sending e_1 to the weight vector
    span its orthogonal complement, i.e. densities with zero weighted sum.
    """
    n = curve.n
    w = curve.weights / np.linalg.norm(curve.weights)
    v = w.copy()
    v[0] += np.sign(w[0]) if w[0] != 0 else 1.0
    v /= np.linalg.norm(v)
    h = np.eye(n) - 2.0 * np.outer(v, v)
    return h[:, 1:]


def hstar_eigenpairs(matrix: np.ndarray, curve: BoundaryCurve, count: int,
                     gram: np.ndarray | None = None):
    """Leading eigenpairs of an operator, symmetrized in the dual product.

    Solves the generalized symmetric problem (G A) v = lambda G v on the
    mean-zero subspace; eigenvalues sorted by decreasing magnitude and
    eigenvectors normalized to v^T G v = 1.
    """
    g = gram if gram is not None else gram_matrix(curve)
    q = _mean_zero_basis(curve)
    ga = g @ matrix
    a_r = q.T @ (0.5 * (ga + ga.T)) @ q
    g_r = q.T @ g @ q
    vals, vecs = sla.eigh(a_r, 0.5 * (g_r + g_r.T))
    order = np.argsort(-np.abs(vals))[:count]
    out_vals = vals[order]
    out_vecs = q @ vecs[:, order]
    return out_vals, out_vecs


def np_spectrum(curve: BoundaryCurve, count: int):
    """Leading NP eigenpairs on mean-zero densities.

    Returns a list of (eigenvalue, Density) sorted by decreasing |lambda|;
    eigen-densities are orthonormal in the dual inner product.
    """
    if count > curve.n // 2:
        raise ValueError("requested more eigenpairs than the grid resolves")
    kmat = np_star(curve).matrix
    vals, vecs = hstar_eigenpairs(kmat, curve, count)
    return [(float(v), Density(vecs[:, j], curve)) for j, v in enumerate(vals)]


def eval_single_layer(curve: BoundaryCurve, values: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Single-layer potential at points off the curve (plain trapezoid)."""
    tz = np.asarray(targets, dtype=float).reshape(-1, 2)
    d = tz[:, None, :] - curve.nodes[None, :, :]
    r = np.sqrt(np.einsum("ijk,ijk->ij", d, d))
    return (np.log(r) / (2 * np.pi)) @ (values * curve.weights)


def eval_single_layer_gradient(curve: BoundaryCurve, values: np.ndarray,
                               targets: np.ndarray) -> np.ndarray:
    """Gradient of the single-layer potential at off-curve points."""
    tz = np.asarray(targets, dtype=float).reshape(-1, 2)
    d = tz[:, None, :] - curve.nodes[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", d, d)
    ker = d / (2 * np.pi * r2[:, :, None])
    return np.einsum("ijk,j->ik", ker, values * curve.weights)


def eval_double_layer(curve: BoundaryCurve, values: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Double-layer potential at points off the curve."""
    tz = np.asarray(targets, dtype=float).reshape(-1, 2)
    d = tz[:, None, :] - curve.nodes[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", d, d)
    num = -np.einsum("ijk,jk->ij", d, curve.normals)
    return (num / (2 * np.pi * r2)) @ (values * curve.weights)


def surface_derivative(curve: BoundaryCurve, values: np.ndarray) -> np.ndarray:
    """Arclength derivative of boundary values by spectral differentiation."""
    n = curve.n
    k = np.fft.fftfreq(n, 1.0 / n)
    vhat = np.fft.fft(values)
    dv = np.fft.ifft(1j * k * vhat)
    if not np.iscomplexobj(values):
        dv = dv.real
    return dv / curve.speed


def export_matrix_csv(op: BoundaryOperator, path) -> None:
    np.savetxt(path, op.matrix, delimiter=",", fmt="%.17g")


def export_eigenvalues_csv(values, path) -> None:
    np.savetxt(path, np.asarray(values, dtype=float), delimiter=",", fmt="%.17g")
