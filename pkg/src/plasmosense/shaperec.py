"""Shape recovery from CGPTs by gradient descent with analytic shape derivatives.

The loss is the squared mismatch of all tensor entries up to a fixed
index sum.  Its shape derivative under a normal boundary perturbation h
is a weighted sum of kernels built from interior traces of two
transmission problems per harmonic: one driven by the harmonic itself
(flux jump), one by its dual (trace jump).  The v-problem is represented
with a double-layer potential, whose normal derivative is evaluated with
the surface-differentiation identity d/dnu D[psi] = d/ds S[dpsi/ds].

Iterates live in the radial Fourier coefficient space of a star shape;
the normal gradient field is projected onto that basis, which doubles as
truncation regularization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import conformal
from .cgpt import (CgptTable, compute_cgpt, harmonic_normal_derivatives,
                   harmonic_values)
from .errors import StallError
from .geometry import BoundaryCurve, StarShape, equivalent_ellipse, sample_curve
from .potentials import (Density, ResolventSolver, double_layer_k, np_star,
                         single_layer, surface_derivative)


def contrast_k(lam: float) -> float:
    """Conductivity ratio k = (2 lam + 1) / (2 lam - 1)."""
    if abs(2 * lam - 1) < 1e-14:
        raise ValueError("contrast lambda = 1/2 has no finite conductivity ratio")
    return (2 * lam + 1) / (2 * lam - 1)


def lambda_of_k(k: float) -> float:
    if abs(k - 1) < 1e-300:
        raise ValueError("conductivity ratio 1 means no contrast")
    return (k + 1) / (2 * (k - 1))


@dataclass(frozen=True)
class TransmissionTraces:
    """Interior boundary traces of the u- and v-transmission solutions."""

    order: int
    channel: str            # 'c' or 's'
    du_dn_minus: np.ndarray
    du_dt_minus: np.ndarray
    dv_dn_minus: np.ndarray
    dv_dt_minus: np.ndarray
    u_density: np.ndarray   # single-layer density of u - H
    v_density: np.ndarray   # double-layer density of v - F


class _TraceWorkspace:
    """Shared factorizations for all harmonics on one curve."""

    def __init__(self, curve: BoundaryCurve, k: float):
        if k <= 0 or k == 1:
            raise ValueError("conductivity ratio must be positive and != 1")
        self.curve = curve
        self.k = k
        self.lam = lambda_of_k(k)
        self.slp = single_layer(curve)
        self.kstar = np_star(curve).matrix
        self.kdl = double_layer_k(curve).matrix
        self.solver_u = ResolventSolver(self.lam, curve, self.kstar)
        import scipy.linalg as sla
        self._lu_v = sla.lu_factor(self.lam * np.eye(curve.n) - self.kdl)
        self._sla = sla

    def traces(self, order: int, channel: str) -> TransmissionTraces:
        curve = self.curve
        re_h, im_h = harmonic_values(curve, order)
        re_dn, im_dn = harmonic_normal_derivatives(curve, order)
        h = re_h if channel == "c" else im_h
        dh = re_dn if channel == "c" else im_dn

        phi = self.solver_u.solve(dh)
        du_dn = dh + (-0.5 * phi + self.kstar @ phi)
        u_trace = h + self.slp.matrix @ phi
        du_dt = surface_derivative(curve, u_trace)

        psi = self._sla.lu_solve(self._lu_v, h)
        v_trace = h + 0.5 * psi + self.kdl @ psi
        dv_dt = surface_derivative(curve, v_trace)
        dv_dn = dh + surface_derivative(
            curve, self.slp.matrix @ surface_derivative(curve, psi))
        return TransmissionTraces(order, channel, du_dn, du_dt, dv_dn, dv_dt,
                                  phi, psi)


def transmission_traces(curve: BoundaryCurve, k: float, order: int,
                        channel: str) -> TransmissionTraces:
    """Interior traces for the harmonic of a given order and channel."""
    return _TraceWorkspace(curve, k).traces(order, channel)


def _pairs(max_sum: int):
    return [(a, b) for a in range(1, max_sum) for b in range(1, max_sum)
            if a + b <= max_sum]


def objective(shape: StarShape, target: CgptTable, lam: float, max_sum: int,
              n_nodes: int = 128) -> float:
    """Half the squared tensor mismatch over index sums up to max_sum."""
    order = max_sum - 1
    if target.order < order:
        raise ValueError("target table order too small for the requested sum")
    curve = sample_curve(shape, n_nodes)
    table = compute_cgpt(curve, lam, order)
    j = 0.0
    for a, b in _pairs(max_sum):
        diff = table.block(a, b) - np.real(target.block(a, b))
        j += 0.5 * float(np.sum(diff ** 2))
    return j


def shape_gradient(shape: StarShape, target: CgptTable, lam: float,
                   max_sum: int, n_nodes: int = 128):
    """Loss, coefficient gradient, and the pointwise normal kernel.

    Returns (loss, grad, g_nodes) where grad is d loss / d coefficients
    (a0, a_1..a_K, b_1..b_K) and g_nodes is the normal-perturbation
    kernel on the sample nodes.
    """
    order = max_sum - 1
    curve = sample_curve(shape, n_nodes)
    table = compute_cgpt(curve, lam, order)
    k = contrast_k(lam)
    ws = _TraceWorkspace(curve, k)
    cache = {}

    def tr(order_, channel_):
        key = (order_, channel_)
        if key not in cache:
            cache[key] = ws.traces(order_, channel_)
        return cache[key]

    loss = 0.0
    g = np.zeros(curve.n)
    for a, b in _pairs(max_sum):
        diff = table.block(a, b) - np.real(target.block(a, b))
        loss += 0.5 * float(np.sum(diff ** 2))
        for i, hch in enumerate("cs"):
            for j, fch in enumerate("cs"):
                delta = diff[i, j]
                if delta == 0.0:
                    continue
                tu = tr(a, hch)
                tv = tr(b, fch)
                w = (k - 1) * (tu.du_dn_minus * tv.dv_dn_minus
                               + tu.du_dt_minus * tv.dv_dt_minus / k)
                g += delta * w

    # chain rule onto the Fourier coefficients: radial displacement
    # delta_r(t) * basis projects onto the normal as (e_r . nu)
    t = curve.param
    er = np.stack([np.cos(t), np.sin(t)], axis=1)
    ern = np.einsum("ij,ij->i", er, curve.normals)
    base = g * ern * curve.weights
    tloc = t - shape.rotation
    n_h = shape.n_harmonics
    grad = np.empty(1 + 2 * n_h)
    grad[0] = base.sum()
    for kk in range(1, n_h + 1):
        grad[kk] = np.sum(base * np.cos(kk * tloc))
        grad[n_h + kk] = np.sum(base * np.sin(kk * tloc))
    return loss, grad, g


@dataclass
class ShapeIterate:
    shape: StarShape
    loss: float
    gradient_norm: float
    step: float


def _with_coeffs(shape: StarShape, coeffs: np.ndarray) -> StarShape:
    n_h = shape.n_harmonics
    return StarShape(center=shape.center, a0=coeffs[0],
                     ak=coeffs[1:n_h + 1], bk=coeffs[n_h + 1:],
                     rotation=shape.rotation)


def _coeffs(shape: StarShape) -> np.ndarray:
    return np.concatenate([[shape.a0], shape.ak, shape.bk])


def _radius_positive(coeffs: np.ndarray, n_h: int) -> bool:
    t = np.linspace(0, 2 * np.pi, 720, endpoint=False)
    r = np.full_like(t, coeffs[0])
    for kk in range(1, n_h + 1):
        r += coeffs[kk] * np.cos(kk * t) + coeffs[n_h + kk] * np.sin(kk * t)
    return bool(r.min() > 0)


def reconstruct(target: CgptTable, lam: float, max_sum: int = 5,
                init: StarShape | None = None, iters: int = 30,
                n_nodes: int = 128, n_harmonics: int = 8,
                armijo_c: float = 1e-4, max_rejects: int = 20,
                first_move: float = 0.02) -> list[ShapeIterate]:
    """Gradient descent on the tensor-matching loss.

    Starts from the equivalent ellipse of the target's first-order block
    unless an init shape is given; backtracking line search with the
    Armijo rule; the first accepted update moves the boundary by at most
    `first_move` of the mean radius.  Returns the iterate history.
    """
    if init is None:
        init = equivalent_ellipse(np.real(target.first_order()),
                                  lam, n_harmonics=n_harmonics)
    shape = init
    if shape.n_harmonics < n_harmonics:
        shape = StarShape(center=shape.center, a0=shape.a0,
                          ak=np.pad(shape.ak, (0, n_harmonics - shape.n_harmonics)),
                          bk=np.pad(shape.bk, (0, n_harmonics - shape.n_harmonics)),
                          rotation=shape.rotation)
    n_h = shape.n_harmonics

    loss, grad, _ = shape_gradient(shape, target, lam, max_sum, n_nodes)
    # normalize the first step: |delta r| <= first_move * a0 pointwise
    gmax = np.abs(grad[0]) + np.sum(np.abs(grad[1:]))
    step = first_move * shape.a0 / gmax if gmax > 0 else 1.0
    history = [ShapeIterate(shape, loss, float(np.linalg.norm(grad)), 0.0)]

    for _ in range(iters):
        gnorm2 = float(grad @ grad)
        if gnorm2 == 0.0:
            break
        coeffs = _coeffs(shape)
        rejects = 0
        accepted = False
        while rejects < max_rejects:
            cand = coeffs - step * grad
            if not _radius_positive(cand, n_h):
                step *= 0.5
                rejects += 1
                continue
            cand_shape = _with_coeffs(shape, cand)
            new_loss, new_grad, _ = shape_gradient(cand_shape, target, lam,
                                                   max_sum, n_nodes)
            if new_loss <= loss - armijo_c * step * gnorm2:
                shape, loss, grad = cand_shape, new_loss, new_grad
                history.append(ShapeIterate(shape, loss,
                                            float(np.linalg.norm(grad)), step))
                step *= 2.0
                accepted = True
                break
            step *= 0.5
            rejects += 1
        if not accepted:
            if rejects >= max_rejects:
                raise StallError(
                    f"line search rejected {rejects} consecutive steps "
                    f"(loss {loss:.3e})")
            break
    return history


def pull_back(mobius: conformal.MobiusMap, curve: BoundaryCurve) -> BoundaryCurve:
    """Physical-plane shape of a reconstructed transformed boundary."""
    return conformal.inverse_transform_curve(mobius, curve)
