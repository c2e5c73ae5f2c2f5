"""Measurable quantities of the two-particle system.

The far-field observable is the 2x2 pair polarization tensor

    M(lam1, lam2)_{lm} = sum_j c_{lj} d_{jm} / (lam2 - lam_j),

where lam_j are eigenvalues of the interaction operator, c pairs the
plasmonic disk's normal components with the eigenfunctions in the dual
product, and d pairs eigenfunctions with the coordinate functions.  Modes
beyond the truncation carry eigenvalue shifts far below roundoff, so the
remainder of the (complete) spectral sum is added at eigenvalue zero;
with no target this collapses the tensor to the bare disk value
pi r2^2 / lam2 * I exactly.

Couplings are evaluated in the transformed plane where both pairings have
closed quadratures; the dual product is invariant under the Mobius map
for mean-zero densities.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import cgpt, conformal, interaction
from .errors import GeometryError, InsufficientPeaksError
from .geometry import BoundaryCurve, StarShape, min_enclosing_circle, sample_curve
from .conformal import DiskPair, MobiusMap

STRONG_REGIME_C1 = 0.5
STRONG_REGIME_C2 = 10.0


@dataclass(frozen=True)
class DrudeModel:
    """Frequency-dependent metal permittivity eps(w) = 1 - wp^2/(w(w + i g))."""

    omega_p: float
    gamma: float
    eps_m: float = 1.0

    def __post_init__(self):
        if self.omega_p <= 0 or self.gamma < 0:
            raise ValueError("require omega_p > 0 and gamma >= 0")

    def permittivity(self, omega):
        omega = np.asarray(omega, dtype=float)
        return 1.0 - self.omega_p ** 2 / (omega * (omega + 1j * self.gamma))


def lambda_of_omega(model: DrudeModel, omega):
    """Plasmonic contrast lambda(w) = (eps(w) + eps_m) / (2 (eps(w) - eps_m)).

    For a lossy Drude metal below the plasma frequency the imaginary part
    is negative (time convention e^{-iwt}); only its magnitude matters
    for resonance broadening.
    """
    if np.any(np.asarray(omega) <= 0):
        raise ValueError("frequency must be positive")
    eps = model.permittivity(omega)
    denom = eps - model.eps_m
    if np.any(np.abs(denom) < 1e-300):
        raise ValueError("contrast diverges: eps(omega) = eps_m")
    return (eps + model.eps_m) / (2.0 * denom)


@dataclass(frozen=True)
class TwoParticleSystem:
    """Everything the forward map needs for one target placement."""

    pair: DiskPair
    mobius: MobiusMap
    r1t: float
    r2t: float
    d1_physical: object          # BoundaryCurve
    d1_transformed: object       # BoundaryCurve
    table: cgpt.CgptTable
    operator: interaction.InteractionOperator
    lam1: complex


def place_target(shape: StarShape, pair: DiskPair, enclosing_center, offset_scale=1.0):
    """Translate a target given in local coordinates so its enclosing-circle
    center lands on the center of B1."""
    dx = pair.c1[0] - enclosing_center[0] * offset_scale
    dy = pair.c1[1] - enclosing_center[1] * offset_scale
    return StarShape(center=(shape.center[0] + dx, shape.center[1] + dy),
                     a0=shape.a0, ak=shape.ak, bk=shape.bk, rotation=shape.rotation)


def build_system(d1_local: StarShape, r2: float, d: float, lam1: complex,
                 n_nodes: int = 256, n_tr: int = 8,
                 table_order: int | None = None) -> TwoParticleSystem:
    """Canonical-frame system for a target shape given in local coordinates.

    B1 is the smallest disk enclosing the target boundary; the gap d is
    measured between B1 and the plasmonic disk.
    """
    local_curve = sample_curve(d1_local, n_nodes)
    cen, r_b1 = min_enclosing_circle(local_curve.nodes)
    delta = r_b1
    if not (STRONG_REGIME_C1 * delta <= d <= STRONG_REGIME_C2 * delta):
        warnings.warn(
            f"gap d = {d:.3e} outside the strong regime "
            f"[{STRONG_REGIME_C1 * delta:.3e}, {STRONG_REGIME_C2 * delta:.3e}]",
            stacklevel=2)
    pair = conformal.build_pair(r_b1, r2, d)
    r1t, r2t = conformal.transformed_radii(pair)
    placed = StarShape(center=(d1_local.center[0] + pair.c1[0] - cen[0],
                               d1_local.center[1] + pair.c1[1] - cen[1]),
                       a0=d1_local.a0, ak=d1_local.ak, bk=d1_local.bk,
                       rotation=d1_local.rotation)
    phys = sample_curve(placed, n_nodes)
    m = conformal.mobius_map(pair)
    d1t = conformal.transform_curve(m, phys)
    order = table_order if table_order is not None else n_tr
    table = cgpt.compute_cgpt(d1t, lam1, order)
    op = interaction.assemble(table, r2t, n_tr)
    return TwoParticleSystem(pair, m, r1t, r2t, phys, d1t, table, op, lam1)


@dataclass(frozen=True)
class CouplingMatrices:
    """Geometry-only pairings of the plasmonic boundary with circle modes.

    c_modes[l, :] pairs the l-th normal component with the (cos n, sin n)
    basis in the dual product; d_modes[:, m] pairs the basis with the
    m-th coordinate function; bare is the full pairing (nu_l, x_m).
    These depend only on the disk pair and the truncation, not on the
    target, and enter the pair polarization tensor linearly.
    """

    r2t: float
    n_tr: int
    c_modes: np.ndarray   # (2, 2 n_tr)
    d_modes: np.ndarray   # (2 n_tr, 2)
    weights: np.ndarray   # (2 n_tr,) dual-product diagonal
    bare: np.ndarray      # (2, 2) = pi r2^2 I


def coupling_matrices(pair: DiskPair, r2t: float, n_tr: int,
                      n_theta: int = 4096) -> CouplingMatrices:
    """Mode-basis couplings, computed in the zeta-plane.

    With zeta = r2t e^{i theta} on the image of the plasmonic boundary,
    x(theta) = inverse map of zeta, and densities transforming with the
    conformal weight |Phi'|, the pairings reduce to Fourier sums against
    the circle mode weights and plain periodic quadratures.
    """
    a = pair.a
    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    zeta = r2t * np.exp(1j * theta)
    x = a * (zeta + 1.0) / (zeta - 1.0)
    # conformal density weight |Phi'(x)| = |zeta - 1|^2 / (2 a)
    jac = np.abs(zeta - 1.0) ** 2 / (2 * a)
    c2 = complex(pair.c2[0], pair.c2[1])
    nu = (x - c2) / pair.r2
    nu_tilde = np.stack([nu.real, nu.imag]) / jac[None, :]

    n = np.arange(1, n_tr + 1)
    coef = np.fft.rfft(nu_tilde, axis=1) / n_theta
    a_n = 2 * coef[:, 1: n_tr + 1].real       # cos coefficients
    b_n = -2 * coef[:, 1: n_tr + 1].imag      # sin coefficients
    w_n = np.pi * r2t ** 2 / (2 * n)
    c_modes = np.empty((2, 2 * n_tr))
    c_modes[:, 0::2] = w_n[None, :] * a_n
    c_modes[:, 1::2] = w_n[None, :] * b_n

    basis = np.empty((n_theta, 2 * n_tr))
    basis[:, 0::2] = np.cos(np.outer(theta, n))
    basis[:, 1::2] = np.sin(np.outer(theta, n))
    dtheta = 2 * np.pi / n_theta
    xy = np.stack([x.real, x.imag], axis=1)
    d_modes = basis.T @ xy * (r2t * dtheta)

    bare = np.pi * pair.r2 ** 2 * np.eye(2)
    return CouplingMatrices(float(r2t), n_tr, c_modes, d_modes,
                            np.repeat(w_n, 2), bare)


@dataclass(frozen=True)
class PairCouplings:
    """Spectral data entering the pair polarization tensor."""

    eigenvalues: np.ndarray   # (J,)
    c: np.ndarray             # (2, J): (nu_l, psi_j) pairings
    d: np.ndarray             # (J, 2): (psi_j, x_m) pairings
    bare: np.ndarray          # (2, 2): (nu_l, x_m) = pi r2^2 I


def pair_couplings(op: interaction.InteractionOperator, pair: DiskPair,
                   n_theta: int = 4096) -> PairCouplings:
    """Couplings of all truncated eigenmodes."""
    vals, vecs = interaction.eigenpairs(op, 2 * op.n_tr)
    mats = coupling_matrices(pair, op.r2t, op.n_tr, n_theta)
    return PairCouplings(vals, mats.c_modes @ vecs, vecs.T @ mats.d_modes,
                         mats.bare)


def response_tensor(mats: CouplingMatrices, op_matrix: np.ndarray,
                    lam2: complex) -> np.ndarray:
    """Pair polarization tensor via the mode-basis resolvent.

    M(lam2) = C (lam2 I - B)^{-1} Winv D + (T - C Winv D) / lam2, where B
    is the interaction matrix; equals the spectral sum without requiring
    an eigendecomposition, hence smooth in B.
    """
    n = op_matrix.shape[0]
    winv = 1.0 / mats.weights
    rd = np.linalg.solve(lam2 * np.eye(n) - op_matrix, winv[:, None] * mats.d_modes)
    tail = mats.bare - mats.c_modes @ (winv[:, None] * mats.d_modes)
    return mats.c_modes @ rd + tail / lam2


def pair_polarization(coup: PairCouplings, lam2: complex) -> np.ndarray:
    """Pair polarization tensor at plasmonic contrast lam2."""
    resolved = np.einsum("lj,jm,j->lm", coup.c, coup.d,
                         1.0 / (lam2 - coup.eigenvalues))
    tail = coup.bare - coup.c @ coup.d
    if lam2 == 0:
        raise ZeroDivisionError("lam2 = 0 sits on the bare-disk resonance")
    return resolved + tail / lam2


@dataclass(frozen=True)
class ResponseCurve:
    """|pair PT| sampled along Re(lam2) at fixed Im(lam2)."""

    lambdas: np.ndarray
    values: np.ndarray
    im_lambda2: float

    def to_csv(self, path) -> None:
        with open(path, "w") as f:
            f.write("lambda,response\n")
            for x, v in zip(self.lambdas, self.values):
                f.write(f"{x:.17g},{v:.17g}\n")


def scan_response(coup: PairCouplings, im_lambda2: float = 0.003,
                  lo: float = -0.3, hi: float = 0.3,
                  step: float = 1e-4) -> ResponseCurve:
    """Frobenius norm of the pair PT on a real-contrast grid."""
    if im_lambda2 <= 0:
        raise ValueError("Im(lambda2) must be positive for a finite scan")
    grid = np.arange(lo, hi + 0.5 * step, step)
    lam2 = grid + 1j * im_lambda2
    denom = 1.0 / (lam2[:, None] - coup.eigenvalues[None, :])
    cd = np.einsum("lj,jm->jlm", coup.c, coup.d)
    m_res = np.tensordot(denom, cd, axes=(1, 0))
    tail = coup.bare - coup.c @ coup.d
    m_all = m_res + tail[None, :, :] / lam2[:, None, None]
    vals = np.sqrt(np.sum(np.abs(m_all) ** 2, axis=(1, 2)))
    return ResponseCurve(grid, vals, im_lambda2)


def find_peaks(curve: ResponseCurve, count: int = 2) -> tuple[float, ...]:
    """Positions of the `count` most-shifted local maxima.

    Local maxima are refined by a three-point quadratic fit and ordered by
    decreasing |position|, which ranks the resonances shifted furthest
    from the bare-disk peak first (and matches the magnitude ordering of
    the operator's eigenvalues).
    """
    from scipy.signal import find_peaks as _sp_find_peaks

    v = curve.values
    prom = 1e-8 * (v.max() - v.min() + 1e-300)
    idx, _ = _sp_find_peaks(v, prominence=prom)
    if len(idx) < count:
        raise InsufficientPeaksError(
            f"found {len(idx)} local maxima, need {count}")
    h = curve.lambdas[1] - curve.lambdas[0]
    refined = []
    for i in idx:
        if 0 < i < len(v) - 1:
            denom = v[i - 1] - 2 * v[i] + v[i + 1]
            shift = 0.5 * h * (v[i - 1] - v[i + 1]) / denom if denom != 0 else 0.0
            refined.append(curve.lambdas[i] + shift)
        else:
            refined.append(curve.lambdas[i])
    refined.sort(key=lambda x: -abs(x))
    return tuple(float(p) for p in refined[:count])


@dataclass(frozen=True)
class MeasurementSet:
    """Per-angle resonance positions, optionally with far-field samples.

    P1, P2 are the two most-shifted resonance positions.  When the
    experiment also records the 2x2 pair polarization tensor at a few
    lossy contrasts (the quantity the far-field expansion exposes),
    `lambda2_samples` holds those contrasts and `response[i, s]` the
    tensor measured at angle i and sample s.
    """

    angles: np.ndarray
    p1: np.ndarray
    p2: np.ndarray
    noise: float = 0.0
    seed: int = 0
    mode: str = "eigen"
    lambda2_samples: np.ndarray | None = None   # (S,) complex
    response: np.ndarray | None = None          # (n_angles, S, 2, 2) complex

    def __post_init__(self):
        if np.any(np.abs(self.p1) >= 0.5) or np.any(np.abs(self.p2) >= 0.5):
            raise ValueError("resonance positions must satisfy |P| < 1/2")

    @property
    def has_response(self) -> bool:
        return self.response is not None

    def to_dict(self) -> dict:
        d = {
            "angles": [float(a) for a in self.angles],
            "P1": [float(p) for p in self.p1],
            "P2": [float(p) for p in self.p2],
            "noise": self.noise,
            "seed": self.seed,
            "mode": self.mode,
        }
        if self.has_response:
            d["lambda2_samples"] = [[v.real, v.imag] for v in self.lambda2_samples]
            d["response"] = [[[[float(v.real), float(v.imag)] for v in row]
                              for row in mat] for mat in
                             self.response.reshape(-1, 2, 2)]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MeasurementSet":
        samples = None
        resp = None
        if "response" in d:
            samples = np.array([complex(re, im) for re, im in d["lambda2_samples"]])
            flat = np.array([[[complex(v[0], v[1]) for v in row] for row in mat]
                             for mat in d["response"]])
            resp = flat.reshape(len(d["angles"]), len(samples), 2, 2)
        return cls(np.asarray(d["angles"], dtype=float),
                   np.asarray(d["P1"], dtype=float),
                   np.asarray(d["P2"], dtype=float),
                   float(d.get("noise", 0.0)), int(d.get("seed", 0)),
                   d.get("mode", "eigen"), samples, resp)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, s: str) -> "MeasurementSet":
        return cls.from_dict(json.loads(s))


def default_angles(count: int = 11) -> np.ndarray:
    """Rotation grid theta_i = 2 pi (i - 1) / count."""
    return 2 * np.pi * np.arange(count) / count


def simulate_measurements(d1_local: StarShape, r2: float, d: float, lam1: complex,
                          angles, n_nodes: int = 256, n_tr: int = 8,
                          table_order: int | None = None,
                          mode: str = "eigen", rotation: str = "table",
                          im_lambda2: float = 0.003,
                          scan: tuple[float, float, float] = (-0.3, 0.3, 1e-4),
                          noise: float = 0.0, seed: int = 0,
                          restrict_sum: int | None = None,
                          n_response_samples: int = 0) -> MeasurementSet:
    """Synthetic (P1, P2) data over a rotation grid.

    Physical rotations are about the preimage of the annulus center, the
    one point whose rotations admit an exact transformed-table model (the
    conjugated-rotation transport); rotation='table' applies that
    transport directly, rotation='shape' rotates the physical boundary
    about that point and rebuilds the transformed-domain table per angle
    through the fixed map.  mode='eigen' reads the two leading operator
    eigenvalues directly; mode='peaks' runs the response scan and
    extracts local maxima, which requires the resonances to be separated
    by more than the scan linewidth.  `restrict_sum` zeroes table blocks
    with m + n beyond the given bound before assembly (the inversion's
    parameterization).  With n_response_samples > 0 the set also records
    the pair polarization tensor at that many contrasts bracketing the
    resonance band (the far-field observable the tensor recovery needs).
    """
    angles = np.asarray(angles, dtype=float)
    base = build_system(d1_local, r2, d, lam1, n_nodes, n_tr, table_order)
    mats = coupling_matrices(base.pair, base.r2t, n_tr)
    base_table = base.table if restrict_sum is None \
        else base.table.truncated(restrict_sum)
    lam2_samples = None
    responses = [] if n_response_samples > 0 else None
    if n_response_samples > 0:
        lead = abs(interaction.eigenvalues(base.operator, 1)[0])
        grid = np.linspace(-2.0 * lead, 2.0 * lead, n_response_samples)
        lam2_samples = grid + 1j * im_lambda2
    p1, p2 = [], []
    for th in angles:
        if rotation == "table":
            table = cgpt.transport_cgpt_rotation(base_table, th)
        elif rotation == "shape":
            pivot = complex(-base.pair.a, 0.0)
            z_rot = pivot + np.exp(1j * th) * (base.d1_physical.z - pivot)
            curve_rot = BoundaryCurve.from_complex_nodes(z_rot)
            d1t_rot = conformal.transform_curve(base.mobius, curve_rot)
            order = table_order if table_order is not None else n_tr
            table = cgpt.compute_cgpt(d1t_rot, lam1, order)
            if restrict_sum is not None:
                table = table.truncated(restrict_sum)
        else:
            raise ValueError(f"unknown rotation mode {rotation!r}")
        op = interaction.assemble(table, base.r2t, n_tr)
        if mode == "eigen":
            vals = interaction.eigenvalues(op, 2)
            vals = np.real(vals)
            pk = (float(vals[0]), float(vals[1]))
        elif mode == "peaks":
            coup = pair_couplings(op, base.pair)
            curve = scan_response(coup, im_lambda2, *scan[:2], scan[2])
            pk = find_peaks(curve, 2)
        else:
            raise ValueError(f"unknown measurement mode {mode!r}")
        p1.append(pk[0])
        p2.append(pk[1])
        if responses is not None:
            responses.append([response_tensor(mats, op.matrix, lam2)
                              for lam2 in lam2_samples])
    p1 = np.array(p1)
    p2 = np.array(p2)
    resp = np.array(responses) if responses is not None else None
    if noise > 0:
        rng = np.random.default_rng(seed)
        p1 = p1 * (1.0 + noise * rng.standard_normal(len(p1)))
        p2 = p2 * (1.0 + noise * rng.standard_normal(len(p2)))
        if resp is not None:
            resp = resp * (1.0 + noise * rng.standard_normal(resp.shape))
    return MeasurementSet(angles, p1, p2, noise, seed, mode,
                          lam2_samples, resp)


def absorption_proxy(m: np.ndarray, incident_gradient) -> float:
    """Im of the dipole moment component along the incident field direction.

    p = M (-grad u_i); the projection direction is the unit incident
    field e = -grad u_i / |grad u_i|.
    """
    g = np.asarray(incident_gradient, dtype=float)
    norm = np.linalg.norm(g)
    if norm == 0:
        return 0.0
    p = np.asarray(m) @ (-g)
    e = -g / norm
    return float(np.imag(p @ e))
