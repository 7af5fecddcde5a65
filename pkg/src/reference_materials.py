"""
Ground-truth constitutive laws used to generate data and as test oracles.

All step functions are vectorised over a leading batch axis of material
points and return (stress, new_state, consistent_tangent). Voigt order is
[11, 22, 12] with engineering shear strain.
"""
import logging
from dataclasses import dataclass

import numpy as np

from src.errors import ArgumentError, SolverError
from src.voigt_linalg import stress_to_tensor, strain_to_tensor, tensor_to_stress

logger = logging.getLogger(__name__)

# Deviatoric projector for plane stress: sigma_vm^2 = 1.5 * s^T P s
P_PLANE = np.array([
    [2.0, -1.0, 0.0],
    [-1.0, 2.0, 0.0],
    [0.0, 0.0, 6.0],
]) / 3.0

RETURN_MAP_TOL = 1e-12
RETURN_MAP_MAX_ITER = 50


# -------------------------------------------------------------------
# Parameters and state
# -------------------------------------------------------------------
@dataclass(frozen=True)
class EPParams:
    E: float
    sigma_y: float
    K: float = 0.0
    nu: float = 0.0

    def __post_init__(self):
        if self.E <= 0 or self.sigma_y <= 0 or self.K < 0 or not 0 <= self.nu < 0.5:
            raise ArgumentError(f"Invalid elasto-plastic parameters {self}")


@dataclass(frozen=True)
class HyperParams:
    c1: float
    c2: float = 0.0

    def __post_init__(self):
        if self.c1 <= 0 or self.c2 < 0:
            raise ArgumentError(f"Invalid Rivlin-Saunders parameters {self}")


@dataclass
class EPState:
    """Plastic strain and hardening variable at each material point."""

    plastic_strain: np.ndarray
    alpha: np.ndarray

    @classmethod
    def zeros(cls, n_points: int, dim: int):
        return cls(np.zeros((n_points, dim)), np.zeros(n_points))


# -------------------------------------------------------------------
# Linear elasticity
# -------------------------------------------------------------------
def linear_plane_stress(E: float, nu: float) -> np.ndarray:
    """Isotropic plane-stress stiffness in Voigt form (engineering shear)."""
    if E <= 0 or not 0 <= nu < 0.5:
        raise ArgumentError(f"Invalid elastic constants E={E}, nu={nu}")
    return E / (1.0 - nu ** 2) * np.array([
        [1.0, nu, 0.0],
        [nu, 1.0, 0.0],
        [0.0, 0.0, 0.5 * (1.0 - nu)],
    ])


# -------------------------------------------------------------------
# Equivalent stress
# -------------------------------------------------------------------
def vm_stress(sigma):
    """Plane-stress von Mises stress sqrt(s11² - s11 s22 + s22² + 3 s12²)."""
    s = np.asarray(sigma, dtype=float)
    return np.sqrt(
        s[..., 0] ** 2 - s[..., 0] * s[..., 1] + s[..., 1] ** 2 + 3.0 * s[..., 2] ** 2
    )


# -------------------------------------------------------------------
# 1D elasto-plasticity, f = |sigma| - sigma_Y - K alpha
# -------------------------------------------------------------------
def ep1d_step(state: EPState, eps_new, params: EPParams):
    """
    Elastic predictor / radial return for 1D linear isotropic hardening.

    eps_new has shape (B, 1) matching state.plastic_strain.

    Returns
    -------
    sigma : (B, 1)
    new_state : EPState
    tangent : (B, 1, 1), E when elastic and EK/(E+K) when yielding
    """
    E, K = params.E, params.K
    eps = np.asarray(eps_new, dtype=float).reshape(state.plastic_strain.shape)
    ep = state.plastic_strain[..., 0]
    alpha = state.alpha

    sig_trial = E * (eps[..., 0] - ep)
    f_trial = np.abs(sig_trial) - (params.sigma_y + K * alpha)
    plastic = f_trial > 0.0

    dlam = np.where(plastic, f_trial / (E + K), 0.0)
    sign = np.sign(sig_trial)
    sigma = sig_trial - E * dlam * sign

    new_state = EPState((ep + dlam * sign)[..., None], alpha + dlam)
    tangent = np.where(plastic, E * K / (E + K), E)[..., None, None]
    return sigma[..., None], new_state, tangent


# -------------------------------------------------------------------
# Plane-stress von Mises plasticity
# -------------------------------------------------------------------
def ep_plane_stress_step(state: EPState, eps_new, params: EPParams):
    """
    Plane-stress projected return mapping with linear isotropic hardening.

    The corrected stress is sigma(g) = (I + g C P)^-1 sigma_trial, and a
    scalar Newton on g drives f = sigma_vm - sigma_Y - K alpha to zero,
    with alpha = alpha_n + (2/3) g sigma_vm.

    Returns
    -------
    sigma : (B, 3)
    new_state : EPState
    tangent : (B, 3, 3) algorithmic elastoplastic tangent
    """
    C = linear_plane_stress(params.E, params.nu)
    K, sy = params.K, params.sigma_y
    eps = np.atleast_2d(np.asarray(eps_new, dtype=float))
    ep = state.plastic_strain
    alpha = state.alpha

    sig_trial = (eps - ep) @ C
    f_trial = vm_stress(sig_trial) - (sy + K * alpha)
    plastic = f_trial > RETURN_MAP_TOL * sy

    sigma = sig_trial.copy()
    new_ep = ep.copy()
    new_alpha = alpha.copy()
    tangent = np.broadcast_to(C, (eps.shape[0], 3, 3)).copy()

    idx = np.flatnonzero(plastic)
    if idx.size == 0:
        return sigma, EPState(new_ep, new_alpha), tangent

    st = sig_trial[idx]
    a_n = alpha[idx]
    CP = C @ P_PLANE
    I3 = np.eye(3)
    g = np.zeros(idx.size)
    residual = f_trial[idx]

    for it in range(RETURN_MAP_MAX_ITER):
        A = I3 + g[:, None, None] * CP
        s = np.linalg.solve(A, st[..., None])[..., 0]
        q = vm_stress(s)
        residual = q - sy - K * (a_n + 2.0 / 3.0 * g * q)
        if np.all(np.abs(residual) <= RETURN_MAP_TOL * sy):
            break
        ds = -np.linalg.solve(A, (s @ CP.T)[..., None])[..., 0]
        n = 1.5 * (s @ P_PLANE) / q[:, None]
        dq = np.einsum("bi,bi->b", n, ds)
        dres = dq * (1.0 - 2.0 / 3.0 * K * g) - 2.0 / 3.0 * K * q
        g = g - residual / dres
    else:
        worst = float(np.max(np.abs(residual)))
        raise SolverError(
            f"Plane-stress return mapping did not converge (|f| = {worst:.3e})",
            residual=worst,
        )

    dlam = 2.0 / 3.0 * g * q
    sigma[idx] = s
    new_ep[idx] = ep[idx] + g[:, None] * (s @ P_PLANE)
    new_alpha[idx] = a_n + dlam

    # Xi = (C^-1 + g P)^-1 ; tangent = Xi - v v^T / (v^T Pσ + (4/9) K q^2 / a)
    Xi = np.linalg.inv(np.linalg.inv(C)[None] + g[:, None, None] * P_PLANE)
    Ps = s @ P_PLANE
    v = np.einsum("bij,bj->bi", Xi, Ps)
    a = 1.0 - 2.0 / 3.0 * K * g
    denom = np.einsum("bi,bi->b", v, Ps) + 4.0 / 9.0 * K * q ** 2 / a
    tangent[idx] = Xi - np.einsum("bi,bj->bij", v, v) / denom[:, None, None]

    return sigma, EPState(new_ep, new_alpha), tangent


# -------------------------------------------------------------------
# Incompressible Rivlin-Saunders hyperelasticity (plane stress)
# -------------------------------------------------------------------
def _right_cauchy_green(eps_gl):
    eps = np.atleast_2d(np.asarray(eps_gl, dtype=float))
    C = np.eye(2) + 2.0 * strain_to_tensor(eps)
    J = C[..., 0, 0] * C[..., 1, 1] - C[..., 0, 1] * C[..., 1, 0]
    if np.any(C[..., 0, 0] <= 0) or np.any(J <= 0):
        raise ArgumentError("In-plane right Cauchy-Green tensor is not positive definite")
    Cinv = np.empty_like(C)
    Cinv[..., 0, 0] = C[..., 1, 1] / J
    Cinv[..., 1, 1] = C[..., 0, 0] / J
    Cinv[..., 0, 1] = -C[..., 0, 1] / J
    Cinv[..., 1, 0] = -C[..., 1, 0] / J
    return C, Cinv, J


def rivlin_saunders_energy(eps_gl, params: HyperParams):
    """w = c1 (I1 - 3) + c2 (I2 - 3) with C33 = 1 / det(C_2x2)."""
    C, _, J = _right_cauchy_green(eps_gl)
    t = C[..., 0, 0] + C[..., 1, 1]
    return params.c1 * (t + 1.0 / J - 3.0) + params.c2 * (J + t / J - 3.0)


def rivlin_saunders_S(eps_gl, params: HyperParams):
    """
    Second Piola-Kirchhoff stress [S11, S22, S12].

    Incompressibility fixes C33 = 1/det(C_2x2), which also satisfies the
    plane-stress condition S33 = 0 once the multiplier is eliminated, so
    S = 2 dw/dC of the reduced in-plane energy.
    """
    c1, c2 = params.c1, params.c2
    C, Cinv, J = _right_cauchy_green(eps_gl)
    t = C[..., 0, 0] + C[..., 1, 1]
    phi = -2.0 * c1 / J + 2.0 * c2 * J - 2.0 * c2 * t / J
    S = (2.0 * c1 + 2.0 * c2 / J)[..., None, None] * np.eye(2) + phi[..., None, None] * Cinv
    return tensor_to_stress(S)


def rivlin_saunders_tangent(eps_gl, params: HyperParams):
    """dS/dE in Voigt form, built from exact directional derivatives."""
    c1, c2 = params.c1, params.c2
    C, Cinv, J = _right_cauchy_green(eps_gl)
    t = C[..., 0, 0] + C[..., 1, 1]
    phi = -2.0 * c1 / J + 2.0 * c2 * J - 2.0 * c2 * t / J

    columns = []
    for k in range(3):
        dE = np.zeros(3)
        dE[k] = 1.0
        dC = 2.0 * strain_to_tensor(dE)
        tr_cdc = np.einsum("...ij,ji->...", Cinv, dC)
        dt = np.trace(dC)
        dCinv = -Cinv @ dC @ Cinv
        dphi = 2.0 * c1 * tr_cdc / J + 2.0 * c2 * J * tr_cdc - 2.0 * c2 * (dt - t * tr_cdc) / J
        dS = (
            (-2.0 * c2 * tr_cdc / J)[..., None, None] * np.eye(2)
            + phi[..., None, None] * dCinv
            + dphi[..., None, None] * Cinv
        )
        columns.append(tensor_to_stress(dS))
    return np.stack(columns, axis=-1)


def cauchy_from_pk2(S, F):
    """
    In-plane Cauchy stress F S F^T of an incompressible sheet.

    The thickness stretch is 1 / det F, so the volume ratio is one.
    """
    St = stress_to_tensor(S)
    return tensor_to_stress(F @ St @ np.swapaxes(F, -1, -2))
