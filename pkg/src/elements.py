"""
Element kinematics and integration for 2-node truss and 9-node quad elements.

All routines are vectorised over elements (leading axis) and Gauss points
(second axis). Element dofs are ordered node by node: [u1x, u1y, u2x, ...].

Quad9 local node order (ξ, η):
    0 (-1,-1)  1 (1,-1)  2 (1,1)  3 (-1,1)
    4 (0,-1)   5 (1,0)   6 (0,1)  7 (-1,0)   8 (0,0)
"""
import numpy as np
from numpy.polynomial.legendre import leggauss

from src.errors import ArgumentError, ElementError

QUAD9_NODES = np.array([
    [-1, -1], [1, -1], [1, 1], [-1, 1],
    [0, -1], [1, 0], [0, 1], [-1, 0], [0, 0],
], dtype=float)

SUPPORTED_ORDERS = (2, 3)


# -------------------------------------------------------------------
# Quadrature
# -------------------------------------------------------------------
def gauss_1d(order: int):
    if order not in SUPPORTED_ORDERS:
        raise ArgumentError(f"Gauss order {order} not supported; use one of {SUPPORTED_ORDERS}")
    return leggauss(order)


def gauss_quad(order: int = 3):
    """Tensor-product Gauss-Legendre rule on [-1, 1]²: (points (n, 2), weights (n,))."""
    x, w = gauss_1d(order)
    xi, eta = np.meshgrid(x, x, indexing="xy")
    wx, wy = np.meshgrid(w, w, indexing="xy")
    return np.column_stack([xi.ravel(), eta.ravel()]), (wx * wy).ravel()


# -------------------------------------------------------------------
# Shape functions
# -------------------------------------------------------------------
def _lagrange3(s, node):
    """Quadratic Lagrange polynomial on nodes {-1, 0, 1} and its derivative."""
    if node == -1:
        return 0.5 * s * (s - 1.0), s - 0.5
    if node == 1:
        return 0.5 * s * (s + 1.0), s + 0.5
    return 1.0 - s ** 2, -2.0 * s


def shape_line3(s):
    """Edge shape functions for nodes at s = -1, 0, 1: (N (..., 3), dN (..., 3))."""
    s = np.asarray(s, dtype=float)
    pairs = [_lagrange3(s, node) for node in (-1, 0, 1)]
    return np.stack([p[0] for p in pairs], -1), np.stack([p[1] for p in pairs], -1)


def shape_quad9(xi, eta):
    """
    Biquadratic Lagrange shape functions.

    Returns N (..., 9) and dN (..., 9, 2) with dN[..., a, 0] = ∂N_a/∂ξ.
    """
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    N, dN = [], []
    for a, b in QUAD9_NODES:
        la, dla = _lagrange3(xi, a)
        lb, dlb = _lagrange3(eta, b)
        N.append(la * lb)
        dN.append(np.stack([dla * lb, la * dlb], -1))
    return np.stack(N, -1), np.stack(dN, -2)


# -------------------------------------------------------------------
# Quad9 geometry and kinematics
# -------------------------------------------------------------------
def quad9_geometry(coords, order: int = 3):
    """
    Reference-configuration geometry of quad9 elements.

    Parameters
    ----------
    coords : (n_el, 9, 2) nodal coordinates

    Returns
    -------
    N : (n_gp, 9)
    dNdX : (n_el, n_gp, 9, 2)
    wdet : (n_el, n_gp) quadrature weight times det J
    """
    coords = np.asarray(coords, dtype=float)
    pts, w = gauss_quad(order)
    N, dN = shape_quad9(pts[:, 0], pts[:, 1])
    J = np.einsum("gak,eai->egik", dN, coords)  # J[i, k] = ∂X_i/∂ξ_k
    det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    if np.any(det <= 0):
        bad = int(np.argwhere(det <= 0)[0, 0])
        raise ElementError(f"Non-positive Jacobian in element {bad}", element=bad)
    Jinv = np.linalg.inv(J)
    dNdX = np.einsum("gak,egki->egai", dN, Jinv)
    return N, dNdX, det * w


def displacement_gradient(dNdX, u_e):
    """H_ij = ∂u_i/∂X_j at every Gauss point; u_e is (n_el, 9, 2)."""
    return np.einsum("eai,egaj->egij", u_e, dNdX)


def strain_small(dNdX, u_e):
    """Infinitesimal strain [ε11, ε22, γ12] at Gauss points."""
    H = displacement_gradient(dNdX, u_e)
    return np.stack([H[..., 0, 0], H[..., 1, 1], H[..., 0, 1] + H[..., 1, 0]], -1)


def strain_green_lagrange(dNdX, u_e):
    """Green-Lagrange strain [E11, E22, 2E12] and deformation gradient F."""
    H = displacement_gradient(dNdX, u_e)
    F = np.eye(2) + H
    E = 0.5 * (np.swapaxes(F, -1, -2) @ F - np.eye(2))
    return np.stack([E[..., 0, 0], E[..., 1, 1], 2.0 * E[..., 0, 1]], -1), F


def b_matrix_small(dNdX):
    """Strain-displacement matrix (n_el, n_gp, 3, 18)."""
    shape = dNdX.shape[:2] + (3, 18)
    B = np.zeros(shape)
    B[..., 0, 0::2] = dNdX[..., 0]
    B[..., 1, 1::2] = dNdX[..., 1]
    B[..., 2, 0::2] = dNdX[..., 1]
    B[..., 2, 1::2] = dNdX[..., 0]
    return B


def b_matrix_finite(dNdX, F):
    """Variation of the Green-Lagrange strain: δE = B(F) δu."""
    shape = dNdX.shape[:2] + (3, 18)
    B = np.zeros(shape)
    for i in range(2):
        Fi0 = F[..., i, 0][..., None]
        Fi1 = F[..., i, 1][..., None]
        B[..., 0, i::2] = Fi0 * dNdX[..., 0]
        B[..., 1, i::2] = Fi1 * dNdX[..., 1]
        B[..., 2, i::2] = Fi0 * dNdX[..., 1] + Fi1 * dNdX[..., 0]
    return B


def geometric_stiffness_quad9(dNdX, S, weight):
    """
    Initial-stress stiffness Σ_g w dN_a·S·dN_b, repeated on both components.

    S : (n_el, n_gp, 3) second Piola-Kirchhoff stress, weight : (n_el, n_gp)
    """
    St = np.empty(S.shape[:-1] + (2, 2))
    St[..., 0, 0] = S[..., 0]
    St[..., 1, 1] = S[..., 1]
    St[..., 0, 1] = St[..., 1, 0] = S[..., 2]
    G = np.einsum("eg,egai,egij,egbj->eab", weight, dNdX, St, dNdX)
    n_el = G.shape[0]
    K = np.zeros((n_el, 18, 18))
    K[:, 0::2, 0::2] = G
    K[:, 1::2, 1::2] = G
    return K


def mass_quad9(N, wdet, rho_lz):
    """Consistent mass (n_el, 18, 18); rho_lz is ρ·L_z per element."""
    m = np.einsum("e,eg,ga,gb->eab", rho_lz, wdet, N, N)
    M = np.zeros((m.shape[0], 18, 18))
    M[:, 0::2, 0::2] = m
    M[:, 1::2, 1::2] = m
    return M


# -------------------------------------------------------------------
# Truss
# -------------------------------------------------------------------
def truss_strain(X_e, u_e):
    """
    Green-Lagrange axial strain of 2-node truss elements.

    Parameters
    ----------
    X_e, u_e : (n_el, 2, 2) reference coordinates and displacements

    Returns
    -------
    eps : (n_el,) (l² - L²) / (2 L²)
    b : (n_el, 4) dε/du_e
    L0 : (n_el,) reference lengths
    """
    D = X_e[:, 1] - X_e[:, 0]
    d = D + u_e[:, 1] - u_e[:, 0]
    L2 = np.einsum("ei,ei->e", D, D)
    if np.any(L2 <= 0):
        bad = int(np.argwhere(L2 <= 0)[0, 0])
        raise ElementError(f"Zero-length truss element {bad}", element=bad)
    l2 = np.einsum("ei,ei->e", d, d)
    eps = (l2 - L2) / (2.0 * L2)
    b = np.hstack([-d, d]) / L2[:, None]
    return eps, b, np.sqrt(L2)


def truss_geometric_stiffness(S, area, L0):
    """A S / L [[I, -I], [-I, I]] per element."""
    k = area * S / L0
    base = np.kron(np.array([[1.0, -1.0], [-1.0, 1.0]]), np.eye(2))
    return k[:, None, None] * base


def mass_truss(rho_a, L0):
    """Consistent mass ρ A L / 6 [[2, 1], [1, 2]] on both components."""
    base = np.kron(np.array([[2.0, 1.0], [1.0, 2.0]]), np.eye(2)) / 6.0
    return (rho_a * L0)[:, None, None] * base


# -------------------------------------------------------------------
# Edge tractions
# -------------------------------------------------------------------
def edge_nodal_forces(coords, traction, thickness: float, order: int = 3):
    """
    Consistent nodal forces of a traction field on 3-node edge segments.

    coords : (n_seg, 3, 2) ordered [start, mid, end]
    traction : callable mapping points (..., 2) to tractions (..., 2)
    """
    s, w = gauss_1d(order)
    N, dN = shape_line3(s)
    x = np.einsum("ga,sai->sgi", N, coords)
    dx = np.einsum("ga,sai->sgi", dN, coords)
    ds = np.linalg.norm(dx, axis=-1)
    t = np.asarray(traction(x), dtype=float)
    return thickness * np.einsum("g,sg,ga,sgi->sai", w, ds, N, t)
