"""
Least-squares stress fields from displacement/force observations.

For each observed step the internal force must balance F - M ü. With the
stress interpolated from unknown values at the element corners (bilinear;
one constant per element for trusses) that balance is linear in the
unknowns, and there are more free-dof equations than unknowns.
"""
import logging

import numpy as np

from src.assembly import Discretization, assemble_mass, kinematics
from src.datasets import DirectDataset, IndirectDataset
from src.elements import gauss_quad
from src.errors import SolverError
from src.losses import acceleration_fd
from src.voigt_linalg import solve_dense

logger = logging.getLogger(__name__)

CORNERS = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]], dtype=float)


def bilinear_at_gauss(order=3):
    """(n_gp, 4) bilinear corner shape functions at the Gauss points."""
    pts, _ = gauss_quad(order)
    return 0.25 * (1.0 + pts[:, None, 0] * CORNERS[:, 0]) * (1.0 + pts[:, None, 1] * CORNERS[:, 1])


def stress_interpolation(disc: Discretization):
    """
    Sparse-pattern interpolation from stress unknowns to material points.

    Returns
    -------
    T : (n_points·dim, n_unknowns) dense matrix
    n_unknowns : int
    """
    mesh, dim = disc.mesh, disc.dim
    n_pts = disc.n_points
    if mesh.kind == "truss2":
        T = np.kron(np.eye(mesh.n_elements), np.eye(dim))
        return T, mesh.n_elements * dim

    corners = mesh.elements[:, :4]
    unique = np.unique(corners)
    index = np.full(mesh.n_nodes, -1)
    index[unique] = np.arange(unique.size)
    Nb = bilinear_at_gauss(disc.order)
    T = np.zeros((n_pts * dim, unique.size * dim))
    for e in range(mesh.n_elements):
        for g in range(disc.n_gp):
            p = e * disc.n_gp + g
            for c in range(4):
                col = index[corners[e, c]] * dim
                for k in range(dim):
                    T[p * dim + k, col + k] += Nb[g, c]
    return T, unique.size * dim


def _operator(disc, B, T):
    """Columns: internal force of each stress unknown, (n_dofs, n_unknowns)."""
    n_el, n_gp, dim, nde = B.shape
    G = np.zeros((disc.n_dofs, disc.n_points * dim))
    local = np.einsum("eg,egij->egji", disc.weight, B)  # (n_el, n_gp, nde, dim)
    for e in range(n_el):
        for g in range(n_gp):
            p = e * n_gp + g
            G[disc.dofs[e], p * dim:(p + 1) * dim] += local[e, g]
    return G @ T


def stress_recovery(obs: IndirectDataset, accelerations=None):
    """
    Per-Gauss-point stresses (N, n_steps, n_points, dim) for every case.

    Steps without a usable acceleration (first and last) are left at zero.
    Small-strain meshes solve all steps of a case as one least-squares
    problem with many right-hand sides.
    """
    disc = Discretization(obs.mesh)
    M = assemble_mass(disc)
    free = np.setdiff1d(np.arange(disc.n_dofs), obs.fixed_dofs)
    T, n_unknowns = stress_interpolation(disc)
    n_steps = obs.n_steps
    steps = np.arange(1, n_steps - 1)
    out = np.zeros((obs.n_cases, n_steps, disc.n_points, disc.dim))

    A_small = None
    if not obs.mesh.finite_strain:
        A_small = _operator(disc, kinematics(disc, obs.U[0, 0])[1], T)[free]
        logger.info(f"Stress recovery: {A_small.shape[0]} equations, {n_unknowns} unknowns")

    for j in range(obs.n_cases):
        acc = acceleration_fd(obs.U[j], obs.dt) if accelerations is None else accelerations[j]
        rhs = (obs.F[j] - (M @ acc.T).T)[steps][:, free]
        if A_small is not None:
            x = _solve(A_small, rhs.T)
            out[j, steps] = (T @ x).T.reshape(steps.size, disc.n_points, disc.dim)
            continue
        for k, i in enumerate(steps):
            A = _operator(disc, kinematics(disc, obs.U[j, i])[1], T)[free]
            x = _solve(A, rhs[k])
            out[j, i] = (T @ x).reshape(disc.n_points, disc.dim)
    return out


def _solve(A, b):
    if A.shape[0] < A.shape[1]:
        raise SolverError(
            f"Stress recovery is underdetermined ({A.shape[0]} equations, {A.shape[1]} unknowns)",
            rank=A.shape[0],
        )
    return solve_dense(A, b)


def recovered_dataset(obs: IndirectDataset, stresses=None) -> DirectDataset:
    """Direct dataset pairing measured strains with recovered stresses."""
    if stresses is None:
        stresses = stress_recovery(obs)
    disc = Discretization(obs.mesh)
    eps, sig, cases, pts = [], [], [], []
    last = obs.n_steps - 1  # no acceleration, no recovered stress
    for j in range(obs.n_cases):
        E = np.stack([kinematics(disc, u)[0] for u in obs.U[j, :last]])
        for p in range(disc.n_points):
            eps.append(E[:, p])
            sig.append(stresses[j, :last, p])
            cases.append(obs.cases[j])
            pts.append(p)
    return DirectDataset(np.array(eps), np.array(sig), cases, pts)
