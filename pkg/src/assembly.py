"""
Global assembly: internal force, tangent stiffness, mass, external force.

A `Discretization` precomputes the reference geometry of a mesh once.
Material points are numbered element by element, Gauss point fastest:
point = element · n_gp + gp.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from src.elements import (
    b_matrix_finite,
    b_matrix_small,
    edge_nodal_forces,
    geometric_stiffness_quad9,
    mass_quad9,
    mass_truss,
    quad9_geometry,
    strain_green_lagrange,
    strain_small,
    truss_geometric_stiffness,
    truss_strain,
)
from src.errors import ArgumentError
from src.mesh import Mesh
from src.voigt_linalg import assemble_sparse

logger = logging.getLogger(__name__)


# -------------------------------------------------------------------
# Boundary conditions and loading
# -------------------------------------------------------------------
@dataclass(frozen=True)
class LoadProtocol:
    """
    Traction amplitude p (2,) with time shape sin(πt/T).

    profile "uniform" applies p everywhere on the loaded edges; "gaussian"
    multiplies it by Lx / (√(2π) σ_x) · exp(-(x - x0)² / σ_x²).
    """

    p: tuple = (0.0, 0.0)
    T: float = 0.2
    label: str = ""
    profile: str = "uniform"
    x0: float = 0.0
    sigma_x: float = 1.0
    length: float = 1.0

    def __post_init__(self):
        if self.T <= 0:
            raise ArgumentError("Load duration T must be positive")
        if self.profile not in ("uniform", "gaussian"):
            raise ArgumentError(f"Unknown load profile {self.profile!r}")
        object.__setattr__(self, "p", tuple(float(v) for v in self.p))

    def amplitude(self, t: float) -> float:
        return float(np.sin(np.pi * t / self.T))

    def spatial(self, x):
        x = np.asarray(x, dtype=float)
        if self.profile == "uniform":
            return np.ones(x.shape[:-1])
        factor = self.length / (np.sqrt(2.0 * np.pi) * self.sigma_x)
        return factor * np.exp(-((x[..., 0] - self.x0) ** 2) / self.sigma_x ** 2)


@dataclass(frozen=True)
class BCs:
    """
    Clamped edges (both components fixed to zero), components fixed on
    every node, loaded edges and an optional body force (N/kg).
    """

    clamped: tuple = ()
    loaded: tuple = ()
    fixed_components: tuple = ()
    body_force: tuple | None = None

    def __post_init__(self):
        shared = set(self.clamped) & set(self.loaded)
        if shared:
            raise ArgumentError(f"Edges {sorted(shared)} are both clamped and loaded")

    def dirichlet_dofs(self, mesh: Mesh):
        dofs = set()
        for name in self.clamped:
            for n in mesh.edge_nodes(name):
                dofs.update((2 * n, 2 * n + 1))
        for comp in self.fixed_components:
            dofs.update(range(comp, mesh.n_dofs, 2))
        return np.array(sorted(dofs), dtype=int)


# -------------------------------------------------------------------
# Discretization
# -------------------------------------------------------------------
@dataclass
class Discretization:
    mesh: Mesh
    order: int = 3
    dofs: np.ndarray = field(init=False)
    n_gp: int = field(init=False)

    def __post_init__(self):
        mesh = self.mesh
        self.dofs = mesh.element_dofs()
        coords = mesh.nodes[mesh.elements]
        rho = mesh.element_density()
        if mesh.kind == "truss2":
            self.n_gp = 1
            _, _, self.L0 = truss_strain(coords, np.zeros_like(coords))
            self.weight = (mesh.section * self.L0)[:, None]
            self.element_mass = mass_truss(rho * mesh.section, self.L0)
        else:
            self.N, self.dNdX, wdet = quad9_geometry(coords, self.order)
            self.n_gp = wdet.shape[1]
            self.weight = mesh.section * wdet
            self.element_mass = mass_quad9(self.N, wdet, rho * mesh.section)
        rows = np.repeat(self.dofs, self.dofs.shape[1], axis=1)
        cols = np.tile(self.dofs, (1, self.dofs.shape[1]))
        self._rows, self._cols = rows.ravel(), cols.ravel()

    @property
    def dim(self) -> int:
        return 1 if self.mesh.kind == "truss2" else 3

    @property
    def n_points(self) -> int:
        return self.mesh.n_elements * self.n_gp

    @property
    def n_dofs(self) -> int:
        return self.mesh.n_dofs

    def point_weights(self):
        """Integration weight (volume) carried by each material point."""
        return self.weight.ravel()

    def point_material_ids(self):
        return np.repeat(self.mesh.material_ids, self.n_gp)

    def element_displacements(self, u):
        u = np.asarray(u, dtype=float)
        return u[self.dofs].reshape(self.mesh.n_elements, -1, 2)

    def sparse(self, element_matrices):
        return assemble_sparse(self._rows, self._cols, element_matrices, self.n_dofs)


# -------------------------------------------------------------------
# Kinematics
# -------------------------------------------------------------------
def kinematics(disc: Discretization, u):
    """
    Strain and strain-displacement matrices at every material point.

    Returns
    -------
    eps : (n_points, dim)
    B : (n_el, n_gp, dim, n_dof_e)
    """
    mesh = disc.mesh
    u_e = disc.element_displacements(u)
    if mesh.kind == "truss2":
        eps, b, _ = truss_strain(mesh.nodes[mesh.elements], u_e)
        return eps[:, None], b[:, None, None, :]
    if mesh.finite_strain:
        eps, F = strain_green_lagrange(disc.dNdX, u_e)
        B = b_matrix_finite(disc.dNdX, F)
    else:
        eps = strain_small(disc.dNdX, u_e)
        B = b_matrix_small(disc.dNdX)
    return eps.reshape(-1, 3), B


def point_strains(disc: Discretization, u):
    return kinematics(disc, u)[0]


def point_strains_history(disc: Discretization, U):
    """Strains for every row of a displacement history (n_steps, n_dofs)."""
    return np.stack([point_strains(disc, u) for u in U])


# -------------------------------------------------------------------
# Internal force and tangent
# -------------------------------------------------------------------
def _point_array(disc, values, tail):
    arr = np.asarray(values, dtype=float)
    shape = (disc.mesh.n_elements, disc.n_gp) + tail
    if arr.size != np.prod(shape):
        raise ArgumentError(f"Expected {disc.n_points} material-point values, got {arr.shape}")
    return arr.reshape(shape)


def assemble_internal(disc: Discretization, u, sigma, tangents=None, B=None):
    """
    Internal force P = Σ w Bᵀσ, and the tangent ∂P/∂u when `tangents`
    (material tangents per point) are given.

    For finite strain σ is the second Piola-Kirchhoff stress and the
    tangent includes the geometric stiffness.
    """
    mesh = disc.mesh
    if B is None:
        _, B = kinematics(disc, u)
    dim = disc.dim
    S = _point_array(disc, sigma, (dim,))
    w = disc.weight

    fe = np.einsum("eg,egij,egi->ej", w, B, S)
    P = np.zeros(disc.n_dofs)
    np.add.at(P, disc.dofs, fe)
    if tangents is None:
        return P

    D = _point_array(disc, tangents, (dim, dim))
    Ke = np.einsum("eg,egki,egkl,eglj->eij", w, B, D, B)
    if mesh.kind == "truss2":
        Ke = Ke + truss_geometric_stiffness(S[:, 0, 0], mesh.section, disc.L0)
    elif mesh.finite_strain:
        Ke = Ke + geometric_stiffness_quad9(disc.dNdX, S, w)
    return P, disc.sparse(Ke)


def internal_force_adjoint(disc: Discretization, u, rbar, B=None):
    """∂(rbarᵀ P)/∂σ at every point: w Bᵀ-transposed action, (n_points, dim)."""
    if B is None:
        _, B = kinematics(disc, u)
    rbar_e = np.asarray(rbar, dtype=float)[disc.dofs]
    return np.einsum("eg,egij,ej->egi", disc.weight, B, rbar_e).reshape(-1, disc.dim)


def assemble_mass(disc: Discretization):
    """Consistent mass matrix (sparse, symmetric)."""
    return disc.sparse(disc.element_mass)


# -------------------------------------------------------------------
# External force
# -------------------------------------------------------------------
def external_force(disc: Discretization, bcs: BCs, protocol: LoadProtocol, t: float):
    mesh = disc.mesh
    F = np.zeros(disc.n_dofs)
    amp = protocol.amplitude(t)
    p = np.asarray(protocol.p)

    for name in bcs.loaded:
        if name not in mesh.edges:
            raise ArgumentError(f"Mesh has no edge {name!r}")
        segs = mesh.edges[name]
        if mesh.kind == "truss2":
            for n in np.unique(segs):
                F[2 * n:2 * n + 2] += amp * p
            continue
        traction = lambda x: amp * protocol.spatial(x)[..., None] * p
        fn = edge_nodal_forces(mesh.nodes[segs], traction, mesh.section, disc.order)
        np.add.at(F, (2 * segs[..., None] + np.arange(2)).ravel(), fn.ravel())

    if bcs.body_force is not None:
        g = np.tile(np.asarray(bcs.body_force, dtype=float), mesh.n_nodes)
        F += assemble_mass(disc) @ g
    return F
