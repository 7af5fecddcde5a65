import numpy as np
import pytest

from src.assembly import (
    BCs,
    Discretization,
    LoadProtocol,
    assemble_internal,
    assemble_mass,
    external_force,
    internal_force_adjoint,
    kinematics,
    point_strains_history,
)
from src.errors import ArgumentError
from src.mesh import plate_mesh, truss_mesh
from src.reference_materials import HyperParams, linear_plane_stress, rivlin_saunders_S, rivlin_saunders_tangent

C_TI = linear_plane_stress(100e9, 0.35)


def _fd_stiffness(P_of_u, u, h):
    n = u.size
    K = np.zeros((n, n))
    for k in range(n):
        du = np.zeros(n)
        du[k] = h
        K[:, k] = (P_of_u(u + du) - P_of_u(u - du)) / (2 * h)
    return K


class TestDiscretization:
    def test_points(self):
        disc = Discretization(plate_mesh(4, 2))
        assert (disc.n_gp, disc.n_points, disc.dim) == (9, 72, 3)
        assert disc.point_weights().sum() == pytest.approx(0.1 * 0.05 * 0.001)

    def test_truss_points(self):
        disc = Discretization(truss_mesh(4))
        assert (disc.n_gp, disc.n_points, disc.dim) == (1, 4, 1)
        np.testing.assert_allclose(disc.point_weights(), 0.005)


class TestMass:
    def test_plate_total_mass(self):
        disc = Discretization(plate_mesh(10, 5, 0.1, 0.05, 0.001, density=4200.0))
        M = assemble_mass(disc)
        ex = np.zeros(disc.n_dofs)
        ex[0::2] = 1.0
        assert ex @ (M @ ex) == pytest.approx(0.021)
        assert abs(M - M.T).max() <= 1e-12 * abs(M).max()

    def test_truss_total_mass(self):
        disc = Discretization(truss_mesh(4, 1.0, 0.005, 8000.0))
        ey = np.zeros(disc.n_dofs)
        ey[1::2] = 1.0
        assert ey @ (assemble_mass(disc) @ ey) == pytest.approx(160.0)


class TestInternalForce:
    def test_patch_test(self):
        mesh = plate_mesh(4, 2, 0.1, 0.05)
        disc = Discretization(mesh)
        A = np.array([[1e-3, 2e-4], [-3e-4, 5e-4]])
        u = (mesh.nodes @ A.T).ravel()
        eps, _ = kinematics(disc, u)
        np.testing.assert_allclose(eps, np.tile([1e-3, 5e-4, -1e-4], (disc.n_points, 1)), atol=1e-15)

        P = assemble_internal(disc, u, eps @ C_TI)
        boundary = np.unique(np.concatenate([mesh.edge_nodes(e) for e in mesh.edges]))
        interior = np.setdiff1d(np.arange(mesh.n_nodes), boundary)
        dofs = (2 * interior[:, None] + np.arange(2)).ravel()
        assert np.abs(P[dofs]).max() < 1e-9 * np.abs(P).max()
        # boundary forces balance
        assert abs(P[0::2].sum()) < 1e-9 * np.abs(P).max()
        assert abs(P[1::2].sum()) < 1e-9 * np.abs(P).max()

    def test_small_strain_stiffness(self, rng):
        disc = Discretization(plate_mesh(2, 1, 0.1, 0.05))
        u = 1e-4 * rng.normal(size=disc.n_dofs)
        eps, _ = kinematics(disc, u)
        P, K = assemble_internal(disc, u, eps @ C_TI, np.broadcast_to(C_TI, (disc.n_points, 3, 3)))
        fd = _fd_stiffness(lambda v: assemble_internal(disc, v, kinematics(disc, v)[0] @ C_TI), u, 1e-6)
        np.testing.assert_allclose(K.toarray(), fd, rtol=1e-6, atol=1e-6 * np.abs(fd).max())

    def test_finite_strain_stiffness(self, rng):
        params = HyperParams(1.0, 0.1)
        disc = Discretization(plate_mesh(2, 1, 0.1, 0.05, finite_strain=True))
        u = 1e-3 * rng.normal(size=disc.n_dofs)

        def P_of_u(v):
            eps, _ = kinematics(disc, v)
            return assemble_internal(disc, v, rivlin_saunders_S(eps, params))

        eps, _ = kinematics(disc, u)
        _, K = assemble_internal(disc, u, rivlin_saunders_S(eps, params),
                                 rivlin_saunders_tangent(eps, params))
        fd = _fd_stiffness(P_of_u, u, 1e-7)
        np.testing.assert_allclose(K.toarray(), fd, rtol=1e-5, atol=1e-6 * np.abs(fd).max())

    def test_truss_stiffness_includes_geometric_term(self, rng):
        E = 200e9
        disc = Discretization(truss_mesh(3))
        u = 0.05 * rng.normal(size=disc.n_dofs)

        def P_of_u(v):
            eps, _ = kinematics(disc, v)
            return assemble_internal(disc, v, E * eps)

        eps, _ = kinematics(disc, u)
        _, K = assemble_internal(disc, u, E * eps, np.full((3, 1, 1), E))
        fd = _fd_stiffness(P_of_u, u, 1e-7)
        np.testing.assert_allclose(K.toarray(), fd, rtol=1e-5, atol=1e-6 * np.abs(fd).max())

    def test_adjoint_is_transpose_action(self, rng):
        disc = Discretization(plate_mesh(2, 1))
        u = 1e-3 * rng.normal(size=disc.n_dofs)
        sig = rng.normal(size=(disc.n_points, 3))
        rbar = rng.normal(size=disc.n_dofs)
        lhs = rbar @ assemble_internal(disc, u, sig)
        rhs = np.sum(internal_force_adjoint(disc, u, rbar) * sig)
        assert lhs == pytest.approx(rhs, rel=1e-10)

    def test_wrong_point_count(self):
        disc = Discretization(plate_mesh(2, 1))
        with pytest.raises(ArgumentError):
            assemble_internal(disc, np.zeros(disc.n_dofs), np.zeros((5, 3)))

    def test_strain_history_shape(self):
        disc = Discretization(truss_mesh(4))
        assert point_strains_history(disc, np.zeros((7, disc.n_dofs))).shape == (7, 4, 1)


class TestExternalForce:
    mesh = plate_mesh(10, 5, 0.1, 0.05, 0.001)

    def test_uniform_resultant(self):
        disc = Discretization(self.mesh)
        protocol = LoadProtocol(p=(2e6, -1e6), T=0.2)
        F = external_force(disc, BCs(clamped=("left",), loaded=("right",)), protocol, 0.1)
        assert F[0::2].sum() == pytest.approx(2e6 * 0.05 * 0.001)
        assert F[1::2].sum() == pytest.approx(-1e6 * 0.05 * 0.001)
        loaded = self.mesh.edge_nodes("right")
        assert np.count_nonzero(F[0::2]) == loaded.size

    def test_zero_at_start(self):
        disc = Discretization(self.mesh)
        F = external_force(disc, BCs(loaded=("top",)), LoadProtocol(p=(1e6, 1e6)), 0.0)
        assert not F.any()

    def test_gaussian_profile_peak(self):
        protocol = LoadProtocol(p=(0.0, 1.0), profile="gaussian", x0=0.5, sigma_x=0.2, length=1.0)
        assert protocol.spatial(np.array([[0.5, 0.0]]))[0] == pytest.approx(1.0 / (np.sqrt(2 * np.pi) * 0.2))
        assert protocol.spatial(np.array([[0.7, 0.0]]))[0] == pytest.approx(
            np.exp(-1.0) / (np.sqrt(2 * np.pi) * 0.2))

    def test_truss_point_load(self):
        disc = Discretization(truss_mesh(4))
        F = external_force(disc, BCs(clamped=("left",), loaded=("right",)), LoadProtocol(p=(3e6, 0.0)), 0.1)
        assert F[8] == pytest.approx(3e6)
        assert np.count_nonzero(F) == 1

    def test_body_force(self):
        disc = Discretization(plate_mesh(4, 2, 0.1, 0.05, 0.001, density=4200.0))
        F = external_force(disc, BCs(body_force=(0.0, -9.81)), LoadProtocol(), 0.05)
        assert F[1::2].sum() == pytest.approx(-9.81 * 0.021)
        assert F[0::2].sum() == pytest.approx(0.0, abs=1e-15)

    def test_unknown_edge(self):
        disc = Discretization(self.mesh)
        with pytest.raises(ArgumentError):
            external_force(disc, BCs(loaded=("front",)), LoadProtocol(), 0.1)


class TestBoundaryConditions:
    def test_clamped_edge(self):
        mesh = plate_mesh(10, 5)
        assert BCs(clamped=("left",)).dirichlet_dofs(mesh).size == 22

    def test_fixed_component(self):
        mesh = truss_mesh(4)
        dofs = BCs(clamped=("left",), fixed_components=(1,)).dirichlet_dofs(mesh)
        np.testing.assert_array_equal(dofs, [0, 1, 3, 5, 7, 9])

    def test_edge_both_clamped_and_loaded(self):
        with pytest.raises(ArgumentError):
            BCs(clamped=("left",), loaded=("left",))

    def test_invalid_protocol(self):
        with pytest.raises(ArgumentError):
            LoadProtocol(T=0.0)
        with pytest.raises(ArgumentError):
            LoadProtocol(profile="ramp")
