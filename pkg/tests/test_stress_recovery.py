import numpy as np
import pytest

from src.assembly import BCs, Discretization, assemble_internal, kinematics
from src.datasets import IndirectDataset
from src.dynamics import GAlphaParams, galpha_accelerations
from src.errors import SolverError
from src.mesh import plate_mesh, truss_mesh
from src.reference_materials import linear_plane_stress
from src.stress_recovery import bilinear_at_gauss, recovered_dataset, stress_interpolation, stress_recovery

C_TI = linear_plane_stress(100e9, 0.35)


def _static_plate(nx=4, ny=2):
    """Uniform tension along x, observed as three identical steps."""
    mesh = plate_mesh(nx, ny, 0.1, 0.05, 0.001, density=4200.0)
    disc = Discretization(mesh)
    u = np.zeros(mesh.n_dofs)
    u[0::2] = 1e-3 * mesh.nodes[:, 0]
    eps, _ = kinematics(disc, u)
    sig = eps @ C_TI
    F = assemble_internal(disc, u, sig)
    obs = IndirectDataset(mesh, np.tile(u, (1, 3, 1)), np.tile(F, (1, 3, 1)), 1e-3,
                          BCs(clamped=("left",)).dirichlet_dofs(mesh))
    return obs, sig


class TestInterpolation:
    def test_bilinear_partition_of_unity(self):
        np.testing.assert_allclose(bilinear_at_gauss().sum(axis=1), 1.0)

    def test_plate_unknowns(self):
        T, n = stress_interpolation(Discretization(plate_mesh(4, 2)))
        assert n == 15 * 3
        assert T.shape == (72 * 3, 45)
        np.testing.assert_allclose(T.sum(axis=1), 1.0)

    def test_truss_one_value_per_element(self):
        T, n = stress_interpolation(Discretization(truss_mesh(4)))
        assert n == 4
        np.testing.assert_array_equal(T, np.eye(4))


class TestStressRecovery:
    def test_uniform_stress_recovered(self):
        obs, sig = _static_plate()
        out = stress_recovery(obs)
        np.testing.assert_allclose(out[0, 1], sig, rtol=1e-8, atol=1e-8 * np.abs(sig).max())
        assert not out[0, 0].any() and not out[0, 2].any()

    def test_zero_data(self):
        obs, _ = _static_plate()
        obs.U[:] = 0.0
        obs.F[:] = 0.0
        assert not np.any(stress_recovery(obs))

    def test_truss_recovers_true_stress(self, linear_truss):
        mesh, bcs, traj = linear_truss
        obs = IndirectDataset.from_trajectories(mesh, [traj], bcs.dirichlet_dofs(mesh))
        params = GAlphaParams()
        A = galpha_accelerations(traj.u, traj.dt, params)
        balance = (1.0 - params.alpha_m) * A + params.alpha_m * np.vstack([A[:1], A[:-1]])
        out = stress_recovery(obs, accelerations=[balance])
        scale = np.abs(traj.sig).max()
        np.testing.assert_allclose(out[0, 1:-1], traj.sig[1:-1], rtol=1e-6, atol=1e-8 * scale)

    def test_underdetermined(self):
        # everything clamped except one node: fewer equations than unknowns
        obs, _ = _static_plate(2, 1)
        keep = 2 * obs.mesh.n_nodes - 2
        obs.fixed_dofs = np.arange(keep)
        with pytest.raises(SolverError):
            stress_recovery(obs)


class TestRecoveredDataset:
    def test_pairs_strains_with_stresses(self):
        obs, sig = _static_plate()
        data = recovered_dataset(obs)
        assert (data.n_sequences, data.n_steps, data.dim) == (72, 2, 3)
        np.testing.assert_allclose(data.sig[:, 1], sig, rtol=1e-8, atol=1e-8 * np.abs(sig).max())
        np.testing.assert_allclose(data.eps[:, 0, 0], 1e-3)
