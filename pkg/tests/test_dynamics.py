import numpy as np
import pytest

from src.assembly import BCs, LoadProtocol
from src.dynamics import (
    DynState,
    GAlphaParams,
    NewtonConfig,
    galpha_accelerations,
    galpha_step,
    simulate,
)
from src.errors import ArgumentError, StepError
from src.materials import LinearElastic, Plasticity1D
from src.mesh import plate_mesh, truss_mesh
from src.reference_materials import EPParams, linear_plane_stress

TRUSS_EP = EPParams(E=200e9, sigma_y=0.3e9, K=200e9 / 9.0)
TRUSS_BCS = BCs(clamped=("left",), loaded=("right",), fixed_components=(1,))
PLATE_BCS = BCs(clamped=("left",), loaded=("right",))
C_TI = linear_plane_stress(100e9, 0.35)


def _oscillator_error(dt, omega=2.0 * np.pi, t_end=1.25):
    """|u(t_end) - cos(ω t_end)| for u'' + ω² u = 0, u(0) = 1."""
    k = omega ** 2
    state = DynState(0.0, np.array([1.0]), np.array([0.0]), np.array([-k]), np.array([k]))
    internal = lambda u: (k * u, np.array([[k]]), None)
    n_steps = int(round(t_end / dt))
    for _ in range(n_steps):
        state, _ = galpha_step(state, dt, np.array([[1.0]]), internal, np.zeros(1), np.zeros(1))
    return abs(state.u[0] - np.cos(omega * n_steps * dt))


class TestGAlphaParams:
    def test_defaults(self):
        params = GAlphaParams()
        assert (params.alpha_m, params.alpha_f) == (-1.0, 0.0)
        assert params.gamma == 1.5
        assert params.beta == 1.0


class TestGAlphaStep:
    def test_second_order_convergence(self):
        errors = [_oscillator_error(dt) for dt in (0.005, 0.0025, 0.00125)]
        rates = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
        assert np.all(rates >= 1.9)

    def test_newton_failure_raises(self):
        state = DynState(0.0, np.zeros(1), np.zeros(1), np.zeros(1), np.zeros(1))
        internal = lambda u: (u ** 3 + u, np.array([[3 * u[0] ** 2 + 1]]), None)
        with pytest.raises(StepError) as info:
            galpha_step(state, 0.1, np.array([[1.0]]), internal, np.zeros(1), np.array([1.0]),
                        newton=NewtonConfig(max_iter=0), step=7)
        assert info.value.step == 7
        assert len(info.value.residuals) == 1

    def test_fixed_dofs_prescribed(self):
        state = DynState(0.0, np.zeros(2), np.zeros(2), np.zeros(2), np.zeros(2))
        K = np.array([[2.0, -1.0], [-1.0, 1.0]])
        internal = lambda u: (K @ u, K, None)
        new, _ = galpha_step(state, 0.01, np.eye(2), internal, np.zeros(2), np.array([0.0, 1.0]),
                             fixed_dofs=[0])
        assert new.u[0] == pytest.approx(0.0, abs=1e-15)
        assert new.u[1] > 0.0


class TestSimulate:
    def test_zero_load_stays_at_rest(self):
        traj = simulate(truss_mesh(4), TRUSS_BCS, LoadProtocol(p=(0.0, 0.0)), Plasticity1D(TRUSS_EP), 10, 1e-3)
        assert traj.status == "ok"
        assert traj.n_steps == 10
        assert not np.any(traj.u)

    def test_linear_problem_one_newton_iteration(self):
        mesh = plate_mesh(4, 2, 0.1, 0.05, 0.001, density=4200.0)
        protocol = LoadProtocol(p=(1e6, 0.0), T=0.2)
        traj = simulate(mesh, PLATE_BCS, protocol, LinearElastic(C_TI), 20, 1e-3)
        assert traj.status == "ok"
        assert traj.newton_iters == [1] * 20

    def test_clamped_dofs_stay_fixed(self):
        mesh = plate_mesh(4, 2, 0.1, 0.05, 0.001, density=4200.0)
        traj = simulate(mesh, PLATE_BCS, LoadProtocol(p=(1e6, 1e6)), LinearElastic(C_TI), 10, 1e-3)
        fixed = PLATE_BCS.dirichlet_dofs(mesh)
        assert np.abs(traj.u[:, fixed]).max() < 1e-14
        assert np.abs(traj.u).max() > 0.0

    def test_truss_tension(self):
        protocol = LoadProtocol(p=(0.4 * 3 + 1.6) * np.array([1e6, 0.0]), T=0.2, label="case3")
        traj = simulate(truss_mesh(4), TRUSS_BCS, protocol, Plasticity1D(TRUSS_EP), 100, 1e-3)
        assert traj.status == "ok" and traj.label == "case3"
        tip = traj.node_displacement(4)
        assert tip[-1] > 0.0
        assert np.all(traj.u[:, 1::2] == 0.0)
        assert traj.sig.shape == (101, 4, 1)

    def test_accelerations_reproduced_from_displacements(self):
        mesh = plate_mesh(4, 2, 0.1, 0.05, 0.001, density=4200.0)
        traj = simulate(mesh, PLATE_BCS, LoadProtocol(p=(1e6, 2e5)), LinearElastic(C_TI), 30, 1e-3)
        A = galpha_accelerations(traj.u, 1e-3, a0=traj.a[0])
        scale = np.abs(traj.a).max()
        np.testing.assert_allclose(A, traj.a, rtol=1e-6, atol=1e-8 * scale)

    def test_divergence_limit(self):
        protocol = LoadProtocol(p=(2e6, 0.0))
        traj = simulate(truss_mesh(4), TRUSS_BCS, protocol, Plasticity1D(TRUSS_EP), 10, 1e-3,
                        divergence_limit=1e-30)
        assert traj.status == "diverged"
        assert traj.diverged_step == 1
        assert traj.n_steps == 0

    def test_newton_failure_recorded(self):
        protocol = LoadProtocol(p=(2e6, 0.0))
        traj = simulate(truss_mesh(4), TRUSS_BCS, protocol, Plasticity1D(TRUSS_EP), 10, 1e-3,
                        newton=NewtonConfig(max_iter=0))
        assert traj.diverged
        assert "Newton" in traj.message

    def test_dimension_mismatch(self):
        with pytest.raises(ArgumentError):
            simulate(truss_mesh(4), TRUSS_BCS, LoadProtocol(), LinearElastic(C_TI), 5, 1e-3)

    def test_invalid_step(self):
        with pytest.raises(ArgumentError):
            simulate(truss_mesh(4), TRUSS_BCS, LoadProtocol(), Plasticity1D(TRUSS_EP), 0, 1e-3)

    @pytest.mark.slow
    def test_truss_yields_under_largest_load(self):
        protocol = LoadProtocol(p=(0.4 * 4 + 1.6) * np.array([1e6, 0.0]), T=0.2)
        traj = simulate(truss_mesh(4), TRUSS_BCS, protocol, Plasticity1D(TRUSS_EP), 200, 1e-3)
        assert traj.status == "ok"
        assert traj.n_steps == 200
        assert np.abs(traj.sig).max() > TRUSS_EP.sigma_y
