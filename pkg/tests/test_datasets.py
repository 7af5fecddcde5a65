import numpy as np
import pytest

from src.constitutive_models import ScalingSpec
from src.datasets import DirectDataset, IndirectDataset, check_split, scale_dataset, unscale_dataset
from src.errors import ArgumentError, DataError
from src.mesh import match_nodes, plate_mesh


def _direct(n_seq=3, n_steps=5, dim=3, seed=0):
    rng = np.random.default_rng(seed)
    eps = rng.normal(size=(n_seq, n_steps, dim))
    return DirectDataset(eps, 2.0 * eps, [f"A{j}" for j in range(n_seq)], list(range(n_seq)))


class TestDirectDataset:
    def test_from_trajectories(self, linear_truss):
        _, _, traj = linear_truss
        data = DirectDataset.from_trajectories([traj, traj], labels=["A1", "A2"], points=[0, 3])
        assert (data.n_sequences, data.n_steps, data.dim) == (4, 31, 1)
        assert data.cases == ["A1", "A1", "A2", "A2"]
        assert data.points == [0, 3, 0, 3]
        np.testing.assert_array_equal(data.sig[1], traj.sig[:, 3])

    def test_csv_round_trip(self, tmp_path):
        data = _direct()
        data.write_csv(tmp_path / "direct.csv")
        back = DirectDataset.read_csv(tmp_path / "direct.csv")
        np.testing.assert_allclose(back.eps, data.eps, rtol=1e-15)
        np.testing.assert_allclose(back.sig, data.sig, rtol=1e-15)
        assert back.cases == data.cases and back.points == data.points

    def test_frame_columns(self):
        frame = _direct(dim=1).to_frame()
        assert list(frame.columns) == ["case", "step", "gp", "eps0", "sig0"]

    def test_select(self):
        data = _direct().select(["A0", "A2"])
        assert data.cases == ["A0", "A2"] and data.n_sequences == 2

    def test_scaling(self):
        data = _direct()
        scaling = ScalingSpec(1e-3, 1e8)
        scaled = scale_dataset(data, scaling)
        np.testing.assert_allclose(scaled.eps, data.eps * 1e3)
        np.testing.assert_allclose(unscale_dataset(scaled, scaling).sig, data.sig)

    def test_mismatched_shapes(self):
        with pytest.raises(DataError):
            DirectDataset(np.zeros((2, 3, 3)), np.zeros((2, 3, 1)))

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            DirectDataset.read_csv(tmp_path / "none.csv")

    def test_unmatched_columns(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("case,step,gp,eps0,eps1,sig0\nA1,0,0,0.0,0.0,0.0\n")
        with pytest.raises(DataError):
            DirectDataset.read_csv(path)


class TestIndirectDataset:
    def test_from_trajectories(self, linear_truss):
        mesh, bcs, traj = linear_truss
        obs = IndirectDataset.from_trajectories(mesh, [traj], bcs.dirichlet_dofs(mesh), keep_stress=True)
        assert (obs.n_cases, obs.n_steps) == (1, 31)
        assert obs.cases == ["case0"]
        assert obs.force_scale == pytest.approx(np.abs(traj.F).max())
        assert obs.sig.shape == (1, 31, 4, 1)

    def test_write_read(self, linear_truss, tmp_path):
        mesh, bcs, traj = linear_truss
        obs = IndirectDataset.from_trajectories(mesh, [traj], bcs.dirichlet_dofs(mesh), labels=["A1"])
        obs.write(tmp_path)
        back = IndirectDataset.read(tmp_path)
        np.testing.assert_allclose(back.U, obs.U, rtol=1e-15)
        np.testing.assert_allclose(back.F, obs.F, rtol=1e-15)
        np.testing.assert_array_equal(back.fixed_dofs, obs.fixed_dofs)
        assert back.dt == obs.dt and back.cases == ["A1"]
        assert back.mesh.kind == "truss2"

    def test_read_unknown_case(self, linear_truss, tmp_path):
        mesh, bcs, traj = linear_truss
        IndirectDataset.from_trajectories(mesh, [traj], bcs.dirichlet_dofs(mesh)).write(tmp_path)
        with pytest.raises(DataError):
            IndirectDataset.read(tmp_path, cases=["B9"])

    def test_coarse_sampling(self):
        fine, coarse = plate_mesh(4, 2), plate_mesh(2, 1)
        node_map = match_nodes(fine, coarse)

        class _Run:
            dt = 1e-3
            label = "C1"
            u = np.arange(3 * fine.n_dofs, dtype=float).reshape(3, fine.n_dofs)
            F = np.zeros((3, fine.n_dofs))

        forces = np.ones((1, 3, coarse.n_dofs))
        obs = IndirectDataset.from_trajectories(coarse, [_Run()], [], node_map=node_map, forces=forces)
        np.testing.assert_array_equal(obs.U[0, :, 0::2], _Run.u[:, 2 * node_map])
        np.testing.assert_array_equal(obs.F, forces)
        with pytest.raises(DataError):
            IndirectDataset.from_trajectories(coarse, [_Run()], [], node_map=node_map)

    def test_wrong_width(self, linear_truss):
        mesh, _, _ = linear_truss
        with pytest.raises(DataError):
            IndirectDataset(mesh, np.zeros((1, 3, 4)), np.zeros((1, 3, 4)), 1e-3, [])

    def test_read_missing(self, tmp_path):
        with pytest.raises(DataError):
            IndirectDataset.read(tmp_path)


def test_check_split():
    check_split(["A1", "A2"], ["B1"])
    with pytest.raises(ArgumentError):
        check_split(["A1", "A2"], ["A2"])
