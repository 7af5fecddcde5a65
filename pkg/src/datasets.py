"""
Direct (strain-stress) and indirect (displacement-force) datasets.
"""
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

from src.constitutive_models import ScalingSpec
from src.errors import ArgumentError, DataError
from src.mesh import Mesh, read_mesh, write_mesh

logger = logging.getLogger(__name__)


# -------------------------------------------------------------------
# Direct data
# -------------------------------------------------------------------
@dataclass
class DirectDataset:
    """
    N time-ordered sequences of strain-stress pairs.

    eps, sig : (N, n_steps, dim); cases[j] and points[j] identify the load
    case and the Gauss point each sequence was sampled from.
    """

    eps: np.ndarray
    sig: np.ndarray
    cases: list = field(default_factory=list)
    points: list = field(default_factory=list)

    def __post_init__(self):
        self.eps = np.asarray(self.eps, dtype=float)
        self.sig = np.asarray(self.sig, dtype=float)
        if self.eps.ndim != 3 or self.eps.shape != self.sig.shape:
            raise DataError(f"Strain/stress arrays must share shape (N, n, dim): "
                            f"{self.eps.shape} vs {self.sig.shape}")
        if not self.cases:
            self.cases = ["case"] * self.n_sequences
        if not self.points:
            self.points = list(range(self.n_sequences))

    @property
    def n_sequences(self) -> int:
        return self.eps.shape[0]

    @property
    def n_steps(self) -> int:
        return self.eps.shape[1]

    @property
    def dim(self) -> int:
        return self.eps.shape[2]

    @classmethod
    def from_trajectories(cls, trajectories, labels=None, points=None):
        """One sequence per (trajectory, material point)."""
        eps, sig, cases, pts = [], [], [], []
        for k, traj in enumerate(trajectories):
            E, S = np.asarray(traj.eps), np.asarray(traj.sig)
            chosen = range(E.shape[1]) if points is None else points
            label = labels[k] if labels else (traj.label or f"case{k}")
            for p in chosen:
                eps.append(E[:, p])
                sig.append(S[:, p])
                cases.append(label)
                pts.append(int(p))
        return cls(np.array(eps), np.array(sig), cases, pts)

    def select(self, cases):
        keep = [j for j, c in enumerate(self.cases) if c in set(cases)]
        return DirectDataset(
            self.eps[keep], self.sig[keep],
            [self.cases[j] for j in keep], [self.points[j] for j in keep],
        )

    def to_frame(self):
        N, n, dim = self.eps.shape
        data = {
            "case": np.repeat(self.cases, n),
            "step": np.tile(np.arange(n), N),
            "gp": np.repeat(self.points, n),
        }
        for k in range(dim):
            data[f"eps{k}"] = self.eps[:, :, k].ravel()
        for k in range(dim):
            data[f"sig{k}"] = self.sig[:, :, k].ravel()
        return pd.DataFrame(data)

    def write_csv(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False)

    @classmethod
    def read_csv(cls, path):
        path = Path(path)
        if not path.exists():
            raise DataError(f"Direct dataset {path} not found")
        df = pd.read_csv(path, dtype={"case": str})
        eps_cols = [c for c in df.columns if c.startswith("eps")]
        sig_cols = [c for c in df.columns if c.startswith("sig")]
        if not eps_cols or len(eps_cols) != len(sig_cols):
            raise DataError(f"{path}: expected matching eps*/sig* columns")
        eps, sig, cases, pts = [], [], [], []
        for (case, gp), grp in df.groupby(["case", "gp"], sort=False):
            grp = grp.sort_values("step")
            eps.append(grp[eps_cols].to_numpy())
            sig.append(grp[sig_cols].to_numpy())
            cases.append(case)
            pts.append(int(gp))
        lengths = {e.shape[0] for e in eps}
        if len(lengths) != 1:
            raise DataError(f"{path}: sequences have different lengths {sorted(lengths)}")
        return cls(np.array(eps), np.array(sig), cases, pts)


def scale_dataset(data: DirectDataset, scaling: ScalingSpec) -> DirectDataset:
    """Strains ÷ ε_ref, stresses ÷ σ_ref."""
    return replace(data, eps=data.eps / scaling.eps_ref, sig=data.sig / scaling.sig_ref)


def unscale_dataset(data: DirectDataset, scaling: ScalingSpec) -> DirectDataset:
    return replace(data, eps=data.eps * scaling.eps_ref, sig=data.sig * scaling.sig_ref)


# -------------------------------------------------------------------
# Indirect data
# -------------------------------------------------------------------
@dataclass
class IndirectDataset:
    """
    Full-field displacement and external-force histories on one mesh.

    U, F : (N, n_steps, n_dofs). `fixed_dofs` are the Dirichlet dofs whose
    equations are left out of the residual. `sig` optionally keeps the
    true stress history (N, n_steps, n_points, dim) for comparison runs.
    """

    mesh: Mesh
    U: np.ndarray
    F: np.ndarray
    dt: float
    fixed_dofs: np.ndarray
    cases: list = field(default_factory=list)
    sig: np.ndarray | None = None

    def __post_init__(self):
        self.U = np.asarray(self.U, dtype=float)
        self.F = np.asarray(self.F, dtype=float)
        self.fixed_dofs = np.asarray(self.fixed_dofs, dtype=int)
        if self.U.ndim != 3 or self.U.shape != self.F.shape:
            raise DataError(f"Displacement/force arrays differ: {self.U.shape} vs {self.F.shape}")
        if self.U.shape[2] != self.mesh.n_dofs:
            raise DataError("Observation width does not match the mesh")
        if self.dt <= 0:
            raise DataError("Time step must be positive")
        if not self.cases:
            self.cases = [f"case{j}" for j in range(self.n_cases)]

    @property
    def n_cases(self) -> int:
        return self.U.shape[0]

    @property
    def n_steps(self) -> int:
        return self.U.shape[1]

    @property
    def force_scale(self) -> float:
        peak = float(np.max(np.abs(self.F))) if self.F.size else 0.0
        return peak if peak > 0 else 1.0

    @classmethod
    def from_trajectories(cls, mesh, trajectories, fixed_dofs, labels=None, node_map=None,
                          forces=None, keep_stress=False):
        """
        Build observations from simulated runs.

        `node_map` samples a finer simulation at coarse-mesh nodes: entry k
        is the fine node observed as coarse node k. The external forces of
        the coarse mesh must then be given in `forces` (N, n_steps, n_dofs).
        """
        if not trajectories:
            raise DataError("No trajectories given")
        if node_map is not None and forces is None:
            raise DataError("Sampling on a coarse mesh needs coarse-mesh forces")
        dofs = None
        if node_map is not None:
            dofs = (2 * np.asarray(node_map)[:, None] + np.arange(2)).ravel()
        U, F = [], []
        for k, traj in enumerate(trajectories):
            u = np.asarray(traj.u)
            U.append(u if dofs is None else u[:, dofs])
            F.append(np.asarray(traj.F) if forces is None else np.asarray(forces[k]))
        labels = labels or [t.label or f"case{k}" for k, t in enumerate(trajectories)]
        sig = None
        if keep_stress and node_map is None:
            sig = np.stack([np.asarray(t.sig) for t in trajectories])
        return cls(mesh, np.stack(U), np.stack(F), trajectories[0].dt, fixed_dofs, labels, sig)

    def select(self, cases):
        keep = [j for j, c in enumerate(self.cases) if c in set(cases)]
        return replace(
            self,
            U=self.U[keep], F=self.F[keep], cases=[self.cases[j] for j in keep],
            sig=None if self.sig is None else self.sig[keep],
        )

    def write(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        write_mesh(directory / "mesh.txt", self.mesh)
        n_nodes = self.mesh.n_nodes
        steps = np.arange(self.n_steps)
        for j, case in enumerate(self.cases):
            U = self.U[j]
            pd.DataFrame({
                "step": np.repeat(steps, n_nodes),
                "node": np.tile(np.arange(n_nodes), self.n_steps),
                "ux": U[:, 0::2].ravel(),
                "uy": U[:, 1::2].ravel(),
            }).to_csv(directory / f"{case}_disp.csv", index=False)
            pd.DataFrame({
                "step": np.repeat(steps, self.mesh.n_dofs),
                "dof": np.tile(np.arange(self.mesh.n_dofs), self.n_steps),
                "f": self.F[j].ravel(),
            }).to_csv(directory / f"{case}_force.csv", index=False)
        meta = {"dt": self.dt, "cases": list(self.cases), "fixed_dofs": self.fixed_dofs.tolist()}
        (directory / "dataset.json").write_text(json.dumps(meta, indent=2))

    @classmethod
    def read(cls, directory, cases=None):
        directory = Path(directory)
        meta_path = directory / "dataset.json"
        if not meta_path.exists():
            raise DataError(f"No indirect dataset in {directory}")
        meta = json.loads(meta_path.read_text())
        mesh = read_mesh(directory / "mesh.txt")
        cases = cases or meta["cases"]
        U, F = [], []
        for case in cases:
            disp_path, force_path = directory / f"{case}_disp.csv", directory / f"{case}_force.csv"
            if not disp_path.exists() or not force_path.exists():
                raise DataError(f"Missing observation files for case {case!r} in {directory}")
            disp = pd.read_csv(disp_path).sort_values(["step", "node"])
            n_steps = disp["step"].nunique()
            u = np.empty((n_steps, mesh.n_dofs))
            u[:, 0::2] = disp["ux"].to_numpy().reshape(n_steps, -1)
            u[:, 1::2] = disp["uy"].to_numpy().reshape(n_steps, -1)
            force = pd.read_csv(force_path).sort_values(["step", "dof"])
            U.append(u)
            F.append(force["f"].to_numpy().reshape(n_steps, -1))
        return cls(mesh, np.stack(U), np.stack(F), meta["dt"], meta["fixed_dofs"], list(cases))


def check_split(train_cases, test_cases):
    overlap = set(train_cases) & set(test_cases)
    if overlap:
        raise ArgumentError(f"Cases {sorted(overlap)} appear in both training and test sets")
