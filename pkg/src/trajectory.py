"""
Time histories produced by `simulate`, with CSV export and probes.
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from src.errors import DataError

logger = logging.getLogger(__name__)


@dataclass
class Trajectory:
    dt: float
    u: list = field(default_factory=list)
    v: list = field(default_factory=list)
    a: list = field(default_factory=list)
    F: list = field(default_factory=list)
    eps: list = field(default_factory=list)
    sig: list = field(default_factory=list)
    newton_iters: list = field(default_factory=list)
    status: str = "ok"
    diverged_step: int | None = None
    message: str = ""
    wall_time: float = 0.0
    label: str = ""

    @classmethod
    def start(cls, dt, u0, v0, a0, F0, eps0, sig0):
        traj = cls(dt)
        traj.append(u0, v0, a0, F0, eps0, sig0, None)
        return traj

    def append(self, u, v, a, F, eps, sig, iters):
        self.u.append(np.array(u, dtype=float))
        self.v.append(np.array(v, dtype=float))
        self.a.append(np.array(a, dtype=float))
        self.F.append(np.array(F, dtype=float))
        self.eps.append(np.array(eps, dtype=float))
        self.sig.append(np.array(sig, dtype=float))
        if iters is not None:
            self.newton_iters.append(int(iters))

    def mark_diverged(self, step, message=""):
        self.status = "diverged"
        self.diverged_step = int(step)
        self.message = message

    def finish(self):
        for name in ("u", "v", "a", "F", "eps", "sig"):
            setattr(self, name, np.stack(getattr(self, name)))
        return self

    @property
    def diverged(self) -> bool:
        return self.status != "ok"

    @property
    def n_steps(self) -> int:
        """Completed steps (rows minus the initial state)."""
        return len(self.u) - 1

    @property
    def times(self):
        return self.dt * np.arange(len(self.u))

    # ---------------------------------------------------------------
    # Probes
    # ---------------------------------------------------------------
    def node_displacement(self, node: int, comp: int = 0):
        return np.asarray(self.u)[:, 2 * node + comp]

    def point_path(self, point: int):
        """(ε, σ) history of one material point."""
        return np.asarray(self.eps)[:, point], np.asarray(self.sig)[:, point]

    # ---------------------------------------------------------------
    # Energy
    # ---------------------------------------------------------------
    def energies(self, M, point_weights):
        """
        Kinetic energy, accumulated strain energy and external work per step.

        Strain energy and work are integrated with the trapezoidal rule.
        """
        U, V, F = np.asarray(self.u), np.asarray(self.v), np.asarray(self.F)
        E, S = np.asarray(self.eps), np.asarray(self.sig)
        kinetic = 0.5 * np.einsum("ti,ti->t", V, (M @ V.T).T)
        dW_int = 0.5 * np.einsum("p,tpk->t", point_weights, (S[1:] + S[:-1]) * (E[1:] - E[:-1]))
        dW_ext = 0.5 * np.einsum("ti,ti->t", F[1:] + F[:-1], U[1:] - U[:-1])
        strain = np.concatenate([[0.0], np.cumsum(dW_int)])
        work = np.concatenate([[0.0], np.cumsum(dW_ext)])
        return kinetic, strain, work

    def energy_balance_error(self, M, point_weights):
        """max_t |KE + SE - W| / max_t |W|."""
        kinetic, strain, work = self.energies(M, point_weights)
        scale = np.max(np.abs(work))
        if scale == 0:
            return 0.0
        return float(np.max(np.abs(kinetic + strain - work)) / scale)

    # ---------------------------------------------------------------
    # CSV
    # ---------------------------------------------------------------
    def displacement_frame(self):
        U = np.asarray(self.u)
        n_steps, n_dofs = U.shape
        n_nodes = n_dofs // 2
        return pd.DataFrame({
            "step": np.repeat(np.arange(n_steps), n_nodes),
            "node": np.tile(np.arange(n_nodes), n_steps),
            "ux": U[:, 0::2].ravel(),
            "uy": U[:, 1::2].ravel(),
        })

    def force_frame(self):
        F = np.asarray(self.F)
        n_steps, n_dofs = F.shape
        return pd.DataFrame({
            "step": np.repeat(np.arange(n_steps), n_dofs),
            "dof": np.tile(np.arange(n_dofs), n_steps),
            "f": F.ravel(),
        })

    def point_frame(self, n_gp: int):
        E, S = np.asarray(self.eps), np.asarray(self.sig)
        n_steps, n_pts, dim = E.shape
        pts = np.tile(np.arange(n_pts), n_steps)
        data = {
            "step": np.repeat(np.arange(n_steps), n_pts),
            "element": pts // n_gp,
            "gp": pts % n_gp,
        }
        for k in range(dim):
            data[f"eps{k}"] = E[:, :, k].ravel()
        for k in range(dim):
            data[f"sig{k}"] = S[:, :, k].ravel()
        return pd.DataFrame(data)

    def write(self, directory, prefix: str, n_gp: int):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        self.displacement_frame().to_csv(directory / f"{prefix}_disp.csv", index=False)
        self.force_frame().to_csv(directory / f"{prefix}_force.csv", index=False)
        self.point_frame(n_gp).to_csv(directory / f"{prefix}_points.csv", index=False)
        meta = {
            "label": self.label,
            "dt": self.dt,
            "n_gp": n_gp,
            "status": self.status,
            "diverged_step": self.diverged_step,
            "message": self.message,
            "wall_time": self.wall_time,
            "newton_iters": self.newton_iters,
        }
        (directory / f"{prefix}_meta.json").write_text(json.dumps(meta, indent=2))

    @classmethod
    def read(cls, directory, prefix: str):
        directory = Path(directory)
        meta_path = directory / f"{prefix}_meta.json"
        if not meta_path.exists():
            raise DataError(f"No trajectory {prefix!r} in {directory}")
        meta = json.loads(meta_path.read_text())

        disp = pd.read_csv(directory / f"{prefix}_disp.csv").sort_values(["step", "node"])
        n_steps = disp["step"].nunique()
        U = np.empty((n_steps, 2 * disp["node"].nunique()))
        U[:, 0::2] = disp["ux"].to_numpy().reshape(n_steps, -1)
        U[:, 1::2] = disp["uy"].to_numpy().reshape(n_steps, -1)

        force = pd.read_csv(directory / f"{prefix}_force.csv").sort_values(["step", "dof"])
        F = force["f"].to_numpy().reshape(n_steps, -1)

        pts = pd.read_csv(directory / f"{prefix}_points.csv").sort_values(["step", "element", "gp"])
        eps_cols = [c for c in pts.columns if c.startswith("eps")]
        sig_cols = [c for c in pts.columns if c.startswith("sig")]
        E = pts[eps_cols].to_numpy().reshape(n_steps, -1, len(eps_cols))
        S = pts[sig_cols].to_numpy().reshape(n_steps, -1, len(sig_cols))

        traj = cls(meta["dt"], u=U, v=np.zeros_like(U), a=np.zeros_like(U), F=F, eps=E, sig=S,
                   newton_iters=meta["newton_iters"], status=meta["status"],
                   diverged_step=meta["diverged_step"], message=meta["message"],
                   wall_time=meta["wall_time"], label=meta["label"])
        return traj
