"""
Training losses and their exact gradients.

direct_loss      teacher-forced one-step stress mismatch
indirect_loss    momentum-balance residual of observed displacements, with
                 the stress recurrence run free and differentiated through
                 time
"""
import logging
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed

from src.assembly import (
    Discretization,
    assemble_internal,
    assemble_mass,
    internal_force_adjoint,
    kinematics,
)
from src.constitutive_models import (
    ConstitutiveModel,
    PointState,
    stress_update,
    stress_update_vjp,
    with_params,
)
from src.datasets import DirectDataset, IndirectDataset
from src.dynamics import GAlphaParams, galpha_accelerations
from src.errors import ArgumentError, DataError, NonFiniteLossError

logger = logging.getLogger(__name__)

HISTORY_MODES = ("free", "measured")
ACCELERATION_MODES = ("fd", "galpha")


# -------------------------------------------------------------------
# Direct loss
# -------------------------------------------------------------------
def direct_loss(model: ConstitutiveModel, theta, data: DirectDataset):
    """
    Σ_j Σ_{i≥1} ‖(σ_j^i - M_θ(ε_j^i, ε_j^{i-1}, σ_j^{i-1})) / σ_ref‖².

    The measured σ_j^{i-1} is fed as history.
    """
    if data.n_steps < 2:
        raise DataError("Direct data needs sequences of at least two steps")
    if data.dim != model.dim:
        raise ArgumentError(f"Data dim {data.dim} does not match model dim {model.dim}")
    m = with_params(model, theta)
    dim = data.dim
    eps_new = data.eps[:, 1:].reshape(-1, dim)
    state = PointState(data.eps[:, :-1].reshape(-1, dim), data.sig[:, :-1].reshape(-1, dim))
    target = data.sig[:, 1:].reshape(-1, dim)

    s_ref = m.scaling.sig_ref
    r = (stress_update(m, eps_new, state) - target) / s_ref
    loss = float(np.sum(r ** 2))
    grad, _, _, _ = stress_update_vjp(m, eps_new, state, 2.0 * r / s_ref)
    return loss, grad


# -------------------------------------------------------------------
# Accelerations
# -------------------------------------------------------------------
def acceleration_fd(U, dt):
    """Central differences; the first and last rows are left at zero."""
    U = np.asarray(U, dtype=float)
    if U.shape[0] < 3:
        raise ArgumentError("Finite-difference accelerations need at least three steps")
    A = np.zeros_like(U)
    A[1:-1] = (U[2:] - 2.0 * U[1:-1] + U[:-2]) / dt ** 2
    return A


# -------------------------------------------------------------------
# Indirect loss
# -------------------------------------------------------------------
@dataclass
class _Case:
    label: str
    U: np.ndarray
    eps: np.ndarray
    base: np.ndarray        # M ā_i - F_i
    used: np.ndarray        # step indices entering the loss
    sig: np.ndarray | None


class IndirectProblem:
    """
    Step-independent pieces of the indirect loss, computed once per dataset.
    """

    def __init__(self, obs: IndirectDataset, acceleration="fd", params=GAlphaParams()):
        if acceleration not in ACCELERATION_MODES:
            raise ArgumentError(f"Unknown acceleration mode {acceleration!r}")
        if obs.n_steps < 3:
            raise DataError("Indirect data needs at least three steps")
        if acceleration == "galpha" and params.alpha_f != 0:
            raise ArgumentError("Integrator-consistent accelerations need alpha_f = 0")
        self.obs = obs
        self.disc = Discretization(obs.mesh)
        self.free = np.setdiff1d(np.arange(obs.mesh.n_dofs), obs.fixed_dofs)
        self.force_scale = obs.force_scale
        self.finite_strain = obs.mesh.finite_strain
        self.B = None if self.finite_strain else kinematics(self.disc, obs.U[0, 0])[1]
        M = assemble_mass(self.disc)
        n = obs.n_steps

        self.cases = []
        for j in range(obs.n_cases):
            U = obs.U[j]
            if acceleration == "fd":
                A = acceleration_fd(U, obs.dt)
                used = np.arange(1, n - 1)
            else:
                A = galpha_accelerations(U, obs.dt, params)
                A = (1.0 - params.alpha_m) * A + params.alpha_m * np.vstack([A[:1], A[:-1]])
                used = np.arange(1, n)
            eps = np.stack([kinematics(self.disc, u)[0] for u in U])
            base = (M @ A.T).T - obs.F[j]
            sig = None if obs.sig is None else obs.sig[j]
            self.cases.append(_Case(obs.cases[j], U, eps, base, used, sig))

    def B_at(self, case: _Case, i: int):
        if self.B is not None:
            return self.B
        return kinematics(self.disc, case.U[i])[1]


def _case_loss(model, problem: IndirectProblem, case: _Case, history, clip):
    disc = problem.disc
    free, fs = problem.free, problem.force_scale
    n_pts, dim = case.eps.shape[1], case.eps.shape[2]
    last = int(case.used[-1])
    used = set(case.used.tolist())
    if history == "measured" and case.sig is None:
        raise DataError("Measured-history loss needs stored stresses")

    states = [PointState.zeros(n_pts, dim)]
    rbars = {}
    loss = 0.0
    for i in range(1, last + 1):
        sig_i = stress_update(model, case.eps[i], states[-1])
        if not np.all(np.isfinite(sig_i)):
            raise NonFiniteLossError(
                f"Non-finite stress at step {i} of case {case.label}", step=i, case=case.label
            )
        if i in used:
            P = assemble_internal(disc, case.U[i], sig_i, B=problem.B_at(case, i))
            r = (P + case.base[i])[free] / fs
            loss += float(r @ r)
            rbar = np.zeros(disc.n_dofs)
            rbar[free] = 2.0 * r / fs
            rbars[i] = rbar
        hist_sig = sig_i if history == "free" else case.sig[i]
        states.append(PointState(case.eps[i], hist_sig))

    if not np.isfinite(loss):
        raise NonFiniteLossError(f"Non-finite loss in case {case.label}", step=last, case=case.label)

    grad = np.zeros(model.n_params)
    carry = np.zeros((n_pts, dim))
    for i in range(last, 0, -1):
        sbar = carry
        if i in rbars:
            sbar = sbar + internal_force_adjoint(disc, case.U[i], rbars[i], B=problem.B_at(case, i))
        g_theta, _, _, g_sig = stress_update_vjp(model, case.eps[i], states[i - 1], sbar)
        grad += g_theta
        if history == "free":
            carry = g_sig
            if clip is not None:
                norm = np.linalg.norm(carry)
                if norm > clip:
                    carry = carry * (clip / norm)
    return loss, grad


def indirect_loss(
    model: ConstitutiveModel,
    theta,
    obs: IndirectDataset | IndirectProblem,
    history: str = "free",
    acceleration: str = "fd",
    clip: float | None = None,
    n_jobs: int = 1,
):
    """
    Σ_j Σ_i ‖(M ü_j^i + P(u_j^i, σ_j^i(θ)) - F_j^i) / f_scale‖² over free dofs.

    With history="free" each σ_j^i is computed from the predicted σ_j^{i-1};
    the gradient back-propagates through that recurrence. `clip` bounds the
    norm of the stress adjoint carried from one step to the previous one.
    """
    if history not in HISTORY_MODES:
        raise ArgumentError(f"Unknown history mode {history!r}")
    problem = obs if isinstance(obs, IndirectProblem) else IndirectProblem(obs, acceleration)
    if problem.disc.dim != model.dim:
        raise ArgumentError(f"Mesh dim {problem.disc.dim} does not match model dim {model.dim}")
    m = with_params(model, theta)

    with np.errstate(over="ignore", invalid="ignore"):
        results = Parallel(n_jobs=n_jobs)(
            delayed(_case_loss)(m, problem, case, history, clip) for case in problem.cases
        )
    loss = sum(r[0] for r in results)
    grad = np.sum([r[1] for r in results], axis=0)
    return loss, grad
