"""
Generalized-α time integration and forward simulation.

The unknown of each step is the new acceleration a_{n+1}; displacement
and velocity follow from the Newmark relations

    u_{n+1} = u_n + Δt v_n + Δt² [(½ - β) a_n + β a_{n+1}]
    v_{n+1} = v_n + Δt [(1 - γ) a_n + γ a_{n+1}]

and the balance equation is enforced at the intermediate instants

    M [(1-α_m) a_{n+1} + α_m a_n] + (1-α_f) P(u_{n+1}) + α_f P_n
        = (1-α_f) F_{n+1} + α_f F_n
"""
import logging
import time
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np
import scipy.sparse as sp

from src.assembly import (
    BCs,
    Discretization,
    LoadProtocol,
    assemble_internal,
    assemble_mass,
    external_force,
    kinematics,
)
from src.errors import ArgumentError, ElementError, SolverError, StepError
from src.materials import as_material
from src.mesh import Mesh
from src.trajectory import Trajectory
from src.voigt_linalg import solve_sparse

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GAlphaParams:
    alpha_m: float = -1.0
    alpha_f: float = 0.0

    @property
    def gamma(self) -> float:
        return 0.5 - self.alpha_m + self.alpha_f

    @property
    def beta(self) -> float:
        return 0.25 * (1.0 - self.alpha_m + self.alpha_f) ** 2


@dataclass(frozen=True)
class NewtonConfig:
    atol: float = 1e-8
    rtol: float = 1e-8
    max_iter: int = 50


@dataclass
class DynState:
    t: float
    u: np.ndarray
    v: np.ndarray
    a: np.ndarray
    P: np.ndarray
    material_state: Any = None
    aux: Any = None


def newmark_update(state: DynState, a_new, dt, params: GAlphaParams):
    """(u_{n+1}, v_{n+1}) from a_{n+1}."""
    b, g = params.beta, params.gamma
    u = state.u + dt * state.v + dt ** 2 * ((0.5 - b) * state.a + b * a_new)
    v = state.v + dt * ((1.0 - g) * state.a + g * a_new)
    return u, v


def galpha_step(
    state: DynState,
    dt: float,
    M,
    internal: Callable,
    F_prev,
    F_new,
    fixed_dofs=None,
    fixed_values=None,
    params: GAlphaParams = GAlphaParams(),
    newton: NewtonConfig = NewtonConfig(),
    step: int | None = None,
):
    """
    Advance one generalized-α step with Newton iterations on a_{n+1}.

    `internal(u)` returns (P, K, aux): internal force, its tangent and
    any data to keep once the step converges (e.g. material state).

    Returns
    -------
    (DynState, n_iterations)
    """
    am, af, b = params.alpha_m, params.alpha_f, params.beta
    M = sp.csc_matrix(M)
    n = state.u.size
    fixed = np.zeros(0, dtype=int) if fixed_dofs is None else np.asarray(fixed_dofs, dtype=int)
    free = np.setdiff1d(np.arange(n), fixed)
    F_new = np.asarray(F_new, dtype=float)
    F_eff = (1.0 - af) * F_new + af * np.asarray(F_prev, dtype=float)
    tol = max(newton.atol, newton.rtol * np.linalg.norm(F_new[free]))

    a = state.a.copy()
    if fixed.size:
        # prescribe u_{n+1} = ū strongly through the acceleration
        target = np.zeros(fixed.size) if fixed_values is None else np.asarray(fixed_values, dtype=float)
        pred = state.u[fixed] + dt * state.v[fixed] + dt ** 2 * (0.5 - b) * state.a[fixed]
        a[fixed] = (target - pred) / (b * dt ** 2)

    history = []
    for it in range(newton.max_iter + 1):
        u, v = newmark_update(state, a, dt, params)
        P, K, aux = internal(u)
        R = M @ ((1.0 - am) * a + am * state.a) + (1.0 - af) * P + af * state.P - F_eff
        norm = float(np.linalg.norm(R[free]))
        history.append(norm)
        if not np.isfinite(norm):
            break
        if norm <= tol:
            new_state = DynState(state.t + dt, u, v, a, P, state.material_state, aux)
            return new_state, it
        if it == newton.max_iter:
            break
        J = (1.0 - am) * M + (1.0 - af) * b * dt ** 2 * sp.csc_matrix(K)
        J_ff = J[free][:, free]
        a[free] -= solve_sparse(J_ff, R[free])

    raise StepError(
        f"Newton did not converge at step {step} (residual {history[-1]:.3e}, tol {tol:.3e})",
        residuals=history,
        step=step,
    )


def initial_acceleration(M, F0, P0, fixed_dofs):
    n = F0.size
    free = np.setdiff1d(np.arange(n), fixed_dofs)
    a0 = np.zeros(n)
    rhs = (F0 - P0)[free]
    if np.any(rhs):
        a0[free] = solve_sparse(sp.csc_matrix(M)[free][:, free], rhs)
    return a0


def galpha_accelerations(U, dt, params: GAlphaParams = GAlphaParams(), a0=None, v0=None):
    """
    Accelerations reproduced from a displacement history by inverting the
    Newmark displacement update, starting from (v0, a0) (zero by default).
    """
    U = np.asarray(U, dtype=float)
    b, g = params.beta, params.gamma
    A = np.zeros_like(U)
    V = np.zeros_like(U)
    if a0 is not None:
        A[0] = a0
    if v0 is not None:
        V[0] = v0
    for i in range(1, U.shape[0]):
        A[i] = (U[i] - U[i - 1] - dt * V[i - 1] - dt ** 2 * (0.5 - b) * A[i - 1]) / (b * dt ** 2)
        V[i] = V[i - 1] + dt * ((1.0 - g) * A[i - 1] + g * A[i])
    return A


# -------------------------------------------------------------------
# Forward simulation
# -------------------------------------------------------------------
def simulate(
    mesh: Mesh,
    bcs: BCs,
    protocol: LoadProtocol,
    material,
    n_steps: int,
    dt: float,
    params: GAlphaParams = GAlphaParams(),
    newton: NewtonConfig = NewtonConfig(),
    divergence_limit: float | None = None,
    approximate_tangent: bool = False,
    progress_every: int = 50,
) -> Trajectory:
    """
    Run n_steps of generalized-α with a reference law or a learned model.

    A failed step, a non-finite state or a displacement beyond
    `divergence_limit` stops the run and is recorded as status "diverged".
    """
    if n_steps < 1 or dt <= 0:
        raise ArgumentError("Need n_steps >= 1 and dt > 0")
    disc = Discretization(mesh)
    law = as_material(material, disc.point_material_ids(), approximate_tangent)
    if law.dim != disc.dim:
        raise ArgumentError(f"Material dim {law.dim} does not match mesh dim {disc.dim}")
    M = assemble_mass(disc)
    fixed = bcs.dirichlet_dofs(mesh)
    n_pts = disc.n_points

    mat_state = law.init_state(n_pts)
    F0 = external_force(disc, bcs, protocol, 0.0)
    P0 = np.zeros(disc.n_dofs)
    zeros = np.zeros(disc.n_dofs)
    state = DynState(0.0, zeros.copy(), zeros.copy(), initial_acceleration(M, F0, P0, fixed), P0, mat_state)

    traj = Trajectory.start(dt, state.u, state.v, state.a, F0, np.zeros((n_pts, disc.dim)),
                            np.zeros((n_pts, disc.dim)))
    traj.label = protocol.label

    def internal_at(committed):
        def internal(u):
            eps, B = kinematics(disc, u)
            sig, tangent, new_state = law.update(eps, committed)
            P, K = assemble_internal(disc, u, sig, tangent, B=B)
            return P, K, (eps, sig, new_state)
        return internal

    started = time.perf_counter()
    F_prev = F0
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(1, n_steps + 1):
            F_new = external_force(disc, bcs, protocol, n * dt)
            try:
                state, iters = galpha_step(
                    state, dt, M, internal_at(state.material_state), F_prev, F_new,
                    fixed, None, params, newton, step=n,
                )
            except (StepError, SolverError, ElementError, ArgumentError) as exc:
                traj.mark_diverged(n, str(exc))
                logger.warning(f"{protocol.label or 'run'}: diverged at step {n}: {exc}")
                break
            eps, sig, state.material_state = state.aux
            state.aux = None
            if not np.all(np.isfinite(state.u)) or (
                divergence_limit is not None and np.max(np.abs(state.u)) > divergence_limit
            ):
                traj.mark_diverged(n, "displacement blow-up")
                logger.warning(f"{protocol.label or 'run'}: displacement blow-up at step {n}")
                break
            traj.append(state.u, state.v, state.a, F_new, eps, sig, iters)
            F_prev = F_new
            if progress_every and n % progress_every == 0:
                logger.debug(f"{protocol.label or 'run'} progress: {n}/{n_steps}")

    traj.wall_time = time.perf_counter() - started
    return traj.finish()
