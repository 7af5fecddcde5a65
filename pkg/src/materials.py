"""
Uniform batched interface over reference laws and learned models.

Every law exposes
    init_state(n_points) -> state
    update(eps_new, state) -> (sigma, tangent, new_state)
where eps_new is (n_points, dim). Nothing is mutated; the caller keeps the
returned state only once a time step has converged.
"""
import numpy as np

from src.constitutive_models import (
    ConstitutiveModel,
    PointState,
    consistent_tangent,
    stress_update,
)
from src.errors import ArgumentError
from src.reference_materials import (
    EPParams,
    EPState,
    HyperParams,
    ep1d_step,
    ep_plane_stress_step,
    rivlin_saunders_S,
    rivlin_saunders_tangent,
)


class MaterialLaw:
    dim = 3

    def init_state(self, n_points: int):
        return None

    def update(self, eps_new, state):
        raise NotImplementedError


class LinearElastic(MaterialLaw):
    def __init__(self, C):
        self.C = np.atleast_2d(np.asarray(C, dtype=float))
        self.dim = self.C.shape[0]

    def update(self, eps_new, state):
        eps = np.asarray(eps_new, dtype=float)
        tangent = np.broadcast_to(self.C, (eps.shape[0],) + self.C.shape)
        return eps @ self.C, tangent, state


class Plasticity1D(MaterialLaw):
    dim = 1

    def __init__(self, params: EPParams):
        self.params = params

    def init_state(self, n_points):
        return EPState.zeros(n_points, 1)

    def update(self, eps_new, state):
        sig, new_state, tangent = ep1d_step(state, eps_new, self.params)
        return sig, tangent, new_state


class PlaneStressPlasticity(MaterialLaw):
    def __init__(self, params: EPParams):
        self.params = params

    def init_state(self, n_points):
        return EPState.zeros(n_points, 3)

    def update(self, eps_new, state):
        sig, new_state, tangent = ep_plane_stress_step(state, eps_new, self.params)
        return sig, tangent, new_state


class RivlinSaunders(MaterialLaw):
    def __init__(self, params: HyperParams):
        self.params = params

    def update(self, eps_new, state):
        return rivlin_saunders_S(eps_new, self.params), rivlin_saunders_tangent(eps_new, self.params), state


class LearnedLaw(MaterialLaw):
    """A constitutive model with one step of (ε, σ) history per point."""

    def __init__(self, model: ConstitutiveModel, approximate_tangent: bool = False):
        self.model = model
        self.dim = model.dim
        self.approximate_tangent = approximate_tangent

    def init_state(self, n_points):
        return PointState.zeros(n_points, self.dim)

    def update(self, eps_new, state):
        eps = np.asarray(eps_new, dtype=float)
        sig = stress_update(self.model, eps, state)
        tangent = consistent_tangent(self.model, eps, state, approximate=self.approximate_tangent)
        return sig, tangent, PointState(eps.copy(), sig)


class MaterialMap(MaterialLaw):
    """Dispatch material points to per-material-id laws."""

    def __init__(self, laws: dict, point_ids):
        self.laws = dict(laws)
        self.point_ids = np.asarray(point_ids, dtype=int)
        dims = {law.dim for law in self.laws.values()}
        if len(dims) != 1:
            raise ArgumentError("All laws in a material map must share one dimension")
        self.dim = dims.pop()
        missing = set(np.unique(self.point_ids)) - set(self.laws)
        if missing:
            raise ArgumentError(f"No law for material ids {sorted(missing)}")
        self.groups = {m: np.flatnonzero(self.point_ids == m) for m in self.laws}

    def init_state(self, n_points):
        if n_points != self.point_ids.size:
            raise ArgumentError("Material map built for a different number of points")
        return {m: law.init_state(self.groups[m].size) for m, law in self.laws.items()}

    def update(self, eps_new, state):
        eps = np.asarray(eps_new, dtype=float)
        n = eps.shape[0]
        sig = np.zeros((n, self.dim))
        tangent = np.zeros((n, self.dim, self.dim))
        new_state = {}
        for m, law in self.laws.items():
            idx = self.groups[m]
            if idx.size == 0:
                new_state[m] = state[m]
                continue
            s, t, new_state[m] = law.update(eps[idx], state[m])
            sig[idx] = s
            tangent[idx] = t
        return sig, tangent, new_state


def as_material(obj, point_ids=None, approximate_tangent=False) -> MaterialLaw:
    """Wrap a model or a {material id: law} mapping into a MaterialLaw."""
    if isinstance(obj, MaterialLaw):
        return obj
    if isinstance(obj, ConstitutiveModel):
        return LearnedLaw(obj, approximate_tangent)
    if isinstance(obj, dict):
        if point_ids is None:
            raise ArgumentError("A material map needs the material id of every point")
        laws = {m: as_material(v, approximate_tangent=approximate_tangent) for m, v in obj.items()}
        return MaterialMap(laws, point_ids)
    raise ArgumentError(f"Cannot use {type(obj).__name__} as a material")
