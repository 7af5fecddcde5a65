"""
SPD-NN constitutive models and the unconstrained baselines.

Every model maps (ε_new, ε_n, σ_n) to σ_new. The SPD variants are written
in incremental form σ_new = σ_n + H Δε with H symmetric positive
semi-definite, so an unchanged strain returns σ_n exactly.

Kinds
-----
linear   C_θ ε_new, C_θ = s² L_θ L_θᵀ from packed Cholesky entries θ
spd      σ_n + L(ε_new) L(ε_new)ᵀ Δε
spd-ep   σ_n + [(1 - D) C + D L Lᵀ] Δε, D = transition(σ_eq(σ_n))
sigma    σ_ref · NN(ε_new, ε_n, σ_n)
dsigma   σ_n + σ_ref · NN(ε_new, ε_n, σ_n)
"""
import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from src import diffnet
from src.diffnet import NetSpec
from src.errors import ArgumentError, DataError
from src.reference_materials import vm_stress
from src.voigt_linalg import chol_assemble, layout_positions, layout_size, spd_apply

logger = logging.getLogger(__name__)

KINDS = ("linear", "spd", "spd-ep", "sigma", "dsigma")
SPD_KINDS = ("linear", "spd", "spd-ep")
EQ_KINDS = ("uniaxial", "von-mises")


# -------------------------------------------------------------------
# Types
# -------------------------------------------------------------------
@dataclass(frozen=True)
class ScalingSpec:
    eps_ref: float = 1.0
    sig_ref: float = 1.0

    def __post_init__(self):
        for name in ("eps_ref", "sig_ref"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ArgumentError(f"{name} must be positive and finite, got {value}")

    @property
    def stiffness(self) -> float:
        return self.sig_ref / self.eps_ref

    @property
    def factor(self) -> float:
        """Multiplier applied to every Cholesky entry."""
        return float(np.sqrt(self.stiffness))


@dataclass
class PointState:
    """One step of history (ε_n, σ_n) per material point."""

    eps: np.ndarray
    sig: np.ndarray

    @classmethod
    def zeros(cls, n_points: int, dim: int):
        return cls(np.zeros((n_points, dim)), np.zeros((n_points, dim)))


@dataclass(frozen=True, eq=False)
class ConstitutiveModel:
    kind: str
    dim: int
    theta: np.ndarray
    net: NetSpec | None = None
    scaling: ScalingSpec = field(default_factory=ScalingSpec)
    layout: str = "orthotropic"
    sigma_y_est: float = 0.1e9
    d: float = 0.1
    eq_kind: str = ""
    elastic: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ArgumentError(f"Unknown model kind {self.kind!r}; choose from {KINDS}")
        if not self.eq_kind:
            object.__setattr__(self, "eq_kind", "uniaxial" if self.dim == 1 else "von-mises")
        if self.eq_kind not in EQ_KINDS:
            raise ArgumentError(f"Unknown equivalent-stress kind {self.eq_kind!r}")
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=float).ravel())

        if self.kind == "linear":
            expected = layout_size(self.layout, self.dim)
        else:
            if self.net is None:
                raise ArgumentError(f"Model kind {self.kind!r} needs a NetSpec")
            n_in, n_out = model_io_widths(self.kind, self.dim, self.layout)
            if (self.net.n_in, self.net.n_out) != (n_in, n_out):
                raise ArgumentError(
                    f"{self.kind} with dim {self.dim} needs a {n_in}->{n_out} net, "
                    f"got {self.net.n_in}->{self.net.n_out}"
                )
            expected = diffnet.param_count(self.net)
        if self.theta.size != expected:
            raise ArgumentError(f"Expected {expected} parameters, got {self.theta.size}")

        if self.kind == "spd-ep":
            if self.sigma_y_est <= 0 or self.d <= 0:
                raise ArgumentError("sigma_y_est and d must be positive")
            if self.elastic is None:
                raise ArgumentError("spd-ep model needs an elastic tangent")
            C = np.asarray(self.elastic, dtype=float)
            if C.shape != (self.dim, self.dim):
                raise ArgumentError(f"Elastic tangent must be {self.dim}x{self.dim}")
            object.__setattr__(self, "elastic", C)

    @property
    def n_params(self) -> int:
        return self.theta.size


def model_io_widths(kind: str, dim: int, layout: str = "orthotropic"):
    n_in = dim if kind == "spd" else 3 * dim
    n_out = layout_size(layout, dim) if kind in ("spd", "spd-ep") else dim
    return n_in, n_out


def make_model(
    kind: str,
    dim: int,
    depth: int = 3,
    width: int = 20,
    activation: str = "tanh",
    seed: int = 0,
    scaling: ScalingSpec | None = None,
    layout: str = "orthotropic",
    sigma_y_est: float = 0.1e9,
    d: float = 0.1,
    eq_kind: str = "",
    elastic=None,
) -> ConstitutiveModel:
    """Build a model with freshly initialised parameters."""
    scaling = scaling or ScalingSpec()
    if kind == "linear":
        # L = I so that C starts at σ_ref/ε_ref · I
        theta = np.array([1.0 if r == c else 0.0 for r, c in layout_positions(layout, dim)])
        return ConstitutiveModel(kind, dim, theta, None, scaling, layout, eq_kind=eq_kind)

    n_in, n_out = model_io_widths(kind, dim, layout)
    net = NetSpec.hidden(n_in, n_out, depth, width, activation, seed)
    return ConstitutiveModel(
        kind, dim, diffnet.init_params(net), net, scaling, layout,
        sigma_y_est, d, eq_kind, elastic,
    )


def with_params(model: ConstitutiveModel, theta) -> ConstitutiveModel:
    return replace(model, theta=np.asarray(theta, dtype=float).copy())


def reseed(model: ConstitutiveModel, seed: int) -> ConstitutiveModel:
    """Same architecture, new random initial parameters."""
    if model.net is None:
        return model
    net = replace(model.net, seed=seed)
    return replace(model, net=net, theta=diffnet.init_params(net))


# -------------------------------------------------------------------
# Scalar helpers
# -------------------------------------------------------------------
def transition(sigma_eq, sigma_y_est, d):
    """D = sigmoid((σ_eq² - σ̃_Y²) / (d σ̃_Y²))."""
    if sigma_y_est <= 0 or d <= 0:
        raise ArgumentError("sigma_y_est and d must be positive")
    s2 = sigma_y_est ** 2
    return expit((np.asarray(sigma_eq, dtype=float) ** 2 - s2) / (d * s2))


def equivalent_stress(sigma, kind: str | None = None):
    sigma = np.asarray(sigma, dtype=float)
    if kind is None:
        kind = "uniaxial" if sigma.shape[-1] == 1 else "von-mises"
    if kind == "uniaxial":
        return np.abs(sigma[..., 0])
    if kind == "von-mises":
        if sigma.shape[-1] != 3:
            raise ArgumentError("von Mises stress needs a plane-stress Voigt vector")
        return vm_stress(sigma)
    raise ArgumentError(f"Unknown equivalent-stress kind {kind!r}")


def _equivalent_stress_sq_grad(sigma, kind):
    if kind == "uniaxial":
        return 2.0 * sigma
    s11, s22, s12 = sigma[..., 0], sigma[..., 1], sigma[..., 2]
    return np.stack([2.0 * s11 - s22, 2.0 * s22 - s11, 6.0 * s12], axis=-1)


# -------------------------------------------------------------------
# Shared evaluation
# -------------------------------------------------------------------
def _batch(model, eps_new, state):
    E = np.asarray(eps_new, dtype=float)
    single = E.ndim == 1
    E = np.atleast_2d(E)
    En = np.atleast_2d(np.asarray(state.eps, dtype=float))
    Sn = np.atleast_2d(np.asarray(state.sig, dtype=float))
    for name, arr in (("eps_new", E), ("state.eps", En), ("state.sig", Sn)):
        if arr.shape[-1] != model.dim:
            raise ArgumentError(f"{name} has width {arr.shape[-1]}, model dim is {model.dim}")
    if not (E.shape == En.shape == Sn.shape):
        raise ArgumentError(f"Batch shapes differ: {E.shape}, {En.shape}, {Sn.shape}")
    return E, En, Sn, single


def _net_inputs(model, E, En, Sn):
    sc = model.scaling
    if model.kind == "spd":
        return E / sc.eps_ref
    return np.hstack([E / sc.eps_ref, En / sc.eps_ref, Sn / sc.sig_ref])


def _linear_factor(model):
    return chol_assemble(model.theta, model.layout, model.dim)


def linear_stiffness(model: ConstitutiveModel):
    """C_θ of a linear model."""
    L = _linear_factor(model) * model.scaling.factor
    return L @ L.T


def _blend_weight(model, Sn):
    if model.kind != "spd-ep":
        return np.ones(Sn.shape[0])
    return transition(equivalent_stress(Sn, model.eq_kind), model.sigma_y_est, model.d)


def _chol_output_jac(model, L, dE):
    """G[:, :, k] = ∂(L Lᵀ Δε)/∂y_k for the packed outputs y."""
    s = model.scaling.factor
    LtdE = np.einsum("bki,bk->bi", L, dE)
    positions = layout_positions(model.layout, model.dim)
    G = np.zeros((dE.shape[0], model.dim, len(positions)))
    for k, (r, c) in enumerate(positions):
        G[:, :, k] = s * L[:, :, c] * dE[:, r:r + 1]
        G[:, r, k] += s * LtdE[:, c]
    return G


def _out(arr, single):
    return arr[0] if single else arr


# -------------------------------------------------------------------
# Operations
# -------------------------------------------------------------------
def stress_update(model: ConstitutiveModel, eps_new, state: PointState):
    """σ_new for one point (dim,) or a batch (B, dim)."""
    E, En, Sn, single = _batch(model, eps_new, state)
    kind = model.kind

    if kind == "linear":
        return _out(E @ linear_stiffness(model), single)

    y = diffnet.forward(model.net, model.theta, _net_inputs(model, E, En, Sn))
    if kind == "sigma":
        return _out(model.scaling.sig_ref * y, single)
    if kind == "dsigma":
        return _out(Sn + model.scaling.sig_ref * y, single)

    L = chol_assemble(y, model.layout, model.dim) * model.scaling.factor
    dE = E - En
    if kind == "spd":
        return _out(Sn + spd_apply(L, dE), single)

    D = _blend_weight(model, Sn)[:, None]
    dsig = (1.0 - D) * (dE @ model.elastic) + D * spd_apply(L, dE)
    return _out(Sn + dsig, single)


def tangent_matrix(model: ConstitutiveModel, eps_new, state: PointState):
    """Blended L Lᵀ only, i.e. the tangent without the ∂L/∂ε Δε term."""
    E, En, Sn, single = _batch(model, eps_new, state)
    if model.kind == "linear":
        C = linear_stiffness(model)
        return _out(np.broadcast_to(C, (E.shape[0],) + C.shape).copy(), single)
    if model.kind in ("sigma", "dsigma"):
        return consistent_tangent(model, eps_new, state)

    y = diffnet.forward(model.net, model.theta, _net_inputs(model, E, En, Sn))
    L = chol_assemble(y, model.layout, model.dim) * model.scaling.factor
    H = np.einsum("bik,bjk->bij", L, L)
    if model.kind == "spd-ep":
        D = _blend_weight(model, Sn)[:, None, None]
        H = (1.0 - D) * model.elastic + D * H
    return _out(H, single)


def consistent_tangent(model: ConstitutiveModel, eps_new, state: PointState, approximate=False):
    """
    dσ_new/dε_new.

    For SPD kinds this is H + D G J, with J the network Jacobian with respect
    to the scaled ε_new inputs; `approximate=True` drops the G J term.
    """
    if approximate and model.kind in SPD_KINDS:
        return tangent_matrix(model, eps_new, state)

    E, En, Sn, single = _batch(model, eps_new, state)
    if model.kind == "linear":
        return tangent_matrix(model, eps_new, state)

    sc = model.scaling
    y, J = diffnet.forward_with_jac(model.net, model.theta, _net_inputs(model, E, En, Sn))
    J_eps = J[:, :, :model.dim] / sc.eps_ref
    if model.kind in ("sigma", "dsigma"):
        return _out(sc.sig_ref * J_eps, single)

    L = chol_assemble(y, model.layout, model.dim) * sc.factor
    H = np.einsum("bik,bjk->bij", L, L)
    G = _chol_output_jac(model, L, E - En)
    D = _blend_weight(model, Sn)[:, None, None]
    if model.kind == "spd-ep":
        H = (1.0 - D) * model.elastic + D * H
    return _out(H + D * (G @ J_eps), single)


def stress_update_vjp(model: ConstitutiveModel, eps_new, state: PointState, sig_bar):
    """
    Adjoints of stress_update in all four arguments.

    Returns
    -------
    grad_theta : (n_params,) summed over the batch
    grad_eps_new, grad_eps_prev, grad_sig_prev : same shape as eps_new
    """
    E, En, Sn, single = _batch(model, eps_new, state)
    W = np.atleast_2d(np.asarray(sig_bar, dtype=float)).reshape(E.shape)
    dim, sc = model.dim, model.scaling

    g_new = np.zeros_like(E)
    g_prev = np.zeros_like(E)
    g_sig = np.zeros_like(E)

    if model.kind == "linear":
        s2 = sc.stiffness
        L = _linear_factor(model)
        LtE = E @ L
        LtW = W @ L
        grad_theta = np.array([
            s2 * np.sum(W[:, r] * LtE[:, c] + LtW[:, c] * E[:, r])
            for r, c in layout_positions(model.layout, dim)
        ])
        g_new = W @ linear_stiffness(model)
        return grad_theta, _out(g_new, single), _out(g_prev, single), _out(g_sig, single)

    x = _net_inputs(model, E, En, Sn)

    if model.kind in ("sigma", "dsigma"):
        grad_theta, gx = diffnet.vjp(model.net, model.theta, x, sc.sig_ref * W)
        g_new = gx[:, :dim] / sc.eps_ref
        g_prev = gx[:, dim:2 * dim] / sc.eps_ref
        g_sig = gx[:, 2 * dim:] / sc.sig_ref
        if model.kind == "dsigma":
            g_sig = g_sig + W
        return grad_theta, _out(g_new, single), _out(g_prev, single), _out(g_sig, single)

    y = diffnet.forward(model.net, model.theta, x)
    L = chol_assemble(y, model.layout, dim) * sc.factor
    dE = E - En
    D = _blend_weight(model, Sn)
    H = np.einsum("bik,bjk->bij", L, L)
    if model.kind == "spd-ep":
        H_blend = (1.0 - D[:, None, None]) * model.elastic + D[:, None, None] * H
    else:
        H_blend = H

    HW = np.einsum("bij,bj->bi", H_blend, W)
    g_new = HW.copy()
    g_prev = -HW
    g_sig = W.copy()

    G = _chol_output_jac(model, L, dE)
    ybar = D[:, None] * np.einsum("bik,bi->bk", G, W)
    grad_theta, gx = diffnet.vjp(model.net, model.theta, x, ybar)
    g_new += gx[:, :dim] / sc.eps_ref

    if model.kind == "spd-ep":
        g_prev += gx[:, dim:2 * dim] / sc.eps_ref
        g_sig += gx[:, 2 * dim:] / sc.sig_ref
        # dσ/dD = (L Lᵀ - C) Δε, D depends on σ_n through σ_eq²
        branch = np.einsum("bij,bj->bi", H - model.elastic, dE)
        Dbar = np.einsum("bi,bi->b", W, branch)
        s2 = model.sigma_y_est ** 2
        dD = D * (1.0 - D) / (model.d * s2)
        g_sig += (Dbar * dD)[:, None] * _equivalent_stress_sq_grad(Sn, model.eq_kind)

    return grad_theta, _out(g_new, single), _out(g_prev, single), _out(g_sig, single)


# -------------------------------------------------------------------
# Scaling
# -------------------------------------------------------------------
def estimate_scaling(strains, E_est: float) -> ScalingSpec:
    """ε_ref = max |ε| in the data, σ_ref = E_est · ε_ref."""
    if E_est <= 0:
        raise ArgumentError("Estimated modulus must be positive")
    peak = float(np.max(np.abs(strains))) if np.size(strains) else 0.0
    eps_ref = peak if peak > 0 and np.isfinite(peak) else 1.0
    return ScalingSpec(eps_ref, E_est * eps_ref)


def check_scaling(scaling: ScalingSpec, E_est: float) -> None:
    ratio = scaling.stiffness / E_est
    if not 0.1 <= ratio <= 10.0:
        raise ArgumentError(
            f"σ_ref/ε_ref = {scaling.stiffness:.3e} is not within a factor 10 of E = {E_est:.3e}"
        )


# -------------------------------------------------------------------
# Checkpoints
# -------------------------------------------------------------------
def _floats(values) -> str:
    return ",".join(repr(float(v)) for v in np.ravel(values))


def save_model(path, model: ConstitutiveModel) -> None:
    header = {
        "kind": model.kind,
        "dim": str(model.dim),
        "layout": model.layout,
        "eps_ref": repr(model.scaling.eps_ref),
        "sig_ref": repr(model.scaling.sig_ref),
        "sigma_y_est": repr(float(model.sigma_y_est)),
        "d": repr(float(model.d)),
        "eq_kind": model.eq_kind,
        "elastic": "none" if model.elastic is None else _floats(model.elastic),
    }
    if model.net is not None:
        header.update(diffnet.spec_to_header(model.net))
    diffnet.save_checkpoint(path, header, model.theta)
    logger.info(f"Saved {model.kind} model ({model.n_params} parameters) to {path}")


def load_model(path) -> ConstitutiveModel:
    header, theta = diffnet.load_checkpoint(path)
    try:
        dim = int(header["dim"])
        elastic = None
        if header.get("elastic", "none") != "none":
            elastic = np.array([float(v) for v in header["elastic"].split(",")]).reshape(dim, dim)
        return ConstitutiveModel(
            kind=header["kind"],
            dim=dim,
            theta=theta,
            net=diffnet.spec_from_header(header) if "widths" in header else None,
            scaling=ScalingSpec(float(header["eps_ref"]), float(header["sig_ref"])),
            layout=header["layout"],
            sigma_y_est=float(header["sigma_y_est"]),
            d=float(header["d"]),
            eq_kind=header["eq_kind"],
            elastic=elastic,
        )
    except (KeyError, ValueError) as exc:
        raise DataError(f"{path}: malformed model header ({exc})")
