"""
Fully connected networks with hand-written reverse-mode derivatives.

Parameters live in one flat vector θ, packed layer by layer as the
weight matrix (row-major, shape out×in) followed by the bias vector.
Every hidden layer applies the activation; the output layer is affine.
All functions accept a single input (n_in,) or a batch (B, n_in).
"""
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from src.errors import ArgumentError, ConfigError, DataError

SELU_SCALE = 1.0507009873554805
SELU_ALPHA = 1.6732632423543772
LEAKY_SLOPE = 0.1

CHECKPOINT_MAGIC = "SPDNN-CHECKPOINT 1"
HEADER_END = "END"


# -------------------------------------------------------------------
# Activations
# -------------------------------------------------------------------
def _tanh(z):
    a = np.tanh(z)
    return a, 1.0 - a ** 2


def _relu(z):
    return np.maximum(z, 0.0), (z > 0).astype(float)


def _leaky_relu(z):
    return np.where(z > 0, z, LEAKY_SLOPE * z), np.where(z > 0, 1.0, LEAKY_SLOPE)


def _elu(z):
    e = np.expm1(np.minimum(z, 0.0))
    return np.where(z > 0, z, e), np.where(z > 0, 1.0, e + 1.0)


def _selu(z):
    a, da = _elu(z)
    neg = z <= 0
    a = SELU_SCALE * np.where(neg, SELU_ALPHA * a, a)
    da = SELU_SCALE * np.where(neg, SELU_ALPHA * da, da)
    return a, da


def _linear(z):
    return z, np.ones_like(z)


ACTIVATIONS = {
    "tanh": _tanh,
    "relu": _relu,
    "leaky-relu": _leaky_relu,
    "selu": _selu,
    "elu": _elu,
    "linear": _linear,
}


def _activation(name):
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise ConfigError(
            f"Unsupported activation {name!r}; choose from {sorted(ACTIVATIONS)}"
        )


# -------------------------------------------------------------------
# Architecture
# -------------------------------------------------------------------
@dataclass(frozen=True)
class NetSpec:
    widths: tuple = field(default=(1, 20, 20, 20, 1))
    activation: str = "tanh"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if len(self.widths) < 2 or min(self.widths) < 1:
            raise ArgumentError(f"Invalid layer widths {self.widths}")

    @property
    def n_in(self) -> int:
        return self.widths[0]

    @property
    def n_out(self) -> int:
        return self.widths[-1]

    @classmethod
    def hidden(cls, n_in, n_out, depth=3, width=20, activation="tanh", seed=0):
        """Spec with `depth` hidden layers of `width` neurons."""
        return cls((n_in,) + (width,) * depth + (n_out,), activation, seed)


def param_count(spec: NetSpec) -> int:
    return sum(o * i + o for i, o in zip(spec.widths[:-1], spec.widths[1:]))


def unflatten(spec: NetSpec, theta):
    """List of (W, b) views into θ."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (param_count(spec),):
        raise ArgumentError(
            f"Parameter vector has shape {theta.shape}, expected ({param_count(spec)},)"
        )
    layers, k = [], 0
    for n_in, n_out in zip(spec.widths[:-1], spec.widths[1:]):
        W = theta[k:k + n_out * n_in].reshape(n_out, n_in)
        k += n_out * n_in
        b = theta[k:k + n_out]
        k += n_out
        layers.append((W, b))
    return layers


def init_params(spec: NetSpec):
    """Glorot-uniform weights, zero biases, deterministic in spec.seed."""
    rng = np.random.default_rng(spec.seed)
    chunks = []
    for n_in, n_out in zip(spec.widths[:-1], spec.widths[1:]):
        limit = np.sqrt(6.0 / (n_in + n_out))
        chunks.append(rng.uniform(-limit, limit, size=n_out * n_in))
        chunks.append(np.zeros(n_out))
    return np.concatenate(chunks)


# -------------------------------------------------------------------
# Forward / reverse passes
# -------------------------------------------------------------------
def _as_batch(spec, x):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != spec.n_in:
        raise ArgumentError(f"Input width {X.shape[-1]} does not match {spec.n_in}")
    return X, single


def _forward_tape(spec, layers, X):
    act = _activation(spec.activation)
    tape = []
    a = X
    for l, (W, b) in enumerate(layers):
        z = a @ W.T + b
        if l < len(layers) - 1:
            a_next, da = act(z)
        else:
            a_next, da = z, None
        tape.append((a, da))
        a = a_next
    return tape, a


def forward(spec: NetSpec, theta, x):
    """Network output for one input or a batch of inputs."""
    X, single = _as_batch(spec, x)
    _, Y = _forward_tape(spec, unflatten(spec, theta), X)
    return Y[0] if single else Y


def _reverse(spec, layers, tape, Ybar, want_theta=True):
    # tape[l] = (input of layer l, activation derivative at its output;
    # None for the affine output layer)
    grads = [None] * len(layers)
    g = Ybar
    for l in range(len(layers) - 1, -1, -1):
        W, _ = layers[l]
        a_prev, da = tape[l]
        if da is not None:
            g = g * da
        if want_theta:
            grads[l] = (g.T @ a_prev, g.sum(axis=0))
        g = g @ W
    return g, grads


def vjp(spec: NetSpec, theta, x, ybar):
    """
    Reverse-mode products ȳᵀ ∂y/∂θ and ȳᵀ ∂y/∂x.

    For a batch, grad_θ is summed over the batch and grad_x is per sample.
    """
    layers = unflatten(spec, theta)
    X, single = _as_batch(spec, x)
    Ybar = np.asarray(ybar, dtype=float).reshape(X.shape[0], spec.n_out)
    tape, _ = _forward_tape(spec, layers, X)
    grad_x, grads = _reverse(spec, layers, tape, Ybar)
    grad_theta = np.concatenate([np.concatenate([gW.ravel(), gb]) for gW, gb in grads])
    return grad_theta, (grad_x[0] if single else grad_x)


def jac_input(spec: NetSpec, theta, x):
    """
    Full ∂y/∂x; row i is the vjp with unit cotangent eᵢ.

    Returns (n_out, n_in) for one input or (B, n_out, n_in) for a batch.
    """
    single = np.ndim(x) == 1
    _, J = forward_with_jac(spec, theta, x)
    return J[0] if single else J


def forward_with_jac(spec: NetSpec, theta, x):
    """Output and input Jacobian from a single forward tape (batched)."""
    layers = unflatten(spec, theta)
    X, _ = _as_batch(spec, x)
    tape, Y = _forward_tape(spec, layers, X)
    rows = []
    for i in range(spec.n_out):
        Ybar = np.zeros((X.shape[0], spec.n_out))
        Ybar[:, i] = 1.0
        gx, _ = _reverse(spec, layers, tape, Ybar, want_theta=False)
        rows.append(gx)
    return Y, np.stack(rows, axis=1)


# -------------------------------------------------------------------
# Checkpoint codec
# -------------------------------------------------------------------
def spec_to_header(spec: NetSpec) -> dict:
    return {
        "widths": ",".join(str(w) for w in spec.widths),
        "activation": spec.activation,
        "seed": str(spec.seed),
    }


def spec_from_header(header: dict) -> NetSpec:
    return NetSpec(
        widths=tuple(int(w) for w in header["widths"].split(",")),
        activation=header["activation"],
        seed=int(header.get("seed", 0)),
    )


def save_checkpoint(path, header: dict, theta) -> None:
    """
    Write a checkpoint: UTF-8 text header then raw parameters.

    Layout:
        SPDNN-CHECKPOINT 1\\n
        key=value\\n            (one per header field)
        n_params=<n>\\n
        END\\n
        <n little-endian float64 values>
    """
    theta = np.asarray(theta, dtype="<f8").ravel()
    lines = [CHECKPOINT_MAGIC]
    for key, value in header.items():
        if "=" in key or "\n" in str(value):
            raise ArgumentError(f"Header field {key!r} cannot be encoded")
        lines.append(f"{key}={value}")
    lines.append(f"n_params={theta.size}")
    lines.append(HEADER_END)

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(("\n".join(lines) + "\n").encode("utf-8"))
        f.write(theta.tobytes())


def load_checkpoint(path):
    """Inverse of save_checkpoint: returns (header dict, θ)."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"Checkpoint {path} not found")
    raw = path.read_bytes()
    marker = ("\n" + HEADER_END + "\n").encode("utf-8")
    cut = raw.find(marker)
    if not raw.startswith(CHECKPOINT_MAGIC.encode("utf-8")) or cut < 0:
        raise DataError(f"{path} is not a checkpoint file")

    header = {}
    for line in raw[:cut].decode("utf-8").splitlines()[1:]:
        key, _, value = line.partition("=")
        header[key] = value
    n = int(header.pop("n_params"))
    theta = np.frombuffer(raw[cut + len(marker):], dtype="<f8")
    if theta.size != n:
        raise DataError(f"{path}: expected {n} parameters, found {theta.size}")
    return header, theta.astype(float)
