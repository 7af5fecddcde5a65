import logging
import warnings

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from src.errors import ArgumentError, SolverError

logger = logging.getLogger(__name__)

# -------------------------------------------------------------------
# Cholesky layouts
# -------------------------------------------------------------------
# Packed-entry positions of the lower-triangular factor, in packing order.
# Voigt order is [11, 22, 12] in 2D and [11, 22, 33, 23, 13, 12] in 3D.
_LAYOUTS = {
    ("full", 1): [(0, 0)],
    ("orthotropic", 1): [(0, 0)],
    ("full", 3): [(0, 0), (1, 0), (1, 1), (2, 0), (2, 1), (2, 2)],
    ("orthotropic", 3): [(0, 0), (1, 0), (1, 1), (2, 2)],
    ("full", 6): [(i, j) for i in range(6) for j in range(i + 1)],
    ("orthotropic", 6): [
        (0, 0), (1, 0), (1, 1), (2, 0), (2, 1), (2, 2), (3, 3), (4, 4), (5, 5)
    ],
}


def layout_positions(layout: str, dim: int) -> list:
    """(row, col) of every packed entry for a layout and Voigt dimension."""
    try:
        return _LAYOUTS[(layout, dim)]
    except KeyError:
        raise ArgumentError(f"Unknown Cholesky layout {layout!r} for dim {dim}")


def layout_size(layout: str, dim: int) -> int:
    return len(layout_positions(layout, dim))


def _infer_dim(layout: str, n_entries: int) -> int:
    for dim in (1, 3, 6):
        if (layout, dim) in _LAYOUTS and layout_size(layout, dim) == n_entries:
            return dim
    raise ArgumentError(
        f"{n_entries} entries do not match any {layout!r} Cholesky layout"
    )


def chol_assemble(entries, layout: str = "orthotropic", dim: int | None = None):
    """
    Place packed entries into a lower-triangular Cholesky factor.

    Works on a single entry vector (n,) or a batch (..., n). No sign
    constraint is applied to the diagonal: L Lᵀ is PSD for any entries.

    Returns
    -------
    np.ndarray of shape (..., dim, dim)
    """
    entries = np.asarray(entries, dtype=float)
    if entries.ndim == 0:
        raise ArgumentError("Cholesky entries must be at least 1-D")
    n = entries.shape[-1]
    if dim is None:
        dim = _infer_dim(layout, n)
    positions = layout_positions(layout, dim)
    if n != len(positions):
        raise ArgumentError(
            f"{layout!r} layout with dim {dim} needs {len(positions)} entries, got {n}"
        )

    L = np.zeros(entries.shape[:-1] + (dim, dim))
    rows, cols = zip(*positions)
    L[..., list(rows), list(cols)] = entries
    return L


def chol_flatten(L, layout: str = "orthotropic"):
    """Inverse of chol_assemble: packed entries of L in layout order."""
    L = np.asarray(L, dtype=float)
    dim = L.shape[-1]
    rows, cols = zip(*layout_positions(layout, dim))
    return L[..., list(rows), list(cols)]


def spd_matrix(L):
    """L Lᵀ, batched over leading axes."""
    L = np.asarray(L, dtype=float)
    return np.einsum("...ik,...jk->...ij", L, L)


def spd_apply(L, v):
    """
    Apply L Lᵀ to a Voigt vector as L (Lᵀ v).

    L : (..., d, d), v : (..., d)
    """
    L = np.asarray(L, dtype=float)
    v = np.asarray(v, dtype=float)
    if L.shape[-1] != v.shape[-1] or L.shape[-2] != L.shape[-1]:
        raise ArgumentError(
            f"Dimension mismatch: factor {L.shape[-2:]} vs vector {v.shape[-1]}"
        )
    w = np.einsum("...ki,...k->...i", L, v)
    return np.einsum("...ik,...k->...i", L, w)


# -------------------------------------------------------------------
# Dense solves and eigenvalues
# -------------------------------------------------------------------
def solve_dense(A, b):
    """
    Solve A x = b.

    Square A uses an LU solve; tall A (full column rank) is solved in the
    least-squares sense. b may hold several right-hand sides as columns.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or A.shape[0] != b.shape[0]:
        raise ArgumentError(f"Incompatible shapes {A.shape} and {b.shape}")
    m, n = A.shape
    if m < n:
        raise ArgumentError("Underdetermined system: more unknowns than equations")

    if m == n:
        with warnings.catch_warnings():
            warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
            try:
                return scipy.linalg.solve(A, b)
            except (scipy.linalg.LinAlgError, scipy.linalg.LinAlgWarning):
                cond = np.linalg.cond(A)
                raise SolverError(
                    f"Matrix is singular to working precision (cond={cond:.3e})",
                    condition=cond,
                )

    x, _, rank, sv = scipy.linalg.lstsq(A, b)
    if rank < n:
        cond = sv[0] / sv[-1] if sv[-1] > 0 else np.inf
        raise SolverError(
            f"Least-squares matrix is rank deficient (rank {rank} < {n})",
            condition=cond,
            rank=rank,
        )
    return x


def sym_eig_min(M):
    """Smallest eigenvalue of a symmetric matrix (or a stack of them)."""
    M = np.asarray(M, dtype=float)
    if not np.all(np.isfinite(M)):
        raise ArgumentError("Matrix has non-finite entries")
    M = 0.5 * (M + np.swapaxes(M, -1, -2))
    return np.linalg.eigvalsh(M)[..., 0]


# -------------------------------------------------------------------
# Voigt <-> tensor (2D, engineering shear strain)
# -------------------------------------------------------------------
def strain_to_tensor(eps):
    eps = np.asarray(eps, dtype=float)
    t = np.empty(eps.shape[:-1] + (2, 2))
    t[..., 0, 0] = eps[..., 0]
    t[..., 1, 1] = eps[..., 1]
    t[..., 0, 1] = t[..., 1, 0] = 0.5 * eps[..., 2]
    return t


def tensor_to_strain(t):
    t = np.asarray(t, dtype=float)
    return np.stack([t[..., 0, 0], t[..., 1, 1], t[..., 0, 1] + t[..., 1, 0]], axis=-1)


def stress_to_tensor(sig):
    sig = np.asarray(sig, dtype=float)
    t = np.empty(sig.shape[:-1] + (2, 2))
    t[..., 0, 0] = sig[..., 0]
    t[..., 1, 1] = sig[..., 1]
    t[..., 0, 1] = t[..., 1, 0] = sig[..., 2]
    return t


def tensor_to_stress(t):
    t = np.asarray(t, dtype=float)
    return np.stack([t[..., 0, 0], t[..., 1, 1], 0.5 * (t[..., 0, 1] + t[..., 1, 0])], axis=-1)


# -------------------------------------------------------------------
# Sparse global systems
# -------------------------------------------------------------------
def assemble_sparse(rows, cols, values, n: int):
    """Sum COO triplets into an (n, n) CSC matrix."""
    return sp.coo_matrix(
        (np.ravel(values), (np.ravel(rows), np.ravel(cols))), shape=(n, n)
    ).tocsc()


def solve_sparse(K, r):
    """Direct sparse LU solve of K x = r."""
    try:
        return splu(sp.csc_matrix(K)).solve(np.asarray(r, dtype=float))
    except RuntimeError as exc:
        raise SolverError(f"Sparse factorization failed: {exc}")
